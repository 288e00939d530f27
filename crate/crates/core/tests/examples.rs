//! Every bundled config parses, runs, and recovers its couplings to the
//! accuracy the physics allows.

use nvdr::config::ExperimentConfig;
use nvdr::spectroscopy::{fit_spectrum, pm_dressed_shift_khz, predict_pm_resonances, run_sweep, DipReport};
use nvdr::SpinSystemSpec;

fn run(text: &str) -> (ExperimentConfig, SpinSystemSpec, DipReport) {
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let sys = cfg.spin_system().unwrap();
    let spec = run_sweep(&sys, &cfg.sweep_plan().unwrap(), cfg.noise().unwrap().as_ref()).unwrap();
    let report = fit_spectrum(&spec, &cfg.fit.options).unwrap();
    (cfg, sys, report)
}

fn nearest(v: &[f64], t: f64) -> f64 {
    v.iter().copied().min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs())).unwrap()
}

#[test]
fn strong_drive_five_spin_recovers_within_one_khz() {
    let (_, sys, report) = run(include_str!("../examples/pm_five_spin_strong_drive.cfg"));
    let a: Vec<f64> = report.dips.iter().filter_map(|d| d.a_par_khz).collect();
    assert_eq!(a.len(), 5);
    for n in &sys.nuclei {
        let t = n.hyperfine.a_par();
        assert!((nearest(&a, t) - t).abs() <= 1.0, "{} -> {a:?}", n.label);
    }
}

#[test]
fn xy32_five_spin_recovers_within_one_khz() {
    let (_, sys, report) = run(include_str!("../examples/xy32_five_spin.cfg"));
    let a: Vec<f64> = report.dips.iter().filter_map(|d| d.a_par_khz).collect();
    assert_eq!(a.len(), 5);
    for n in &sys.nuclei {
        let t = n.hyperfine.a_par();
        assert!((nearest(&a, t) - t).abs() <= 1.0, "{} -> {a:?}", n.label);
    }
}

/// At Ω′ = 200 kHz the lines sit below the first-order positions by roughly the
/// mean dressed-state shift.
#[test]
fn high_field_dips_follow_shifted_sidebands() {
    let (cfg, sys, report) = run(include_str!("../examples/pm_high_field_3015G.cfg"));
    let op = cfg.protocol_params().omega_prime_khz;
    let shift = pm_dressed_shift_khz(&sys, op);
    assert!(shift > 2.0 && shift < 3.5);
    let centers: Vec<f64> = report.dips.iter().map(|d| d.center_khz).collect();
    assert!(centers.len() >= 3, "{centers:?}");
    for r in predict_pm_resonances(&sys, op).iter().filter(|r| r.label != "N0") {
        let c = nearest(&centers, r.nu_minus_khz);
        assert!((c - r.nu_minus_khz).abs() < 3.5, "{}: {c} vs {}", r.label, r.nu_minus_khz);
        assert!((c - (r.nu_minus_khz - shift)).abs() < 1.5, "{}: {c}", r.label);
    }
}

/// At Ω′ = 104 kHz the five lines overlap into multiplets; the most isolated
/// one (C4) still sits at the shifted position.
#[test]
fn five_spin_1840g_runs_and_resolves_the_outer_line() {
    let (cfg, sys, report) = run(include_str!("../examples/pm_five_spin_1840G.cfg"));
    let op = cfg.protocol_params().omega_prime_khz;
    assert_eq!(op, 104.0);
    assert_eq!(cfg.protocol_params().t_f_us, 300.0);
    assert!(report.dips.len() >= 4, "{:?}", report.dips);
    let shift = pm_dressed_shift_khz(&sys, op);
    let c4 = predict_pm_resonances(&sys, op).into_iter().find(|r| r.label == "C4").unwrap();
    let centers: Vec<f64> = report.dips.iter().map(|d| d.center_khz).collect();
    let c = nearest(&centers, c4.nu_minus_khz - shift);
    assert!((c - (c4.nu_minus_khz - shift)).abs() < 1.0, "{c} vs {}", c4.nu_minus_khz - shift);
}
