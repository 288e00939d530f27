use nvdr::power::{power_for_scheme, PowerConfig, Scheme};
use nvdr::sequences::{compile_pm_hhdr, compile_xyn};
use nvdr::spectroscopy::io::{read_spectrum_csv, write_spectrum_csv};
use nvdr::spectroscopy::{bessel_j1, fit_series, run_sweep, AmplitudeNoise, CouplingContext, FitOptions, ProtocolParams, SweptParameter};
use nvdr::{HyperfineVector, NuclearSpinSpec, PmParams, ProtocolTag, PulseModel, SpinSystemSpec, SweepPlan};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bessel_is_odd(x in -60.0f64..60.0) {
        let a = bessel_j1(x).unwrap();
        let b = bessel_j1(-x).unwrap();
        prop_assert!((a + b).abs() <= 1e-14);
        prop_assert!(a.abs() <= 0.5819);
    }

    #[test]
    fn pm_realized_duration(op in 0.0f64..500.0, nu in 50.0f64..5000.0, t_f in 0.0f64..400.0) {
        let p = PmParams::new(op, nu, t_f).unwrap();
        let prog = compile_pm_hhdr(&p).unwrap();
        let half = 1e3 / (2.0 * nu);
        let realized = prog.total_duration_us();
        prop_assert!(realized <= t_f * (1.0 + 1e-12) + 1e-9);
        prop_assert!(t_f - realized < half * (1.0 + 1e-9));
        let n = (realized / half).round();
        prop_assert!((realized - n * half).abs() <= 1e-9 * realized.max(1.0));
    }

    #[test]
    fn xy_duration_is_2n_tau(blocks in 0u32..8, tau in 0.5f64..30.0, finite in any::<bool>()) {
        let n = 8 * blocks;
        let model = if finite { PulseModel::Finite { omega_pi_khz: 5000.0 } } else { PulseModel::Ideal };
        let prog = compile_xyn(n, tau, model).unwrap();
        let expect = if n == 0 { 2.0 * tau } else { 2.0 * n as f64 * tau };
        prop_assert!((prog.total_duration_us() - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn power_scales_quadratically(eff in 1.0f64..1000.0, omega in 1.0f64..5000.0, k in 0.1f64..10.0) {
        let cfg = PowerConfig::new(eff).unwrap();
        for (a, b) in [
            (Scheme::Hhdr { omega_khz: omega }, Scheme::Hhdr { omega_khz: k * omega }),
            (Scheme::PmHhdr { omega_prime_khz: omega }, Scheme::PmHhdr { omega_prime_khz: k * omega }),
        ] {
            let pa = power_for_scheme(&cfg, &a).unwrap();
            let pb = power_for_scheme(&cfg, &b).unwrap();
            prop_assert!((pb.peak_mw / pa.peak_mw - k * k).abs() <= 1e-9 * k * k);
            prop_assert!(pa.average_mw <= pa.peak_mw * (1.0 + 1e-12));
        }
    }

    #[test]
    fn xy_average_below_peak(omega in 100.0f64..20000.0, blocks in 1u32..8, tau in 1.0f64..30.0) {
        let cfg = PowerConfig::default();
        let s = Scheme::XyN { omega_pulse_khz: omega, n: 8 * blocks, tau_us: tau, t_pi_us: None };
        match power_for_scheme(&cfg, &s) {
            Ok(p) => {
                prop_assert!(p.duty_cycle > 0.0 && p.duty_cycle <= 1.0);
                prop_assert!(p.average_mw <= p.peak_mw);
            }
            // pulses longer than their spacing
            Err(_) => prop_assert!(1e3 / (2.0 * omega) > 2.0 * tau),
        }
    }

    #[test]
    fn csv_round_trip(ys in prop::collection::vec(0.0f64..=1.0, 1..60), x0 in -1e4f64..1e4, seed in any::<u64>()) {
        let grid: Vec<f64> = (0..ys.len()).map(|i| x0 + 2.0 * i as f64).collect();
        let plan = SweepPlan::new(ProtocolTag::PmHhdr, SweptParameter::Nu, grid.iter().map(|x| x.abs() + 1.0).collect(), ProtocolParams::default());
        // the plan only matters for the header; any valid one will do
        let plan = plan.unwrap_or_else(|_| SweepPlan::new(ProtocolTag::PmHhdr, SweptParameter::Nu, vec![1000.0], ProtocolParams::default()).unwrap());
        let spec = nvdr::Spectrum {
            points: grid.iter().copied().zip(ys.iter().copied()).collect(),
            plan,
            shots: 3,
            seed: Some(seed),
            larmor_khz: 1970.0,
        };
        let mut buf = Vec::new();
        write_spectrum_csv(&spec, &mut buf).unwrap();
        let back = read_spectrum_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.xs, grid);
        prop_assert_eq!(back.ys, ys);
        prop_assert_eq!(back.seed, Some(seed));
        prop_assert_eq!(back.shots, Some(3));
        prop_assert_eq!(back.larmor_khz, Some(1970.0));
    }

    #[test]
    fn lorentzian_recovered(c in 40.0f64..160.0, hw in 2.0f64..6.0, depth in 0.05f64..0.6) {
        let xs: Vec<f64> = (0..=200).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - depth / (1.0 + ((x - c) / hw).powi(2))).collect();
        let opts = FitOptions { max_dips: 2, ..Default::default() };
        let r = fit_series(&xs, &ys, &opts, CouplingContext::None).unwrap();
        prop_assert_eq!(r.dips.len(), 1);
        let d = &r.dips[0];
        prop_assert!((d.center_khz - c).abs() < 0.02, "{} vs {}", d.center_khz, c);
        prop_assert!((d.width_khz - 2.0 * hw).abs() < 0.02 * hw);
        prop_assert!((d.depth - depth).abs() < 0.01);
    }
}

fn small_system(a_par: f64, a_perp: f64) -> SpinSystemSpec {
    SpinSystemSpec::new(1840.0)
        .unwrap()
        .with_nucleus(NuclearSpinSpec::new("C", HyperfineVector::from_par_perp(a_par, a_perp)))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sweep_independent_of_thread_count(a_par in -40.0f64..40.0, a_perp in 5.0f64..40.0, seed in any::<u64>()) {
        let sys = small_system(a_par, a_perp);
        let grid = SweepPlan::linear_grid(1850.0, 1900.0, 2.0).unwrap();
        let fixed = ProtocolParams { t_f_us: 100.0, ..Default::default() };
        let plan = SweepPlan::new(ProtocolTag::PmHhdr, SweptParameter::Nu, grid, fixed).unwrap();
        let noise = AmplitudeNoise::new(0.02, 3, seed).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_sweep(&sys, &plan, Some(&noise)).unwrap())
        };
        let a = run(1);
        let b = run(4);
        prop_assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert_eq!(p.0.to_bits(), q.0.to_bits());
            prop_assert_eq!(p.1.to_bits(), q.1.to_bits());
        }
    }
}
