//! `nvdr` command-line front end.
//!
//! Exit status: 0 on success, 1 for configuration or input errors, 2 for
//! numerical failures. Output files are written only after every computation
//! has succeeded.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::model::{HyperfineVector, NuclearSpinSpec, SpinSystemSpec};
use crate::power::{
    driving_field_ratio, driving_power_ratio, power_for_scheme, power_table, write_power_csv, PowerConfig,
    PowerEstimate, Scheme, TableSettings,
};
use crate::propagator::oracle::{hhdr_equivalence_sweep, pm_equivalence_sweep, EquivalenceReport};
use crate::sequences::dump_program;
use crate::spectroscopy::io::{read_spectrum_csv, report_json, write_spectrum_csv};
use crate::spectroscopy::{
    fit_series, fit_spectrum, hh_resonance_omega, predict_pm_resonances, run_sweep, xy_resonance_tau, CouplingContext,
    DipModel, DipReport, FitOptions, Spectrum,
};

#[derive(Debug, Parser)]
#[command(name = "nvdr", version, about = "NV-center double-resonance spectroscopy simulator")]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sweep described by a config file, then fit it.
    #[command(alias = "run")]
    Sweep(SweepArgs),
    /// Fit dips in a spectrum CSV.
    Fit(FitArgs),
    /// Print resonance predictions.
    Predict(PredictArgs),
    /// Microwave power per scheme.
    Power(PowerArgs),
    /// Compare the rotating-frame engine against the lab-frame oracle.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides `output.format` for the spectrum file.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Also write the control program of the first grid point to `program.tsv`.
    #[arg(long)]
    pub dump_program: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Lorentzian,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub spectrum: PathBuf,
    /// Write the report here instead of printing it.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `json` for the full report, `csv` for one row per dip.
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long)]
    pub max_dips: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub min_depth: Option<f64>,
    /// Static field (G), overriding the file header.
    #[arg(long, allow_negative_numbers = true)]
    pub bz: Option<f64>,
    /// Ω′ (kHz), overriding the file header.
    #[arg(long, allow_negative_numbers = true)]
    pub omega_prime: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Static field in Gauss.
    #[arg(long, allow_negative_numbers = true)]
    pub bz: f64,
    /// Parallel hyperfine couplings (kHz); repeat or comma-separate.
    #[arg(long, required = true, allow_hyphen_values = true, value_delimiter = ',')]
    pub apar: Vec<f64>,
    /// PM effective Rabi frequency Ω′ (kHz).
    #[arg(long, visible_alias = "omega-prime", allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Also print the XY resonance τ for this harmonic.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Pm,
    Hhdr,
    Xy,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Schemes to report; defaults to those whose amplitude is given.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub scheme: Vec<SchemeArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_prime: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_pulse: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub n_pulses: u32,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long)]
    pub t_pi: Option<f64>,
    /// Radiation efficiency in kHz/√mW.
    #[arg(long, allow_negative_numbers = true)]
    pub efficiency: Option<f64>,
    /// Static fields (G) for a comparison table; written as `power.csv`.
    #[arg(long, value_delimiter = ',')]
    pub fields: Vec<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Reduced carrier frequency in MHz.
    #[arg(long, default_value_t = 10.0)]
    pub carrier_mhz: f64,
    /// Largest accepted RMS difference.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::GridPoint { .. }
        | Error::Numerical(_)
        | Error::NotUnitary { .. }
        | Error::NotHermitian { .. }
        | Error::SampleOutOfRange { .. }
        | Error::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` and runs the command. Output goes to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> std::result::Result<(), (u8, String)>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{e}");
                    Ok(())
                }
                _ => Err((1, e.to_string())),
            };
        }
    };
    execute(&cli, out).map_err(|e| (exit_code(&e), format!("error: {e}")))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("threads", "must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| {
        let w: &mut dyn Write = &mut buf;
        match &cli.command {
            Command::Sweep(a) => cmd_sweep(a, cli.threads, w),
            Command::Fit(a) => cmd_fit(a, w),
            Command::Predict(a) => cmd_predict(a, w),
            Command::Power(a) => cmd_power(a, w),
            Command::OracleCheck(a) => cmd_oracle(a, w),
        }
    });
    out.write_all(&buf)?;
    result
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_path: String,
    config: &'a ExperimentConfig,
    threads: Option<usize>,
    seed: Option<u64>,
    files: Vec<String>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn spectrum_json(spec: &Spectrum) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a> {
        protocol: String,
        swept: &'static str,
        shots: u32,
        seed: Option<u64>,
        larmor_khz: f64,
        omega_prime_khz: f64,
        points: &'a [(f64, f64)],
    }
    serde_json::to_string_pretty(&Out {
        protocol: spec.plan.protocol.to_string(),
        swept: spec.plan.swept.as_str(),
        shots: spec.shots,
        seed: spec.seed,
        larmor_khz: spec.larmor_khz,
        omega_prime_khz: spec.plan.fixed.omega_prime_khz,
        points: &spec.points,
    })
    .map_err(|e| Error::Parse(e.to_string()))
}

fn summarize(report: &DipReport, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "dips: {} (residual {:.3e})", report.dips.len(), report.fit_residual)?;
    for d in &report.dips {
        let a = d.a_par_khz.map_or_else(|| "-".to_string(), |a| format!("{a:.3}"));
        writeln!(
            out,
            "  center {:.4}  width {:.4}  depth {:.4}  a_par_khz {}{}",
            d.center_khz,
            d.width_khz,
            d.depth,
            a,
            if d.ambiguous { "  (ambiguous)" } else { "" }
        )?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, threads: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let sys = cfg.spin_system()?;
    let plan = cfg.sweep_plan()?;
    let noise = cfg.noise()?;
    let format = a.format.unwrap_or(cfg.output.format);
    let dir = a.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());

    let program = if a.dump_program {
        Some(dump_program(&plan.program_at(plan.grid[0], 1.0).map_err(|e| Error::GridPoint {
            index: 0,
            x: plan.grid[0],
            source: Box::new(e),
        })?))
    } else {
        None
    };
    let spec = run_sweep(&sys, &plan, noise.as_ref())?;
    let report = if cfg.fit.enabled {
        Some(fit_spectrum(&spec, &cfg.fit.options)?)
    } else {
        None
    };

    let mut files = Vec::new();
    let spectrum_bytes = match format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_spectrum_csv(&spec, &mut buf)?;
            files.push(format!("{}.csv", cfg.output.spectrum));
            buf
        }
        OutputFormat::Json => {
            files.push(format!("{}.json", cfg.output.spectrum));
            spectrum_json(&spec)?.into_bytes()
        }
    };
    let report_text = report.as_ref().map(report_json).transpose()?;
    if report_text.is_some() {
        files.push(cfg.output.report.clone());
    }
    if program.is_some() {
        files.push("program.tsv".into());
    }
    let power_bytes = match &cfg.power {
        Some(p) if !p.fields_gauss.is_empty() => {
            let rows = power_table(&p.config, &p.fields_gauss, &p.table)?;
            let mut buf = Vec::new();
            write_power_csv(&rows, &mut buf)?;
            files.push("power.csv".into());
            Some(buf)
        }
        _ => None,
    };
    let manifest = Manifest {
        tool: "nvdr",
        version: env!("CARGO_PKG_VERSION"),
        command: "sweep",
        config_path: a.config.display().to_string(),
        config: &cfg,
        threads,
        seed: noise.map(|n| n.seed),
        files: files.clone(),
    };
    let manifest_text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;

    fs::create_dir_all(&dir)?;
    write_file(&dir, &files[0], &spectrum_bytes)?;
    if let Some(t) = &report_text {
        write_file(&dir, &cfg.output.report, t.as_bytes())?;
    }
    if let Some(p) = &program {
        write_file(&dir, "program.tsv", p.as_bytes())?;
    }
    if let Some(b) = &power_bytes {
        write_file(&dir, "power.csv", b)?;
    }
    write_file(&dir, &cfg.output.manifest, manifest_text.as_bytes())?;

    writeln!(
        out,
        "{} sweep over {}: {} points -> {}",
        spec.plan.protocol,
        spec.plan.swept.as_str(),
        spec.len(),
        dir.display()
    )?;
    if let Some(r) = &report {
        summarize(r, out)?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let file = fs::File::open(&a.spectrum)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", a.spectrum.display())))?;
    let csv = read_spectrum_csv(BufReader::new(file))?;
    let mut opts = FitOptions::default();
    if let Some(m) = a.max_dips {
        if m == 0 {
            return Err(Error::invalid("max-dips", "must be >= 1"));
        }
        opts.max_dips = m;
    }
    if let Some(d) = a.min_depth {
        if !(d >= 0.0) {
            return Err(Error::invalid("min-depth", "must be >= 0"));
        }
        opts.min_depth = d;
    }
    if let Some(m) = a.model {
        opts.model = match m {
            ModelArg::Lorentzian => DipModel::LorentzianSum,
            ModelArg::Gaussian => DipModel::GaussianSum,
        };
    }
    let mut header = csv.clone();
    if let Some(b) = a.bz {
        header.larmor_khz = Some(SpinSystemSpec::new(b).map_err(|_| Error::invalid("bz", "must be > 0"))?.larmor_khz());
    }
    if let Some(op) = a.omega_prime {
        header.omega_prime_khz = Some(op);
    }
    let ctx: CouplingContext = header.coupling_context();
    let report = fit_series(&csv.xs, &csv.ys, &opts, ctx)?;
    let text = match a.format {
        OutputFormat::Json => report_json(&report)?,
        OutputFormat::Csv => {
            let mut s = String::from("center_khz,width_khz,depth,a_par_khz,center_stderr,ambiguous\n");
            for d in &report.dips {
                let a = d.a_par_khz.map_or_else(String::new, |a| a.to_string());
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    d.center_khz, d.width_khz, d.depth, a, d.center_stderr, d.ambiguous
                ));
            }
            s
        }
    };
    match &a.out_dir {
        Some(dir) => {
            let name = match a.format {
                OutputFormat::Json => "report.json",
                OutputFormat::Csv => "dips.csv",
            };
            fs::create_dir_all(dir)?;
            write_file(dir, name, text.as_bytes())?;
            summarize(&report, out)?;
        }
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictRow {
    a_par_khz: f64,
    target_khz: f64,
    nu_minus_khz: Option<f64>,
    nu_plus_khz: Option<f64>,
    lower_degenerate: Option<bool>,
    hh_omega_khz: f64,
    xy_tau_us: Option<f64>,
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(op) = a.omega {
        if !(op >= 0.0) {
            return Err(Error::invalid("omega", "must be >= 0"));
        }
    }
    let mut rows = Vec::new();
    for (i, &ap) in a.apar.iter().enumerate() {
        let sys = SpinSystemSpec::new(a.bz)
            .map_err(|_| Error::invalid("bz", "must be > 0"))?
            .with_nucleus(NuclearSpinSpec::new(format!("n{i}"), HyperfineVector::from_par_perp(ap, 0.0)))?;
        let pm = a.omega.map(|op| predict_pm_resonances(&sys, op).remove(0));
        rows.push(PredictRow {
            a_par_khz: ap,
            target_khz: sys.locked_nuclear_khz(0).abs(),
            nu_minus_khz: pm.as_ref().map(|r| r.nu_minus_khz),
            nu_plus_khz: pm.as_ref().map(|r| r.nu_plus_khz),
            lower_degenerate: pm.as_ref().map(|r| r.lower_degenerate),
            hh_omega_khz: hh_resonance_omega(&sys, 0),
            xy_tau_us: a.k.map(|k| xy_resonance_tau(&sys, 0, k)).transpose()?,
        });
    }
    if a.format == Some(OutputFormat::Json) {
        let s = serde_json::to_string_pretty(&rows).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "{s}")?;
        return Ok(());
    }
    let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.p$}"));
    writeln!(out, "a_par_khz\tnu_minus_khz\tnu_plus_khz\thh_omega_khz\txy_tau_us")?;
    for r in &rows {
        let minus = match r.lower_degenerate {
            Some(true) => "degenerate".to_string(),
            _ => opt(r.nu_minus_khz, 3),
        };
        writeln!(
            out,
            "{:.3}\t{}\t{}\t{:.3}\t{}",
            r.a_par_khz,
            minus,
            opt(r.nu_plus_khz, 3),
            r.hh_omega_khz,
            opt(r.xy_tau_us, 5)
        )?;
    }
    Ok(())
}

fn cmd_power(a: &PowerArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = match a.efficiency {
        Some(e) => PowerConfig::new(e).map_err(|_| Error::invalid("efficiency", "must be finite and > 0"))?,
        None => PowerConfig::default(),
    };
    let mut wanted = a.scheme.clone();
    if wanted.is_empty() {
        if a.omega_prime.is_some() {
            wanted.push(SchemeArg::Pm);
        }
        if a.omega.is_some() {
            wanted.push(SchemeArg::Hhdr);
        }
        if a.omega_pulse.is_some() {
            wanted.push(SchemeArg::Xy);
        }
    }
    if wanted.is_empty() && a.fields.is_empty() {
        return Err(Error::invalid("scheme", "give --omega-prime, --omega, --omega-pulse or --fields"));
    }
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Error::invalid(flag, "required by the selected scheme"));
    let mut estimates: Vec<(SchemeArg, Scheme, PowerEstimate)> = Vec::new();
    for s in wanted {
        let scheme = match s {
            SchemeArg::Pm => Scheme::PmHhdr {
                omega_prime_khz: need(a.omega_prime, "omega-prime")?,
            },
            SchemeArg::Hhdr => Scheme::Hhdr {
                omega_khz: need(a.omega, "omega")?,
            },
            SchemeArg::Xy => Scheme::XyN {
                omega_pulse_khz: need(a.omega_pulse, "omega-pulse")?,
                n: a.n_pulses,
                tau_us: a.tau,
                t_pi_us: a.t_pi,
            },
        };
        let est = power_for_scheme(&cfg, &scheme)?;
        estimates.push((s, scheme, est));
    }
    if !estimates.is_empty() {
        writeln!(out, "efficiency {} kHz/sqrt(mW)", cfg.radiation_efficiency)?;
        writeln!(out, "scheme\trabi_khz\tmax_rabi_khz\tduty\tpeak_mw\tavg_mw")?;
        for (_, _, e) in &estimates {
            writeln!(
                out,
                "{}\t{}\t{}\t{:.4}\t{:.6e}\t{:.6e}",
                e.scheme, e.rabi_khz, e.max_rabi_khz, e.duty_cycle, e.peak_mw, e.average_mw
            )?;
        }
    }
    if let Some((_, pm, pm_est)) = estimates.iter().find(|e| e.0 == SchemeArg::Pm) {
        for (_, s, e) in estimates.iter().filter(|e| e.0 != SchemeArg::Pm) {
            let peak = e.peak_mw / pm_est.peak_mw;
            writeln!(
                out,
                "{}/pm: drive field ratio {}, drive power ratio {}, peak power ratio {:.4} (pm/{} = 1/{:.4})",
                e.scheme,
                driving_field_ratio(s, pm),
                driving_power_ratio(s, pm),
                peak,
                e.scheme,
                peak
            )?;
        }
    }
    if !a.fields.is_empty() {
        let settings = TableSettings {
            omega_prime_khz: a.omega_prime.unwrap_or(TableSettings::default().omega_prime_khz),
            xy_n: a.n_pulses,
            ..TableSettings::default()
        };
        let rows = power_table(&cfg, &a.fields, &settings)?;
        let mut buf = Vec::new();
        write_power_csv(&rows, &mut buf)?;
        match &a.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                write_file(dir, "power.csv", &buf)?;
                writeln!(out, "wrote {}", dir.join("power.csv").display())?;
            }
            None => out.write_all(&buf)?,
        }
    }
    Ok(())
}

/// Reduced system for the equivalence suite: Larmor 200 kHz, one nucleus.
pub fn oracle_system() -> Result<SpinSystemSpec> {
    SpinSystemSpec::new(200.0 / 1.07084)?
        .with_nucleus(NuclearSpinSpec::new("c", HyperfineVector::from_par_perp(-20.0, 40.0)))
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<()> {
    if a.points < 2 {
        return Err(Error::invalid("points", "must be >= 2"));
    }
    let sys = oracle_system()?;
    let c = hh_resonance_omega(&sys, 0);
    let span = 100.0;
    let step = 2.0 * span / (a.points - 1) as f64;
    let omegas: Vec<f64> = (0..a.points).map(|i| c - span + i as f64 * step).collect();
    let hh = hhdr_equivalence_sweep(&sys, &omegas, 25.0, a.carrier_mhz)?;

    let op = 20.0;
    let nu0 = predict_pm_resonances(&sys, op)[0].nu_minus_khz;
    let nus: Vec<f64> = (0..21).map(|i| nu0 - 10.0 + i as f64).collect();
    let pm = pm_equivalence_sweep(&sys, &nus, op, 50.0, a.carrier_mhz)?;

    let mut failed = false;
    let mut line = |name: &str, r: &EquivalenceReport| -> Result<()> {
        let ok = r.rms < a.tolerance;
        failed |= !ok;
        writeln!(
            out,
            "{} {name}: {} points, rms {:.3e}, max {:.3e} (tolerance {})",
            if ok { "PASS" } else { "FAIL" },
            r.xs.len(),
            r.rms,
            r.max_abs,
            a.tolerance
        )?;
        Ok(())
    };
    line("hhdr omega sweep", &hh)?;
    line("pm_hhdr nu sweep", &pm)?;
    if failed {
        return Err(Error::Numerical("rotating frame and lab-frame oracle disagree".into()));
    }
    Ok(())
}
