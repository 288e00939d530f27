//! Experiment configuration file (TOML).
//!
//! Every section rejects unknown keys. [`ExperimentConfig::validate`] checks
//! all values before any computation and reports errors by dotted key path,
//! e.g. `system.b_z_gauss`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HyperfineVector, NuclearSpinSpec, PhysicalConstants, SpinSystemSpec};
use crate::power::{PowerConfig, TableSettings};
use crate::propagator::{NuclearInit, ReadoutAxis};
use crate::sequences::{ProtocolTag, PulseModel};
use crate::spectroscopy::sweep::DEFAULT_RESOLUTION_FLOOR_KHZ;
use crate::spectroscopy::{AmplitudeNoise, FitOptions, ProtocolParams, SweepPlan, SweptParameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub protocol: ProtocolSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub power: Option<PowerSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub b_z_gauss: f64,
    #[serde(default)]
    pub constants: Option<PhysicalConstants>,
    #[serde(default)]
    pub nuclei: Vec<NucleusSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusSection {
    pub label: String,
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
    #[serde(default)]
    pub bath_proxy: bool,
}

/// Protocol tag plus the fixed (non-swept) parameters. Omitted values take the
/// [`ProtocolParams`] defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolTag,
    pub omega_khz: Option<f64>,
    pub omega_prime_khz: Option<f64>,
    pub nu_khz: Option<f64>,
    pub t_f_us: Option<f64>,
    pub start_high: Option<bool>,
    pub n_pulses: Option<u32>,
    pub tau_us: Option<f64>,
    pub pulse_model: Option<PulseModel>,
}

/// Either `values` or all of `start`, `stop`, `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweptParameter,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub values: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub emulate_resolution: bool,
    #[serde(default = "default_floor")]
    pub resolution_floor_khz: f64,
    #[serde(default)]
    pub nuclear_init: NuclearInit,
    #[serde(default)]
    pub readout: ReadoutAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub relative_std: f64,
    pub shots: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub options: FitOptions,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            enabled: true,
            options: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the working directory; `--out-dir` overrides it.
    pub dir: PathBuf,
    /// File stem of the spectrum; the extension follows `format`.
    pub spectrum: String,
    pub report: String,
    pub manifest: String,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            spectrum: "spectrum".into(),
            report: "report.json".into(),
            manifest: "manifest.json".into(),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    #[serde(default)]
    pub config: PowerConfig,
    #[serde(default)]
    pub table: TableSettings,
    #[serde(default)]
    pub fields_gauss: Vec<f64>,
}

fn yes() -> bool {
    true
}

fn default_floor() -> f64 {
    DEFAULT_RESOLUTION_FLOOR_KHZ
}

fn key_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(key_err(key, format!("must be finite and > 0, got {v}")))
    }
}

/// Re-labels a library validation error with the config section it came from.
fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => key_err(&format!("{section}.{name}"), reason),
        Error::DimensionOverflow { .. } => key_err(&format!("{section}.nuclei"), e.to_string()),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        // the rendered toml error quotes the offending line and key
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Builds every domain object once so that all errors surface before any
    /// computation.
    pub fn validate(&self) -> Result<()> {
        self.spin_system()?;
        let plan = self.sweep_plan()?;
        self.noise()?;
        let o = &self.fit.options;
        if o.max_dips == 0 {
            return Err(key_err("fit.options.max_dips", "must be >= 1"));
        }
        positive("fit.options.threshold_sigmas", o.threshold_sigmas)?;
        if !(o.min_depth >= 0.0) {
            return Err(key_err("fit.options.min_depth", "must be >= 0"));
        }
        if !(o.relative_floor >= 0.0 && o.relative_floor < 1.0) {
            return Err(key_err("fit.options.relative_floor", "must lie in [0, 1)"));
        }
        if let Some(s) = o.min_separation {
            positive("fit.options.min_separation", s)?;
        }
        positive("fit.options.tolerance", o.tolerance)?;
        if o.max_iterations == 0 {
            return Err(key_err("fit.options.max_iterations", "must be >= 1"));
        }
        if self.fit.enabled && plan.grid.len() < 10 {
            return Err(key_err("sweep", "fitting needs at least 10 grid points; disable with fit.enabled = false"));
        }
        for (k, v) in [
            ("output.spectrum", &self.output.spectrum),
            ("output.report", &self.output.report),
            ("output.manifest", &self.output.manifest),
        ] {
            if v.is_empty() || v.contains('/') || v.contains('\\') {
                return Err(key_err(k, "must be a plain file name"));
            }
        }
        if let Some(p) = &self.power {
            p.config.validate().map_err(|e| in_section("power.config", e))?;
            positive("power.table.omega_prime_khz", p.table.omega_prime_khz)?;
            positive("power.table.gamma_n_khz_per_gauss", p.table.gamma_n_khz_per_gauss)?;
            if !(p.table.xy_rabi_per_larmor >= 1.0) {
                return Err(key_err("power.table.xy_rabi_per_larmor", "must be >= 1"));
            }
            for &b in &p.fields_gauss {
                positive("power.fields_gauss", b)?;
            }
        }
        Ok(())
    }

    pub fn spin_system(&self) -> Result<SpinSystemSpec> {
        let s = &self.system;
        positive("system.b_z_gauss", s.b_z_gauss)?;
        let mut sys = SpinSystemSpec::new(s.b_z_gauss).map_err(|e| in_section("system", e))?;
        if let Some(c) = s.constants {
            sys = sys.with_constants(c).map_err(|e| in_section("system.constants", e))?;
        }
        for (i, n) in s.nuclei.iter().enumerate() {
            let key = format!("system.nuclei[{i}]");
            if !n.a_par_khz.is_finite() {
                return Err(key_err(&format!("{key}.a_par_khz"), "must be finite"));
            }
            if !(n.a_perp_khz >= 0.0) || !n.a_perp_khz.is_finite() {
                return Err(key_err(&format!("{key}.a_perp_khz"), "must be finite and >= 0"));
            }
            let mut spec = NuclearSpinSpec::new(n.label.clone(), HyperfineVector::from_par_perp(n.a_par_khz, n.a_perp_khz));
            if n.bath_proxy {
                spec = spec.bath_proxy();
            }
            sys = sys.with_nucleus(spec).map_err(|e| in_section(&key, e))?;
        }
        Ok(sys)
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        let p = &self.protocol;
        let d = ProtocolParams::default();
        ProtocolParams {
            omega_khz: p.omega_khz.unwrap_or(d.omega_khz),
            omega_prime_khz: p.omega_prime_khz.unwrap_or(d.omega_prime_khz),
            nu_khz: p.nu_khz.unwrap_or(d.nu_khz),
            t_f_us: p.t_f_us.unwrap_or(d.t_f_us),
            start_high: p.start_high.unwrap_or(d.start_high),
            n_pulses: p.n_pulses.unwrap_or(d.n_pulses),
            tau_us: p.tau_us.unwrap_or(d.tau_us),
            pulse_model: p.pulse_model.unwrap_or(d.pulse_model),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let s = &self.sweep;
        match (&s.values, s.start, s.stop, s.step) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    return Err(key_err("sweep.values", "must not be empty"));
                }
                Ok(v.clone())
            }
            (None, Some(a), Some(b), Some(h)) => {
                positive("sweep.step", h)?;
                if !(b >= a) {
                    return Err(key_err("sweep.stop", "must be >= sweep.start"));
                }
                let n = ((b - a) / h).floor();
                if n > 1e6 {
                    return Err(key_err("sweep.step", "grid would exceed 10^6 points"));
                }
                SweepPlan::linear_grid(a, b, h).map_err(|e| in_section("sweep", e))
            }
            (Some(_), ..) => Err(key_err("sweep.values", "give either values or start/stop/step, not both")),
            _ => Err(key_err("sweep.start", "start, stop and step are all required without values")),
        }
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let params = self.protocol_params();
        check_params(self.protocol.kind, self.sweep.parameter, &params)?;
        let grid = self.grid()?;
        if self.sweep.parameter == SweptParameter::Tau && grid.iter().any(|&t| !(t > 0.0)) {
            return Err(key_err("sweep", "tau values must be > 0"));
        }
        if !(self.sweep.resolution_floor_khz >= 0.0) {
            return Err(key_err("sweep.resolution_floor_khz", "must be >= 0"));
        }
        let mut plan = SweepPlan::unfloored(self.protocol.kind, self.sweep.parameter, grid, params)
            .map_err(|e| match e {
                Error::InvalidParameter { name, reason } if name == "swept" => key_err("sweep.parameter", reason),
                other => in_section("sweep", other),
            })?
            .with_nuclear_init(self.sweep.nuclear_init)
            .with_readout(self.sweep.readout);
        plan.emulate_resolution = self.sweep.emulate_resolution;
        plan.resolution_floor_khz = self.sweep.resolution_floor_khz;
        plan.validate().map_err(|e| in_section("sweep", e))?;
        Ok(plan)
    }

    pub fn noise(&self) -> Result<Option<AmplitudeNoise>> {
        match self.noise {
            None => Ok(None),
            Some(n) => AmplitudeNoise::new(n.relative_std, n.shots, n.seed)
                .map(Some)
                .map_err(|e| in_section("noise", e)),
        }
    }
}

fn check_params(kind: ProtocolTag, swept: SweptParameter, p: &ProtocolParams) -> Result<()> {
    let swept_key = |k: &str| {
        matches!(
            (swept, k),
            (SweptParameter::Nu, "nu_khz") | (SweptParameter::Tau, "tau_us")
        ) || (swept == SweptParameter::Omega
            && ((kind == ProtocolTag::Hhdr && k == "omega_khz") || (kind == ProtocolTag::PmHhdr && k == "omega_prime_khz")))
    };
    let mut checks: Vec<(&str, f64)> = Vec::new();
    match kind {
        ProtocolTag::Hhdr => checks.extend([("omega_khz", p.omega_khz), ("t_f_us", p.t_f_us)]),
        ProtocolTag::PmHhdr => checks.extend([("nu_khz", p.nu_khz), ("t_f_us", p.t_f_us)]),
        ProtocolTag::XyN => checks.push(("tau_us", p.tau_us)),
    }
    for (k, v) in checks {
        if !swept_key(k) {
            positive(&format!("protocol.{k}"), v)?;
        }
    }
    if kind == ProtocolTag::PmHhdr && !swept_key("omega_prime_khz") && !(p.omega_prime_khz >= 0.0) {
        return Err(key_err("protocol.omega_prime_khz", "must be >= 0"));
    }
    if kind == ProtocolTag::XyN {
        if p.n_pulses % 8 != 0 {
            return Err(key_err("protocol.n_pulses", "must be a multiple of 8"));
        }
        if let PulseModel::Finite { omega_pi_khz } = p.pulse_model {
            positive("protocol.pulse_model.omega_pi_khz", omega_pi_khz)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PM: &str = r#"
[system]
b_z_gauss = 1840.0
[[system.nuclei]]
label = "C1"
a_par_khz = -11.3
a_perp_khz = 40.0

[protocol]
kind = "pm_hhdr"
omega_prime_khz = 104.0
t_f_us = 300.0

[sweep]
parameter = "nu"
start = 1800.0
stop = 1900.0
step = 2.0
"#;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml_str(PM).unwrap();
        let plan = cfg.sweep_plan().unwrap();
        assert_eq!(plan.grid.len(), 51);
        assert_eq!(plan.fixed.omega_prime_khz, 104.0);
        assert!(plan.emulate_resolution);
        assert_eq!(cfg.spin_system().unwrap().n_nuclei(), 1);
        assert!(cfg.noise().unwrap().is_none());
        assert!(cfg.fit.enabled);
        let echo = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&echo).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = PM.replace("t_f_us = 300.0", "t_f_us = 300.0\nbogus_key = 1");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn negative_field_is_named() {
        let text = PM.replace("b_z_gauss = 1840.0", "b_z_gauss = -5.0");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(key_of(err), "system.b_z_gauss");
    }

    #[test]
    fn bad_combinations() {
        let text = PM.replace("parameter = \"nu\"", "parameter = \"tau\"");
        assert_eq!(key_of(ExperimentConfig::from_toml_str(&text).unwrap_err()), "sweep.parameter");
        let text = PM.replace("step = 2.0", "step = 0.5");
        assert_eq!(key_of(ExperimentConfig::from_toml_str(&text).unwrap_err()), "sweep.grid");
        let text = PM.replace("step = 2.0", "step = 0.5\nemulate_resolution = false");
        assert!(ExperimentConfig::from_toml_str(&text).is_ok());
        let text = PM.replace("step = 2.0", "step = 2.0\nvalues = [1.0]");
        assert_eq!(key_of(ExperimentConfig::from_toml_str(&text).unwrap_err()), "sweep.values");
        let text = PM.replace("a_perp_khz = 40.0", "a_perp_khz = -1.0");
        assert_eq!(
            key_of(ExperimentConfig::from_toml_str(&text).unwrap_err()),
            "system.nuclei[0].a_perp_khz"
        );
        let text = format!("{PM}\n[noise]\nrelative_std = -0.1\nshots = 4\nseed = 1\n");
        assert_eq!(key_of(ExperimentConfig::from_toml_str(&text).unwrap_err()), "noise.relative_std");
    }
}
