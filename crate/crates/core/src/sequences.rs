//! Compilation of HHDR, PM-HHDR and XY-N into piecewise-constant control programs.
//!
//! A program is a list of [`Step`]s in the rotating frame. Drive steps carry a
//! constant amplitude, phase and detuning; ideal pulses are instantaneous
//! electron rotations. Preparation and readout rotations are not part of the
//! program, the caller picks the initial state and readout axis instead.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest allowed PM half-period (µs).
pub const MIN_HALF_PERIOD_US: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    /// Constant drive `(Ω/2)(cos φ σx + sin φ σy) + Δ P1` for `duration_us`.
    Drive {
        amplitude_khz: f64,
        phase: f64,
        detuning_khz: f64,
        duration_us: f64,
    },
    /// Instantaneous electron rotation by `angle` about the axis at `phase`.
    Pulse { phase: f64, angle: f64 },
}

impl Step {
    pub fn free(duration_us: f64) -> Self {
        Step::Drive {
            amplitude_khz: 0.0,
            phase: 0.0,
            detuning_khz: 0.0,
            duration_us,
        }
    }

    pub fn duration_us(&self) -> f64 {
        match *self {
            Step::Drive { duration_us, .. } => duration_us,
            Step::Pulse { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Step::Drive {
                amplitude_khz,
                phase,
                detuning_khz,
                duration_us,
            } => {
                if !(amplitude_khz >= 0.0) || !amplitude_khz.is_finite() {
                    return Err(Error::invalid("amplitude_khz", "must be finite and >= 0"));
                }
                if !phase.is_finite() || !detuning_khz.is_finite() {
                    return Err(Error::invalid("phase", "phase and detuning must be finite"));
                }
                if !(duration_us >= 0.0) || !duration_us.is_finite() {
                    return Err(Error::invalid("duration_us", "must be finite and >= 0"));
                }
            }
            Step::Pulse { phase, angle } => {
                if !phase.is_finite() || !angle.is_finite() {
                    return Err(Error::invalid("pulse", "phase and angle must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolTag {
    Hhdr,
    PmHhdr,
    XyN,
}

impl ProtocolTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolTag::Hhdr => "hhdr",
            ProtocolTag::PmHhdr => "pm_hhdr",
            ProtocolTag::XyN => "xy_n",
        }
    }
}

impl std::fmt::Display for ProtocolTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Protocol parameters echoed back by the compilers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_plus_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_minus_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_khz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_periods: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requested_t_f_us: Option<f64>,
    /// Interrogation time actually covered by the program.
    pub realized_t_f_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_pi_khz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProgram {
    steps: Vec<Step>,
    total_duration_us: f64,
    tag: ProtocolTag,
    metadata: ProgramMetadata,
}

impl ControlProgram {
    pub fn new(steps: Vec<Step>, tag: ProtocolTag, metadata: ProgramMetadata) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("steps", "a program needs at least one step"));
        }
        for s in &steps {
            s.validate()?;
        }
        let total_duration_us = steps.iter().map(Step::duration_us).sum();
        Ok(Self {
            steps,
            total_duration_us,
            tag,
            metadata,
        })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn total_duration_us(&self) -> f64 {
        self.total_duration_us
    }

    pub fn tag(&self) -> ProtocolTag {
        self.tag
    }

    pub fn metadata(&self) -> &ProgramMetadata {
        &self.metadata
    }

    /// Same steps in reverse order.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.steps.reverse();
        out
    }
}

/// Two-tone phase-modulation parameters. Frequencies in kHz, time in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmParams {
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub nu: f64,
    pub t_f: f64,
    /// Whether the first half-period has the phases aligned (amplitude Ω₊+Ω₋).
    pub start_high: bool,
}

impl PmParams {
    /// Balanced tones `Ω₊ = Ω₋ = Ω′`, starting on the high half-period.
    pub fn new(omega_prime: f64, nu: f64, t_f: f64) -> Result<Self> {
        let p = Self {
            omega_plus: omega_prime,
            omega_minus: omega_prime,
            nu,
            t_f,
            start_high: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// Mean of the two tone amplitudes.
    pub fn omega_prime(&self) -> f64 {
        0.5 * (self.omega_plus + self.omega_minus)
    }

    pub fn half_period_us(&self) -> f64 {
        1.0 / (2.0 * self.nu * 1e-3)
    }

    /// `⌊2ν t_f⌋`, the number of whole half-periods that fit in `t_f`.
    pub fn half_periods(&self) -> u64 {
        (2.0 * self.nu * 1e-3 * self.t_f * (1.0 + 1e-12)).floor() as u64
    }

    pub fn realized_t_f(&self) -> f64 {
        self.half_periods() as f64 * self.half_period_us()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_plus >= 0.0) || !(self.omega_minus >= 0.0) || !self.omega_plus.is_finite() || !self.omega_minus.is_finite() {
            return Err(Error::invalid("omega_prime", "tone amplitudes must be finite and >= 0"));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::invalid("nu", "must be finite and > 0"));
        }
        if self.half_period_us() < MIN_HALF_PERIOD_US {
            return Err(Error::invalid("nu", format!("half-period 1/(2ν) below {MIN_HALF_PERIOD_US} µs")));
        }
        if !(self.t_f >= 0.0) || !self.t_f.is_finite() {
            return Err(Error::invalid("t_f", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseModel {
    #[default]
    Ideal,
    /// Resonant square π pulses of Rabi frequency `omega_pi_khz`.
    Finite { omega_pi_khz: f64 },
}

/// Spin-locking drive of amplitude `omega` (kHz) for `t_f` µs.
pub fn compile_hhdr(omega: f64, t_f: f64) -> Result<ControlProgram> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::invalid("omega", "must be finite and >= 0"));
    }
    if !(t_f >= 0.0) || !t_f.is_finite() {
        return Err(Error::invalid("t_f", "must be finite and >= 0"));
    }
    let step = Step::Drive {
        amplitude_khz: omega,
        phase: 0.0,
        detuning_khz: 0.0,
        duration_us: t_f,
    };
    let metadata = ProgramMetadata {
        omega_khz: Some(omega),
        requested_t_f_us: Some(t_f),
        realized_t_f_us: t_f,
        ..Default::default()
    };
    ControlProgram::new(vec![step], ProtocolTag::Hhdr, metadata)
}

/// Square-wave phase modulation realized as amplitude toggling.
///
/// Aligned half-periods drive at `Ω₊+Ω₋`; opposed ones at `|Ω₊-Ω₋|` (zero for
/// balanced tones). Only whole half-periods are kept.
pub fn compile_pm_hhdr(p: &PmParams) -> Result<ControlProgram> {
    p.validate()?;
    let half = p.half_period_us();
    let n = p.half_periods();
    let high = Step::Drive {
        amplitude_khz: p.omega_plus + p.omega_minus,
        phase: 0.0,
        detuning_khz: 0.0,
        duration_us: half,
    };
    let diff = p.omega_plus - p.omega_minus;
    let low = Step::Drive {
        amplitude_khz: diff.abs(),
        phase: if diff < 0.0 { PI } else { 0.0 },
        detuning_khz: 0.0,
        duration_us: half,
    };
    let steps: Vec<Step> = if n == 0 {
        vec![Step::free(0.0)]
    } else {
        (0..n)
            .map(|i| if (i % 2 == 0) == p.start_high { high } else { low })
            .collect()
    };
    let metadata = ProgramMetadata {
        omega_plus_khz: Some(p.omega_plus),
        omega_minus_khz: Some(p.omega_minus),
        nu_khz: Some(p.nu),
        half_periods: Some(n),
        requested_t_f_us: Some(p.t_f),
        realized_t_f_us: p.realized_t_f(),
        ..Default::default()
    };
    ControlProgram::new(steps, ProtocolTag::PmHhdr, metadata)
}

/// Canonical XY-8 phase ordering: X Y X Y Y X Y X.
pub const XY8_PHASES: [f64; 8] = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0];

/// `n_pulses` π pulses in XY-8 order, each basic block `τ - π - 2τ - … - π - τ`.
///
/// `n_pulses = 0` yields a single free-evolution step of `2τ`. Finite pulses
/// are centred on the ideal pulse positions, so the total length is `2nτ` for
/// either model.
pub fn compile_xyn(n_pulses: u32, tau: f64, model: PulseModel) -> Result<ControlProgram> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite and > 0"));
    }
    if n_pulses % 8 != 0 {
        return Err(Error::invalid("n_pulses", format!("{n_pulses} is not a multiple of 8")));
    }
    let t_pi = match model {
        PulseModel::Ideal => 0.0,
        PulseModel::Finite { omega_pi_khz } => {
            if !(omega_pi_khz > 0.0) || !omega_pi_khz.is_finite() {
                return Err(Error::invalid("omega_pi", "must be finite and > 0"));
            }
            let t_pi = 1.0 / (2.0 * omega_pi_khz * 1e-3);
            if t_pi > 2.0 * tau {
                return Err(Error::invalid(
                    "omega_pi",
                    format!("π-pulse length {t_pi} µs exceeds the 2τ spacing {} µs", 2.0 * tau),
                ));
            }
            t_pi
        }
    };
    let pulse = |phase: f64| match model {
        PulseModel::Ideal => Step::Pulse { phase, angle: PI },
        PulseModel::Finite { omega_pi_khz } => Step::Drive {
            amplitude_khz: omega_pi_khz,
            phase,
            detuning_khz: 0.0,
            duration_us: t_pi,
        },
    };
    let mut steps = Vec::new();
    if n_pulses == 0 {
        steps.push(Step::free(2.0 * tau));
    }
    for _ in 0..n_pulses / 8 {
        steps.push(Step::free(tau - 0.5 * t_pi));
        for (i, &phase) in XY8_PHASES.iter().enumerate() {
            steps.push(pulse(phase));
            if i + 1 < XY8_PHASES.len() {
                steps.push(Step::free(2.0 * tau - t_pi));
            }
        }
        steps.push(Step::free(tau - 0.5 * t_pi));
    }
    let metadata = ProgramMetadata {
        n_pulses: Some(n_pulses),
        tau_us: Some(tau),
        omega_pi_khz: match model {
            PulseModel::Ideal => None,
            PulseModel::Finite { omega_pi_khz } => Some(omega_pi_khz),
        },
        realized_t_f_us: if n_pulses == 0 { 2.0 * tau } else { 2.0 * n_pulses as f64 * tau },
        ..Default::default()
    };
    ControlProgram::new(steps, ProtocolTag::XyN, metadata)
}

/// One line per step: index, duration (µs), amplitude (kHz), phase (rad).
///
/// Ideal pulses print `pulse(<angle>)` in the amplitude column.
pub fn dump_program(program: &ControlProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# protocol={} steps={} total_us={}",
        program.tag(),
        program.steps().len(),
        program.total_duration_us()
    );
    let _ = writeln!(out, "index\tduration_us\tamplitude_khz\tphase_rad");
    for (i, s) in program.steps().iter().enumerate() {
        match *s {
            Step::Drive {
                amplitude_khz,
                phase,
                duration_us,
                ..
            } => {
                let _ = writeln!(out, "{i}\t{duration_us:.9}\t{amplitude_khz:.6}\t{phase:.6}");
            }
            Step::Pulse { phase, angle } => {
                let _ = writeln!(out, "{i}\t0\tpulse({angle:.6})\t{phase:.6}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hhdr_single_segment() {
        let p = compile_hhdr(1970.0, 8.0).unwrap();
        assert_eq!(p.steps().len(), 1);
        assert_eq!(p.total_duration_us(), 8.0);
        assert_eq!(p.tag(), ProtocolTag::Hhdr);
        assert!(compile_hhdr(-1.0, 8.0).is_err());
        assert_eq!(compile_hhdr(1970.0, 0.0).unwrap().total_duration_us(), 0.0);
    }

    #[test]
    fn pm_half_period_count_and_realized_time() {
        let p = PmParams::new(104.0, 1872.0, 300.0).unwrap();
        let prog = compile_pm_hhdr(&p).unwrap();
        // ⌊2 · 1.872 MHz · 300 µs⌋
        assert_eq!(prog.steps().len(), 1123);
        let realized = prog.metadata().realized_t_f_us;
        assert!((realized - 1123.0 / 3.744).abs() < 1e-9);
        assert!((prog.total_duration_us() - realized).abs() < 1e-9 * realized);
        assert!(realized <= 300.0 && 300.0 - realized < p.half_period_us());
        match prog.steps()[0] {
            Step::Drive { amplitude_khz, .. } => assert_eq!(amplitude_khz, 208.0),
            _ => panic!(),
        }
        match prog.steps()[1] {
            Step::Drive { amplitude_khz, .. } => assert_eq!(amplitude_khz, 0.0),
            _ => panic!(),
        }
    }

    #[test]
    fn pm_start_phase_and_unbalanced_tones() {
        let mut p = PmParams::new(100.0, 1000.0, 2.0).unwrap();
        p.start_high = false;
        p.omega_minus = 150.0;
        let prog = compile_pm_hhdr(&p).unwrap();
        assert_eq!(prog.steps().len(), 4);
        match prog.steps()[0] {
            Step::Drive { amplitude_khz, phase, .. } => {
                assert_eq!(amplitude_khz, 50.0);
                assert_eq!(phase, PI);
            }
            _ => panic!(),
        }
        match prog.steps()[1] {
            Step::Drive { amplitude_khz, .. } => assert_eq!(amplitude_khz, 250.0),
            _ => panic!(),
        }
    }

    #[test]
    fn pm_rejects_tiny_half_period() {
        assert!(PmParams::new(104.0, 6e6, 1.0).is_err());
        assert!(PmParams::new(104.0, 4e6, 1.0).is_ok());
        assert!(PmParams::new(104.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn xy8_structure_and_bookkeeping() {
        let prog = compile_xyn(32, 10.0, PulseModel::Ideal).unwrap();
        let pulses: Vec<f64> = prog
            .steps()
            .iter()
            .filter_map(|s| match *s {
                Step::Pulse { phase, .. } => Some(phase),
                _ => None,
            })
            .collect();
        assert_eq!(pulses.len(), 32);
        assert_eq!(&pulses[..8], &XY8_PHASES);
        assert!((prog.total_duration_us() - 640.0).abs() < 1e-9 * 640.0);

        let fin = compile_xyn(32, 10.0, PulseModel::Finite { omega_pi_khz: 26000.0 }).unwrap();
        assert!((fin.total_duration_us() - 640.0).abs() < 1e-9 * 640.0);
    }

    #[test]
    fn xy_rejects_bad_inputs() {
        assert!(compile_xyn(12, 1.0, PulseModel::Ideal).is_err());
        assert!(compile_xyn(8, 0.0, PulseModel::Ideal).is_err());
        // t_pi = 5 µs > 2τ = 4 µs
        assert!(compile_xyn(8, 2.0, PulseModel::Finite { omega_pi_khz: 100.0 }).is_err());
        assert!(compile_xyn(8, 2.5, PulseModel::Finite { omega_pi_khz: 100.0 }).is_ok());
    }

    #[test]
    fn xy_zero_pulses_is_free_evolution() {
        let prog = compile_xyn(0, 3.0, PulseModel::Ideal).unwrap();
        assert_eq!(prog.steps(), &[Step::free(6.0)]);
    }

    #[test]
    fn dump_lists_every_step() {
        let prog = compile_xyn(8, 1.0, PulseModel::Ideal).unwrap();
        let text = dump_program(&prog);
        assert_eq!(text.lines().count(), 2 + prog.steps().len());
        assert!(text.contains("pulse(3.141593)"));
    }
}
