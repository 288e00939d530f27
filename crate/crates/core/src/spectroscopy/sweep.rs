//! Parameter sweeps with optional Monte Carlo amplitude noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SpinSystemSpec, SystemOperators};
use crate::propagator::{measure_dressed_population, DensityState, Evolver, NuclearInit, ReadoutAxis};
use crate::sequences::{compile_hhdr, compile_pm_hhdr, compile_xyn, ControlProgram, PmParams, ProtocolTag, PulseModel, Step};

/// Default hardware frequency resolution (kHz).
pub const DEFAULT_RESOLUTION_FLOOR_KHZ: f64 = 2.0;

/// Signals may leave `[0, 1]` by at most this much before a sweep fails.
pub const SIGNAL_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    /// Modulation frequency ν (kHz), PM-HHDR.
    Nu,
    /// Drive amplitude (kHz): Ω for HHDR, Ω′ for PM-HHDR.
    Omega,
    /// XY half-spacing τ (µs).
    Tau,
}

impl SweptParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweptParameter::Nu => "nu",
            SweptParameter::Omega => "omega",
            SweptParameter::Tau => "tau",
        }
    }

    pub fn is_frequency(self) -> bool {
        !matches!(self, SweptParameter::Tau)
    }
}

/// Protocol parameters held fixed during a sweep; the swept one is overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// HHDR drive amplitude (kHz).
    pub omega_khz: f64,
    /// PM effective amplitude Ω′ = Ω₊ = Ω₋ (kHz).
    pub omega_prime_khz: f64,
    pub nu_khz: f64,
    pub t_f_us: f64,
    pub start_high: bool,
    pub n_pulses: u32,
    pub tau_us: f64,
    pub pulse_model: PulseModel,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            omega_khz: 1970.0,
            omega_prime_khz: 104.0,
            nu_khz: 1872.0,
            t_f_us: 300.0,
            start_high: true,
            n_pulses: 32,
            tau_us: 10.0,
            pulse_model: PulseModel::Ideal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub protocol: ProtocolTag,
    pub swept: SweptParameter,
    pub grid: Vec<f64>,
    pub fixed: ProtocolParams,
    pub resolution_floor_khz: f64,
    /// Enforce `resolution_floor_khz` as the minimum grid step.
    pub emulate_resolution: bool,
    pub nuclear_init: NuclearInit,
    pub readout: ReadoutAxis,
}

impl SweepPlan {
    /// Plan with the default 2 kHz resolution floor enforced.
    pub fn new(protocol: ProtocolTag, swept: SweptParameter, grid: Vec<f64>, fixed: ProtocolParams) -> Result<Self> {
        Self::build(protocol, swept, grid, fixed, true)
    }

    /// Plan without the hardware resolution floor, for grids finer than 2 kHz.
    pub fn unfloored(protocol: ProtocolTag, swept: SweptParameter, grid: Vec<f64>, fixed: ProtocolParams) -> Result<Self> {
        Self::build(protocol, swept, grid, fixed, false)
    }

    fn build(
        protocol: ProtocolTag,
        swept: SweptParameter,
        grid: Vec<f64>,
        fixed: ProtocolParams,
        emulate_resolution: bool,
    ) -> Result<Self> {
        let plan = Self {
            protocol,
            swept,
            grid,
            fixed,
            resolution_floor_khz: DEFAULT_RESOLUTION_FLOOR_KHZ,
            emulate_resolution,
            nuclear_init: NuclearInit::Mixed,
            readout: ReadoutAxis::PlusX,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Evenly spaced grid `start, start+step, …` up to and including `stop`.
    pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(Error::invalid("grid", "need finite start <= stop and step > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    }

    pub fn with_nuclear_init(mut self, init: NuclearInit) -> Self {
        self.nuclear_init = init;
        self
    }

    pub fn with_readout(mut self, readout: ReadoutAxis) -> Self {
        self.readout = readout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = matches!(
            (self.protocol, self.swept),
            (ProtocolTag::Hhdr, SweptParameter::Omega)
                | (ProtocolTag::PmHhdr, SweptParameter::Nu)
                | (ProtocolTag::PmHhdr, SweptParameter::Omega)
                | (ProtocolTag::XyN, SweptParameter::Tau)
        );
        if !ok {
            return Err(Error::invalid(
                "swept",
                format!("cannot sweep {} for protocol {}", self.swept.as_str(), self.protocol),
            ));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid", "values must be finite"));
        }
        for w in self.grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("grid", "must be strictly increasing"));
            }
            if self.emulate_resolution && self.swept.is_frequency() && w[1] - w[0] < self.resolution_floor_khz * (1.0 - 1e-9) {
                return Err(Error::invalid(
                    "grid",
                    format!(
                        "step {} kHz below the {} kHz resolution floor",
                        w[1] - w[0],
                        self.resolution_floor_khz
                    ),
                ));
            }
        }
        if !(self.resolution_floor_khz >= 0.0) {
            return Err(Error::invalid("resolution_floor_khz", "must be >= 0"));
        }
        // non-swept parameters, so they fail before any grid point runs
        let f = &self.fixed;
        match self.protocol {
            ProtocolTag::XyN if f.n_pulses % 8 != 0 => {
                return Err(Error::invalid("n_pulses", format!("{} is not a multiple of 8", f.n_pulses)));
            }
            ProtocolTag::Hhdr | ProtocolTag::PmHhdr if !(f.t_f_us >= 0.0) || !f.t_f_us.is_finite() => {
                return Err(Error::invalid("t_f", "must be finite and >= 0"));
            }
            _ => {}
        }
        if self.protocol == ProtocolTag::PmHhdr
            && self.swept == SweptParameter::Nu
            && (!(f.omega_prime_khz >= 0.0) || !f.omega_prime_khz.is_finite())
        {
            return Err(Error::invalid("omega_prime", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Program at grid value `x` with every drive amplitude and pulse angle scaled by `scale`.
    pub fn program_at(&self, x: f64, scale: f64) -> Result<ControlProgram> {
        let f = &self.fixed;
        let prog = match self.protocol {
            ProtocolTag::Hhdr => compile_hhdr(x, f.t_f_us)?,
            ProtocolTag::PmHhdr => {
                let (omega_prime, nu) = match self.swept {
                    SweptParameter::Nu => (f.omega_prime_khz, x),
                    _ => (x, f.nu_khz),
                };
                let mut p = PmParams::new(omega_prime, nu, f.t_f_us)?;
                p.start_high = f.start_high;
                compile_pm_hhdr(&p)?
            }
            ProtocolTag::XyN => compile_xyn(f.n_pulses, x, f.pulse_model)?,
        };
        if scale == 1.0 {
            Ok(prog)
        } else {
            scale_amplitudes(&prog, scale)
        }
    }

    pub fn initial_state(&self, n_nuclei: usize) -> DensityState {
        DensityState::dressed_plus(n_nuclei, self.nuclear_init)
    }
}

fn scale_amplitudes(prog: &ControlProgram, scale: f64) -> Result<ControlProgram> {
    let steps = prog
        .steps()
        .iter()
        .map(|s| match *s {
            Step::Drive {
                amplitude_khz,
                phase,
                detuning_khz,
                duration_us,
            } => {
                let a = amplitude_khz * scale;
                Step::Drive {
                    amplitude_khz: a.abs(),
                    phase: if a < 0.0 { phase + std::f64::consts::PI } else { phase },
                    detuning_khz,
                    duration_us,
                }
            }
            Step::Pulse { phase, angle } => Step::Pulse {
                phase,
                angle: angle * scale,
            },
        })
        .collect();
    ControlProgram::new(steps, prog.tag(), prog.metadata().clone())
}

/// Gaussian relative amplitude noise: each shot scales the drive by `1 + δ`, `δ ~ N(0, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeNoise {
    pub relative_std: f64,
    pub shots: u32,
    pub seed: u64,
}

impl AmplitudeNoise {
    pub fn new(relative_std: f64, shots: u32, seed: u64) -> Result<Self> {
        let n = Self {
            relative_std,
            shots,
            seed,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_std >= 0.0) || !self.relative_std.is_finite() {
            return Err(Error::invalid("relative_std", "must be finite and >= 0"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// `(x, signal)` per grid point.
    pub points: Vec<(f64, f64)>,
    pub plan: SweepPlan,
    pub shots: u32,
    pub seed: Option<u64>,
    /// Bare nuclear Larmor frequency of the simulated system (kHz).
    pub larmor_khz: f64,
}

impl Spectrum {
    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one Monte Carlo shot, independent of scheduling order.
pub fn shot_seed(base: u64, grid_index: usize, shot: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ grid_index as u64) ^ shot as u64)
}

/// Evaluates one grid point, averaging over noise shots.
fn point_signal(
    ops: &SystemOperators,
    plan: &SweepPlan,
    initial: &DensityState,
    index: usize,
    x: f64,
    noise: Option<&AmplitudeNoise>,
) -> Result<f64> {
    let mut ev = Evolver::new(ops);
    let mut measure = |scale: f64| -> Result<f64> {
        let prog = plan.program_at(x, scale)?;
        let out = ev.final_state(initial, &prog);
        Ok(measure_dressed_population(&out, plan.readout))
    };
    let signal = match noise {
        None => measure(1.0)?,
        Some(n) => {
            let normal = Normal::new(0.0, n.relative_std).map_err(|e| Error::Numerical(e.to_string()))?;
            let mut acc = 0.0;
            for shot in 0..n.shots {
                let mut rng = ChaCha8Rng::seed_from_u64(shot_seed(n.seed, index, shot));
                let delta = normal.sample(&mut rng);
                acc += measure(1.0 + delta)?;
            }
            acc / n.shots as f64
        }
    };
    if !(signal >= -SIGNAL_SLACK && signal <= 1.0 + SIGNAL_SLACK) {
        return Err(Error::Numerical(format!("signal {signal} outside [0, 1]")));
    }
    Ok(signal)
}

/// Simulates every grid point of `plan`, in parallel over grid points.
///
/// Results are bit-identical for a given seed regardless of thread count.
pub fn run_sweep(sys: &SpinSystemSpec, plan: &SweepPlan, noise: Option<&AmplitudeNoise>) -> Result<Spectrum> {
    plan.validate()?;
    if let Some(n) = noise {
        n.validate()?;
    }
    let ops = SystemOperators::new(sys)?;
    let initial = plan.initial_state(sys.n_nuclei());
    let signals: Vec<f64> = plan
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            point_signal(&ops, plan, &initial, i, x, noise).map_err(|e| Error::GridPoint {
                index: i,
                x,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Spectrum {
        points: plan.grid.iter().copied().zip(signals).collect(),
        plan: plan.clone(),
        shots: noise.map_or(1, |n| n.shots),
        seed: noise.map(|n| n.seed),
        larmor_khz: sys.larmor_khz(),
    })
}
