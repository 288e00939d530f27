//! Lab-frame reference integrator without the rotating-wave approximation.
//!
//! The electron transition is represented at a reduced carrier frequency (tens
//! of MHz rather than GHz) so that fine time-stepping stays tractable; what
//! matters for RWA validity is the carrier-to-Rabi ratio. Each step of width
//! `dt` uses the Hamiltonian sampled at its midpoint and is propagated exactly.
//!
//! Drive convention: the lab coupling `Ω cos(2π f t - φ) σ_x` reduces under
//! the RWA to `(Ω/2)(cos φ σ_x + sin φ σ_y)`, matching the rotating-frame
//! builder.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::expm::{matrix_power, unitary};
use super::DensityState;
use crate::error::{Error, Result};
use crate::model::{CMatrix, SpinSystemSpec, SystemOperators};

/// Minimum number of time steps per carrier cycle.
pub const MIN_STEPS_PER_CYCLE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabDrive {
    Off,
    /// `Ω cos(2π f t - φ) σ_x`
    Continuous { rabi_khz: f64, phase: f64 },
    /// Two tones `Ω₊ cos(2π f t) + Ω₋ cos(2π f t - φ(t))`, with `φ(t)`
    /// toggling between 0 and π every half-period `1/(2ν)`.
    PhaseToggled {
        omega_plus_khz: f64,
        omega_minus_khz: f64,
        nu_khz: f64,
        start_high: bool,
    },
}

impl LabDrive {
    /// Coefficient of `σ_x` in MHz.
    fn coefficient(&self, carrier_mhz: f64, t_us: f64) -> f64 {
        match *self {
            LabDrive::Off => 0.0,
            LabDrive::Continuous { rabi_khz, phase } => rabi_khz * 1e-3 * (TAU * carrier_mhz * t_us - phase).cos(),
            LabDrive::PhaseToggled {
                omega_plus_khz,
                omega_minus_khz,
                nu_khz,
                start_high,
            } => {
                let half = (2.0 * nu_khz * 1e-3 * t_us).floor() as i64;
                let aligned = (half % 2 == 0) == start_high;
                let carrier = (TAU * carrier_mhz * t_us).cos();
                let minus = if aligned { omega_minus_khz } else { -omega_minus_khz };
                (omega_plus_khz + minus) * 1e-3 * carrier
            }
        }
    }

    fn carrier_periodic(&self) -> bool {
        matches!(self, LabDrive::Off | LabDrive::Continuous { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabFrameSetup {
    /// Reduced electron transition frequency, also the drive carrier (MHz).
    pub carrier_mhz: f64,
    pub drive: LabDrive,
}

/// Integrates the full lab-frame Hamiltonian from `initial` up to `t_end_us`.
///
/// The returned state is in the lab frame; use [`lab_to_rotating`] before
/// comparing against rotating-frame results.
pub fn lab_frame_oracle(
    sys: &SpinSystemSpec,
    initial: &DensityState,
    setup: &LabFrameSetup,
    t_end_us: f64,
    dt_us: f64,
) -> Result<DensityState> {
    let f = setup.carrier_mhz;
    if !(f > 0.0) {
        return Err(Error::invalid("carrier_mhz", "must be > 0"));
    }
    if !(dt_us > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    if dt_us > (1.0 + 1e-12) / (MIN_STEPS_PER_CYCLE * f) {
        return Err(Error::invalid(
            "dt",
            format!(
                "{dt_us} µs exceeds 1/(50·carrier) = {} µs",
                1.0 / (MIN_STEPS_PER_CYCLE * f)
            ),
        ));
    }
    if !(t_end_us >= 0.0) {
        return Err(Error::invalid("t_end", "must be >= 0"));
    }
    let ops = SystemOperators::new(sys)?;
    if initial.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: initial.dim(),
        });
    }
    let static_h = &ops.p1 * Complex64::new(f, 0.0) + &ops.nuclear;
    let step = |t_mid: f64, width: f64| -> CMatrix {
        let coeff = setup.drive.coefficient(f, t_mid);
        unitary(&(&static_h + &ops.sx * Complex64::new(coeff, 0.0)), width)
    };

    let ratio = t_end_us / dt_us;
    let n_full = (ratio + 1e-9).floor() as u64;
    let remainder = t_end_us - n_full as f64 * dt_us;

    let per_cycle = 1.0 / (f * dt_us);
    let commensurate = (per_cycle - per_cycle.round()).abs() < 1e-9 * per_cycle;
    let dim = ops.dim();
    let mut u = CMatrix::identity(dim, dim);
    if setup.drive.carrier_periodic() && commensurate {
        let m = per_cycle.round() as u64;
        let mut cycle = CMatrix::identity(dim, dim);
        let mut partial = CMatrix::identity(dim, dim);
        let leftover = n_full % m;
        for i in 0..m {
            cycle = step((i as f64 + 0.5) * dt_us, dt_us) * cycle;
            if i + 1 == leftover {
                partial = cycle.clone();
            }
        }
        u = partial * matrix_power(&cycle, n_full / m);
    } else {
        for i in 0..n_full {
            u = step((i as f64 + 0.5) * dt_us, dt_us) * u;
        }
    }
    if remainder > 1e-12 * dt_us {
        u = step(n_full as f64 * dt_us + 0.5 * remainder, remainder) * u;
    }
    Ok(initial.evolve(&u))
}

/// Moves a lab-frame state at time `t_us` into the frame rotating at `carrier_mhz`.
pub fn lab_to_rotating(state: &DensityState, carrier_mhz: f64, t_us: f64) -> DensityState {
    let dim = state.dim();
    let nd = dim / 2;
    let phase = Complex64::from_polar(1.0, TAU * carrier_mhz * t_us);
    let mut rho = state.rho().clone();
    for a in 0..nd {
        for b in 0..nd {
            rho[(nd + a, b)] *= phase;
            rho[(a, nd + b)] *= phase.conj();
        }
    }
    DensityState::from_matrix(rho, state.n_nuclei()).expect("frame change preserves validity")
}

/// Smallest accepted ratio of carrier to the largest internal frequency in
/// the equivalence sweeps.
pub const MIN_CARRIER_RATIO: f64 = 25.0;

/// Rotating-frame and lab-frame readouts over a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceReport {
    pub xs: Vec<f64>,
    pub rotating: Vec<f64>,
    pub lab: Vec<f64>,
    pub rms: f64,
    pub max_abs: f64,
}

impl EquivalenceReport {
    fn from_rows(rows: Vec<(f64, f64, f64)>) -> Self {
        let n = rows.len().max(1) as f64;
        let mut sq = 0.0;
        let mut max_abs: f64 = 0.0;
        for &(_, r, l) in &rows {
            sq += (r - l).powi(2);
            max_abs = max_abs.max((r - l).abs());
        }
        Self {
            xs: rows.iter().map(|r| r.0).collect(),
            rotating: rows.iter().map(|r| r.1).collect(),
            lab: rows.iter().map(|r| r.2).collect(),
            rms: (sq / n).sqrt(),
            max_abs,
        }
    }
}

fn internal_scale_khz(sys: &SpinSystemSpec, max_drive_khz: f64) -> f64 {
    sys.nuclei
        .iter()
        .map(|n| n.hyperfine.a_par().abs().max(n.hyperfine.a_perp()))
        .fold(sys.larmor_khz().max(max_drive_khz), f64::max)
}

fn check_carrier(sys: &SpinSystemSpec, carrier_mhz: f64, max_drive_khz: f64) -> Result<()> {
    let need = MIN_CARRIER_RATIO * internal_scale_khz(sys, max_drive_khz) * 1e-3;
    if !(carrier_mhz >= need) {
        return Err(Error::invalid(
            "carrier_mhz",
            format!("{carrier_mhz} MHz is below {MIN_CARRIER_RATIO}× the largest internal frequency ({need} MHz)"),
        ));
    }
    Ok(())
}

fn compare_point(
    sys: &SpinSystemSpec,
    ops: &SystemOperators,
    program: &crate::sequences::ControlProgram,
    drive: LabDrive,
    carrier_mhz: f64,
) -> Result<(f64, f64)> {
    use super::{measure_dressed_population, Evolver, NuclearInit, ReadoutAxis};
    let init = DensityState::dressed_plus(sys.n_nuclei(), NuclearInit::Mixed);
    let t = program.total_duration_us();
    let rot = Evolver::new(ops).final_state(&init, program);
    let setup = LabFrameSetup { carrier_mhz, drive };
    let lab = lab_frame_oracle(sys, &init, &setup, t, 1.0 / (MIN_STEPS_PER_CYCLE * carrier_mhz))?;
    let lab = lab_to_rotating(&lab, carrier_mhz, t);
    Ok((
        measure_dressed_population(&rot, ReadoutAxis::PlusX),
        measure_dressed_population(&lab, ReadoutAxis::PlusX),
    ))
}

/// HHDR Ω sweep, rotating-frame engine against the lab-frame oracle.
pub fn hhdr_equivalence_sweep(
    sys: &SpinSystemSpec,
    omegas_khz: &[f64],
    t_f_us: f64,
    carrier_mhz: f64,
) -> Result<EquivalenceReport> {
    use rayon::prelude::*;
    let max_drive = omegas_khz.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    check_carrier(sys, carrier_mhz, max_drive)?;
    let ops = SystemOperators::new(sys)?;
    let rows = omegas_khz
        .par_iter()
        .map(|&om| {
            let prog = crate::sequences::compile_hhdr(om, t_f_us)?;
            let drive = LabDrive::Continuous { rabi_khz: om, phase: 0.0 };
            let (r, l) = compare_point(sys, &ops, &prog, drive, carrier_mhz)?;
            Ok((om, r, l))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::from_rows(rows))
}

/// PM-HHDR ν sweep with balanced tones, rotating-frame engine against the
/// lab-frame oracle.
pub fn pm_equivalence_sweep(
    sys: &SpinSystemSpec,
    nus_khz: &[f64],
    omega_prime_khz: f64,
    t_f_us: f64,
    carrier_mhz: f64,
) -> Result<EquivalenceReport> {
    use rayon::prelude::*;
    let max_nu = nus_khz.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    check_carrier(sys, carrier_mhz, (2.0 * omega_prime_khz).max(max_nu))?;
    let ops = SystemOperators::new(sys)?;
    let rows = nus_khz
        .par_iter()
        .map(|&nu| {
            let p = crate::sequences::PmParams::new(omega_prime_khz, nu, t_f_us)?;
            let prog = crate::sequences::compile_pm_hhdr(&p)?;
            let drive = LabDrive::PhaseToggled {
                omega_plus_khz: p.omega_plus,
                omega_minus_khz: p.omega_minus,
                nu_khz: nu,
                start_high: p.start_high,
            };
            let (r, l) = compare_point(sys, &ops, &prog, drive, carrier_mhz)?;
            Ok((nu, r, l))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::from_rows(rows))
}
