//! Time evolution of the joint electron–nuclear density matrix.
//!
//! Control programs are piecewise constant, so each segment is propagated
//! exactly with `U = exp(-i 2π H t)`. Segment propagators are cached by their
//! drive parameters, and programs made of a repeating pattern (phase
//! modulation half-periods, XY-8 blocks) are folded by binary powering of the
//! pattern propagator.

mod expm;
pub mod oracle;

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{hermiticity_defect, max_abs, CMatrix, HamiltonianTerm, SpinSystemSpec, SystemOperators};
use crate::sequences::{ControlProgram, Step};

pub use expm::{matrix_power, unitarity_defect, unitary, EigenHamiltonian};
pub use oracle::{
    hhdr_equivalence_sweep, lab_frame_oracle, lab_to_rotating, pm_equivalence_sweep, EquivalenceReport, LabDrive,
    LabFrameSetup,
};

/// Longest repeating pattern the program folder looks for.
const MAX_PATTERN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuclearInit {
    /// Thermal nuclei at room temperature: `1/2^k`.
    #[default]
    Mixed,
    /// Every nucleus in `|↑⟩` (`I_z = +½`).
    AllUp,
    /// Every nucleus in `|↓⟩`.
    AllDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutAxis {
    /// Population of the dressed state `|+⟩ = (|0⟩+|1⟩)/√2`.
    #[default]
    PlusX,
    /// Population of `|0⟩`.
    ZeroOne,
}

/// Density matrix over electron ⊗ nuclei, electron as the slowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    rho: CMatrix,
    n_nuclei: usize,
}

impl DensityState {
    pub fn from_matrix(rho: CMatrix, n_nuclei: usize) -> Result<Self> {
        let dim = 2 << n_nuclei;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rho.nrows(),
            });
        }
        let state = Self { rho, n_nuclei };
        state.validate()?;
        Ok(state)
    }

    /// Product of a 2×2 electron density matrix and a nuclear initial state.
    pub fn product(electron: &CMatrix, nuclear: NuclearInit, n_nuclei: usize) -> Self {
        let nd = 1usize << n_nuclei;
        let mut nuc = CMatrix::zeros(nd, nd);
        match nuclear {
            NuclearInit::Mixed => nuc.fill_diagonal(Complex64::new(1.0 / nd as f64, 0.0)),
            NuclearInit::AllUp => nuc[(0, 0)] = Complex64::new(1.0, 0.0),
            NuclearInit::AllDown => nuc[(nd - 1, nd - 1)] = Complex64::new(1.0, 0.0),
        }
        Self {
            rho: electron.kronecker(&nuc),
            n_nuclei,
        }
    }

    /// Electron in `|+⟩`, the spin-locked dressed state.
    pub fn dressed_plus(n_nuclei: usize, nuclear: NuclearInit) -> Self {
        let h = Complex64::new(0.5, 0.0);
        Self::product(&CMatrix::from_element(2, 2, h), nuclear, n_nuclei)
    }

    /// Electron in `|0⟩`.
    pub fn electron_ground(n_nuclei: usize, nuclear: NuclearInit) -> Self {
        let mut e = CMatrix::zeros(2, 2);
        e[(0, 0)] = Complex64::new(1.0, 0.0);
        Self::product(&e, nuclear, n_nuclei)
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn n_nuclei(&self) -> usize {
        self.n_nuclei
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Checks unit trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(Error::Numerical(format!("density matrix trace {tr} != 1")));
        }
        let herm = hermiticity_defect(&self.rho);
        if herm > 1e-10 {
            return Err(Error::NotHermitian { defect: herm });
        }
        let min_ev = self
            .rho
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_ev < -1e-9 {
            return Err(Error::Numerical(format!("density matrix has eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    /// `U ρ U†`.
    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self {
            rho: u * &self.rho * u.adjoint(),
            n_nuclei: self.n_nuclei,
        }
    }

    /// `Tr(A ρ)`, real part.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += op[(i, j)] * self.rho[(j, i)];
            }
        }
        acc.re
    }

    /// `½ ‖ρ - σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = &self.rho - &other.rho;
        0.5 * diff.symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.rho - &other.rho))
    }
}

/// One piece of a piecewise-constant evolution.
#[derive(Debug, Clone)]
pub enum Segment {
    Evolve {
        hamiltonian: HamiltonianTerm,
        duration_us: f64,
    },
    Instant {
        unitary: CMatrix,
    },
}

impl Segment {
    pub fn duration_us(&self) -> f64 {
        match self {
            Segment::Evolve { duration_us, .. } => *duration_us,
            Segment::Instant { .. } => 0.0,
        }
    }

    /// The segment propagator, validated.
    pub fn unitary(&self) -> Result<CMatrix> {
        match self {
            Segment::Evolve {
                hamiltonian,
                duration_us,
            } => {
                if !(*duration_us >= 0.0) {
                    return Err(Error::invalid("duration_us", "must be >= 0"));
                }
                let m = hamiltonian.matrix();
                let defect = hermiticity_defect(m);
                if defect > 1e-12 * max_abs(m).max(f64::MIN_POSITIVE) {
                    return Err(Error::NotHermitian { defect });
                }
                Ok(unitary(m, *duration_us))
            }
            Segment::Instant { unitary } => {
                let defect = unitarity_defect(unitary);
                if defect > 1e-10 {
                    return Err(Error::NotUnitary { defect });
                }
                Ok(unitary.clone())
            }
        }
    }
}

/// `ρ ← U ρ U†` for a single segment.
pub fn propagate_segment(state: &DensityState, seg: &Segment) -> Result<DensityState> {
    let u = seg.unitary()?;
    if u.nrows() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: u.nrows(),
        });
    }
    Ok(state.evolve(&u))
}

/// Evolves `state` through `program`, returning `(time, state)` samples.
///
/// Each requested time snaps to the first segment boundary at or after it.
/// An empty sample list yields a single sample at the end of the program.
pub fn propagate_program(
    sys: &SpinSystemSpec,
    state: &DensityState,
    program: &ControlProgram,
    sample_times_us: &[f64],
) -> Result<Vec<(f64, DensityState)>> {
    let ops = SystemOperators::new(sys)?;
    if state.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: state.dim(),
        });
    }
    Evolver::new(&ops).trajectory(state, program, sample_times_us)
}

/// `Tr(P ρ)` for the chosen readout projector.
pub fn measure_dressed_population(state: &DensityState, axis: ReadoutAxis) -> f64 {
    let nd = 1usize << state.n_nuclei;
    let rho = &state.rho;
    match axis {
        ReadoutAxis::ZeroOne => (0..nd).map(|a| rho[(a, a)].re).sum(),
        ReadoutAxis::PlusX => {
            let mut acc = 0.0;
            for a in 0..nd {
                acc += rho[(a, a)].re + rho[(nd + a, nd + a)].re;
                acc += 2.0 * rho[(a, nd + a)].re;
            }
            0.5 * acc
        }
    }
}

/// Damps electron coherences between dressed states `|+⟩` and `|−⟩` by
/// `exp(-2π · rate · duration)`; dressed populations are untouched.
pub fn apply_dephasing(state: &DensityState, rate_khz: f64, duration_us: f64) -> Result<DensityState> {
    if !(rate_khz >= 0.0) {
        return Err(Error::invalid("rate", "must be >= 0"));
    }
    if !(duration_us >= 0.0) {
        return Err(Error::invalid("duration_us", "must be >= 0"));
    }
    let factor = (-std::f64::consts::TAU * rate_khz * 1e-3 * duration_us).exp();
    if factor == 1.0 {
        return Ok(state.clone());
    }
    let nd = 1usize << state.n_nuclei;
    // Hadamard ⊗ 1 maps |0⟩,|1⟩ to |+⟩,|−⟩ and is its own inverse.
    let r = &state.rho;
    let mut dressed = CMatrix::zeros(2 * nd, 2 * nd);
    for a in 0..nd {
        for b in 0..nd {
            let (r00, r01, r10, r11) = (r[(a, b)], r[(a, nd + b)], r[(nd + a, b)], r[(nd + a, nd + b)]);
            dressed[(a, b)] = (r00 + r01 + r10 + r11) * 0.5;
            dressed[(a, nd + b)] = (r00 - r01 + r10 - r11) * 0.5 * factor;
            dressed[(nd + a, b)] = (r00 + r01 - r10 - r11) * 0.5 * factor;
            dressed[(nd + a, nd + b)] = (r00 - r01 - r10 + r11) * 0.5;
        }
    }
    let mut rho = CMatrix::zeros(2 * nd, 2 * nd);
    for a in 0..nd {
        for b in 0..nd {
            let (p, pm, mp, m) = (
                dressed[(a, b)],
                dressed[(a, nd + b)],
                dressed[(nd + a, b)],
                dressed[(nd + a, nd + b)],
            );
            rho[(a, b)] = (p + pm + mp + m) * 0.5;
            rho[(a, nd + b)] = (p - pm + mp - m) * 0.5;
            rho[(nd + a, b)] = (p + pm - mp - m) * 0.5;
            rho[(nd + a, nd + b)] = (p - pm - mp + m) * 0.5;
        }
    }
    Ok(DensityState {
        rho,
        n_nuclei: state.n_nuclei,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct StepKey([u64; 4]);

impl StepKey {
    fn of(step: &Step) -> Self {
        match *step {
            Step::Drive {
                amplitude_khz,
                phase,
                detuning_khz,
                duration_us,
            } => StepKey([
                amplitude_khz.to_bits(),
                phase.to_bits(),
                detuning_khz.to_bits(),
                duration_us.to_bits(),
            ]),
            Step::Pulse { phase, angle } => StepKey([u64::MAX, phase.to_bits(), angle.to_bits(), u64::MAX]),
        }
    }
}

/// Program propagation for one spin system with a per-step propagator cache.
///
/// Not shared between threads; each sweep worker builds its own.
pub struct Evolver<'a> {
    ops: &'a SystemOperators,
    cache: HashMap<StepKey, CMatrix>,
}

impl<'a> Evolver<'a> {
    pub fn new(ops: &'a SystemOperators) -> Self {
        Self {
            ops,
            cache: HashMap::new(),
        }
    }

    pub fn operators(&self) -> &SystemOperators {
        self.ops
    }

    fn compute(&self, step: &Step) -> CMatrix {
        match *step {
            Step::Drive {
                amplitude_khz,
                phase,
                detuning_khz,
                duration_us,
            } => unitary(&self.ops.rotating_matrix(amplitude_khz, phase, detuning_khz), duration_us),
            Step::Pulse { phase, angle } => self.ops.electron_rotation(phase, angle),
        }
    }

    fn step_unitary(&mut self, step: &Step) -> &CMatrix {
        let key = StepKey::of(step);
        if !self.cache.contains_key(&key) {
            let u = self.compute(step);
            self.cache.insert(key, u);
        }
        &self.cache[&key]
    }

    fn fold(&mut self, steps: &[Step]) -> CMatrix {
        let mut acc: Option<CMatrix> = None;
        for s in steps {
            let u = self.step_unitary(s);
            acc = Some(match acc {
                None => u.clone(),
                Some(a) => u * a,
            });
        }
        acc.unwrap_or_else(|| CMatrix::identity(self.ops.dim(), self.ops.dim()))
    }

    /// Total propagator of `steps`, exploiting a repeating pattern if present.
    pub fn steps_unitary(&mut self, steps: &[Step]) -> CMatrix {
        let keys: Vec<StepKey> = steps.iter().map(StepKey::of).collect();
        let n = keys.len();
        let period = (1..=MAX_PATTERN.min(n / 2)).find(|&p| (0..n - p).all(|i| keys[i] == keys[i + p]));
        match period {
            Some(p) => {
                let reps = n / p;
                let pattern = self.fold(&steps[..p]);
                let body = matrix_power(&pattern, reps as u64);
                let tail = &steps[reps * p..];
                if tail.is_empty() {
                    body
                } else {
                    self.fold(tail) * body
                }
            }
            None => self.fold(steps),
        }
    }

    pub fn program_unitary(&mut self, program: &ControlProgram) -> CMatrix {
        self.steps_unitary(program.steps())
    }

    pub fn final_state(&mut self, initial: &DensityState, program: &ControlProgram) -> DensityState {
        let u = self.program_unitary(program);
        initial.evolve(&u)
    }

    pub fn trajectory(
        &mut self,
        initial: &DensityState,
        program: &ControlProgram,
        sample_times_us: &[f64],
    ) -> Result<Vec<(f64, DensityState)>> {
        let total = program.total_duration_us();
        if sample_times_us.is_empty() {
            return Ok(vec![(total, self.final_state(initial, program))]);
        }
        let tol = 1e-9 * total.max(1.0);
        for &t in sample_times_us {
            if !(t <= total + tol) || t < -tol {
                return Err(Error::SampleOutOfRange { requested: t, end: total });
            }
        }
        // boundary times: 0, t1, t1+t2, ...
        let mut boundaries = Vec::with_capacity(program.steps().len() + 1);
        let mut t = 0.0;
        boundaries.push(0.0);
        for s in program.steps() {
            t += s.duration_us();
            boundaries.push(t);
        }
        let snap: Vec<usize> = sample_times_us
            .iter()
            .map(|&req| {
                boundaries
                    .iter()
                    .position(|&b| b >= req - tol)
                    .unwrap_or(boundaries.len() - 1)
            })
            .collect();
        let wanted: std::collections::BTreeSet<usize> = snap.iter().copied().collect();
        let last_needed = wanted.last().copied().unwrap_or(0);
        let mut states = HashMap::new();
        let mut current = initial.clone();
        if wanted.contains(&0) {
            states.insert(0usize, current.clone());
        }
        for (i, step) in program.steps().iter().enumerate().take(last_needed) {
            let u = self.step_unitary(step);
            current = current.evolve(u);
            if wanted.contains(&(i + 1)) {
                states.insert(i + 1, current.clone());
            }
        }
        Ok(snap.iter().map(|&b| (boundaries[b], states[&b].clone())).collect())
    }
}
