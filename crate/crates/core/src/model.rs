//! Physical constants, spin-system description and Hamiltonian construction.
//!
//! Sign conventions, collected in one place:
//!
//! - The electron is restricted to the `{|m_s=0⟩, |m_s=+1⟩}` pair and treated
//!   as a pseudo-spin-½. Basis order is `|0⟩, |1⟩`; `σ_z = diag(1, -1)`.
//! - `S_z` is represented by the projector `P₁ = |1⟩⟨1|`, so the hyperfine
//!   term acts only inside the `m_s=+1` manifold.
//! - `γ_e` is a positive magnitude; the lab-frame electron splitting is
//!   `E₁ - E₀ = D - γ_e B_z` (negative above the ground-state level
//!   anticrossing, which is harmless since the rotating frame removes it).
//! - Nuclear Zeeman enters as `-γ_n B_z I_z`, so in `m_s=+1` the nuclear
//!   splitting is `γ_n B_z - A_zz` and the spin-lock average is
//!   `γ_n B_z - A_zz/2`.
//! - Tensor ordering: electron is the slowest index, then nuclei in list order.
//!
//! Matrices hold ordinary frequencies in MHz; the propagator applies `2π`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest number of nuclear spins a system may carry.
pub const MAX_NUCLEI: usize = 5;
/// Largest joint Hilbert dimension, `2 · 2^MAX_NUCLEI`.
pub const MAX_DIM: usize = 2 << MAX_NUCLEI;

const KHZ: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Zero-field splitting in MHz.
    pub d_mhz: f64,
    /// Electron gyromagnetic ratio magnitude in MHz/G.
    pub gamma_e_mhz_per_gauss: f64,
    /// ¹³C gyromagnetic ratio in kHz/G.
    pub gamma_n_khz_per_gauss: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            d_mhz: 2870.0,
            gamma_e_mhz_per_gauss: 2.802495,
            gamma_n_khz_per_gauss: 1.07084,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_mhz >= 1000.0) {
            return Err(Error::invalid("d_mhz", "zero-field splitting must be >= 1000 MHz"));
        }
        if !(self.gamma_e_mhz_per_gauss > 0.0) {
            return Err(Error::invalid("gamma_e_mhz_per_gauss", "must be > 0"));
        }
        if !(self.gamma_n_khz_per_gauss > 0.0) {
            return Err(Error::invalid("gamma_n_khz_per_gauss", "must be > 0"));
        }
        Ok(())
    }
}

/// Secular hyperfine components `(A_zx, A_zy, A_zz)` in kHz.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HyperfineVector {
    pub a_zx: f64,
    pub a_zy: f64,
    pub a_zz: f64,
}

impl HyperfineVector {
    pub fn new(a_zx: f64, a_zy: f64, a_zz: f64) -> Self {
        Self { a_zx, a_zy, a_zz }
    }

    /// Coupling with `A∥ = a_par` and `A⊥ = a_perp` along x.
    pub fn from_par_perp(a_par: f64, a_perp: f64) -> Self {
        Self::new(a_perp, 0.0, a_par)
    }

    pub fn a_par(&self) -> f64 {
        self.a_zz
    }

    pub fn a_perp(&self) -> f64 {
        self.a_zx.hypot(self.a_zy)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NuclearSpinSpec {
    pub label: String,
    pub hyperfine: HyperfineVector,
    #[serde(default)]
    pub is_bath_proxy: bool,
}

impl NuclearSpinSpec {
    pub fn new(label: impl Into<String>, hyperfine: HyperfineVector) -> Self {
        Self {
            label: label.into(),
            hyperfine,
            is_bath_proxy: false,
        }
    }

    pub fn bath_proxy(mut self) -> Self {
        self.is_bath_proxy = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpinSystemSpec {
    pub b_z_gauss: f64,
    pub nuclei: Vec<NuclearSpinSpec>,
    pub constants: PhysicalConstants,
}

impl SpinSystemSpec {
    pub fn new(b_z_gauss: f64) -> Result<Self> {
        let sys = Self {
            b_z_gauss,
            nuclei: Vec::new(),
            constants: PhysicalConstants::default(),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_constants(mut self, constants: PhysicalConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_nucleus(mut self, nucleus: NuclearSpinSpec) -> Result<Self> {
        self.nuclei.push(nucleus);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_z_gauss > 0.0) || !self.b_z_gauss.is_finite() {
            return Err(Error::invalid("b_z_gauss", "static field must be > 0"));
        }
        self.constants.validate()?;
        if self.nuclei.len() > MAX_NUCLEI {
            return Err(Error::DimensionOverflow {
                nuclei: self.nuclei.len(),
                max: MAX_NUCLEI,
                max_dim: MAX_DIM,
            });
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if self.nuclei[..i].iter().any(|m| m.label == n.label) {
                return Err(Error::invalid(
                    "nuclei.label",
                    format!("duplicate nuclear label `{}`", n.label),
                ));
            }
            let h = n.hyperfine;
            if !(h.a_zx.is_finite() && h.a_zy.is_finite() && h.a_zz.is_finite()) {
                return Err(Error::invalid("hyperfine", format!("non-finite component on `{}`", n.label)));
            }
        }
        Ok(())
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclei.len()
    }

    /// Joint Hilbert dimension `2 · 2^k`.
    pub fn dim(&self) -> usize {
        2 << self.nuclei.len()
    }

    /// Bare nuclear Larmor frequency `γ_n B_z` in kHz.
    pub fn larmor_khz(&self) -> f64 {
        self.constants.gamma_n_khz_per_gauss * self.b_z_gauss
    }

    /// Lab-frame electron transition frequency `D - γ_e B_z` in MHz.
    pub fn electron_transition_mhz(&self) -> f64 {
        self.constants.d_mhz - self.constants.gamma_e_mhz_per_gauss * self.b_z_gauss
    }

    /// Spin-lock averaged nuclear frequency `γ_n B_z - A∥/2` for nucleus `j`, kHz.
    pub fn locked_nuclear_khz(&self, j: usize) -> f64 {
        self.larmor_khz() - 0.5 * self.nuclei[j].hyperfine.a_par()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    Rotating,
}

/// A validated Hermitian matrix (MHz) tagged with the frame it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    matrix: CMatrix,
    frame: Frame,
}

impl HamiltonianTerm {
    pub fn new(matrix: CMatrix, frame: Frame) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let defect = hermiticity_defect(&matrix);
        if defect > 1e-12 * max_abs(&matrix).max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(Self { matrix, frame })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |H - H†|` elementwise.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn mat2(a: [[Complex64; 2]; 2]) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
}

pub(crate) fn pauli_x() -> CMatrix {
    mat2([[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]])
}

pub(crate) fn pauli_y() -> CMatrix {
    mat2([[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]])
}

pub(crate) fn pauli_z() -> CMatrix {
    mat2([[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]])
}

pub(crate) fn projector_one() -> CMatrix {
    mat2([[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]])
}

pub(crate) fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Embed a 2×2 electron operator into the joint space.
pub(crate) fn electron_op(op: &CMatrix, n_nuclei: usize) -> CMatrix {
    op.kronecker(&identity(1 << n_nuclei))
}

/// Embed a 2×2 operator acting on nucleus `j` (electron identity included).
pub(crate) fn nuclear_op(op: &CMatrix, j: usize, n_nuclei: usize) -> CMatrix {
    let before = identity(2 << j);
    let after = identity(1 << (n_nuclei - j - 1));
    before.kronecker(op).kronecker(&after)
}

/// Precomputed operators for one spin system; everything in MHz.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub n_nuclei: usize,
    /// `σ_x ⊗ 1`
    pub sx: CMatrix,
    /// `σ_y ⊗ 1`
    pub sy: CMatrix,
    /// `P₁ ⊗ 1`
    pub p1: CMatrix,
    /// Nuclear Zeeman plus hyperfine; identical in lab and rotating frames.
    pub nuclear: CMatrix,
}

impl SystemOperators {
    pub fn new(sys: &SpinSystemSpec) -> Result<Self> {
        sys.validate()?;
        let k = sys.n_nuclei();
        let dim = sys.dim();
        let larmor_mhz = sys.larmor_khz() * KHZ;
        let p1_e = projector_one();
        let (ix, iy, iz) = (pauli_x() * c(0.5, 0.), pauli_y() * c(0.5, 0.), pauli_z() * c(0.5, 0.));
        let mut nuclear = CMatrix::zeros(dim, dim);
        for (j, n) in sys.nuclei.iter().enumerate() {
            let h = n.hyperfine;
            nuclear -= nuclear_op(&iz, j, k) * c(larmor_mhz, 0.);
            let a_dot_i = &ix * c(h.a_zx * KHZ, 0.) + &iy * c(h.a_zy * KHZ, 0.) + &iz * c(h.a_zz * KHZ, 0.);
            let before = p1_e.kronecker(&identity(1 << j));
            let after = identity(1 << (k - j - 1));
            nuclear += before.kronecker(&a_dot_i).kronecker(&after);
        }
        Ok(Self {
            n_nuclei: k,
            sx: electron_op(&pauli_x(), k),
            sy: electron_op(&pauli_y(), k),
            p1: electron_op(&p1_e, k),
            nuclear,
        })
    }

    pub fn dim(&self) -> usize {
        self.nuclear.nrows()
    }

    /// Unchecked rotating-frame Hamiltonian for the given drive (MHz).
    pub fn rotating_matrix(&self, amplitude_khz: f64, phase: f64, detuning_khz: f64) -> CMatrix {
        let half = 0.5 * amplitude_khz * KHZ;
        let mut h = self.nuclear.clone();
        if half != 0.0 {
            h += &self.sx * c(half * phase.cos(), 0.);
            h += &self.sy * c(half * phase.sin(), 0.);
        }
        if detuning_khz != 0.0 {
            h += &self.p1 * c(detuning_khz * KHZ, 0.);
        }
        h
    }

    /// Instantaneous electron rotation by `angle` about the axis at azimuth `phase`.
    pub fn electron_rotation(&self, phase: f64, angle: f64) -> CMatrix {
        let (s, co) = (0.5 * angle).sin_cos();
        let axis = &self.sx * c(phase.cos(), 0.) + &self.sy * c(phase.sin(), 0.);
        identity(self.dim()) * c(co, 0.) + axis * c(0., -s)
    }
}

/// Lab-frame `H₀` on the `2·2^k` space (MHz).
pub fn build_static_hamiltonian(sys: &SpinSystemSpec) -> Result<HamiltonianTerm> {
    let ops = SystemOperators::new(sys)?;
    let m = &ops.p1 * c(sys.electron_transition_mhz(), 0.) + &ops.nuclear;
    HamiltonianTerm::new(m, Frame::Lab)
}

/// Rotating-frame Hamiltonian under the rotating-wave approximation.
///
/// The electron sees `(Ω/2)(cos φ σ_x + sin φ σ_y) + Δ·P₁`, so a resonant
/// drive flips `|0⟩ → |1⟩` with population `sin²(π Ω t)`.
pub fn build_rotating_frame_hamiltonian(
    sys: &SpinSystemSpec,
    drive_amplitude_khz: f64,
    drive_phase: f64,
    detuning_khz: f64,
) -> Result<HamiltonianTerm> {
    if !(drive_amplitude_khz >= 0.0) {
        return Err(Error::invalid("drive_amplitude", "must be >= 0"));
    }
    let ops = SystemOperators::new(sys)?;
    HamiltonianTerm::new(
        ops.rotating_matrix(drive_amplitude_khz, drive_phase, detuning_khz),
        Frame::Rotating,
    )
}
