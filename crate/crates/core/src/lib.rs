//! Spin-dynamics simulation and nuclear-spin spectroscopy for a single NV-center
//! electron spin coupled to a handful of ¹³C nuclei.
//!
//! Three detection protocols are modelled: continuous spin-locking double
//! resonance (HHDR), its phase-modulated variant (PM-HHDR) and pulsed XY-N
//! dynamical decoupling. The crate is organised bottom-up:
//!
//! - [`model`]: constants, spin-system description and Hamiltonian builders.
//! - [`propagator`]: exact piecewise-constant evolution plus a lab-frame oracle.
//! - [`sequences`]: compilation of the protocols into control programs.
//! - [`spectroscopy`]: sweeps, analytic resonance models, dip fitting.
//! - [`power`]: microwave power budget for each scheme.
//! - [`config`] and [`cli`]: the `nvdr` command-line front end.
//!
//! Units throughout: frequencies in kHz at the API surface (MHz for the
//! zero-field splitting and inside Hamiltonian matrices), times in µs, fields
//! in Gauss.

pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod power;
pub mod propagator;
pub mod sequences;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use model::{
    build_rotating_frame_hamiltonian, build_static_hamiltonian, CMatrix, Frame, HamiltonianTerm,
    HyperfineVector, NuclearSpinSpec, PhysicalConstants, SpinSystemSpec,
};
pub use propagator::{DensityState, NuclearInit, ReadoutAxis, Segment};
pub use sequences::{ControlProgram, PmParams, ProtocolTag, PulseModel, Step};
pub use spectroscopy::{DipReport, Spectrum, SweepPlan};
