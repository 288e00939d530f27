//! Sweeps, analytic resonance models, dip fitting and line-width studies.

pub mod analytic;
pub mod bessel;
pub mod fit;
pub mod io;
pub mod linewidth;
pub mod sweep;

pub use analytic::{
    analytic_pm_signal, hh_resonance_omega, mixed_pm_signal, pm_dressed_shift_khz, pm_flip_frequency_khz, pm_sideband_weight,
    predict_pm_resonances, xy_a_par, xy_harmonic, xy_resonance_tau, PmResonance,
};
pub use bessel::bessel_j1;
pub use fit::{fit_dips, fit_series, fit_spectrum, CouplingContext, Dip, DipModel, DipReport, FitOptions, Sideband};
pub use linewidth::{linewidth_vs_noise, LinewidthPoint};
pub use sweep::{run_sweep, AmplitudeNoise, ProtocolParams, Spectrum, SweepPlan, SweptParameter};
