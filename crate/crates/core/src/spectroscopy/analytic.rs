//! Closed-form resonance conditions and the on-resonance PM signal law.
//!
//! Frequencies in kHz, times in µs.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::bessel::bessel_j1;
use crate::error::{Error, Result};
use crate::model::SpinSystemSpec;

/// Phase scale of the on-resonance law `cos²(s · A⊥ J₁ t / 4)`.
///
/// With `A⊥` as an ordinary frequency the flip-flop coupling between the
/// dressed and nuclear states is `A⊥ J₁ / 4`, so the phase is `2π` times it.
/// Pinned by a regression test against full dynamics.
pub const SIGNAL_LAW_PHASE_SCALE: f64 = TAU;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmResonance {
    pub label: String,
    /// `|γ_n B - A∥/2|`, the spin-locked nuclear precession frequency.
    pub target_khz: f64,
    /// Lower sideband `target - Ω′`.
    pub nu_minus_khz: f64,
    /// Upper sideband `target + Ω′`.
    pub nu_plus_khz: f64,
    /// The lower sideband sits at `ν ≤ 0` and cannot be swept.
    pub lower_degenerate: bool,
}

/// Both PM sidebands `ν∓ = |γ_n B - A∥/2| ∓ Ω′` for every nucleus.
pub fn predict_pm_resonances(sys: &SpinSystemSpec, omega_prime: f64) -> Vec<PmResonance> {
    sys.nuclei
        .iter()
        .enumerate()
        .map(|(j, n)| {
            let target = sys.locked_nuclear_khz(j).abs();
            let nu_minus = target - omega_prime;
            PmResonance {
                label: n.label.clone(),
                target_khz: target,
                nu_minus_khz: nu_minus,
                nu_plus_khz: target + omega_prime,
                lower_degenerate: nu_minus <= 0.0,
            }
        })
        .collect()
}

/// Mean second-order shift (kHz) of the PM sidebands away from the
/// first-order resonance, `Σ_j A∥_j² / (8Ω′)`.
///
/// The secular coupling `A∥ P₁ I_z` contains `A∥ σ_z I_z / 2`, which tilts the
/// dressed states and raises their splitting from `Ω′` to roughly
/// `√(Ω′² + (Σ_j A∥_j m_j)²)`. Averaged over nuclear configurations the lower
/// sideband moves down and the upper one up by this amount; the spread over
/// configurations splits each line into a multiplet.
pub fn pm_dressed_shift_khz(sys: &SpinSystemSpec, omega_prime: f64) -> f64 {
    if !(omega_prime > 0.0) {
        return 0.0;
    }
    sys.nuclei.iter().map(|n| n.hyperfine.a_par().powi(2)).sum::<f64>() / (8.0 * omega_prime)
}

/// First-sideband weight `J₁(4Ω′/(πν))` of the square-wave modulation.
pub fn pm_sideband_weight(omega_prime: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::invalid("nu", "must be > 0"));
    }
    bessel_j1(4.0 * omega_prime / (PI * nu))
}

/// Frequency (kHz) of the on-resonance signal oscillation, `A⊥ J₁ / 2`.
pub fn pm_flip_frequency_khz(a_perp: f64, omega_prime: f64, nu: f64) -> Result<f64> {
    Ok(0.5 * a_perp.abs() * pm_sideband_weight(omega_prime, nu)?.abs())
}

/// On-resonance signal `cos²(2π A⊥ J₁(4Ω′/(πν)) t_f / 4)` for a nucleus
/// starting in the resonant state.
///
/// A maximally mixed nucleus gives `(1 + cos²)/2`, see [`mixed_pm_signal`].
pub fn analytic_pm_signal(a_perp: f64, omega_prime: f64, nu: f64, t_f: f64) -> Result<f64> {
    let j1 = pm_sideband_weight(omega_prime, nu)?;
    let phase = SIGNAL_LAW_PHASE_SCALE * a_perp * 1e-3 * j1 * t_f / 4.0;
    Ok(phase.cos().powi(2))
}

pub fn mixed_pm_signal(a_perp: f64, omega_prime: f64, nu: f64, t_f: f64) -> Result<f64> {
    Ok(0.5 * (1.0 + analytic_pm_signal(a_perp, omega_prime, nu, t_f)?))
}

/// HHDR drive amplitude `γ_n B - A∥/2` matching nucleus `j`.
pub fn hh_resonance_omega(sys: &SpinSystemSpec, j: usize) -> f64 {
    sys.locked_nuclear_khz(j).abs()
}

/// Pulse half-spacing τ (µs) of the `k`-th XY resonance of nucleus `j`,
/// `τ_k = (2k-1) / (4 f̄)` with `f̄ = γ_n B - A∥/2`.
pub fn xy_resonance_tau(sys: &SpinSystemSpec, j: usize, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "harmonic index starts at 1"));
    }
    let f = sys.locked_nuclear_khz(j).abs() * 1e-3;
    Ok((2 * k - 1) as f64 / (4.0 * f))
}

/// Harmonic index whose resonance lies nearest to `tau` for precession `larmor_khz`.
pub fn xy_harmonic(larmor_khz: f64, tau_us: f64) -> u32 {
    let k = (4.0 * tau_us * larmor_khz * 1e-3 + 1.0) / 2.0;
    k.round().max(1.0) as u32
}

/// Inverts the XY resonance: `A∥ = 2(γ_n B - (2k-1)/(4τ))`.
pub fn xy_a_par(larmor_khz: f64, tau_us: f64, k: u32) -> f64 {
    let f = (2 * k - 1) as f64 / (4.0 * tau_us) * 1e3;
    2.0 * (larmor_khz - f)
}
