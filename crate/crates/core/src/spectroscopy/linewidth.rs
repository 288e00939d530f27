//! Line width of the dominant dip as a function of amplitude noise.

use serde::Serialize;

use super::fit::{fit_spectrum, FitOptions};
use super::sweep::{run_sweep, AmplitudeNoise, SweepPlan};
use crate::error::{Error, Result};
use crate::model::SpinSystemSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinewidthPoint {
    pub sigma: f64,
    /// FWHM of the deepest dip, NaN when the fit failed.
    pub width: f64,
    pub width_stderr: f64,
    pub center: f64,
    pub fit_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Runs one noisy sweep per σ and fits its deepest dip.
///
/// σ = 0 runs a single noiseless shot. A failed fit is recorded in the
/// returned point rather than aborting the scan; simulation errors abort.
pub fn linewidth_vs_noise(
    sys: &SpinSystemSpec,
    base_plan: &SweepPlan,
    sigma_grid: &[f64],
    shots: u32,
    seed: u64,
    fit: &FitOptions,
) -> Result<Vec<LinewidthPoint>> {
    if sigma_grid.len() < 2 {
        return Err(Error::invalid("sigma_grid", "need at least two noise levels"));
    }
    let fit = FitOptions { max_dips: 1, ..*fit };
    sigma_grid
        .iter()
        .map(|&sigma| {
            let noise = if sigma == 0.0 {
                None
            } else {
                Some(AmplitudeNoise::new(sigma, shots, seed)?)
            };
            let spec = run_sweep(sys, base_plan, noise.as_ref())?;
            let failed = |msg: String| LinewidthPoint {
                sigma,
                width: f64::NAN,
                width_stderr: f64::NAN,
                center: f64::NAN,
                fit_ok: false,
                message: Some(msg),
            };
            Ok(match fit_spectrum(&spec, &fit) {
                Ok(r) => match r.deepest() {
                    Some(d) => LinewidthPoint {
                        sigma,
                        width: d.width_khz,
                        width_stderr: d.width_stderr,
                        center: d.center_khz,
                        fit_ok: r.converged,
                        message: (!r.converged).then(|| format!("fit not converged, residual {:e}", r.fit_residual)),
                    },
                    None => failed("no dip found".into()),
                },
                Err(e) => failed(e.to_string()),
            })
        })
        .collect()
}
