//! Bessel function of the first kind, order one.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Largest |x| accepted by [`bessel_j1`].
pub const J1_DOMAIN: f64 = 100.0;

const SERIES_LIMIT: f64 = 12.0;

/// `J₁(x)` to about 1e-10 absolute on `|x| ≤ 100`.
///
/// Ascending series up to |x| = 12, Hankel asymptotic expansion beyond.
pub fn bessel_j1(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > J1_DOMAIN {
        return Err(Error::BesselDomain(x));
    }
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT { series(ax) } else { asymptotic(ax) };
    Ok(if x < 0.0 { -v } else { v })
}

fn series(x: f64) -> f64 {
    let h = 0.5 * x;
    let h2 = h * h;
    let mut term = h;
    let mut sum = term;
    for k in 1..60 {
        let k = k as f64;
        term *= -h2 / (k * (k + 1.0));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    // μ = 4ν² with ν = 1
    let mu = 4.0;
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = a * (mu - odd * odd) / (k as f64 * z);
        if next.abs() >= last || next == 0.0 {
            break;
        }
        last = next.abs();
        a = next;
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
