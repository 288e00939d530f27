//! Dip detection, sum-of-lineshapes fitting and hyperfine coupling extraction.
//!
//! Detection thresholds the spectrum against its median with a MAD noise
//! estimate. Each detected dip is first refined alone inside a window around
//! it (back-fitting against the other dips), then all parameters are polished
//! jointly with Nelder–Mead. Widths are reported as FWHM.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::analytic::{xy_a_par, xy_harmonic};
use super::sweep::{Spectrum, SweptParameter};
use crate::error::{Error, Result};
use crate::sequences::ProtocolTag;

/// MAD to standard deviation for Gaussian noise.
const MAD_SCALE: f64 = 1.4826;
const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipModel {
    #[default]
    LorentzianSum,
    GaussianSum,
}

impl DipModel {
    /// Unit-depth profile at `u = (x - c)/γ`, with γ the half width at half minimum.
    fn profile(self, u: f64) -> f64 {
        match self {
            DipModel::LorentzianSum => 1.0 / (1.0 + u * u),
            DipModel::GaussianSum => (-std::f64::consts::LN_2 * u * u).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_dips: usize,
    pub model: DipModel,
    /// Detection threshold in units of the robust noise estimate.
    pub threshold_sigmas: f64,
    /// Absolute detection floor on dip depth.
    pub min_depth: f64,
    /// Detection floor relative to the deepest point of the spectrum.
    pub relative_floor: f64,
    /// Minimum spacing between detected dips; defaults to three grid steps.
    pub min_separation: Option<f64>,
    pub max_iterations: u64,
    /// Convergence tolerance on the RMS residual.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_dips: 8,
            model: DipModel::LorentzianSum,
            threshold_sigmas: 3.0,
            min_depth: 0.005,
            relative_floor: 0.15,
            min_separation: None,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sideband {
    Lower,
    Upper,
}

/// One fitted dip. Positions and widths are in the swept unit (kHz, or µs for τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub center_khz: f64,
    /// Full width at half minimum.
    pub width_khz: f64,
    pub depth: f64,
    pub a_par_khz: Option<f64>,
    pub center_stderr: f64,
    pub width_stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sideband: Option<Sideband>,
    /// Too close to the bare Larmor frequency to pick a sideband.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipReport {
    pub dips: Vec<Dip>,
    /// RMS residual of the final fit.
    #[serde(rename = "residual")]
    pub fit_residual: f64,
    pub model: DipModel,
    pub converged: bool,
    pub baseline: f64,
}

impl DipReport {
    /// Dip with the largest depth.
    pub fn deepest(&self) -> Option<&Dip> {
        self.dips.iter().max_by(|a, b| a.depth.total_cmp(&b.depth))
    }
}

/// How dip positions translate into parallel hyperfine couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingContext {
    None,
    /// PM-HHDR ν sweep: `A∥ = 2(γ_n B - (ν_c ± Ω′))`.
    PmNu { larmor_khz: f64, omega_prime_khz: f64 },
    /// HHDR Ω sweep: `A∥ = 2(γ_n B - Ω_c)`.
    HhdrOmega { larmor_khz: f64 },
    /// XY τ sweep via the nearest harmonic.
    XyTau { larmor_khz: f64 },
}

impl CouplingContext {
    pub fn for_spectrum(spec: &Spectrum) -> Self {
        let l = spec.larmor_khz;
        match (spec.plan.protocol, spec.plan.swept) {
            (ProtocolTag::PmHhdr, SweptParameter::Nu) => CouplingContext::PmNu {
                larmor_khz: l,
                omega_prime_khz: spec.plan.fixed.omega_prime_khz,
            },
            (ProtocolTag::Hhdr, SweptParameter::Omega) => CouplingContext::HhdrOmega { larmor_khz: l },
            (ProtocolTag::XyN, SweptParameter::Tau) => CouplingContext::XyTau { larmor_khz: l },
            _ => CouplingContext::None,
        }
    }

    /// `(A∥, sideband, ambiguous)` for a dip at `center`.
    pub fn assign(&self, center: f64, step: f64) -> (Option<f64>, Option<Sideband>, bool) {
        match *self {
            CouplingContext::None => (None, None, false),
            CouplingContext::PmNu {
                larmor_khz,
                omega_prime_khz,
            } => {
                if (center - larmor_khz).abs() <= step {
                    return (None, None, true);
                }
                let (side, target) = if center < larmor_khz {
                    (Sideband::Lower, center + omega_prime_khz)
                } else {
                    (Sideband::Upper, center - omega_prime_khz)
                };
                (Some(2.0 * (larmor_khz - target)), Some(side), false)
            }
            CouplingContext::HhdrOmega { larmor_khz } => (Some(2.0 * (larmor_khz - center)), None, false),
            CouplingContext::XyTau { larmor_khz } => {
                let k = xy_harmonic(larmor_khz, center);
                (Some(xy_a_par(larmor_khz, center, k)), None, false)
            }
        }
    }
}

/// Fits up to `max_dips` dips with default options and the spectrum's own coupling context.
pub fn fit_dips(spec: &Spectrum, max_dips: usize) -> Result<DipReport> {
    let opts = FitOptions {
        max_dips,
        ..FitOptions::default()
    };
    fit_spectrum(spec, &opts)
}

pub fn fit_spectrum(spec: &Spectrum, opts: &FitOptions) -> Result<DipReport> {
    fit_series(&spec.xs(), &spec.ys(), opts, CouplingContext::for_spectrum(spec))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Robust white-noise level from first differences, insensitive to smooth
/// structure such as well-sampled dips.
fn difference_noise(ys: &[f64]) -> f64 {
    let d: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(&d);
    let dev: Vec<f64> = d.iter().map(|v| (v - m).abs()).collect();
    MAD_SCALE * median(&dev) / std::f64::consts::SQRT_2
}

/// Baseline as the fixed point of `b = median{y : y ≥ b - 3σ}`. Points in
/// dips drop out, so the estimate holds when dips cover most of the grid.
fn upper_baseline(ys: &[f64], noise: f64) -> f64 {
    let mut b = median(ys);
    for _ in 0..64 {
        let kept: Vec<f64> = ys.iter().copied().filter(|&y| y >= b - 3.0 * noise).collect();
        let nb = median(&kept);
        if (nb - b).abs() <= 1e-12 {
            break;
        }
        b = nb;
    }
    b
}

#[derive(Debug, Clone, Copy)]
struct Seed {
    center: f64,
    hwhm: f64,
    depth: f64,
}

/// Parameter layout: `[baseline, (center, θ, depth) per dip]` with
/// `γ = min_hwhm + e^θ`, so no dip can collapse below the grid resolution.
#[derive(Clone)]
struct Problem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    model: DipModel,
    /// Contribution of dips held fixed, subtracted from the data.
    offset: Vec<f64>,
    fixed_baseline: Option<f64>,
    x_lo: f64,
    x_hi: f64,
    min_hwhm: f64,
}

impl Problem<'_> {
    fn n_dips(&self, p: &[f64]) -> usize {
        match self.fixed_baseline {
            Some(_) => p.len() / 3,
            None => (p.len() - 1) / 3,
        }
    }

    fn split<'p>(&self, p: &'p [f64]) -> (f64, &'p [f64]) {
        match self.fixed_baseline {
            Some(b) => (b, p),
            None => (p[0], &p[1..]),
        }
    }

    fn eval(&self, p: &[f64], i: usize) -> f64 {
        let (b, dips) = self.split(p);
        let x = self.xs[i];
        let mut y = b - self.offset[i];
        for d in dips.chunks(3) {
            let g = self.hwhm(d[1]);
            y -= d[2] * self.model.profile((x - d[0]) / g);
        }
        y
    }

    fn hwhm(&self, theta: f64) -> f64 {
        self.min_hwhm + theta.exp()
    }

    fn theta(&self, hwhm: f64) -> f64 {
        (hwhm - self.min_hwhm).max(1e-300).ln()
    }

    fn rms(&self, p: &[f64]) -> f64 {
        let n = self.xs.len();
        let ss: f64 = (0..n).map(|i| (self.ys[i] - self.eval(p, i)).powi(2)).sum();
        (ss / n as f64).sqrt()
    }

    fn penalty(&self, p: &[f64]) -> f64 {
        let (_, dips) = self.split(p);
        let span = self.x_hi - self.x_lo;
        let mut pen = 0.0;
        for d in dips.chunks(3).take(self.n_dips(p)) {
            let g = self.hwhm(d[1]);
            if d[0] < self.x_lo - 0.1 * span || d[0] > self.x_hi + 0.1 * span {
                pen += 1.0;
            }
            if g > span {
                pen += 1.0;
            }
            if d[2] < 0.0 || d[2] > 1.5 {
                pen += 1.0;
            }
        }
        pen
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let pen = self.penalty(p);
        if pen > 0.0 {
            return Ok(PENALTY * pen + self.rms(p));
        }
        Ok(self.rms(p))
    }
}

fn simplex_steps(p: &[f64], step: f64, fixed_baseline: bool) -> Vec<f64> {
    // θ steps are multiplicative on the excess width
    let mut s = Vec::with_capacity(p.len());
    let dips = if fixed_baseline {
        p
    } else {
        s.push(0.01);
        &p[1..]
    };
    for d in dips.chunks(3) {
        s.push(0.5 * step.max(d[1].exp() * 0.5).min(5.0 * step));
        s.push(0.3);
        s.push(0.2 * d[2].abs() + 1e-3);
    }
    s
}

/// Nelder–Mead with restarts. Returns `(params, rms, converged)`.
fn minimize(problem: &Problem<'_>, start: Vec<f64>, step: f64, opts: &FitOptions) -> Result<(Vec<f64>, f64, bool)> {
    let mut best = start;
    let mut best_cost = problem.cost(&best).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut converged = false;
    for _restart in 0..4 {
        let steps = simplex_steps(&best, step, problem.fixed_baseline.is_some());
        let mut simplex = vec![best.clone()];
        for (i, s) in steps.iter().enumerate() {
            let mut v = best.clone();
            v[i] += s;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(opts.tolerance)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let res = Executor::new(problem.clone(), solver)
            .configure(|st| st.max_iters(opts.max_iterations))
            .run()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let state = res.state();
        converged = matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        let cost = state.get_best_cost();
        let param = state.get_best_param().cloned().unwrap_or_else(|| best.clone());
        let improvement = best_cost - cost;
        if cost < best_cost {
            best = param;
            best_cost = cost;
        }
        if converged && improvement <= opts.tolerance {
            break;
        }
    }
    Ok((best, best_cost, converged))
}

fn detect(xs: &[f64], ys: &[f64], baseline: f64, thresh: f64, min_sep: f64, max_dips: usize) -> Vec<Seed> {
    let n = ys.len();
    let mut cands: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || ys[i] <= ys[i - 1];
            let right = i + 1 == n || ys[i] <= ys[i + 1];
            left && right && baseline - ys[i] >= thresh
        })
        .collect();
    cands.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut chosen: Vec<usize> = Vec::new();
    for i in cands {
        if chosen.len() == max_dips {
            break;
        }
        if chosen.iter().all(|&j| (xs[i] - xs[j]).abs() >= min_sep) {
            chosen.push(i);
        }
    }
    chosen
        .into_iter()
        .map(|i| {
            let depth = baseline - ys[i];
            let half = ys[i] + 0.5 * depth;
            let crossing = |dir: isize| -> f64 {
                let mut j = i as isize;
                loop {
                    let k = j + dir;
                    if k < 0 || k >= n as isize {
                        return (xs[j as usize] - xs[i]).abs();
                    }
                    let (yj, yk) = (ys[j as usize], ys[k as usize]);
                    if yk >= half {
                        let f = if yk != yj { (half - yj) / (yk - yj) } else { 0.5 };
                        let xc = xs[j as usize] + f * (xs[k as usize] - xs[j as usize]);
                        return (xc - xs[i]).abs();
                    }
                    if yk < ys[i] {
                        return (xs[j as usize] - xs[i]).abs();
                    }
                    j = k;
                }
            };
            Seed {
                center: xs[i],
                hwhm: 0.5 * (crossing(-1) + crossing(1)),
                depth,
            }
        })
        .collect()
}

/// Fits dips in the series `(xs, ys)` and converts centres with `ctx`.
///
/// A spectrum without dips yields an empty report.
pub fn fit_series(xs: &[f64], ys: &[f64], opts: &FitOptions, ctx: CouplingContext) -> Result<DipReport> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("spectrum", "x and signal lengths differ"));
    }
    if xs.len() < 10 {
        return Err(Error::invalid("spectrum", format!("need at least 10 points, got {}", xs.len())));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("spectrum", "x must be strictly increasing and signals finite"));
    }
    if opts.max_dips == 0 {
        return Err(Error::invalid("max_dips", "must be >= 1"));
    }
    let n = xs.len();
    let diffs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let step = median(&diffs);
    let noise = difference_noise(ys);
    let baseline = upper_baseline(ys, noise);
    let dev: Vec<f64> = ys.iter().map(|y| (y - baseline).abs()).collect();
    let deepest = baseline - ys.iter().copied().fold(f64::INFINITY, f64::min);
    let thresh = (opts.threshold_sigmas * noise).max(opts.min_depth).max(opts.relative_floor * deepest);
    let min_sep = opts.min_separation.unwrap_or(3.0 * step);

    let flat_rms = (dev.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
    let seeds = if deepest > 0.0 {
        detect(xs, ys, baseline, thresh, min_sep, opts.max_dips)
    } else {
        Vec::new()
    };
    if seeds.is_empty() {
        return Ok(DipReport {
            dips: Vec::new(),
            fit_residual: flat_rms,
            model: opts.model,
            converged: true,
            baseline,
        });
    }

    let min_hwhm = 0.5 * step;
    let mut params = vec![baseline];
    for s in &seeds {
        params.extend([s.center, (s.hwhm - min_hwhm).max(0.2 * step).ln(), s.depth]);
    }
    let base_problem = Problem {
        xs,
        ys,
        model: opts.model,
        offset: vec![0.0; n],
        fixed_baseline: None,
        x_lo: xs[0],
        x_hi: xs[n - 1],
        min_hwhm,
    };

    // back-fitting: each dip alone in its window, others held fixed
    for _pass in 0..2 {
        for j in 0..seeds.len() {
            let dip = |p: &Vec<f64>| -> Vec<f64> { p[1 + 3 * j..4 + 3 * j].to_vec() };
            let c = params[1 + 3 * j];
            let g = base_problem.hwhm(params[2 + 3 * j]);
            let half_window = (4.0 * g).max(3.0 * step);
            let idx: Vec<usize> = (0..n).filter(|&i| (xs[i] - c).abs() <= half_window).collect();
            if idx.len() < 4 {
                continue;
            }
            let wx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let wy: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            let mut others = params.clone();
            others[3 + 3 * j] = 0.0;
            let offset: Vec<f64> = idx.iter().map(|&i| params[0] - base_problem.eval(&others, i)).collect();
            let local = Problem {
                xs: &wx,
                ys: &wy,
                offset,
                fixed_baseline: Some(params[0]),
                ..base_problem.clone()
            };
            let (p, _, _) = minimize(&local, dip(&params), step, opts)?;
            params[1 + 3 * j..4 + 3 * j].copy_from_slice(&p);
        }
    }

    let (params, rms, converged) = minimize(&base_problem, params, step, opts)?;
    let stderr = standard_errors(&base_problem, &params, rms);

    let mut dips = Vec::new();
    for (j, d) in params[1..].chunks(3).enumerate() {
        let (center, g, depth) = (d[0], base_problem.hwhm(d[1]), d[2]);
        if !(depth > 0.5 * thresh) || center < xs[0] || center > xs[n - 1] {
            continue;
        }
        let (a_par_khz, sideband, ambiguous) = ctx.assign(center, step);
        dips.push(Dip {
            center_khz: center,
            width_khz: 2.0 * g,
            depth: depth.min(1.0),
            a_par_khz,
            center_stderr: stderr[1 + 3 * j],
            width_stderr: 2.0 * stderr[2 + 3 * j],
            sideband,
            ambiguous,
        });
    }
    dips.sort_by(|a, b| a.center_khz.total_cmp(&b.center_khz));
    Ok(DipReport {
        dips,
        fit_residual: rms,
        model: opts.model,
        converged,
        baseline: params[0],
    })
}

/// Asymptotic standard errors `s²(JᵀJ)⁻¹` in natural parameters (baseline, centre, γ, depth).
fn standard_errors(problem: &Problem<'_>, params: &[f64], rms: f64) -> Vec<f64> {
    let n = problem.xs.len();
    let m = params.len();
    let natural: Vec<f64> = params
        .iter()
        .enumerate()
        .map(|(i, &v)| if i > 0 && (i - 1) % 3 == 1 { problem.hwhm(v) } else { v })
        .collect();
    let to_internal = |nat: &[f64]| -> Vec<f64> {
        nat.iter()
            .enumerate()
            .map(|(i, &v)| if i > 0 && (i - 1) % 3 == 1 { problem.theta(v) } else { v })
            .collect()
    };
    let mut jac = DMatrix::<f64>::zeros(n, m);
    for k in 0..m {
        let h = 1e-6 * natural[k].abs().max(1e-3);
        let mut up = natural.clone();
        let mut dn = natural.clone();
        up[k] += h;
        dn[k] -= h;
        let (pu, pd) = (to_internal(&up), to_internal(&dn));
        for i in 0..n {
            jac[(i, k)] = (problem.eval(&pu, i) - problem.eval(&pd, i)) / (2.0 * h);
        }
    }
    let dof = n.saturating_sub(m).max(1) as f64;
    let s2 = rms * rms * n as f64 / dof;
    match (jac.transpose() * &jac).try_inverse() {
        Some(cov) => (0..m).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; m],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz(x: f64, c: f64, fwhm: f64, d: f64) -> f64 {
        let u = (x - c) / (0.5 * fwhm);
        d / (1.0 + u * u)
    }

    fn grid(a: f64, b: f64, step: f64) -> Vec<f64> {
        let n = ((b - a) / step).round() as usize;
        (0..=n).map(|i| a + i as f64 * step).collect()
    }

    #[test]
    fn flat_spectrum_gives_empty_report() {
        let xs = grid(0.0, 100.0, 1.0);
        let ys = vec![1.0; xs.len()];
        let r = fit_series(&xs, &ys, &FitOptions::default(), CouplingContext::None).unwrap();
        assert!(r.dips.is_empty());
    }

    #[test]
    fn too_few_points_rejected() {
        let xs = grid(0.0, 8.0, 1.0);
        let ys = vec![1.0; xs.len()];
        assert!(fit_series(&xs, &ys, &FitOptions::default(), CouplingContext::None).is_err());
    }

    #[test]
    fn recovers_two_lorentzians() {
        let xs = grid(1850.0, 2100.0, 1.0);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 0.98 - lorentz(x, 1872.3, 3.0, 0.3) - lorentz(x, 2079.6, 4.0, 0.2))
            .collect();
        let r = fit_series(&xs, &ys, &FitOptions::default(), CouplingContext::None).unwrap();
        assert_eq!(r.dips.len(), 2);
        assert!((r.dips[0].center_khz - 1872.3).abs() < 1e-3);
        assert!((r.dips[0].width_khz - 3.0).abs() < 1e-2);
        assert!((r.dips[1].depth - 0.2).abs() < 1e-3);
        assert!((r.baseline - 0.98).abs() < 1e-4);
        assert!(r.fit_residual < 1e-4);
    }

    #[test]
    fn gaussian_model_recovers_gaussian() {
        let xs = grid(0.0, 60.0, 0.5);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 1.0 - 0.4 * (-std::f64::consts::LN_2 * ((x - 31.2) / 2.5).powi(2)).exp())
            .collect();
        let opts = FitOptions {
            model: DipModel::GaussianSum,
            ..FitOptions::default()
        };
        let r = fit_series(&xs, &ys, &opts, CouplingContext::None).unwrap();
        assert_eq!(r.dips.len(), 1);
        assert!((r.dips[0].width_khz - 5.0).abs() < 1e-2);
    }

    #[test]
    fn pm_coupling_sign_from_side_of_larmor() {
        let ctx = CouplingContext::PmNu {
            larmor_khz: 1970.3456,
            omega_prime_khz: 104.0,
        };
        let (a, side, amb) = ctx.assign(1871.9956, 2.0);
        assert!((a.unwrap() + 11.3).abs() < 1e-9);
        assert_eq!(side, Some(Sideband::Lower));
        assert!(!amb);
        let (a, side, _) = ctx.assign(2079.9956, 2.0);
        assert!((a.unwrap() + 11.3).abs() < 1e-9);
        assert_eq!(side, Some(Sideband::Upper));
        let (a, _, amb) = ctx.assign(1971.0, 2.0);
        assert!(a.is_none() && amb);
    }
}
