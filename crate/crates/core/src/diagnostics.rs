//! Level sweeps, rate fits and the other measurements used to tune and
//! check an estimator: variance and kurtosis per level, variance against
//! the horizon, divergence frequency, the coarsest good `h_0`, the
//! convergence rate `λ*`, and cost against accuracy.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::step_count;
use crate::error::{Error, Result};
use crate::estimators::{self, Grid, LevelStats, MlmcConfig, Plan, Scheme};

/// Axis transform applied before a least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Linear,
    /// `ln y` against `x`.
    LogY,
    /// `log₂ y` against `x`, for per-level decay rates.
    Log2Y,
    /// `ln y` against `ln x`.
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residuals in the transformed coordinates.
    pub residual_norm: f64,
    pub transform: Transform,
}

impl SeriesFit {
    pub fn predict(&self, x: f64) -> f64 {
        let (tx, inv): (f64, fn(f64) -> f64) = match self.transform {
            Transform::Linear => (x, |v| v),
            Transform::LogY => (x, f64::exp),
            Transform::Log2Y => (x, f64::exp2),
            Transform::LogLog => (x.ln(), f64::exp),
        };
        inv(self.intercept + self.slope * tx)
    }
}

/// Ordinary least squares of the transformed series.
pub fn fit_rate(x: &[f64], y: &[f64], transform: Transform) -> Result<SeriesFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidData(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("series contains non-finite values".into()));
    }
    let log_y = !matches!(transform, Transform::Linear);
    if log_y {
        if let Some(bad) = y.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidData(format!("log transform of nonpositive value {bad}")));
        }
    }
    if transform == Transform::LogLog {
        if let Some(bad) = x.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidData(format!("log transform of nonpositive abscissa {bad}")));
        }
    }
    let tx: Vec<f64> = match transform {
        Transform::LogLog => x.iter().map(|v| v.ln()).collect(),
        _ => x.to_vec(),
    };
    let ty: Vec<f64> = match transform {
        Transform::Linear => y.to_vec(),
        Transform::LogY | Transform::LogLog => y.iter().map(|v| v.ln()).collect(),
        Transform::Log2Y => y.iter().map(|v| v.log2()).collect(),
    };
    let n = tx.len() as f64;
    let mx = tx.iter().sum::<f64>() / n;
    let my = ty.iter().sum::<f64>() / n;
    let sxx: f64 = tx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("abscissae are all equal".into()));
    }
    let sxy: f64 = tx.iter().zip(&ty).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = tx.iter().zip(&ty).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>().sqrt();
    Ok(SeriesFit { x: x.to_vec(), y: y.to_vec(), slope, intercept, residual_norm, transform })
}

/// Least-squares line `y = c x` through the origin; returns `c` and the
/// residual norm relative to `|y|`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidData("need equal, nonempty series".into()));
    }
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("abscissae are all zero".into()));
    }
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let res = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum::<f64>().sqrt();
    let norm = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok((c, if norm > 0.0 { res / norm } else { 0.0 }))
}

/// Statistics of levels `0..=max_level`, `n` samples each.
pub fn level_sweep(scheme: &Scheme, t_final: f64, max_level: usize, n: u64) -> Result<Vec<LevelStats>> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("level sweep needs N ≥ 4, got {n}")));
    }
    (0..=max_level).map(|l| scheme.run_level(l, t_final, 0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonPoint {
    pub t: f64,
    pub stats: LevelStats,
}

/// Level-`level` statistics at each horizon in `t_grid`.
pub fn variance_vs_t(scheme: &Scheme, level: usize, t_grid: &[f64], n: u64) -> Result<Vec<HorizonPoint>> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("horizons must be positive and increasing".into()));
    }
    t_grid
        .iter()
        .map(|&t| Ok(HorizonPoint { t, stats: scheme.run_level(level, t, 0..n)? }))
        .collect()
}

/// Fraction of `n` coupled paths on `level` whose terminal divergence
/// exceeds `threshold`. Paths that overflow count as divergent.
pub fn divergence_probability(scheme: &Scheme, level: usize, t_final: f64, n: u64, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let flags = scheme.map_paths(0..n, |i| match scheme.coupled_path(level, t_final, i) {
        Ok(p) => Ok(!(p.terminal_divergence <= threshold)),
        Err(Error::NumericOverflow { .. }) => Ok(true),
        Err(e) => Err(e),
    })?;
    Ok(flags.iter().filter(|d| **d).count() as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H0Row {
    pub j: u32,
    pub h0: f64,
    pub v0: f64,
    pub v1: f64,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H0Search {
    pub t_final: f64,
    pub rows: Vec<H0Row>,
    /// Largest `h_0` with `V_0 > 2 V_1`; `None` when no candidate passes.
    pub h0: Option<f64>,
}

/// Searches `h_0 = 2^-j`, `j ≤ j_max`, for the largest step with
/// `V_0 > 2 V_1`, using `n` samples per level.
///
/// The scan starts at `2^-j_max` and coarsens until the condition first
/// fails, so the result is the coarsest step of the good range that
/// contains the finest candidate. Very coarse steps can make Euler–Maruyama
/// unstable, where the variances are meaningless; stopping at the first
/// failure keeps that regime out. A level whose paths overflow, or whose
/// correction variance is exactly zero, does not count as good.
pub fn find_h0(scheme: &Scheme, t_final: f64, j_max: u32, n: u64) -> Result<H0Search> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_final}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("find_h0 needs at least 2 samples per level".into()));
    }
    let mut rows = Vec::new();
    let mut found = None;
    for j in (0..=j_max).rev() {
        let h0 = 0.5f64.powi(j as i32);
        let candidate = scheme.with_base_step(h0);
        let t = candidate.grid.align_horizon(t_final);
        let v0 = variance_or_inf(&candidate, 0, t, n)?;
        let v1 = variance_or_inf(&candidate, 1, t, n)?;
        let good = v0.is_finite() && v1.is_finite() && v1 > 0.0 && v0 > 2.0 * v1;
        rows.push(H0Row { j, h0, v0, v1, good });
        if !good {
            break;
        }
        found = Some(h0);
    }
    rows.reverse();
    Ok(H0Search { t_final, rows, h0: found })
}

fn variance_or_inf(scheme: &Scheme, level: usize, t: f64, n: u64) -> Result<f64> {
    match scheme.run_level(level, t, 0..n) {
        Ok(s) => Ok(s.variance()),
        Err(Error::NumericOverflow { .. }) | Err(Error::NonFiniteSample { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Moving max and min of `signal` over the trailing window `[t - window, t]`.
pub fn moving_envelope(times: &[f64], signal: &[f64], window: f64) -> (Vec<f64>, Vec<f64>) {
    let mut upper = Vec::with_capacity(times.len());
    let mut lower = Vec::with_capacity(times.len());
    let mut start = 0;
    for (i, &t) in times.iter().enumerate() {
        while times[start] < t - window {
            start += 1;
        }
        let w = &signal[start..=i];
        upper.push(w.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        lower.push(w.iter().copied().fold(f64::INFINITY, f64::min));
    }
    (upper, lower)
}

/// Exponential decay rate of the envelope gap `max - min` over trailing
/// windows, fitted on times `≥ max(fit_start, t_0 + window)`.
pub fn envelope_decay_rate(times: &[f64], signal: &[f64], window: f64, fit_start: f64) -> Result<(f64, SeriesFit)> {
    if times.len() != signal.len() {
        return Err(Error::InvalidData("times and signal lengths differ".into()));
    }
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window}")));
    }
    if times.is_empty() {
        return Err(Error::InvalidData("empty signal".into()));
    }
    let (upper, lower) = moving_envelope(times, signal, window);
    let from = fit_start.max(times[0] + window);
    let (mut xs, mut gaps) = (Vec::new(), Vec::new());
    for i in 0..times.len() {
        if times[i] >= from {
            let gap = upper[i] - lower[i];
            if !(gap > 0.0) {
                return Err(Error::InvalidData(format!("envelope gap is {gap} at t = {}", times[i])));
            }
            xs.push(times[i]);
            gaps.push(gap);
        }
    }
    let fit = fit_rate(&xs, &gaps, Transform::LogY)?;
    Ok((-fit.slope, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaFit {
    pub lambda_star: f64,
    pub window: f64,
    pub fit_start: f64,
    pub fit: SeriesFit,
    pub times: Vec<f64>,
    /// Sample mean of `φ(X_t)` over the paths.
    pub means: Vec<f64>,
}

/// Paths per deterministic accumulation chunk.
const CHUNK: u64 = 256;

/// Sample mean of `φ(X_t)` at every level-0 grid time up to `t_max`.
pub fn mean_trajectory(scheme: &Scheme, t_max: f64, n: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = match scheme.grid {
        Grid::Uniform { h0 } => h0,
        Grid::Adaptive { .. } => return Err(Error::Unsupported("mean trajectories need a uniform grid".into())),
    };
    if !(t_max > 0.0 && t_max.is_finite()) || n == 0 {
        return Err(Error::InvalidArgument("need T_max > 0 and at least one path".into()));
    }
    let steps = step_count(t_max, h) as usize;
    let model = &scheme.model;
    let dim = model.dim();
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut sums = vec![0.0; steps + 1];
            let mut fx = vec![0.0; dim];
            let mut dw = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut source = crate::sampling::StreamKey::new(scheme.seed, 0, i, scheme.replica_tag).stream();
                let mut x = model.x0().to_vec();
                sums[0] += model.phi(&x);
                for (k, slot) in sums.iter_mut().enumerate().skip(1) {
                    crate::sampling::IncrementSource::fill_increment(&mut source, h, &mut dw);
                    model.drift_into(&x, &mut fx);
                    for d in 0..dim {
                        x[d] += fx[d] * h + dw[d];
                    }
                    if !crate::vecops::all_finite(&x) {
                        return Err(Error::NumericOverflow { step: k as u64, time: k as f64 * h });
                    }
                    *slot += model.phi(&x);
                }
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut means = vec![0.0; steps + 1];
    for p in &partial {
        for (m, s) in means.iter_mut().zip(p) {
            *m += s;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let times = (0..=steps).map(|k| k as f64 * h).collect();
    Ok((times, means))
}

/// Fits `λ*` from the envelope of `E[φ(X_t)]`. `window` defaults to
/// `T_max/5` and `fit_start` to `T_max/4`.
pub fn estimate_lambda_star(
    scheme: &Scheme,
    t_max: f64,
    n: u64,
    window: Option<f64>,
    fit_start: Option<f64>,
) -> Result<LambdaFit> {
    let window = window.unwrap_or(t_max / 5.0);
    let fit_start = fit_start.unwrap_or(t_max / 4.0);
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window}")));
    }
    let (times, means) = mean_trajectory(scheme, t_max, n)?;
    let (lambda_star, fit) = envelope_decay_rate(&times, &means, window, fit_start)?;
    Ok(LambdaFit { lambda_star, window, fit_start, fit, times, means })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPoint {
    pub eps: f64,
    pub total_cost: u64,
    pub estimate: f64,
    pub statistical_error: f64,
    pub max_level: usize,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSweep {
    pub points: Vec<CostPoint>,
    /// `ln C` against `ln ε⁻¹`; the slope is the empirical cost exponent.
    pub fit: Option<SeriesFit>,
}

/// Runs the configured estimator at each `ε`, overriding only the accuracy
/// of a target plan.
pub fn cost_vs_epsilon(config: &MlmcConfig, eps_grid: &[f64]) -> Result<CostSweep> {
    let (lambda_star, mu_star) = match config.plan {
        Plan::Target { lambda_star, mu_star, .. } => (lambda_star, mu_star),
        Plan::Explicit { .. } => {
            return Err(Error::InvalidArgument("cost sweeps need a target plan with λ* and μ*".into()))
        }
    };
    if eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps values must lie in (0, 1) and decrease".into()));
    }
    let mut points = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let cfg = MlmcConfig { plan: Plan::Target { eps, lambda_star, mu_star }, ..config.clone() };
        let r = estimators::estimate(&cfg)?;
        points.push(CostPoint {
            eps,
            total_cost: r.total_cost,
            estimate: r.estimate,
            statistical_error: r.statistical_error,
            max_level: r.max_level,
            t_final: r.t_final,
        });
    }
    let fit = if points.len() >= 3 {
        let x: Vec<f64> = points.iter().map(|p| 1.0 / p.eps).collect();
        let y: Vec<f64> = points.iter().map(|p| p.total_cost as f64).collect();
        Some(fit_rate(&x, &y, Transform::LogLog)?)
    } else {
        None
    };
    Ok(CostSweep { points, fit })
}
