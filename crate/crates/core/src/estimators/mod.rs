//! Monte Carlo and multilevel estimators of `π(φ)`.
//!
//! A [`Scheme`] fixes the model, the spring policy, the time grid and the
//! seed; it turns `(level, T, path index)` into one level sample. The
//! drivers in this module combine level samples into the plain Monte Carlo
//! estimator, standard MLMC and change-of-measure MLMC.

mod plan;
mod stats;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{
    simulate_adaptive_coupled_path, simulate_adaptive_single_path, simulate_coupled_path, simulate_single_path,
    PathResult, SinglePath,
};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, SpringPolicy, SpringValidity};
use crate::sampling::StreamKey;

pub use plan::{allocate_samples, choose_l, choose_t, Allocation};
pub use stats::LevelStats;

/// Paths simulated per parallel batch; bounds the memory held by one batch.
const BATCH: u64 = 1 << 15;

/// Time grid of level 0; level `l` refines it by `2^-l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Uniform { h0: f64 },
    /// Adaptive steps `h^δ(x)` from the model's step rule.
    Adaptive { delta0: f64 },
}

impl Grid {
    pub fn base(&self) -> f64 {
        match *self {
            Grid::Uniform { h0 } => h0,
            Grid::Adaptive { delta0 } => delta0,
        }
    }

    /// `h_l` or `δ_l`.
    pub fn step(&self, level: usize) -> f64 {
        self.base() * 0.5f64.powi(level as i32)
    }

    fn with_base(&self, base: f64) -> Grid {
        match self {
            Grid::Uniform { .. } => Grid::Uniform { h0: base },
            Grid::Adaptive { .. } => Grid::Adaptive { delta0: base },
        }
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        let base = self.base();
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid base step must be positive, got {base}")));
        }
        if matches!(self, Grid::Adaptive { .. }) && !model.has_adaptive_rule() {
            return Err(Error::Unsupported(format!("model '{}' has no adaptive timestep rule", model.name())));
        }
        Ok(())
    }

    /// Rounds `t` up to a whole number of level-0 steps on a uniform grid.
    pub fn align_horizon(&self, t: f64) -> f64 {
        match *self {
            Grid::Uniform { h0 } => crate::coupling::step_count(t, h0) as f64 * h0,
            Grid::Adaptive { .. } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mc,
    MlmcStandard,
    MlmcCom,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Mc, EstimatorKind::MlmcStandard, EstimatorKind::MlmcCom];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::MlmcStandard => "mlmc_standard",
            EstimatorKind::MlmcCom => "mlmc_com",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(EstimatorKind::Mc),
            "mlmc_standard" | "mlmc-standard" => Ok(EstimatorKind::MlmcStandard),
            "mlmc_com" | "mlmc-com" => Ok(EstimatorKind::MlmcCom),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator '{other}', expected one of mc, mlmc_standard, mlmc_com"
            ))),
        }
    }
}

/// One level sample and its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSample {
    pub p: f64,
    pub cost: u64,
    pub diverged: bool,
    pub terminal_divergence: f64,
}

/// Everything needed to draw level samples reproducibly.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub model: ModelSpec,
    pub policy: SpringPolicy,
    pub grid: Grid,
    pub seed: u64,
    pub replica_tag: u32,
    /// Terminal `|Y^f - Y^c|` above which a sample counts as divergent.
    pub divergence_threshold: f64,
}

impl Scheme {
    pub fn new(model: ModelSpec, policy: SpringPolicy, grid: Grid, seed: u64) -> Self {
        let divergence_threshold = model.divergence_threshold();
        Self { model, policy, grid, seed, replica_tag: 0, divergence_threshold }
    }

    pub fn with_replica_tag(mut self, tag: u32) -> Self {
        self.replica_tag = tag;
        self
    }

    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = threshold;
        self
    }

    /// The same scheme with the standard coupling.
    pub fn standard(&self) -> Scheme {
        Scheme { policy: SpringPolicy::None, ..self.clone() }
    }

    pub fn step(&self, level: usize) -> f64 {
        self.grid.step(level)
    }

    fn key(&self, level: usize, path_index: u64) -> StreamKey {
        StreamKey::new(self.seed, level as u32, path_index, self.replica_tag)
    }

    /// Plain Euler–Maruyama path at the step of `level`.
    pub fn single_path(&self, level: usize, t_final: f64, path_index: u64) -> Result<SinglePath> {
        let key = self.key(level, path_index);
        match self.grid {
            Grid::Uniform { .. } => simulate_single_path(&self.model, self.step(level), t_final, key),
            Grid::Adaptive { .. } => simulate_adaptive_single_path(&self.model, self.step(level), t_final, key),
        }
    }

    /// Coupled path with fine step `h_l` and coarse step `h_{l-1}`; `level ≥ 1`.
    pub fn coupled_path(&self, level: usize, t_final: f64, path_index: u64) -> Result<PathResult> {
        if level == 0 {
            return Err(Error::InvalidArgument("coupled paths start at level 1".into()));
        }
        let key = self.key(level, path_index);
        let step = self.step(level);
        match self.grid {
            Grid::Uniform { .. } => simulate_coupled_path(&self.model, &self.policy, step, t_final, key),
            Grid::Adaptive { .. } => simulate_adaptive_coupled_path(&self.model, &self.policy, step, t_final, key),
        }
    }

    /// `φ(X_T)` on level 0, `φ(Y^f_T) R^f_T - φ(Y^c_T) R^c_T` above.
    pub fn level_sample(&self, level: usize, t_final: f64, path_index: u64) -> Result<LevelSample> {
        let sample = if level == 0 {
            let path = self.single_path(0, t_final, path_index)?;
            LevelSample { p: path.phi, cost: path.cost, diverged: false, terminal_divergence: 0.0 }
        } else {
            let path = self.coupled_path(level, t_final, path_index)?;
            LevelSample {
                p: path.correction(),
                cost: path.cost,
                diverged: path.terminal_divergence > self.divergence_threshold,
                terminal_divergence: path.terminal_divergence,
            }
        };
        if !sample.p.is_finite() {
            return Err(Error::NonFiniteSample { level, path_index });
        }
        Ok(sample)
    }

    /// Evaluates `sample` on every index of `range` in parallel, in index order.
    pub fn map_paths<T, F>(&self, range: Range<u64>, sample: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        range.into_par_iter().map(sample).collect()
    }

    /// Level samples for the indices in `range`, folded in index order.
    pub fn run_level(&self, level: usize, t_final: f64, range: Range<u64>) -> Result<LevelStats> {
        let mut stats = LevelStats::new(level, self.step(level));
        self.extend_level(&mut stats, t_final, range)?;
        Ok(stats)
    }

    fn extend_level(&self, stats: &mut LevelStats, t_final: f64, range: Range<u64>) -> Result<()> {
        let level = stats.level;
        self.fold_batches(range, stats, |i| self.level_sample(level, t_final, i))
    }

    fn extend_single(&self, stats: &mut LevelStats, t_final: f64, range: Range<u64>) -> Result<()> {
        let level = stats.level;
        self.fold_batches(range, stats, |i| {
            let path = self.single_path(level, t_final, i)?;
            if !path.phi.is_finite() {
                return Err(Error::NonFiniteSample { level, path_index: i });
            }
            Ok(LevelSample { p: path.phi, cost: path.cost, diverged: false, terminal_divergence: 0.0 })
        })
    }

    fn fold_batches<F>(&self, range: Range<u64>, stats: &mut LevelStats, sample: F) -> Result<()>
    where
        F: Fn(u64) -> Result<LevelSample> + Sync + Send,
    {
        let mut start = range.start;
        while start < range.end {
            let end = range.end.min(start.saturating_add(BATCH));
            for s in self.map_paths(start..end, &sample)? {
                stats.push(s.p, s.cost, s.diverged);
            }
            start = end;
        }
        Ok(())
    }
}

/// How the horizon, the finest level and the sample counts are chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Plan {
    /// Mean square error target `ε²` with convergence rate `λ*` and prefactor `μ*`.
    Target { eps: f64, lambda_star: f64, mu_star: f64 },
    /// Fixed horizon and per-level sample counts `N_0..N_L`. Plain Monte Carlo
    /// uses level `L` only, with `N_L` paths.
    Explicit { t_final: f64, samples: Vec<u64> },
}

#[derive(Debug, Clone)]
pub struct MlmcConfig {
    pub scheme: Scheme,
    pub kind: EstimatorKind,
    pub plan: Plan,
    /// Bias dial: the finest level satisfies `h_L ≤ c_bias ε`.
    pub c_bias: f64,
    /// Screening paths per level.
    pub n_warm: u64,
    /// Cap on the total number of paths over all levels.
    pub max_paths: Option<u64>,
}

impl MlmcConfig {
    pub fn new(scheme: Scheme, kind: EstimatorKind, plan: Plan) -> Self {
        Self { scheme, kind, plan, c_bias: 1.0, n_warm: 100, max_paths: None }
    }

    /// The scheme actually sampled: standard MLMC drops the spring.
    pub fn effective_scheme(&self) -> Scheme {
        match self.kind {
            EstimatorKind::MlmcStandard | EstimatorKind::Mc => self.scheme.standard(),
            EstimatorKind::MlmcCom => self.scheme.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.scheme.grid.validate(&self.scheme.model)?;
        if !(self.c_bias > 0.0 && self.c_bias.is_finite()) {
            return Err(Error::InvalidArgument(format!("c_bias must be positive, got {}", self.c_bias)));
        }
        if self.n_warm == 0 {
            return Err(Error::InvalidArgument("n_warm must be at least 1".into()));
        }
        match &self.plan {
            Plan::Target { eps, lambda_star, mu_star } => {
                if !(*eps > 0.0 && *eps < 1.0) {
                    return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
                }
                if !(*lambda_star > 0.0 && lambda_star.is_finite()) || !(*mu_star > 0.0 && mu_star.is_finite()) {
                    return Err(Error::InvalidArgument("lambda* and mu* must be positive".into()));
                }
            }
            Plan::Explicit { t_final, samples } => {
                if !(*t_final > 0.0 && t_final.is_finite()) {
                    return Err(Error::InvalidArgument(format!("T must be positive, got {t_final}")));
                }
                if samples.is_empty() || samples.iter().any(|&n| n == 0) {
                    return Err(Error::InvalidArgument("explicit plan needs N_l ≥ 1 on every level".into()));
                }
            }
        }
        Ok(())
    }
}

/// Where the realized `T`, `L` and `N_l` came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub plan: Plan,
    /// `T` before alignment to the level-0 grid.
    pub t_requested: f64,
    pub c_bias: f64,
    pub n_warm: u64,
    /// Sample counts requested by the allocation, before any cap.
    pub n_target: Vec<u64>,
    pub degenerate_variance: bool,
    pub max_paths: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlmcReport {
    pub kind: EstimatorKind,
    pub model: String,
    pub spring: String,
    pub spring_validity: SpringValidity,
    pub grid: Grid,
    pub seed: u64,
    pub estimate: f64,
    /// `sqrt(Σ V_l / N_l)`.
    pub statistical_error: f64,
    pub t_final: f64,
    pub max_level: usize,
    pub total_cost: u64,
    /// False when `max_paths` stopped the run short of the plan.
    pub complete: bool,
    pub levels: Vec<LevelStats>,
    pub provenance: Provenance,
}

impl MlmcReport {
    /// `Σ_l sum1_l / N_l` recomputed from the stored sums.
    pub fn telescoped(&self) -> f64 {
        self.levels.iter().map(LevelStats::mean).sum()
    }
}

/// Runs the estimator selected by `config.kind`.
pub fn estimate(config: &MlmcConfig) -> Result<MlmcReport> {
    match config.kind {
        EstimatorKind::Mc => mc_estimate(config),
        EstimatorKind::MlmcStandard | EstimatorKind::MlmcCom => mlmc_estimate(config),
    }
}

fn horizon_and_level(config: &MlmcConfig, eps: f64, lambda_star: f64, mu_star: f64) -> Result<(f64, f64, usize)> {
    let grid = config.scheme.grid;
    let t_req = choose_t(eps, lambda_star, mu_star, 2.0 * grid.base())?;
    let t = grid.align_horizon(t_req);
    let l = choose_l(eps, grid.base(), config.c_bias)?;
    Ok((t_req, t, l))
}

/// Telescoping multilevel estimator `Σ_l mean(P_l)`.
pub fn mlmc_estimate(config: &MlmcConfig) -> Result<MlmcReport> {
    config.validate()?;
    let scheme = config.effective_scheme();
    let validity = scheme.policy.validity(&scheme.model);
    if let SpringValidity::Violated { spring, lambda } = validity {
        if !scheme.policy.is_none() {
            warn!("spring {spring} does not exceed half the one-sided Lipschitz constant {lambda}");
        }
    }

    let (t_req, t_final, mut levels, n_target, degenerate, complete) = match &config.plan {
        Plan::Explicit { t_final, samples } => {
            let t = scheme.grid.align_horizon(*t_final);
            let (counts, complete) = cap_counts(samples, &vec![0; samples.len()], config.max_paths);
            let mut levels = Vec::with_capacity(samples.len());
            for (l, &n) in counts.iter().enumerate() {
                levels.push(scheme.run_level(l, t, 0..n)?);
            }
            (*t_final, t, levels, samples.clone(), false, complete)
        }
        Plan::Target { eps, lambda_star, mu_star } => {
            let (t_req, t, max_level) = horizon_and_level(config, *eps, *lambda_star, *mu_star)?;
            info!("{}: T = {t}, L = {max_level}", config.kind);
            let mut levels = Vec::with_capacity(max_level + 1);
            for l in 0..=max_level {
                levels.push(scheme.run_level(l, t, 0..config.n_warm)?);
            }
            let variances: Vec<f64> = levels.iter().map(LevelStats::variance).collect();
            let costs: Vec<f64> = levels.iter().map(|s| s.mean_cost().max(1.0)).collect();
            let alloc = allocate_samples(&variances, &costs, *eps)?;
            debug!("screening variances {variances:?}, allocation {:?}", alloc.samples);
            let wanted: Vec<u64> = alloc.samples.iter().map(|&n| n.max(config.n_warm)).collect();
            let done: Vec<u64> = levels.iter().map(|s| s.n).collect();
            let (counts, complete) = cap_counts(&wanted, &done, config.max_paths);
            for (stats, &n) in levels.iter_mut().zip(&counts) {
                let start = stats.n;
                if n > start {
                    scheme.extend_level(stats, t, start..n)?;
                }
            }
            (t_req, t, levels, alloc.samples, alloc.degenerate, complete)
        }
    };
    levels.shrink_to_fit();

    Ok(build_report(config, &scheme, validity, t_req, t_final, levels, n_target, degenerate, complete))
}

/// Plain Monte Carlo at the finest step `h_L`.
pub fn mc_estimate(config: &MlmcConfig) -> Result<MlmcReport> {
    config.validate()?;
    let scheme = config.effective_scheme();
    let (t_req, t_final, level, n_target, complete, stats) = match &config.plan {
        Plan::Explicit { t_final, samples } => {
            let level = samples.len() - 1;
            let t = scheme.grid.align_horizon(*t_final);
            let (counts, complete) = cap_counts(&samples[level..], &[0], config.max_paths);
            let mut stats = LevelStats::new(level, scheme.step(level));
            scheme.extend_single(&mut stats, t, 0..counts[0])?;
            (*t_final, t, level, vec![samples[level]], complete, stats)
        }
        Plan::Target { eps, lambda_star, mu_star } => {
            let (t_req, t, level) = horizon_and_level(config, *eps, *lambda_star, *mu_star)?;
            info!("mc: T = {t}, L = {level}");
            let mut stats = LevelStats::new(level, scheme.step(level));
            scheme.extend_single(&mut stats, t, 0..config.n_warm)?;
            let target = ((3.0 * stats.variance() / (eps * eps)).ceil() as u64).max(1);
            let (counts, complete) = cap_counts(&[target.max(config.n_warm)], &[stats.n], config.max_paths);
            let start = stats.n;
            if counts[0] > start {
                scheme.extend_single(&mut stats, t, start..counts[0])?;
            }
            (t_req, t, level, vec![target], complete, stats)
        }
    };
    let validity = scheme.policy.validity(&scheme.model);
    let mut report = build_report(config, &scheme, validity, t_req, t_final, vec![stats], n_target, false, complete);
    report.max_level = level;
    Ok(report)
}

/// Clips the requested counts so their total stays within `cap`, never
/// dropping samples already drawn.
fn cap_counts(wanted: &[u64], done: &[u64], cap: Option<u64>) -> (Vec<u64>, bool) {
    let total: u64 = wanted.iter().sum();
    let cap = match cap {
        Some(c) if total > c => c,
        _ => return (wanted.to_vec(), true),
    };
    let already: u64 = done.iter().sum();
    let room = cap.saturating_sub(already) as f64;
    let extra: u64 = wanted.iter().zip(done).map(|(w, d)| w.saturating_sub(*d)).sum();
    let scale = if extra == 0 { 0.0 } else { room / extra as f64 };
    let counts = wanted
        .iter()
        .zip(done)
        .map(|(&w, &d)| {
            let add = (w.saturating_sub(d) as f64 * scale).floor() as u64;
            (d + add).max(d.max(1)).min(w.max(d))
        })
        .collect();
    (counts, false)
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    config: &MlmcConfig,
    scheme: &Scheme,
    validity: SpringValidity,
    t_requested: f64,
    t_final: f64,
    levels: Vec<LevelStats>,
    n_target: Vec<u64>,
    degenerate: bool,
    complete: bool,
) -> MlmcReport {
    let estimate = levels.iter().map(LevelStats::mean).sum();
    let statistical_error = levels.iter().map(LevelStats::mean_variance).sum::<f64>().sqrt();
    let total_cost = levels.iter().map(|s| s.cost_total).sum();
    MlmcReport {
        kind: config.kind,
        model: scheme.model.name().to_string(),
        spring: scheme.policy.to_string(),
        spring_validity: validity,
        grid: scheme.grid,
        seed: scheme.seed,
        estimate,
        statistical_error,
        t_final,
        max_level: levels.len().saturating_sub(1),
        total_cost,
        complete,
        levels,
        provenance: Provenance {
            plan: config.plan.clone(),
            t_requested,
            c_bias: config.c_bias,
            n_warm: config.n_warm,
            n_target,
            degenerate_variance: degenerate,
            max_paths: config.max_paths,
        },
    }
}

impl Scheme {
    /// A copy whose level-0 step is `base`.
    pub fn with_base_step(&self, base: f64) -> Scheme {
        Scheme { grid: self.grid.with_base(base), ..self.clone() }
    }
}
