use ergomlmc::diagnostics::{self, fit_rate, fit_through_origin, SeriesFit, Transform};
use ergomlmc::estimators::{self, MlmcConfig, Plan};
use ergomlmc::{EstimatorKind, LevelStats};
use serde::Serialize;

use crate::config::{Command, Horizon, RunConfig, SpringSpec};
use crate::error::{CliError, Result};
use crate::output::{float, json, Artifact, Csv};

pub const LEVEL_COLUMNS: [&str; 8] = ["level", "h", "N", "mean", "variance", "kurtosis", "mean_cost", "divergence_prob"];

/// Runs the configured command on a pool of `cfg.workers` threads (0 picks
/// rayon's default) and returns the output files.
pub fn execute(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| match cfg.command {
        Command::Estimate => estimate(cfg),
        Command::Levels => levels(cfg),
        Command::SweepT => sweep_t(cfg),
        Command::SweepEps => sweep_eps(cfg),
        Command::FitLambda => fit_lambda(cfg),
        Command::FindH0 => find_h0(cfg),
    })
}

fn level_fields(s: &LevelStats) -> Vec<String> {
    vec![
        s.level.to_string(),
        float(s.h),
        s.n.to_string(),
        float(s.mean()),
        float(s.variance()),
        float(s.kurtosis().unwrap_or(f64::NAN)),
        float(s.mean_cost()),
        float(s.divergence_prob()),
    ]
}

fn stem(cfg: &RunConfig) -> String {
    format!("{}_{}", cfg.command.as_str().replace('-', "_"), cfg.model.name())
}

fn fixed_t(cfg: &RunConfig) -> f64 {
    match cfg.horizon {
        Some(Horizon::Fixed(t)) => t,
        _ => unreachable!("resolve requires T for this command"),
    }
}

fn mlmc_config(cfg: &RunConfig, kind: EstimatorKind, spring: SpringSpec, plan: Plan) -> Result<MlmcConfig> {
    let mut m = MlmcConfig::new(cfg.scheme(spring)?, kind, plan);
    m.c_bias = cfg.c_bias;
    m.n_warm = cfg.n_warm;
    m.max_paths = cfg.max_paths;
    Ok(m)
}

fn estimate(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (kind, spring) = (cfg.estimators[0], cfg.springs[0]);
    let plan = match cfg.horizon.expect("resolve requires a horizon") {
        Horizon::Fixed(t_final) => {
            let levels = cfg.levels.expect("resolve requires levels");
            Plan::Explicit { t_final, samples: vec![cfg.paths.expect("resolve requires paths"); levels + 1] }
        }
        Horizon::Target { eps, lambda_star, mu_star } => Plan::Target { eps, lambda_star, mu_star },
    };
    let report = estimators::estimate(&mlmc_config(cfg, kind, spring, plan)?)?;
    Ok(vec![json(cfg, format!("{}_{kind}.json", stem(cfg)), &report)?])
}

fn levels(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let t = fixed_t(cfg);
    let (max_level, n) = (cfg.levels.unwrap(), cfg.paths.unwrap());
    let mut out = Vec::new();
    for &spring in &cfg.springs {
        let scheme = cfg.scheme(spring)?;
        let t = scheme.grid.align_horizon(t);
        let stats = diagnostics::level_sweep(&scheme, t, max_level, n)?;
        let mut csv = Csv::new(cfg, &LEVEL_COLUMNS)?;
        for s in &stats {
            csv.row(&level_fields(s));
        }
        out.push(csv.finish(format!("{}_{}.csv", stem(cfg), spring.slug())));
    }
    Ok(out)
}

#[derive(Serialize)]
struct HorizonSummary {
    spring: String,
    level: usize,
    t: Vec<f64>,
    variance: Vec<f64>,
    /// `log V` against `T`.
    log_variance_fit: Option<SeriesFit>,
    /// `V ≈ a T` through the origin: `(a, residual_norm)`.
    linear_fit: Option<(f64, f64)>,
    /// max over min of `V/T`.
    v_over_t_ratio: f64,
}

fn sweep_t(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (level, n) = (cfg.levels.unwrap(), cfg.paths.unwrap());
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for &spring in &cfg.springs {
        let scheme = cfg.scheme(spring)?;
        let t_grid: Vec<f64> = cfg.t_grid.iter().map(|&t| scheme.grid.align_horizon(t)).collect();
        let points = diagnostics::variance_vs_t(&scheme, level, &t_grid, n)?;
        let mut columns = vec!["T"];
        columns.extend(LEVEL_COLUMNS);
        let mut csv = Csv::new(cfg, &columns)?;
        for p in &points {
            let mut row = vec![float(p.t)];
            row.extend(level_fields(&p.stats));
            csv.row(&row);
        }
        out.push(csv.finish(format!("{}_{}.csv", stem(cfg), spring.slug())));

        let t: Vec<f64> = points.iter().map(|p| p.t).collect();
        let v: Vec<f64> = points.iter().map(|p| p.stats.variance()).collect();
        let ratios: Vec<f64> = t.iter().zip(&v).map(|(t, v)| v / t).collect();
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        summary.push(HorizonSummary {
            spring: spring.to_string(),
            level,
            log_variance_fit: fit_rate(&t, &v, Transform::LogY).ok(),
            linear_fit: fit_through_origin(&t, &v).ok(),
            v_over_t_ratio: max / min,
            t,
            variance: v,
        });
    }
    out.push(json(cfg, format!("{}.json", stem(cfg)), &summary)?);
    Ok(out)
}

#[derive(Serialize)]
struct CostSummary {
    estimator: EstimatorKind,
    spring: String,
    /// Exponent of total cost against `1/ε`.
    cost_fit: Option<SeriesFit>,
    points: Vec<diagnostics::CostPoint>,
}

fn sweep_eps(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (lambda_star, mu_star) = (cfg.effective.lambda_star.unwrap(), cfg.effective.mu_star.unwrap());
    let spring = cfg.springs[0];
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for &kind in &cfg.estimators {
        let plan = Plan::Target { eps: cfg.eps_grid[0], lambda_star, mu_star };
        let sweep = diagnostics::cost_vs_epsilon(&mlmc_config(cfg, kind, spring, plan)?, &cfg.eps_grid)?;
        let mut csv = Csv::new(cfg, &["eps", "total_cost", "estimate", "statistical_error", "max_level", "T"])?;
        for p in &sweep.points {
            csv.row(&[
                float(p.eps),
                p.total_cost.to_string(),
                float(p.estimate),
                float(p.statistical_error),
                p.max_level.to_string(),
                float(p.t_final),
            ]);
        }
        out.push(csv.finish(format!("{}_{kind}.csv", stem(cfg))));
        summary.push(CostSummary { estimator: kind, spring: spring.to_string(), cost_fit: sweep.fit, points: sweep.points });
    }
    out.push(json(cfg, format!("{}.json", stem(cfg)), &summary)?);
    Ok(out)
}

fn fit_lambda(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let scheme = cfg.scheme(SpringSpec::None)?;
    let fit = diagnostics::estimate_lambda_star(&scheme, fixed_t(cfg), cfg.paths.unwrap(), cfg.window, cfg.fit_start)?;
    let mut csv = Csv::new(cfg, &["t", "mean"])?;
    for (t, m) in fit.times.iter().zip(&fit.means) {
        csv.row(&[float(*t), float(*m)]);
    }
    Ok(vec![csv.finish(format!("{}.csv", stem(cfg))), json(cfg, format!("{}.json", stem(cfg)), &fit)?])
}

#[derive(Serialize)]
struct H0Summary {
    spring: String,
    t: Vec<f64>,
    h0: Vec<Option<f64>>,
    /// `log h0` against `log T`, when every horizon found a step.
    scaling_fit: Option<SeriesFit>,
    searches: Vec<diagnostics::H0Search>,
}

fn find_h0(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (j_max, n) = (cfg.j_max.unwrap(), cfg.paths.unwrap());
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for &spring in &cfg.springs {
        let scheme = cfg.scheme(spring)?;
        let mut csv = Csv::new(cfg, &["T", "j", "h0", "V0", "V1", "good"])?;
        let mut searches = Vec::new();
        for &t in &cfg.t_grid {
            let search = diagnostics::find_h0(&scheme, t, j_max, n)?;
            for r in &search.rows {
                csv.row(&[float(t), r.j.to_string(), float(r.h0), float(r.v0), float(r.v1), r.good.to_string()]);
            }
            searches.push(search);
        }
        out.push(csv.finish(format!("{}_{}.csv", stem(cfg), spring.slug())));
        let h0: Vec<Option<f64>> = searches.iter().map(|s| s.h0).collect();
        let scaling_fit = h0
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .and_then(|h| fit_rate(&cfg.t_grid, &h, Transform::LogLog).ok());
        summary.push(H0Summary { spring: spring.to_string(), t: cfg.t_grid.clone(), h0, scaling_fit, searches });
    }
    out.push(json(cfg, format!("{}.json", stem(cfg)), &summary)?);
    Ok(out)
}
