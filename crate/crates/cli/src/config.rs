//! Run settings: layered preset, file and flag values, resolved into a
//! validated [`RunConfig`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ergomlmc::models::{ModelRegistry, SpringPolicy};
use ergomlmc::sampling::DEFAULT_SEED;
use ergomlmc::{EstimatorKind, Grid, ModelSpec, Scheme};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};
use crate::presets;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ERGOMLMC_OUT";
const DEFAULT_OUT: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Levels,
    #[serde(alias = "sweep-T")]
    #[value(alias = "sweep-T")]
    SweepT,
    SweepEps,
    FitLambda,
    FindH0,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Levels => "levels",
            Command::SweepT => "sweep-t",
            Command::SweepEps => "sweep-eps",
            Command::FitLambda => "fit-lambda",
            Command::FindH0 => "find-h0",
        }
    }
}

/// Spring setting as written in configs: `none`, `const:S` or `adaptive`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpringSpec {
    None,
    Const(f64),
    Adaptive,
}

impl SpringSpec {
    pub fn policy(&self, model: &ModelSpec) -> ergomlmc::Result<SpringPolicy> {
        match *self {
            SpringSpec::None => Ok(SpringPolicy::None),
            SpringSpec::Const(s) => SpringPolicy::constant(s),
            SpringSpec::Adaptive => SpringPolicy::adaptive_for(model),
        }
    }

    /// File-name friendly form, e.g. `const1` or `const0.5`.
    pub fn slug(&self) -> String {
        match self {
            SpringSpec::None => "none".into(),
            SpringSpec::Const(s) => format!("const{s}"),
            SpringSpec::Adaptive => "adaptive".into(),
        }
    }
}

impl fmt::Display for SpringSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpringSpec::None => f.write_str("none"),
            SpringSpec::Const(s) => write!(f, "const:{s}"),
            SpringSpec::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for SpringSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(SpringSpec::None),
            "adaptive" => Ok(SpringSpec::Adaptive),
            other => {
                let value = other
                    .strip_prefix("const:")
                    .ok_or_else(|| format!("expected none, const:S or adaptive, got '{other}'"))?;
                let s: f64 = value.parse().map_err(|_| format!("bad spring coefficient '{value}'"))?;
                if s >= 0.0 && s.is_finite() {
                    Ok(SpringSpec::Const(s))
                } else {
                    Err(format!("spring coefficient must be non-negative, got {s}"))
                }
            }
        }
    }
}

/// Accepts either `key = "a"` or `key = ["a", "b"]`.
fn one_or_many<'de, D>(d: D) -> Result<Option<Vec<String>>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(Option::<OneOrMany>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    }))
}

/// One layer of settings. Every key is optional here; [`RunConfig::resolve`]
/// decides which are required for the chosen command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_scale: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Vec<String>>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub spring: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_warm: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Settings {
    /// Parses a TOML document, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .and_then(|span| text.get(..span.start))
                .map(|head| format!("line {}", head.lines().count().max(1)))
                .unwrap_or_else(|| "<document>".into());
            CliError::Parse { path, message: e.message().to_string() }
        })
    }

    /// Rejects mutually exclusive keys set within this one layer.
    fn check_exclusive(&self, layer: &str) -> Result<()> {
        if self.t_final.is_some() && self.eps.is_some() {
            return Err(CliError::Conflict(format!("{layer} sets both T and eps; a run has a fixed horizon or an accuracy target, not both")));
        }
        if self.h0.is_some() && self.delta0.is_some() {
            return Err(CliError::Conflict(format!("{layer} sets both h0 and delta0")));
        }
        Ok(())
    }

    /// `top` wins key by key. Setting `T` in `top` clears `eps` below it and
    /// vice versa, and likewise for `h0` and `delta0`.
    pub fn overlay(mut self, top: Settings) -> Settings {
        if top.t_final.is_some() {
            self.eps = None;
        }
        if top.eps.is_some() {
            self.t_final = None;
        }
        if top.h0.is_some() {
            self.delta0 = None;
        }
        if top.delta0.is_some() {
            self.h0 = None;
        }
        Settings {
            preset: top.preset.or(self.preset),
            paper_scale: top.paper_scale.or(self.paper_scale),
            command: top.command.or(self.command),
            model: top.model.or(self.model),
            x0: top.x0.or(self.x0),
            estimator: top.estimator.or(self.estimator),
            spring: top.spring.or(self.spring),
            h0: top.h0.or(self.h0),
            delta0: top.delta0.or(self.delta0),
            t_final: top.t_final.or(self.t_final),
            t_grid: top.t_grid.or(self.t_grid),
            eps: top.eps.or(self.eps),
            eps_grid: top.eps_grid.or(self.eps_grid),
            lambda_star: top.lambda_star.or(self.lambda_star),
            mu_star: top.mu_star.or(self.mu_star),
            levels: top.levels.or(self.levels),
            paths: top.paths.or(self.paths),
            seed: top.seed.or(self.seed),
            c_bias: top.c_bias.or(self.c_bias),
            n_warm: top.n_warm.or(self.n_warm),
            max_paths: top.max_paths.or(self.max_paths),
            j_max: top.j_max.or(self.j_max),
            window: top.window.or(self.window),
            fit_start: top.fit_start.or(self.fit_start),
            divergence_threshold: top.divergence_threshold.or(self.divergence_threshold),
            workers: top.workers.or(self.workers),
            out: top.out.or(self.out),
        }
    }
}

/// Fixed horizon or accuracy target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed(f64),
    Target { eps: f64, lambda_star: f64, mu_star: f64 },
}

/// Validated settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSpec,
    pub estimators: Vec<EstimatorKind>,
    pub springs: Vec<SpringSpec>,
    pub grid: Grid,
    pub horizon: Option<Horizon>,
    pub t_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub levels: Option<usize>,
    pub paths: Option<u64>,
    pub seed: u64,
    pub c_bias: f64,
    pub n_warm: u64,
    pub max_paths: Option<u64>,
    pub j_max: Option<u32>,
    pub window: Option<f64>,
    pub fit_start: Option<f64>,
    pub divergence_threshold: Option<f64>,
    pub workers: usize,
    pub out: PathBuf,
    /// The merged settings with defaults filled in, minus `workers` and `out`.
    /// Embedded in every output file.
    pub effective: Settings,
}

/// Merges preset, file and flag layers (in rising precedence) and validates
/// the result. `env_out` is the value of [`OUT_ENV`], if set.
pub fn parse_config(file: Option<&str>, flags: Settings, env_out: Option<PathBuf>) -> Result<RunConfig> {
    flags.check_exclusive("the command line")?;
    let file = match file {
        Some(text) => Settings::from_toml(text)?,
        None => Settings::default(),
    };
    file.check_exclusive("the config file")?;
    let preset_name = flags.preset.clone().or_else(|| file.preset.clone());
    let paper_scale = flags.paper_scale.or(file.paper_scale).unwrap_or(false);
    let base = match &preset_name {
        Some(name) => presets::preset(name, paper_scale)?,
        None => Settings::default(),
    };
    let mut merged = base.overlay(file).overlay(flags);
    if merged.out.is_none() {
        merged.out = env_out;
    }
    RunConfig::resolve(merged)
}

fn missing(keys: &[&str]) -> CliError {
    CliError::Usage(format!(
        "missing required keys: {}. Pass them as flags, in a --config file, or pick a --preset",
        keys.join(", ")
    ))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Parse { path: name.into(), message: format!("must be positive, got {v}") })
    }
}

impl RunConfig {
    fn resolve(mut s: Settings) -> Result<RunConfig> {
        let (command, model_id) = match (s.command, s.model.clone()) {
            (Some(c), Some(m)) => (c, m),
            (c, m) => {
                let mut keys = Vec::new();
                if c.is_none() {
                    keys.push("command");
                }
                if m.is_none() {
                    keys.push("model");
                }
                if c.is_none() {
                    keys.push("and the command's own keys (see --help)");
                }
                return Err(missing(&keys));
            }
        };

        let mut model = ModelRegistry::builtin()
            .get(&model_id)
            .map_err(|e| CliError::Parse { path: "model".into(), message: e.to_string() })?;
        if let Some(x0) = &s.x0 {
            model = model.with_x0(x0.clone())?;
        }

        let estimators = s
            .estimator
            .get_or_insert_with(|| vec![EstimatorKind::MlmcCom.as_str().into()])
            .iter()
            .map(|e| e.parse::<EstimatorKind>())
            .collect::<ergomlmc::Result<Vec<_>>>()
            .map_err(|e| CliError::Parse { path: "estimator".into(), message: e.to_string() })?;
        let springs = s
            .spring
            .get_or_insert_with(|| vec!["none".into()])
            .iter()
            .map(|x| x.parse::<SpringSpec>())
            .collect::<Result<Vec<_>, String>>()
            .map_err(|message| CliError::Parse { path: "spring".into(), message })?;
        if estimators.is_empty() || springs.is_empty() {
            return Err(CliError::Parse { path: "estimator/spring".into(), message: "lists must not be empty".into() });
        }

        let mut required = Vec::new();
        let grid = match (s.h0, s.delta0) {
            (Some(h0), _) => Some(Grid::Uniform { h0: positive("h0", h0)? }),
            (None, Some(d)) => Some(Grid::Adaptive { delta0: positive("delta0", d)? }),
            (None, None) if command == Command::FindH0 => Some(Grid::Uniform { h0: 1.0 }),
            (None, None) => {
                required.push("h0 or delta0");
                None
            }
        };

        let horizon = match (s.t_final, s.eps) {
            (Some(t), _) => Some(Horizon::Fixed(positive("T", t)?)),
            (None, Some(eps)) => {
                let (l, m) = (s.lambda_star, s.mu_star);
                if l.is_none() {
                    required.push("lambda_star");
                }
                if m.is_none() {
                    required.push("mu_star");
                }
                match (l, m) {
                    (Some(l), Some(m)) => Some(Horizon::Target {
                        eps: positive("eps", eps)?,
                        lambda_star: positive("lambda_star", l)?,
                        mu_star: positive("mu_star", m)?,
                    }),
                    _ => None,
                }
            }
            (None, None) => None,
        };

        match command {
            Command::Estimate => match horizon {
                None if s.t_final.is_none() && s.eps.is_none() => required.push("T or eps"),
                Some(Horizon::Fixed(_)) => {
                    if s.levels.is_none() {
                        required.push("levels");
                    }
                    if s.paths.is_none() {
                        required.push("paths");
                    }
                }
                _ => {}
            },
            Command::Levels | Command::FitLambda => {
                if !matches!(horizon, Some(Horizon::Fixed(_))) {
                    required.push("T");
                }
                if command == Command::Levels && s.levels.is_none() {
                    required.push("levels");
                }
                if s.paths.is_none() {
                    required.push("paths");
                }
            }
            Command::SweepT | Command::FindH0 => {
                if s.t_grid.is_none() {
                    required.push("t_grid");
                }
                if command == Command::SweepT && s.levels.is_none() {
                    required.push("levels");
                }
                if command == Command::FindH0 && s.j_max.is_none() {
                    required.push("j_max");
                }
                if s.paths.is_none() {
                    required.push("paths");
                }
            }
            Command::SweepEps => {
                if s.eps_grid.is_none() {
                    required.push("eps_grid");
                }
                if s.lambda_star.is_none() {
                    required.push("lambda_star");
                }
                if s.mu_star.is_none() {
                    required.push("mu_star");
                }
            }
        }
        required.dedup();
        if !required.is_empty() {
            return Err(missing(&required));
        }
        let grid = grid.expect("grid checked above");

        if command == Command::Estimate && (estimators.len() != 1 || springs.len() != 1) {
            return Err(CliError::Usage("estimate takes exactly one estimator and one spring".into()));
        }
        for (name, grid_values) in [("t_grid", &s.t_grid), ("eps_grid", &s.eps_grid)] {
            if let Some(v) = grid_values {
                if v.is_empty() {
                    return Err(CliError::Parse { path: name.into(), message: "must not be empty".into() });
                }
                for &x in v {
                    positive(name, x)?;
                }
            }
        }
        if s.paths == Some(0) {
            return Err(CliError::Parse { path: "paths".into(), message: "must be at least 1".into() });
        }

        let seed = *s.seed.get_or_insert(DEFAULT_SEED);
        let c_bias = *s.c_bias.get_or_insert(1.0);
        let n_warm = *s.n_warm.get_or_insert(100);
        let workers = s.workers.take().unwrap_or(0);
        let out = s.out.take().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        if command == Command::SweepEps {
            s.eps = None;
            s.t_final = None;
        }
        Ok(RunConfig {
            command,
            model,
            estimators,
            springs,
            grid,
            horizon,
            t_grid: s.t_grid.clone().unwrap_or_default(),
            eps_grid: s.eps_grid.clone().unwrap_or_default(),
            levels: s.levels,
            paths: s.paths,
            seed,
            c_bias,
            n_warm,
            max_paths: s.max_paths,
            j_max: s.j_max,
            window: s.window,
            fit_start: s.fit_start,
            divergence_threshold: s.divergence_threshold,
            workers,
            out,
            effective: s,
        })
    }

    pub fn scheme(&self, spring: SpringSpec) -> Result<Scheme> {
        let policy = spring.policy(&self.model)?;
        let mut scheme = Scheme::new(self.model.clone(), policy, self.grid, self.seed);
        if let Some(t) = self.divergence_threshold {
            scheme = scheme.with_divergence_threshold(t);
        }
        Ok(scheme)
    }

    /// The effective settings as TOML.
    pub fn effective_toml(&self) -> Result<String> {
        toml::to_string(&self.effective).map_err(|e| CliError::Serialize(e.to_string()))
    }
}
