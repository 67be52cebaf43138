use crate::config::{Command, Settings};
use crate::error::{CliError, Result};

pub const NAMES: [&str; 7] =
    ["fig-dw-levels", "fig-lorenz-levels", "fig-var-vs-T", "fig-h0-vs-T", "fit-lambda-star", "ou", "dw-cost"];

/// Sample count used by every preset under `--paper-scale`.
pub const PAPER_PATHS: u64 = 10_000;

fn springs(list: &[&str]) -> Option<Vec<String>> {
    Some(list.iter().map(|s| s.to_string()).collect())
}

/// Settings pinned by a named experiment.
pub fn preset(name: &str, paper_scale: bool) -> Result<Settings> {
    let lorenz_h0 = Some(2f64.powi(-9));
    let mut s = match name {
        "fig-dw-levels" => Settings {
            command: Some(Command::Levels),
            model: Some("double_well".into()),
            spring: springs(&["none", "const:1", "adaptive"]),
            delta0: Some(1.0),
            t_final: Some(5.0),
            levels: Some(6),
            paths: Some(2000),
            ..Settings::default()
        },
        "fig-lorenz-levels" => Settings {
            command: Some(Command::Levels),
            model: Some("truncated_lorenz".into()),
            spring: springs(&["none", "const:10"]),
            h0: lorenz_h0,
            t_final: Some(5.0),
            levels: Some(6),
            paths: Some(2000),
            ..Settings::default()
        },
        "fig-var-vs-T" => Settings {
            command: Some(Command::SweepT),
            model: Some("truncated_lorenz".into()),
            spring: springs(&["none", "const:10"]),
            h0: lorenz_h0,
            t_grid: Some(vec![2.0, 4.0, 6.0, 8.0]),
            levels: Some(4),
            paths: Some(2000),
            ..Settings::default()
        },
        "fig-h0-vs-T" => Settings {
            command: Some(Command::FindH0),
            model: Some("truncated_lorenz".into()),
            spring: springs(&["const:10"]),
            t_grid: Some(vec![4.0, 8.0, 16.0]),
            j_max: Some(14),
            paths: Some(500),
            ..Settings::default()
        },
        "fit-lambda-star" => Settings {
            command: Some(Command::FitLambda),
            model: Some("truncated_lorenz".into()),
            h0: lorenz_h0,
            t_final: Some(20.0),
            paths: Some(2000),
            ..Settings::default()
        },
        "ou" => Settings {
            command: Some(Command::Estimate),
            model: Some("ou".into()),
            estimator: Some(vec!["mlmc_com".into()]),
            spring: springs(&["const:1"]),
            h0: Some(0.25),
            eps: Some(0.02),
            lambda_star: Some(1.0),
            mu_star: Some(1.0),
            ..Settings::default()
        },
        "dw-cost" => Settings {
            command: Some(Command::SweepEps),
            model: Some("double_well".into()),
            estimator: Some(vec!["mc".into(), "mlmc_com".into()]),
            spring: springs(&["const:1"]),
            delta0: Some(1.0),
            eps_grid: Some(vec![0.1, 0.05, 0.025]),
            lambda_star: Some(1.0),
            mu_star: Some(1.0),
            ..Settings::default()
        },
        other => {
            return Err(CliError::Parse {
                path: "preset".into(),
                message: format!("unknown preset '{other}', expected one of {}", NAMES.join(", ")),
            })
        }
    };
    if paper_scale && s.paths.is_some() {
        s.paths = Some(PAPER_PATHS);
    }
    s.preset = Some(name.into());
    s.paper_scale = Some(paper_scale);
    Ok(s)
}
