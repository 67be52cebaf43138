use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ergomlmc_cli::config::OUT_ENV;
use ergomlmc_cli::{execute, parse_config, write_artifacts, CliError, Command, Settings};

/// Multilevel Monte Carlo estimates and diagnostics for invariant measures of ergodic SDEs.
///
/// Settings come from a preset, then a TOML --config file, then flags; later
/// sources win. Outputs go to --out, else the config's `out`, else $ERGOMLMC_OUT,
/// else ./results.
#[derive(Debug, Parser)]
#[command(name = "ergomlmc", version)]
struct Cli {
    /// What to run. May also be given as `command` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,

    /// TOML settings file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Named experiment: fig-dw-levels, fig-lorenz-levels, fig-var-vs-T, fig-h0-vs-T, fit-lambda-star, ou, dw-cost.
    #[arg(long)]
    preset: Option<String>,

    /// Use the preset's full-size sample counts.
    #[arg(long)]
    paper_scale: bool,

    /// ou, double_well, truncated_lorenz, lorenz or constant_drift.
    #[arg(long)]
    model: Option<String>,

    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,

    /// mc, mlmc-standard or mlmc-com; comma separated for sweeps.
    #[arg(long, value_delimiter = ',')]
    estimator: Option<Vec<String>>,

    /// none, const:S or adaptive; comma separated to compare schemes.
    #[arg(long, value_delimiter = ',')]
    spring: Option<Vec<String>>,

    /// Uniform level-0 step.
    #[arg(long)]
    h0: Option<f64>,

    /// Adaptive level-0 accuracy parameter.
    #[arg(long)]
    delta0: Option<f64>,

    /// Fixed horizon. Excludes --eps.
    #[arg(long = "T", value_name = "T")]
    t_final: Option<f64>,

    /// Horizons for sweep-T and find-h0, comma separated.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,

    /// Root mean square error target. Excludes --T.
    #[arg(long)]
    eps: Option<f64>,

    /// Accuracies for sweep-eps, comma separated and decreasing.
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,

    #[arg(long)]
    lambda_star: Option<f64>,

    #[arg(long)]
    mu_star: Option<f64>,

    /// Finest level, or the level examined by sweep-T.
    #[arg(long)]
    levels: Option<usize>,

    /// Paths per level.
    #[arg(long)]
    paths: Option<u64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    c_bias: Option<f64>,

    #[arg(long)]
    n_warm: Option<u64>,

    #[arg(long)]
    max_paths: Option<u64>,

    /// Finest candidate 2^-j_max for find-h0.
    #[arg(long)]
    j_max: Option<u32>,

    /// Envelope window for fit-lambda.
    #[arg(long)]
    window: Option<f64>,

    /// Start of the fit-lambda regression.
    #[arg(long)]
    fit_start: Option<f64>,

    #[arg(long)]
    divergence_threshold: Option<f64>,

    /// Worker threads; 0 uses every core. Does not change any output.
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn into_parts(self) -> (Option<PathBuf>, Settings) {
        let flags = Settings {
            preset: self.preset,
            paper_scale: self.paper_scale.then_some(true),
            command: self.command,
            model: self.model,
            x0: self.x0,
            estimator: self.estimator,
            spring: self.spring,
            h0: self.h0,
            delta0: self.delta0,
            t_final: self.t_final,
            t_grid: self.t_grid,
            eps: self.eps,
            eps_grid: self.eps_grid,
            lambda_star: self.lambda_star,
            mu_star: self.mu_star,
            levels: self.levels,
            paths: self.paths,
            seed: self.seed,
            c_bias: self.c_bias,
            n_warm: self.n_warm,
            max_paths: self.max_paths,
            j_max: self.j_max,
            window: self.window,
            fit_start: self.fit_start,
            divergence_threshold: self.divergence_threshold,
            workers: self.workers,
            out: self.out,
        };
        (self.config, flags)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config_path, flags) = cli.into_parts();
    let text = config_path
        .map(|p| std::fs::read_to_string(&p).map_err(|source| CliError::Io { path: p, source }))
        .transpose()?;
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let cfg = parse_config(text.as_deref(), flags, env_out)?;
    log::info!("running {} on {} with seed {}", cfg.command.as_str(), cfg.model.name(), cfg.seed);
    let artifacts = execute(&cfg)?;
    for path in write_artifacts(&cfg.out, &artifacts)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ergomlmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
