use ergomlmc::estimators::{estimate, MlmcConfig, Plan};
use ergomlmc::models::{self, SpringPolicy};
use ergomlmc::{EstimatorKind, Grid, Scheme};

fn main() -> ergomlmc::Result<()> {
    let scheme = Scheme::new(models::ou(), SpringPolicy::constant(1.0)?, Grid::Uniform { h0: 0.25 }, 42);
    let plan = Plan::Target { eps: 0.02, lambda_star: 1.0, mu_star: 1.0 };
    let report = estimate(&MlmcConfig::new(scheme, EstimatorKind::MlmcCom, plan))?;
    println!("E|X| ≈ {:.4} ± {:.4} (T = {}, L = {})", report.estimate, report.statistical_error, report.t_final, report.max_level);
    Ok(())
}
