//! Sample allocation and the choice of horizon `T` and finest level `L`.
//!
//! The mean square error splits into variance, discretization bias and
//! truncation of the horizon; each part gets a budget of `ε²/3`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Allocation {
    pub samples: Vec<u64>,
    /// Every variance was zero; one sample per level was returned.
    pub degenerate: bool,
}

/// Optimal `N_l = ⌈3 ε⁻² √(V_l / C_l) Σ_k √(V_k C_k)⌉`, at least 1 each,
/// which meets `Σ V_l / N_l ≤ ε²/3` at minimal `Σ N_l C_l`.
pub fn allocate_samples(variances: &[f64], costs: &[f64], eps: f64) -> Result<Allocation> {
    if variances.len() != costs.len() || variances.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need one variance per cost, got {} and {}",
            variances.len(),
            costs.len()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("variances must be finite and nonnegative".into()));
    }
    if costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument("costs must be finite and positive".into()));
    }
    if variances.iter().all(|&v| v == 0.0) {
        return Ok(Allocation { samples: vec![1; variances.len()], degenerate: true });
    }
    let total: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    let scale = 3.0 / (eps * eps) * total;
    let samples = variances
        .iter()
        .zip(costs)
        .map(|(v, c)| ((scale * (v / c).sqrt()).ceil() as u64).max(1))
        .collect();
    Ok(Allocation { samples, degenerate: false })
}

/// Horizon `T = (ln(1/ε) + ln(√6 μ*)) / λ*`, at least `min_t`.
pub fn choose_t(eps: f64, lambda_star: f64, mu_star: f64, min_t: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda* must be positive, got {lambda_star}")));
    }
    if !(mu_star > 0.0 && mu_star.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu* must be positive, got {mu_star}")));
    }
    let t = ((1.0 / eps).ln() + (6f64.sqrt() * mu_star).ln()) / lambda_star;
    Ok(t.max(min_t))
}

/// Smallest `L ≥ 0` with `2^-L h0 ≤ c_bias ε`.
pub fn choose_l(eps: f64, h0: f64, c_bias: f64) -> Result<usize> {
    if !(eps > 0.0 && h0 > 0.0 && c_bias > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps, h0 and c_bias must be positive, got {eps}, {h0}, {c_bias}"
        )));
    }
    let target = c_bias * eps;
    let mut level = 0;
    let mut h = h0;
    while h > target {
        h *= 0.5;
        level += 1;
        if level > 60 {
            return Err(Error::InvalidArgument(format!("no level reaches step {target:e} from h0 = {h0}")));
        }
    }
    Ok(level)
}
