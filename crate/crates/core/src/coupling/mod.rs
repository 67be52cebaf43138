//! Euler–Maruyama paths and fine/coarse couplings.
//!
//! The change-of-measure coupling adds a spring `S (Y^c - Y^f)` to the fine
//! drift and `S (Y^f - Y^c)` to the coarse drift, and accumulates for each
//! path the exact Gaussian density ratio that maps the spring-driven path
//! back to the law of the plain Euler–Maruyama scheme. Ratios are kept in
//! log space.
//!
//! With [`SpringPolicy::None`] the coupling is the standard one: both paths
//! share the Brownian path and both weights stay at exactly 1.

mod adaptive;
mod uniform;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::models::ModelSpec;
use crate::vecops;

pub use adaptive::{
    simulate_adaptive_coupled_path, simulate_adaptive_coupled_path_with, simulate_adaptive_single_path,
    simulate_adaptive_single_path_with,
};
pub use uniform::{
    coupled_pair_step, pair_count, simulate_coupled_path, simulate_coupled_path_observed, simulate_coupled_path_with,
    simulate_single_path, simulate_single_path_with, simulate_standard_coupled_path,
    simulate_standard_coupled_path_with, step_count, PairStepper,
};

/// Fine and coarse states of one coupled path at an even grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPathState {
    pub t: f64,
    /// Fine-grid steps taken so far.
    pub step: u64,
    pub yf: Vec<f64>,
    pub yc: Vec<f64>,
    pub log_rf: f64,
    pub log_rc: f64,
    /// Coarse state at the last even time; its drift and spring are frozen
    /// across both halves of a coarse step.
    pub yc_anchor: Vec<f64>,
    /// Drift evaluations on both paths.
    pub cost: u64,
}

impl CoupledPathState {
    pub fn new(x0: &[f64]) -> Self {
        Self {
            t: 0.0,
            step: 0,
            yf: x0.to_vec(),
            yc: x0.to_vec(),
            log_rf: 0.0,
            log_rc: 0.0,
            yc_anchor: x0.to_vec(),
            cost: 0,
        }
    }
}

/// Terminal values of one coupled path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub phi_f: f64,
    pub phi_c: f64,
    pub rf: f64,
    pub rc: f64,
    pub log_rf: f64,
    pub log_rc: f64,
    /// Largest `|Y^f - Y^c|` seen on the coarse grid.
    pub max_divergence: f64,
    pub terminal_divergence: f64,
    pub cost: u64,
    pub t_final: f64,
    pub yf: Vec<f64>,
    pub yc: Vec<f64>,
}

impl PathResult {
    /// `φ(Y^f_T) R^f_T - φ(Y^c_T) R^c_T`.
    pub fn correction(&self) -> f64 {
        self.phi_f * self.rf - self.phi_c * self.rc
    }
}

/// Terminal values of one plain Euler–Maruyama path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinglePath {
    pub phi: f64,
    pub cost: u64,
    pub t_final: f64,
    pub state: Vec<f64>,
}

/// One Euler–Maruyama step `x + f(x) h + dW`.
pub fn em_step(x: &[f64], h: f64, dw: &[f64], model: &ModelSpec) -> Result<Vec<f64>> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.dim(), dw.len())?;
    check_step(h)?;
    let mut out = vec![0.0; x.len()];
    model.drift_into(x, &mut out);
    for i in 0..x.len() {
        out[i] = x[i] + out[i] * h + dw[i];
    }
    if !vecops::all_finite(&out) {
        return Err(Error::NumericOverflow { step: 1, time: h });
    }
    Ok(out)
}

/// Log of one step's density ratio, `-<dW, Ŝ> - |Ŝ|² h / 2`, where `Ŝ` is
/// the full spring vector added to the drift on that step.
#[inline]
pub fn rn_log_factor(dw: &[f64], s_term: &[f64], h: f64) -> f64 {
    -vecops::dot(dw, s_term) - 0.5 * vecops::norm_sq(s_term) * h
}

pub(crate) fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive and finite, got {h}")))
    }
}

pub(crate) fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time horizon must be positive and finite, got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn log_gauss_density(y: &[f64], mu: &[f64], h: f64) -> f64 {
        let m = y.len() as f64;
        let q: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * m * (2.0 * std::f64::consts::PI * h).ln() - q / (2.0 * h)
    }

    #[test]
    fn em_step_examples() {
        assert_eq!(em_step(&[1.0], 0.5, &[0.0], &models::ou()).unwrap(), vec![0.5]);
        assert_eq!(em_step(&[2.0], 0.3, &[0.0], &models::double_well()).unwrap(), vec![2.0]);
        let y = em_step(&[1.0], 0.1, &[0.2], &models::double_well()).unwrap();
        assert!((y[0] - 1.35).abs() < 1e-15);
    }

    #[test]
    fn em_step_errors() {
        assert!(em_step(&[1.0], 0.0, &[0.0], &models::ou()).is_err());
        assert!(em_step(&[1.0, 2.0], 0.1, &[0.0], &models::ou()).is_err());
        let err = em_step(&[1e200], 1.0, &[0.0], &models::double_well()).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { .. }));
    }

    #[test]
    fn rn_log_factor_examples() {
        assert_eq!(rn_log_factor(&[0.4, -1.0], &[0.0, 0.0], 0.3), 0.0);
        // Direct density ratio ρ(y|μ,h)/ρ(y|μ+Ŝh,h) at y = μ + Ŝh + dW.
        let (dw, s, h, mu) = (0.3, 2.0, 0.25, 0.7);
        let y = mu + s * h + dw;
        let oracle = log_gauss_density(&[y], &[mu], h) - log_gauss_density(&[y], &[mu + s * h], h);
        assert!((oracle - (-1.1)).abs() < 1e-12);
        assert!((rn_log_factor(&[dw], &[s], h) - (-1.1)).abs() < 1e-15);
        assert!(rn_log_factor(&[0.1, -0.2], &[1.0, 1.0], 0.1).abs() < 1e-15);
    }

    #[test]
    fn rn_factor_matches_density_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let m = rng.random_range(1..4usize);
            let h: f64 = rng.random_range(1e-4..1.0);
            let dw: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0) * h.sqrt() * 3.0).collect();
            let s: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mu: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
            let shifted: Vec<f64> = mu.iter().zip(&s).map(|(a, b)| a + b * h).collect();
            let y: Vec<f64> = shifted.iter().zip(&dw).map(|(a, b)| a + b).collect();
            let ratio = (log_gauss_density(&y, &mu, h) - log_gauss_density(&y, &shifted, h)).exp();
            let ours = rn_log_factor(&dw, &s, h).exp();
            assert!(ours > 0.0 && ours.is_finite());
            assert!(((ours - ratio) / ratio).abs() < 1e-9, "{ours} vs {ratio}");
        }
    }
}
