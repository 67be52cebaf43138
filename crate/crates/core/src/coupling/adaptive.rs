//! Adaptive-step paths.
//!
//! The fine path steps `h^δ(Y^f)` and the coarse path `h^{2δ}(Y^c)`. Both
//! advance on the union of their step times: a Brownian increment is drawn
//! once per union interval and added to whichever step each path currently
//! has open. A path's drift and spring are frozen when its step opens; the
//! spring looks at the partner's continuous interpolant at that instant.
//! Under constant step rules `h` and `2h` this is exactly the uniform scheme.

use super::{check_horizon, rn_log_factor, PathResult, SinglePath};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, SpringPolicy, StepRuleFn};
use crate::sampling::{IncrementSource, StreamKey};
use crate::vecops;

/// Steps below this fraction of `δ` are treated as a failure of the step rule.
const MIN_STEP_FRACTION: f64 = 1e-12;

fn rule_of(model: &ModelSpec) -> Result<&StepRuleFn> {
    model
        .step_rule()
        .ok_or_else(|| Error::Unsupported(format!("model '{}' has no adaptive timestep rule", model.name())))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must be positive and finite, got {delta}")))
    }
}

fn next_step(rule: &StepRuleFn, x: &[f64], fx: &[f64], delta: f64, t: f64, t_final: f64) -> Result<f64> {
    let h = rule(x, fx, delta);
    if !(h.is_finite() && h >= MIN_STEP_FRACTION * delta) {
        return Err(Error::AdaptivityFailure { time: t, h });
    }
    Ok(if t + h >= t_final { t_final } else { t + h })
}

/// One open step of one path of the pair.
struct Leg {
    y: Vec<f64>,
    t_start: f64,
    t_end: f64,
    /// `f(y) + spring`, frozen for the open step.
    drift: Vec<f64>,
    spring: Vec<f64>,
    has_spring: bool,
    dw: Vec<f64>,
    log_r: f64,
    delta: f64,
}

impl Leg {
    fn new(x0: &[f64], delta: f64) -> Self {
        let dim = x0.len();
        Self {
            y: x0.to_vec(),
            t_start: 0.0,
            t_end: 0.0,
            drift: vec![0.0; dim],
            spring: vec![0.0; dim],
            has_spring: false,
            dw: vec![0.0; dim],
            log_r: 0.0,
            delta,
        }
    }

    /// Continuous interpolant at time `t` inside the open step.
    fn interpolate(&self, t: f64, out: &mut [f64]) {
        let dt = t - self.t_start;
        for i in 0..out.len() {
            out[i] = self.y[i] + (self.drift[i] * dt + self.dw[i]);
        }
    }

    fn open(
        &mut self,
        t: f64,
        t_final: f64,
        partner: &[f64],
        model: &ModelSpec,
        rule: &StepRuleFn,
        policy: &SpringPolicy,
    ) -> Result<()> {
        model.drift_into(&self.y, &mut self.drift);
        self.t_start = t;
        self.t_end = next_step(rule, &self.y, &self.drift, self.delta, t, t_final)?;
        let s = policy.coefficient(&self.y, partner);
        self.has_spring = s != 0.0;
        if self.has_spring {
            for i in 0..self.y.len() {
                self.spring[i] = s * (partner[i] - self.y[i]);
                self.drift[i] += self.spring[i];
            }
        }
        self.dw.fill(0.0);
        Ok(())
    }

    fn close(&mut self) {
        let h = self.t_end - self.t_start;
        for i in 0..self.y.len() {
            self.y[i] += self.drift[i] * h + self.dw[i];
        }
        if self.has_spring {
            self.log_r += rn_log_factor(&self.dw, &self.spring, h);
        }
        self.t_start = self.t_end;
        self.dw.fill(0.0);
    }
}

/// Adaptive coupled path on `[0, T]`; the fine path uses `δ`, the coarse `2δ`.
pub fn simulate_adaptive_coupled_path_with<S: IncrementSource + ?Sized>(
    model: &ModelSpec,
    policy: &SpringPolicy,
    delta: f64,
    t_final: f64,
    source: &mut S,
) -> Result<PathResult> {
    check_delta(delta)?;
    check_horizon(t_final)?;
    let rule = rule_of(model)?;
    let dim = model.dim();
    let mut fine = Leg::new(model.x0(), delta);
    let mut coarse = Leg::new(model.x0(), 2.0 * delta);
    let mut partner = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    let mut cost: u64 = 2;
    let mut steps: u64 = 0;
    let mut max_div: f64 = 0.0;

    let x0 = model.x0();
    fine.open(0.0, t_final, x0, model, rule, policy)?;
    coarse.open(0.0, t_final, x0, model, rule, policy)?;

    let mut t = 0.0;
    while t < t_final {
        let t_next = fine.t_end.min(coarse.t_end);
        source.fill_increment(t_next - t, &mut dw);
        for i in 0..dim {
            fine.dw[i] += dw[i];
            coarse.dw[i] += dw[i];
        }
        t = t_next;
        steps += 1;
        let fine_done = fine.t_end == t;
        let coarse_done = coarse.t_end == t;
        if fine_done {
            fine.close();
        }
        if coarse_done {
            coarse.close();
        }
        if !(vecops::all_finite(&fine.y) && vecops::all_finite(&coarse.y) && fine.log_r.is_finite() && coarse.log_r.is_finite()) {
            return Err(Error::NumericOverflow { step: steps, time: t });
        }
        if coarse_done {
            fine.interpolate(t, &mut partner);
            max_div = max_div.max(vecops::dist(&partner, &coarse.y));
        }
        if t >= t_final {
            break;
        }
        if fine_done {
            coarse.interpolate(t, &mut partner);
            fine.open(t, t_final, &partner, model, rule, policy)?;
            cost += 1;
        }
        if coarse_done {
            fine.interpolate(t, &mut partner);
            coarse.open(t, t_final, &partner, model, rule, policy)?;
            cost += 1;
        }
    }

    Ok(PathResult {
        phi_f: model.phi(&fine.y),
        phi_c: model.phi(&coarse.y),
        rf: fine.log_r.exp(),
        rc: coarse.log_r.exp(),
        log_rf: fine.log_r,
        log_rc: coarse.log_r,
        max_divergence: max_div,
        terminal_divergence: vecops::dist(&fine.y, &coarse.y),
        cost,
        t_final,
        yf: fine.y,
        yc: coarse.y,
    })
}

pub fn simulate_adaptive_coupled_path(
    model: &ModelSpec,
    policy: &SpringPolicy,
    delta: f64,
    t_final: f64,
    key: StreamKey,
) -> Result<PathResult> {
    simulate_adaptive_coupled_path_with(model, policy, delta, t_final, &mut key.stream())
}

/// Plain adaptive Euler–Maruyama path with step rule `h^δ`.
pub fn simulate_adaptive_single_path_with<S: IncrementSource + ?Sized>(
    model: &ModelSpec,
    delta: f64,
    t_final: f64,
    source: &mut S,
) -> Result<SinglePath> {
    check_delta(delta)?;
    check_horizon(t_final)?;
    let rule = rule_of(model)?;
    let dim = model.dim();
    let mut x = model.x0().to_vec();
    let mut fx = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    let mut t = 0.0;
    let mut steps: u64 = 0;
    while t < t_final {
        model.drift_into(&x, &mut fx);
        let t_next = next_step(rule, &x, &fx, delta, t, t_final)?;
        let h = t_next - t;
        source.fill_increment(h, &mut dw);
        for i in 0..dim {
            x[i] += fx[i] * h + dw[i];
        }
        t = t_next;
        steps += 1;
        if !vecops::all_finite(&x) {
            return Err(Error::NumericOverflow { step: steps, time: t });
        }
    }
    Ok(SinglePath { phi: model.phi(&x), cost: steps, t_final, state: x })
}

pub fn simulate_adaptive_single_path(model: &ModelSpec, delta: f64, t_final: f64, key: StreamKey) -> Result<SinglePath> {
    simulate_adaptive_single_path_with(model, delta, t_final, &mut key.stream())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::simulate_coupled_path_with;
    use crate::models;
    use crate::sampling::GaussianStream;

    /// Records every draw so tests can rebuild the Brownian path.
    struct Recording {
        inner: GaussianStream,
        draws: Vec<(f64, Vec<f64>)>,
    }

    impl IncrementSource for Recording {
        fn fill_increment(&mut self, h: f64, out: &mut [f64]) {
            self.inner.fill_increment(h, out);
            self.draws.push((h, out.to_vec()));
        }
    }

    /// Replays draws of a uniform path pairwise onto a scripted uniform run.
    struct Replay(std::vec::IntoIter<Vec<f64>>);

    impl IncrementSource for Replay {
        fn fill_increment(&mut self, _h: f64, out: &mut [f64]) {
            out.copy_from_slice(&self.0.next().unwrap());
        }
    }

    #[test]
    fn constant_drift_integrates_exactly() {
        let m = models::constant_drift();
        let mut src = Recording { inner: StreamKey::new(3, 2, 5, 0).stream(), draws: vec![] };
        let r = simulate_adaptive_coupled_path_with(&m, &SpringPolicy::None, 0.25, 2.0, &mut src).unwrap();
        let w: f64 = src.draws.iter().map(|(_, d)| d[0]).sum();
        let total_time: f64 = src.draws.iter().map(|(h, _)| h).sum();
        assert!((total_time - 2.0).abs() < 1e-12);
        assert!((r.yf[0] - (2.0 + w)).abs() < 1e-12);
        assert!((r.yc[0] - (2.0 + w)).abs() < 1e-12);
        assert_eq!((r.rf, r.rc), (1.0, 1.0));
    }

    #[test]
    fn constant_rule_reduces_to_uniform_scheme() {
        // Step rule h^δ = δ: fine h = δ, coarse 2δ.
        let m = models::double_well().with_adaptive_rule(|_, _, d| d);
        let policy = SpringPolicy::Constant(1.3);
        let h = 2f64.powi(-5);
        let mut src = Recording { inner: StreamKey::new(9, 5, 1, 0).stream(), draws: vec![] };
        let a = simulate_adaptive_coupled_path_with(&m, &policy, h, 2.0, &mut src).unwrap();
        let draws: Vec<Vec<f64>> = src.draws.into_iter().map(|(_, d)| d).collect();
        let b = simulate_coupled_path_with(&m, &policy, h, 2.0, &mut Replay(draws.into_iter())).unwrap();
        assert!((a.yf[0] - b.yf[0]).abs() < 1e-12, "{} {}", a.yf[0], b.yf[0]);
        assert!((a.yc[0] - b.yc[0]).abs() < 1e-12);
        assert!((a.log_rf - b.log_rf).abs() < 1e-12);
        assert!((a.log_rc - b.log_rc).abs() < 1e-12);
        assert_eq!(a.cost, b.cost);
    }

    #[test]
    fn adaptive_spring_zero_matches_standard() {
        let m = models::double_well();
        for i in 0..20 {
            let key = StreamKey::new(1, 4, i, 0);
            let a = simulate_adaptive_coupled_path(&m, &SpringPolicy::None, 2f64.powi(-4), 5.0, key).unwrap();
            assert_eq!((a.rf, a.rc), (1.0, 1.0));
            assert!(a.cost > 0);
        }
    }

    #[test]
    fn single_path_cost_matches_rule() {
        let m = models::constant_drift();
        let r = simulate_adaptive_single_path(&m, 0.8, 1.0, StreamKey::new(0, 0, 0, 0)).unwrap();
        // h = δ/8 = 0.1 exactly covers [0, 1] in 10 steps (last one possibly clamped).
        assert!(r.cost == 10 || r.cost == 11);
        assert_eq!(r.t_final, 1.0);
    }

    #[test]
    fn missing_rule_is_unsupported() {
        let err = simulate_adaptive_single_path(&models::ou(), 0.1, 1.0, StreamKey::new(0, 0, 0, 0)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let err = simulate_adaptive_coupled_path(&models::truncated_lorenz(), &SpringPolicy::None, 0.1, 1.0, StreamKey::new(0, 0, 0, 0))
            .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn step_underflow_is_reported() {
        let m = models::double_well().with_adaptive_rule(|_, _, d| d * 1e-14);
        let err = simulate_adaptive_single_path(&m, 0.1, 1.0, StreamKey::new(0, 0, 0, 0)).unwrap_err();
        assert!(matches!(err, Error::AdaptivityFailure { .. }));
    }

    #[test]
    fn full_lorenz_runs_with_adaptive_steps() {
        let m = models::lorenz();
        let r = simulate_adaptive_coupled_path(&m, &SpringPolicy::Constant(10.0), 2f64.powi(-2), 2.0, StreamKey::new(5, 2, 0, 0))
            .unwrap();
        assert!(r.rf.is_finite() && r.rc.is_finite());
        assert!(r.phi_f > 0.0);
    }
}
