//! Uniform-step paths: the fine path steps `h`, the coarse path `2h`.

use super::{check_horizon, check_step, rn_log_factor, CoupledPathState, PathResult, SinglePath};
use crate::error::{check_dim, Error, Result};
use crate::models::{ModelSpec, SpringPolicy};
use crate::sampling::{IncrementSource, StreamKey};
use crate::vecops;

/// Number of `step`-sized steps covering `[0, t_final]`, rounding up.
pub fn step_count(t_final: f64, step: f64) -> u64 {
    ((t_final / step) * (1.0 - 1e-12)).ceil().max(1.0) as u64
}

/// Number of `2h` pair steps covering `[0, t_final]`, rounding up.
pub fn pair_count(t_final: f64, h: f64) -> u64 {
    step_count(t_final, 2.0 * h)
}

/// Scratch space for [`coupled_pair_step`], so the hot loop does not allocate.
#[derive(Debug, Clone)]
pub struct PairStepper {
    fx: Vec<f64>,
    spring_f: Vec<f64>,
    coarse_drift: Vec<f64>,
    spring_c: Vec<f64>,
    yc_mid: Vec<f64>,
    dw_coarse: Vec<f64>,
}

impl PairStepper {
    pub fn new(dim: usize) -> Self {
        Self {
            fx: vec![0.0; dim],
            spring_f: vec![0.0; dim],
            coarse_drift: vec![0.0; dim],
            spring_c: vec![0.0; dim],
            yc_mid: vec![0.0; dim],
            dw_coarse: vec![0.0; dim],
        }
    }

    /// Advances both paths from an even time `t_{2n}` to `t_{2n+2}`.
    ///
    /// Fine: two `h` steps with springs `S(Y^c_{2n} - Y^f_{2n})` and
    /// `S(Y^c_{2n+1} - Y^f_{2n+1})`, where `Y^c_{2n+1}` is the coarse path
    /// half-way through its step. Coarse: one `2h` step with drift and spring
    /// frozen at `t_{2n}`.
    pub fn step(
        &mut self,
        state: &mut CoupledPathState,
        h: f64,
        dw_even: &[f64],
        dw_odd: &[f64],
        model: &ModelSpec,
        policy: &SpringPolicy,
    ) -> Result<()> {
        let dim = state.yf.len();
        state.yc_anchor.copy_from_slice(&state.yc);

        // Odd time t_{2n+1}: both paths use states at t_{2n}.
        let s0 = policy.coefficient(&state.yf, &state.yc);
        model.drift_into(&state.yc, &mut self.coarse_drift);
        model.drift_into(&state.yf, &mut self.fx);
        if s0 != 0.0 {
            for i in 0..dim {
                self.spring_f[i] = s0 * (state.yc[i] - state.yf[i]);
                self.spring_c[i] = -self.spring_f[i];
                self.coarse_drift[i] += self.spring_c[i];
                self.fx[i] += self.spring_f[i];
            }
            state.log_rf += rn_log_factor(dw_even, &self.spring_f, h);
        }
        for i in 0..dim {
            state.yf[i] += self.fx[i] * h + dw_even[i];
            self.yc_mid[i] = state.yc_anchor[i] + (self.coarse_drift[i] * h + dw_even[i]);
        }

        // Even time t_{2n+2}: fine drift and spring refreshed at t_{2n+1}.
        let s1 = policy.coefficient(&state.yf, &self.yc_mid);
        model.drift_into(&state.yf, &mut self.fx);
        if s1 != 0.0 {
            for i in 0..dim {
                self.spring_f[i] = s1 * (self.yc_mid[i] - state.yf[i]);
                self.fx[i] += self.spring_f[i];
            }
            state.log_rf += rn_log_factor(dw_odd, &self.spring_f, h);
        }
        for i in 0..dim {
            state.yf[i] += self.fx[i] * h + dw_odd[i];
            self.dw_coarse[i] = dw_even[i] + dw_odd[i];
            state.yc[i] = state.yc_anchor[i] + (self.coarse_drift[i] * (2.0 * h) + self.dw_coarse[i]);
        }
        if s0 != 0.0 {
            state.log_rc += rn_log_factor(&self.dw_coarse, &self.spring_c, 2.0 * h);
        }

        state.step += 2;
        state.t += 2.0 * h;
        state.cost += 3;
        if !(vecops::all_finite(&state.yf) && vecops::all_finite(&state.yc))
            || !(state.log_rf.is_finite() && state.log_rc.is_finite())
        {
            return Err(Error::NumericOverflow { step: state.step, time: state.t });
        }
        Ok(())
    }
}

/// Single pair step with freshly allocated scratch space.
pub fn coupled_pair_step(
    state: &mut CoupledPathState,
    h: f64,
    dw_even: &[f64],
    dw_odd: &[f64],
    model: &ModelSpec,
    policy: &SpringPolicy,
) -> Result<()> {
    check_step(h)?;
    for len in [state.yf.len(), state.yc.len(), dw_even.len(), dw_odd.len()] {
        check_dim(model.dim(), len)?;
    }
    PairStepper::new(model.dim()).step(state, h, dw_even, dw_odd, model, policy)
}

fn finish(model: &ModelSpec, state: CoupledPathState, max_divergence: f64) -> PathResult {
    PathResult {
        phi_f: model.phi(&state.yf),
        phi_c: model.phi(&state.yc),
        rf: state.log_rf.exp(),
        rc: state.log_rc.exp(),
        log_rf: state.log_rf,
        log_rc: state.log_rc,
        max_divergence,
        terminal_divergence: vecops::dist(&state.yf, &state.yc),
        cost: state.cost,
        t_final: state.t,
        yf: state.yf,
        yc: state.yc,
    }
}

/// Coupled path on `[0, T]`, `T` rounded up to a multiple of `2h`, calling
/// `observer` after every pair step.
pub fn simulate_coupled_path_observed<S, F>(
    model: &ModelSpec,
    policy: &SpringPolicy,
    h: f64,
    t_final: f64,
    source: &mut S,
    mut observer: F,
) -> Result<PathResult>
where
    S: IncrementSource + ?Sized,
    F: FnMut(&CoupledPathState),
{
    check_step(h)?;
    check_horizon(t_final)?;
    let dim = model.dim();
    let pairs = pair_count(t_final, h);
    let mut stepper = PairStepper::new(dim);
    let mut state = CoupledPathState::new(model.x0());
    let mut dw_even = vec![0.0; dim];
    let mut dw_odd = vec![0.0; dim];
    let mut max_div: f64 = 0.0;
    for k in 0..pairs {
        source.fill_increment(h, &mut dw_even);
        source.fill_increment(h, &mut dw_odd);
        stepper.step(&mut state, h, &dw_even, &dw_odd, model, policy)?;
        state.t = (k + 1) as f64 * 2.0 * h;
        max_div = max_div.max(vecops::dist(&state.yf, &state.yc));
        observer(&state);
    }
    Ok(finish(model, state, max_div))
}

pub fn simulate_coupled_path_with<S: IncrementSource + ?Sized>(
    model: &ModelSpec,
    policy: &SpringPolicy,
    h: f64,
    t_final: f64,
    source: &mut S,
) -> Result<PathResult> {
    simulate_coupled_path_observed(model, policy, h, t_final, source, |_| {})
}

/// Change-of-measure coupled path driven by the stream `key`.
pub fn simulate_coupled_path(
    model: &ModelSpec,
    policy: &SpringPolicy,
    h: f64,
    t_final: f64,
    key: StreamKey,
) -> Result<PathResult> {
    simulate_coupled_path_with(model, policy, h, t_final, &mut key.stream())
}

/// Standard coupling: both paths share the Brownian path and carry no weight.
pub fn simulate_standard_coupled_path_with<S: IncrementSource + ?Sized>(
    model: &ModelSpec,
    h: f64,
    t_final: f64,
    source: &mut S,
) -> Result<PathResult> {
    simulate_coupled_path_with(model, &SpringPolicy::None, h, t_final, source)
}

pub fn simulate_standard_coupled_path(model: &ModelSpec, h: f64, t_final: f64, key: StreamKey) -> Result<PathResult> {
    simulate_standard_coupled_path_with(model, h, t_final, &mut key.stream())
}

/// Plain Euler–Maruyama path on `[0, T]`, `T` rounded up to a multiple of `h`.
pub fn simulate_single_path_with<S: IncrementSource + ?Sized>(
    model: &ModelSpec,
    h: f64,
    t_final: f64,
    source: &mut S,
) -> Result<SinglePath> {
    check_step(h)?;
    check_horizon(t_final)?;
    let dim = model.dim();
    let steps = step_count(t_final, h);
    let mut x = model.x0().to_vec();
    let mut fx = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    for n in 0..steps {
        source.fill_increment(h, &mut dw);
        model.drift_into(&x, &mut fx);
        for i in 0..dim {
            x[i] += fx[i] * h + dw[i];
        }
        if !vecops::all_finite(&x) {
            return Err(Error::NumericOverflow { step: n + 1, time: (n + 1) as f64 * h });
        }
    }
    Ok(SinglePath { phi: model.phi(&x), cost: steps, t_final: steps as f64 * h, state: x })
}

pub fn simulate_single_path(model: &ModelSpec, h: f64, t_final: f64, key: StreamKey) -> Result<SinglePath> {
    simulate_single_path_with(model, h, t_final, &mut key.stream())
}
