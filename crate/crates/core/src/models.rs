//! SDE models with additive identity noise, `dX = f(X) dt + dW`.
//!
//! A [`ModelSpec`] bundles the drift, the observable, the initial state and
//! the structural constants the drift is known to satisfy. Built-in models are
//! looked up by string key through [`ModelRegistry`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::vecops;

/// Drift `f`, written into the output slice.
pub type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
/// Observable `φ`.
pub type ObservableFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
/// Adaptive step rule `(x, f(x), δ) -> h`. The drift value is passed in so the
/// integrator does not evaluate `f` twice per step.
pub type StepRuleFn = dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync;
/// State-dependent spring coefficient `x -> S(x) ≥ 0`.
pub type SpringRuleFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Constants of the structural conditions on the drift. `None` means unknown.
///
/// These are metadata: only validation and warnings consult them.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct Conditions {
    /// λ in `<x-y, f(x)-f(y)> ≤ λ|x-y|²`.
    pub one_sided_lipschitz: Option<f64>,
    /// (α̃, β̃) in `<x, f(x)> ≤ -α̃|x|² + β̃`.
    pub dissipativity: Option<(f64, f64)>,
    /// K in `|f(x)-f(y)| ≤ K|x-y|`.
    pub lipschitz: Option<f64>,
}

#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    drift: Arc<DriftFn>,
    observable: Arc<ObservableFn>,
    x0: Vec<f64>,
    conditions: Conditions,
    adaptive_rule: Option<Arc<StepRuleFn>>,
    spring_rule: Option<Arc<SpringRuleFn>>,
    divergence_threshold: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("x0", &self.x0)
            .field("conditions", &self.conditions)
            .field("adaptive_rule", &self.adaptive_rule.is_some())
            .field("spring_rule", &self.spring_rule.is_some())
            .finish()
    }
}

impl ModelSpec {
    pub fn new<D, O>(name: impl Into<String>, x0: Vec<f64>, drift: D, observable: O) -> Result<Self>
    where
        D: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        O: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let dim = x0.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("model dimension must be at least 1".into()));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            drift: Arc::new(drift),
            observable: Arc::new(observable),
            x0,
            conditions: Conditions::default(),
            adaptive_rule: None,
            spring_rule: None,
            divergence_threshold: 1.0,
        })
    }

    pub fn with_conditions(mut self, conditions: Conditions) -> Self {
        self.conditions = conditions;
        self
    }

    pub fn with_observable<O>(mut self, observable: O) -> Self
    where
        O: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.observable = Arc::new(observable);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, x0.len())?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_adaptive_rule<R>(mut self, rule: R) -> Self
    where
        R: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        self.adaptive_rule = Some(Arc::new(rule));
        self
    }

    pub fn with_spring_rule<R>(mut self, rule: R) -> Self
    where
        R: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.spring_rule = Some(Arc::new(rule));
        self
    }

    /// Terminal `|Y^f_T - Y^c_T|` above which a coupled sample counts as divergent.
    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = threshold;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn conditions(&self) -> &Conditions {
        &self.conditions
    }

    pub fn divergence_threshold(&self) -> f64 {
        self.divergence_threshold
    }

    pub fn has_adaptive_rule(&self) -> bool {
        self.adaptive_rule.is_some()
    }

    /// The model's state-dependent spring rule, if it registers one.
    pub fn spring_rule(&self) -> Option<&Arc<SpringRuleFn>> {
        self.spring_rule.as_ref()
    }

    /// `f(x)`, dimension-checked.
    pub fn drift_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        Ok(out)
    }

    /// `φ(x)`, dimension-checked.
    pub fn observable_eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok((self.observable)(x))
    }

    /// `h^δ(x)` from the model's adaptive rule.
    pub fn adaptive_timestep(&self, x: &[f64], delta: f64) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let rule = self
            .adaptive_rule
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("model '{}' has no adaptive timestep rule", self.name)))?;
        let fx = self.drift_eval(x)?;
        Ok(rule(x, &fx, delta))
    }

    #[inline]
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    #[inline]
    pub(crate) fn phi(&self, x: &[f64]) -> f64 {
        (self.observable)(x)
    }

    #[inline]
    pub(crate) fn step_rule(&self) -> Option<&StepRuleFn> {
        self.adaptive_rule.as_deref()
    }
}

/// Spring coefficient policy for the change-of-measure coupling.
#[derive(Clone, Default)]
pub enum SpringPolicy {
    #[default]
    None,
    Constant(f64),
    /// State-dependent `S(x)`, evaluated at the midpoint of the fine and coarse states.
    Adaptive(Arc<SpringRuleFn>),
}

impl fmt::Debug for SpringPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpringPolicy::None => write!(f, "None"),
            SpringPolicy::Constant(s) => write!(f, "Constant({s})"),
            SpringPolicy::Adaptive(_) => write!(f, "Adaptive"),
        }
    }
}

impl fmt::Display for SpringPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpringPolicy::None => write!(f, "none"),
            SpringPolicy::Constant(s) => write!(f, "const:{s}"),
            SpringPolicy::Adaptive(_) => write!(f, "adaptive"),
        }
    }
}

/// Outcome of checking `S > λ/2` against a model's one-sided Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum SpringValidity {
    Satisfied,
    /// The coupling contracts only if `S > λ/2`; this policy does not guarantee it.
    Violated { spring: f64, lambda: f64 },
    /// λ unknown, or the spring is state dependent.
    Unchecked,
}

impl SpringPolicy {
    pub fn constant(s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("spring coefficient must be finite and nonnegative, got {s}")));
        }
        Ok(if s == 0.0 { SpringPolicy::None } else { SpringPolicy::Constant(s) })
    }

    pub fn adaptive<R>(rule: R) -> Self
    where
        R: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        SpringPolicy::Adaptive(Arc::new(rule))
    }

    /// The model's registered spring rule.
    pub fn adaptive_for(model: &ModelSpec) -> Result<Self> {
        model
            .spring_rule()
            .cloned()
            .map(SpringPolicy::Adaptive)
            .ok_or_else(|| Error::Unsupported(format!("model '{}' has no adaptive spring rule", model.name())))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, SpringPolicy::None)
    }

    /// Spring coefficient for the pair `(yf, yc)`, dimension-checked.
    pub fn spring_coefficient(&self, yf: &[f64], yc: &[f64]) -> Result<f64> {
        check_dim(yf.len(), yc.len())?;
        Ok(self.coefficient(yf, yc))
    }

    #[inline]
    pub(crate) fn coefficient(&self, yf: &[f64], yc: &[f64]) -> f64 {
        match self {
            SpringPolicy::None => 0.0,
            SpringPolicy::Constant(s) => *s,
            SpringPolicy::Adaptive(rule) => vecops::with_midpoint(yf, yc, |mid| rule(mid)),
        }
    }

    pub fn validity(&self, model: &ModelSpec) -> SpringValidity {
        let lambda = match model.conditions().one_sided_lipschitz {
            Some(l) => l,
            None => return SpringValidity::Unchecked,
        };
        let spring = match self {
            SpringPolicy::None => 0.0,
            SpringPolicy::Constant(s) => *s,
            SpringPolicy::Adaptive(_) => return SpringValidity::Unchecked,
        };
        if spring > lambda / 2.0 {
            SpringValidity::Satisfied
        } else {
            SpringValidity::Violated { spring, lambda }
        }
    }
}

/// `B(x) = 65x / max(65, |x|)`.
#[inline]
pub fn lorenz_clamp(x: f64) -> f64 {
    65.0 * x / x.abs().max(65.0)
}

pub fn ou() -> ModelSpec {
    ModelSpec::new("ou", vec![1.0], |x, out| out[0] = -x[0], |x| x[0].abs())
        .expect("builtin")
        .with_conditions(Conditions {
            one_sided_lipschitz: Some(0.0),
            dissipativity: Some((1.0, 0.0)),
            lipschitz: Some(1.0),
        })
}

pub fn double_well() -> ModelSpec {
    ModelSpec::new(
        "double_well",
        vec![0.0],
        |x, out| out[0] = 2.0 * x[0] - 0.5 * x[0] * x[0] * x[0],
        |x| x[0],
    )
    .expect("builtin")
    .with_conditions(Conditions {
        one_sided_lipschitz: Some(2.0),
        // 3x² - x⁴/2 peaks at x² = 3.
        dissipativity: Some((1.0, 4.5)),
        lipschitz: None,
    })
    .with_adaptive_rule(|x, fx, delta| x[0].abs().max(1.0) / (8.0 * fx[0].abs().max(1.0)) * delta)
    .with_spring_rule(|x| (2.0 - 1.5 * x[0] * x[0]).max(0.0))
}

fn truncated_lorenz_drift(x: &[f64], out: &mut [f64]) {
    let b1 = lorenz_clamp(x[0]);
    let b2 = lorenz_clamp(x[1]);
    out[0] = 10.0 * (b2 - x[0]);
    out[1] = (28.0 - x[2]) * b1 - x[1];
    out[2] = b1 * x[1] - 8.0 / 3.0 * x[2];
}

fn lorenz_drift(x: &[f64], out: &mut [f64]) {
    out[0] = 10.0 * (x[1] - x[0]);
    out[1] = x[0] * (28.0 - x[2]) - x[1];
    out[2] = x[0] * x[1] - 8.0 / 3.0 * x[2];
}

pub fn truncated_lorenz() -> ModelSpec {
    // <x, f(x)> = 10 x1 B(x2) + 28 x2 B(x1) - 10 x1² - x2² - 8/3 x3² with |B| ≤ 65.
    let beta = 650.0_f64.powi(2) / (4.0 * 9.5) + 1820.0_f64.powi(2) / (4.0 * 0.5);
    ModelSpec::new("truncated_lorenz", vec![0.0; 3], truncated_lorenz_drift, vecops::norm)
        .expect("builtin")
        .with_conditions(Conditions {
            one_sided_lipschitz: None,
            dissipativity: Some((0.5, beta)),
            lipschitz: None,
        })
        .with_divergence_threshold(10.0)
}

pub fn lorenz() -> ModelSpec {
    ModelSpec::new("lorenz", vec![0.0; 3], lorenz_drift, vecops::norm)
        .expect("builtin")
        .with_adaptive_rule(|x, fx, delta| {
            vecops::norm_sq(x).max(100.0) / (2048.0 * vecops::norm_sq(fx).max(100.0)) * delta
        })
        .with_divergence_threshold(10.0)
}

/// `f ≡ 1` in one dimension. Fine and coarse paths coincide under any
/// coupling, which makes it a fixture for zero-variance checks.
pub fn constant_drift() -> ModelSpec {
    ModelSpec::new("constant_drift", vec![0.0], |_, out| out[0] = 1.0, |x| x[0])
        .expect("builtin")
        .with_conditions(Conditions {
            one_sided_lipschitz: Some(0.0),
            dissipativity: None,
            lipschitz: Some(0.0),
        })
        .with_adaptive_rule(|_, _, delta| delta / 8.0)
}

/// Models addressable by string key.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    models: BTreeMap<String, ModelSpec>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self { models: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for m in [ou(), double_well(), truncated_lorenz(), lorenz(), constant_drift()] {
            reg.register(m);
        }
        reg
    }

    /// Adds or replaces a model under its own name.
    pub fn register(&mut self, model: ModelSpec) {
        self.models.insert(model.name().to_string(), model);
    }

    pub fn get(&self, id: &str) -> Result<ModelSpec> {
        self.models.get(id).cloned().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown model '{id}' (known: {})",
                self.models.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}

/// Looks up a built-in model by key.
pub fn builtin(id: &str) -> Result<ModelSpec> {
    ModelRegistry::builtin().get(id)
}
