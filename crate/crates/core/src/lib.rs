//! Multilevel Monte Carlo estimation of expectations under the invariant
//! measure of ergodic SDEs `dX = f(X) dt + dW`.
//!
//! Three estimators share one path layer:
//!
//! * plain Monte Carlo on the finest grid,
//! * standard MLMC, where fine and coarse Euler–Maruyama paths share a
//!   Brownian path,
//! * change-of-measure MLMC, where a spring term `S (Y^c - Y^f)` keeps the
//!   fine and coarse paths together and exact Radon–Nikodym weights undo its
//!   effect on the law of each path.
//!
//! Every path is a pure function of its [`StreamKey`], so results are
//! bit-identical across runs and worker counts.

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod models;
pub mod sampling;
pub mod vecops;

pub use coupling::{CoupledPathState, PathResult, SinglePath};
pub use diagnostics::SeriesFit;
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, Grid, LevelStats, MlmcConfig, MlmcReport, Plan, Scheme};
pub use models::{ModelRegistry, ModelSpec, SpringPolicy};
pub use sampling::StreamKey;
