//! Reproducible Brownian increments.
//!
//! Every path draws from its own ChaCha stream. The cipher key is derived
//! from `(master_seed, level, replica_tag)` and the ChaCha stream id is the
//! path index, so path `i` on level `l` is a pure function of its
//! [`StreamKey`] no matter which worker runs it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 20_190_612;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub level: u32,
    pub path_index: u64,
    /// Separates estimator variants that share a seed.
    pub replica_tag: u32,
}

impl StreamKey {
    pub fn new(master_seed: u64, level: u32, path_index: u64, replica_tag: u32) -> Self {
        Self { master_seed, level, path_index, replica_tag }
    }

    pub fn stream(&self) -> GaussianStream {
        GaussianStream::new(*self)
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(key: &StreamKey) -> [u8; 32] {
    let mut state = key.master_seed;
    let _ = splitmix64(&mut state);
    state ^= (u64::from(key.level) << 32) | u64::from(key.replica_tag);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Source of Brownian increments `ΔW ~ N(0, h I)`.
///
/// The integrators are generic over this so tests can force increment
/// sequences. Callers guarantee `h > 0`.
pub trait IncrementSource {
    fn fill_increment(&mut self, h: f64, out: &mut [f64]);
}

/// Gaussian increments from one counter-keyed stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(key: StreamKey) -> Self {
        let mut rng = ChaCha8Rng::from_seed(derive_key(&key));
        rng.set_stream(key.path_index);
        Self { rng }
    }

    /// One draw from `N(0, h I_m)`.
    pub fn gaussian_increment(&mut self, h: f64, m: usize) -> Result<Vec<f64>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("increment length must be positive, got {h}")));
        }
        let mut out = vec![0.0; m];
        self.fill_increment(h, &mut out);
        Ok(out)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl IncrementSource for GaussianStream {
    #[inline]
    fn fill_increment(&mut self, h: f64, out: &mut [f64]) {
        let sd = h.sqrt();
        for v in out.iter_mut() {
            *v = sd * self.standard_normal();
        }
    }
}

/// Every increment is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroIncrements;

impl IncrementSource for ZeroIncrements {
    fn fill_increment(&mut self, _h: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Replays a fixed list of increments in order, ignoring `h`; zero once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedIncrements {
    values: Vec<Vec<f64>>,
    next: usize,
}

impl ScriptedIncrements {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values, next: 0 }
    }
}

impl IncrementSource for ScriptedIncrements {
    fn fill_increment(&mut self, _h: f64, out: &mut [f64]) {
        match self.values.get(self.next) {
            Some(v) => out.copy_from_slice(v),
            None => out.fill(0.0),
        }
        self.next += 1;
    }
}

/// `ΔW_{2n} + ΔW_{2n+1}`: the coarse path's increment over one pair step.
pub fn coarse_increment(even: &[f64], odd: &[f64]) -> Result<Vec<f64>> {
    check_dim(even.len(), odd.len())?;
    Ok(even.iter().zip(odd).map(|(a, b)| a + b).collect())
}
