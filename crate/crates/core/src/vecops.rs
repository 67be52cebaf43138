//! Small dense-vector helpers on slices.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

const STACK_DIM: usize = 8;

/// Calls `f` with `(a + b) / 2` without heap allocation for small dimensions.
#[inline]
pub fn with_midpoint<R>(a: &[f64], b: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
    let n = a.len();
    if n <= STACK_DIM {
        let mut buf = [0.0; STACK_DIM];
        for i in 0..n {
            buf[i] = 0.5 * (a[i] + b[i]);
        }
        f(&buf[..n])
    } else {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        f(&mid)
    }
}
