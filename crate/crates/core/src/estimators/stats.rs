use serde::Serialize;

/// Running power sums of the level samples `P` on one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    /// Fine step `h_l`, or `δ_l` on an adaptive grid.
    pub h: f64,
    pub n: u64,
    pub sum1: f64,
    pub sum2: f64,
    pub sum3: f64,
    pub sum4: f64,
    pub cost_total: u64,
    pub divergence_count: u64,
}

impl LevelStats {
    pub fn new(level: usize, h: f64) -> Self {
        Self { level, h, n: 0, sum1: 0.0, sum2: 0.0, sum3: 0.0, sum4: 0.0, cost_total: 0, divergence_count: 0 }
    }

    pub fn push(&mut self, p: f64, cost: u64, diverged: bool) {
        let p2 = p * p;
        self.n += 1;
        self.sum1 += p;
        self.sum2 += p2;
        self.sum3 += p2 * p;
        self.sum4 += p2 * p2;
        self.cost_total += cost;
        self.divergence_count += u64::from(diverged);
    }

    /// Appends `other`'s samples after this one's.
    pub fn merge(&mut self, other: &LevelStats) {
        self.n += other.n;
        self.sum1 += other.sum1;
        self.sum2 += other.sum2;
        self.sum3 += other.sum3;
        self.sum4 += other.sum4;
        self.cost_total += other.cost_total;
        self.divergence_count += other.divergence_count;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum1 / self.n as f64
    }

    /// Population variance `sum2/N - mean²`, with round-off below zero clipped.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum2 / self.n as f64 - m * m).max(0.0)
    }

    /// Standardized fourth central moment; `None` below 4 samples or at zero variance.
    pub fn kurtosis(&self) -> Option<f64> {
        let var = self.variance();
        if self.n < 4 || var <= 0.0 {
            return None;
        }
        let n = self.n as f64;
        let m = self.mean();
        let (s2, s3, s4) = (self.sum2 / n, self.sum3 / n, self.sum4 / n);
        let m4 = s4 - 4.0 * m * s3 + 6.0 * m * m * s2 - 3.0 * m.powi(4);
        Some(m4 / (var * var))
    }

    pub fn mean_cost(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.cost_total as f64 / self.n as f64
    }

    pub fn divergence_prob(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.divergence_count as f64 / self.n as f64
    }

    /// Variance of the level mean, `V / N`.
    pub fn mean_variance(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        self.variance() / self.n as f64
    }
}
