//! Streaming moment accumulators that merge deterministically.

use serde::{Deserialize, Serialize};

/// Welford mean/variance with Chan's parallel merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Accumulates `E|X|^ell` in log space.
///
/// Tracks `sum |x|^ell` and `sum |x|^(2 ell)` relative to a running maximum of
/// `ell * ln|x|`, so heavy tails at large `ell` do not overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoment {
    pub ell: u32,
    pub n: u64,
    log_max: f64,
    sum1: f64,
    sum2: f64,
}

impl LogMoment {
    pub fn new(ell: u32) -> Self {
        Self {
            ell,
            n: 0,
            log_max: f64::NEG_INFINITY,
            sum1: 0.0,
            sum2: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let ax = x.abs();
        if ax == 0.0 {
            return;
        }
        let lv = self.ell as f64 * ax.ln();
        if lv > self.log_max {
            let r = (self.log_max - lv).exp();
            self.sum1 *= r;
            self.sum2 *= r * r;
            self.log_max = lv;
        }
        let w = (lv - self.log_max).exp();
        self.sum1 += w;
        self.sum2 += w * w;
    }

    pub fn merge(&mut self, other: &LogMoment) {
        assert_eq!(self.ell, other.ell, "merging moments of different order");
        self.n += other.n;
        if other.sum1 == 0.0 {
            return;
        }
        if self.sum1 == 0.0 {
            self.log_max = other.log_max;
            self.sum1 = other.sum1;
            self.sum2 = other.sum2;
            return;
        }
        if other.log_max > self.log_max {
            let r = (self.log_max - other.log_max).exp();
            self.sum1 = self.sum1 * r + other.sum1;
            self.sum2 = self.sum2 * r * r + other.sum2;
            self.log_max = other.log_max;
        } else {
            let r = (other.log_max - self.log_max).exp();
            self.sum1 += other.sum1 * r;
            self.sum2 += other.sum2 * r * r;
        }
    }

    /// Estimate of `E|X|^ell`.
    pub fn raw_moment(&self) -> f64 {
        if self.n == 0 || self.sum1 == 0.0 {
            return 0.0;
        }
        (self.log_max + (self.sum1 / self.n as f64).ln()).exp()
    }

    /// Standard error of the raw moment estimate.
    pub fn raw_std_error(&self) -> f64 {
        if self.n < 2 || self.sum1 == 0.0 {
            return 0.0;
        }
        let n = self.n as f64;
        let m1 = self.sum1 / n;
        let m2 = self.sum2 / n;
        let var = (m2 - m1 * m1).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() * self.log_max.exp()
    }

    /// `(E|X|^ell)^(1/ell)`.
    pub fn norm(&self) -> f64 {
        if self.n == 0 || self.sum1 == 0.0 {
            return 0.0;
        }
        ((self.log_max + (self.sum1 / self.n as f64).ln()) / self.ell as f64).exp()
    }

    /// Delta-method standard error of [`LogMoment::norm`].
    pub fn norm_std_error(&self) -> f64 {
        if self.n < 2 || self.sum1 == 0.0 {
            return 0.0;
        }
        let n = self.n as f64;
        let m1 = self.sum1 / n;
        let m2 = self.sum2 / n;
        let rel_var = ((m2 - m1 * m1).max(0.0) * n / (n - 1.0)) / (m1 * m1);
        let rel_se_raw = (rel_var / n).sqrt();
        self.norm() * rel_se_raw / self.ell as f64
    }
}
