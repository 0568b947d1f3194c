//! Binomial estimates with Wilson intervals, and mean estimates for weighted
//! (Rao–Blackwellized) Monte Carlo.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: u64,
    /// Sum of per-trial values (the success count for indicator trials).
    pub sum: f64,
    pub sum_sq: f64,
}

impl Estimate {
    pub fn zero() -> Estimate {
        Estimate { trials: 0, sum: 0.0, sum_sq: 0.0 }
    }

    pub fn from_counts(successes: u64, trials: u64) -> Estimate {
        Estimate { trials, sum: successes as f64, sum_sq: successes as f64 }
    }

    pub fn push(&mut self, x: f64) {
        self.trials += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&self, o: &Estimate) -> Estimate {
        Estimate { trials: self.trials + o.trials, sum: self.sum + o.sum, sum_sq: self.sum_sq + o.sum_sq }
    }

    pub fn mean(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.sum / self.trials as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.trials < 2 {
            return f64::INFINITY;
        }
        let n = self.trials as f64;
        let var = (self.sum_sq - self.sum * self.sum / n).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }

    /// Wilson score interval at `z` standard deviations (indicator trials).
    pub fn wilson(&self, z: f64) -> (f64, f64) {
        if self.trials == 0 {
            return (0.0, 1.0);
        }
        let n = self.trials as f64;
        let p = self.mean();
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        ((centre - half).max(0.0), (centre + half).min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_mean_and_shrinks() {
        let a = Estimate::from_counts(30, 100);
        let b = Estimate::from_counts(3000, 10_000);
        let (lo, hi) = a.wilson(1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo2, hi2) = b.wilson(1.96);
        assert!(hi2 - lo2 < hi - lo);
        let (lo0, _) = Estimate::from_counts(0, 10).wilson(1.96);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn weighted_mean_and_merge() {
        let mut e = Estimate::zero();
        for x in [0.5, 1.5, 1.0] {
            e.push(x);
        }
        assert!((e.mean() - 1.0).abs() < 1e-12);
        assert!((e.stderr() - (0.25f64 / 3.0).sqrt()).abs() < 1e-12);
        let m = e.merge(&Estimate::from_counts(1, 1));
        assert_eq!(m.trials, 4);
    }
}
