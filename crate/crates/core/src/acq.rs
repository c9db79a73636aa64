//! Expected improvement, the utility percentile gate, and its schedule.

use serde::{Deserialize, Serialize};

use crate::gp::PosteriorPrediction;
use crate::stats::{normal_cdf, normal_pdf, percentile_sorted};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AcqError {
    #[error("non-finite acquisition input")]
    NonFinite,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Expected improvement over `y_max` for maximization.
pub fn expected_improvement(pred: &PosteriorPrediction, y_max: f64) -> Result<f64, AcqError> {
    if !(pred.mean.is_finite() && pred.variance.is_finite() && y_max.is_finite()) || pred.variance < 0.0 {
        return Err(AcqError::NonFinite);
    }
    let d = pred.mean - y_max;
    let s = pred.variance.sqrt();
    if s == 0.0 {
        return Ok(d.max(0.0));
    }
    let z = d / s;
    Ok((d * normal_cdf(z) + s * normal_pdf(z)).max(0.0))
}

/// Linear-interpolation percentile threshold of `utilities` at `p`.
pub fn gate_threshold(sorted_utilities: &[f64], p: f64) -> f64 {
    percentile_sorted(sorted_utilities, p)
}

/// `π(g(x), p)`: admissible iff `g(x)` is at least the `p`th percentile of `G`.
pub fn utility_gate(utilities: &[f64], p: f64) -> Vec<bool> {
    let mut sorted = utilities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = gate_threshold(&sorted, p);
    utilities.iter().map(|g| *g >= t).collect()
}

/// Step schedule `p(n)`: `v1` up to `c1`, `v2` up to `c2`, then 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileSchedule {
    v1: f64,
    v2: f64,
    c1: usize,
    c2: usize,
}

impl PercentileSchedule {
    pub fn new(v1: f64, v2: f64, c1: usize, c2: usize) -> Result<Self, AcqError> {
        if !(v1 > 0.0 && v1 <= 100.0) {
            return Err(AcqError::InvalidSchedule(format!("v1 = {v1} must lie in (0, 100]")));
        }
        if !(v2 >= 0.0 && v2 < v1) {
            return Err(AcqError::InvalidSchedule(format!("v2 = {v2} must lie in [0, v1)")));
        }
        if c2 < c1 {
            return Err(AcqError::InvalidSchedule(format!("c2 = {c2} must be >= c1 = {c1}")));
        }
        Ok(Self { v1, v2, c1, c2 })
    }

    /// 85 / 15 / 30 / 40.
    pub fn paper_default() -> Self {
        Self { v1: 85.0, v2: 15.0, c1: 30, c2: 40 }
    }

    /// The gate open at every iteration.
    pub fn zero() -> Self {
        Self { v1: 0.0, v2: 0.0, c1: 0, c2: 0 }
    }

    pub fn v1(&self) -> f64 {
        self.v1
    }

    pub fn v2(&self) -> f64 {
        self.v2
    }

    pub fn c1(&self) -> usize {
        self.c1
    }

    pub fn c2(&self) -> usize {
        self.c2
    }

    pub fn value(&self, n: usize) -> f64 {
        schedule_value(self, n)
    }
}

impl Default for PercentileSchedule {
    fn default() -> Self {
        Self::paper_default()
    }
}

pub fn schedule_value(s: &PercentileSchedule, n: usize) -> f64 {
    if n <= s.c1 {
        s.v1
    } else if n <= s.c2 {
        s.v2
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pred(mean: f64, sd: f64) -> PosteriorPrediction {
        PosteriorPrediction { mean, variance: sd * sd }
    }

    #[test]
    fn degenerate_variance() {
        assert_eq!(expected_improvement(&pred(3.0, 0.0), 3.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(&pred(5.0, 0.0), 3.0).unwrap(), 2.0);
        assert_eq!(expected_improvement(&pred(1.0, 0.0), 3.0).unwrap(), 0.0);
        assert!(expected_improvement(&pred(f64::NAN, 1.0), 0.0).is_err());
    }

    #[test]
    fn at_incumbent_equals_pdf_at_zero() {
        let v = expected_improvement(&pred(2.0, 1.0), 2.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn increasing_in_mean() {
        for sd in [0.1, 1.0, 5.0] {
            let mut prev = -1.0;
            for i in 0..50 {
                let v = expected_improvement(&pred(sd * (-5.0 + 0.2 * i as f64), sd), 0.0).unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn gate_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
        assert_eq!(utility_gate(&g, 85.0).iter().filter(|b| **b).count(), 15);
        assert!(utility_gate(&g, 0.0).iter().all(|b| *b));
        assert!(utility_gate(&[2.0; 7], 60.0).iter().all(|b| *b));
    }

    #[test]
    fn schedule_steps() {
        let s = PercentileSchedule::paper_default();
        assert_eq!(s.value(10), 85.0);
        assert_eq!(s.value(30), 85.0);
        assert_eq!(s.value(35), 15.0);
        assert_eq!(s.value(40), 15.0);
        assert_eq!(s.value(50), 0.0);
        assert!((0..200).all(|n| PercentileSchedule::zero().value(n) == 0.0));
        assert!(PercentileSchedule::new(0.0, 0.0, 1, 2).is_err());
        assert!(PercentileSchedule::new(50.0, 60.0, 1, 2).is_err());
        assert!(PercentileSchedule::new(50.0, 10.0, 5, 2).is_err());
    }
}
