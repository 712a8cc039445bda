//! Count-weighted averaging of model weight vectors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A weight vector and the number of workers it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedVector {
    pub weights: Vec<f64>,
    pub count: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("nothing to average")]
    Empty,
    #[error("vector lengths differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("total worker count is zero")]
    ZeroCount,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Σ countᵢ·vᵢ / Σ countᵢ. The result carries the total count, so averages
/// of averages equal the average over all original workers.
pub fn weighted_average(parts: &[WeightedVector]) -> Result<WeightedVector, AggregationError> {
    let first = parts.first().ok_or(AggregationError::Empty)?;
    let dim = first.weights.len();
    let total: u64 = parts.iter().map(|p| p.count).sum();
    if total == 0 {
        return Err(AggregationError::ZeroCount);
    }
    let mut sums = vec![Sum::default(); dim];
    for p in parts {
        if p.weights.len() != dim {
            return Err(AggregationError::DimensionMismatch(dim, p.weights.len()));
        }
        let c = p.count as f64;
        for (s, w) in sums.iter_mut().zip(&p.weights) {
            s.add(c * w);
        }
    }
    Ok(WeightedVector {
        weights: sums.into_iter().map(|s| s.value() / total as f64).collect(),
        count: total,
    })
}

/// Averages each group, then averages the group results.
pub fn hierarchical_average(
    groups: &[Vec<WeightedVector>],
) -> Result<WeightedVector, AggregationError> {
    let level_one = groups
        .iter()
        .map(|g| weighted_average(g))
        .collect::<Result<Vec<_>, _>>()?;
    weighted_average(&level_one)
}

/// ‖a − b‖ / ‖b‖, or ‖a − b‖ when b is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}
