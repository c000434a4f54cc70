//! Sequence-level semantic aggregation of RoI features.
//!
//! Each key RoI is replaced by a softmax-weighted average of the support
//! RoIs, weighted by cosine similarity over a temperature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Row-major `rows x dim` matrix of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRows {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureRows {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 || data.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{dim} feature rows with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("feature rows must be finite".into()));
        }
        Ok(FeatureRows { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        FeatureRows::new(rows.len(), dim, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationBatch {
    pub keys: FeatureRows,
    pub supports: FeatureRows,
    pub temperature: f64,
}

impl AggregationBatch {
    pub fn new(keys: FeatureRows, supports: FeatureRows, temperature: f64) -> Result<Self> {
        if keys.dim != supports.dim {
            return Err(Error::DimensionMismatch(format!(
                "key dim {} vs support dim {}",
                keys.dim, supports.dim
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Invalid(format!("temperature {temperature} must be positive")));
        }
        Ok(AggregationBatch {
            keys,
            supports,
            temperature,
        })
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = pairwise_sum(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    if norm == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>())
}

/// `A[i][j] = <k_i/|k_i|, s_j/|s_j|> / temperature`; zero-norm vectors give
/// zero affinity.
pub fn selsa_affinity(batch: &AggregationBatch) -> Vec<Vec<f64>> {
    let keys: Vec<Vec<f64>> = (0..batch.keys.rows).map(|i| unit(batch.keys.row(i))).collect();
    let sups: Vec<Vec<f64>> = (0..batch.supports.rows).map(|j| unit(batch.supports.row(j))).collect();
    keys.iter()
        .map(|k| sups.iter().map(|s| dot(k, s) / batch.temperature).collect())
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total = pairwise_sum(&exps);
    exps.into_iter().map(|e| e / total).collect()
}

/// Attention weights per key row; each row sums to 1.
pub fn selsa_weights(batch: &AggregationBatch) -> Vec<Vec<f64>> {
    selsa_affinity(batch).iter().map(|row| softmax(row)).collect()
}

/// Enhanced key features: `out_i = sum_j softmax_j(A[i,:]) s_j`.
///
/// Each coordinate is clamped to the support range it is a convex
/// combination of; this only removes rounding overshoot.
pub fn selsa_aggregate(batch: &AggregationBatch) -> FeatureRows {
    let dim = batch.supports.dim;
    let bounds: Vec<(f64, f64)> = (0..dim)
        .map(|d| {
            (0..batch.supports.rows)
                .map(|j| batch.supports.row(j)[d])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    let mut data = Vec::with_capacity(batch.keys.rows * dim);
    let mut column = vec![0.0; batch.supports.rows];
    for w in selsa_weights(batch) {
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            for (j, c) in column.iter_mut().enumerate() {
                *c = w[j] * batch.supports.row(j)[d];
            }
            data.push(pairwise_sum(&column).clamp(lo, hi));
        }
    }
    FeatureRows {
        rows: batch.keys.rows,
        dim,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(keys: &[Vec<f64>], sups: &[Vec<f64>], t: f64) -> AggregationBatch {
        AggregationBatch::new(
            FeatureRows::from_rows(keys).unwrap(),
            FeatureRows::from_rows(sups).unwrap(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn self_affinity_is_inverse_temperature() {
        let v = vec![3.0, -4.0, 12.0];
        let a = selsa_affinity(&batch(&[v.clone()], &[v], 0.25));
        assert!((a[0][0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_zero_norm() {
        let a = selsa_affinity(&batch(
            &[vec![1.0, 0.0]],
            &[vec![0.0, 2.0], vec![0.0, 0.0]],
            1.0,
        ));
        assert_eq!(a[0], vec![0.0, 0.0]);
    }

    #[test]
    fn identical_supports_reproduce_key() {
        let v = vec![0.3, -1.7, 2.2, 0.0];
        let out = selsa_aggregate(&batch(&[v.clone()], &[v.clone(), v.clone(), v.clone()], 1.0));
        for (o, x) in out.row(0).iter().zip(&v) {
            assert!((o - x).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_affinity_gives_midpoint() {
        // both supports orthogonal to the key
        let out = selsa_aggregate(&batch(
            &[vec![1.0, 0.0, 0.0]],
            &[vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 4.0]],
            1.0,
        ));
        assert_eq!(out.row(0), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_batches() {
        let k = FeatureRows::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let s = FeatureRows::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(AggregationBatch::new(k.clone(), s, 1.0).is_err());
        assert!(AggregationBatch::new(k.clone(), k.clone(), 0.0).is_err());
        assert!(FeatureRows::new(1, 2, vec![f64::NAN, 0.0]).is_err());
    }
}
