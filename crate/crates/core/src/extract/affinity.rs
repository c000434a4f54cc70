use crate::error::{Error, Result};
use crate::tensor_io::FeatureMap;

/// Dense symmetric patch-affinity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl AffinityMatrix {
    /// Wraps a row-major `n x n` matrix after checking symmetry, range and the diagonal.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n}x{n} affinity",
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 1.0 {
                return Err(Error::Invalid(format!("affinity diagonal at {i} is not 1")));
            }
            for j in 0..n {
                let a = data[i * n + j];
                if !(0.0..=1.0).contains(&a) || a != data[j * n + i] {
                    return Err(Error::Invalid(format!(
                        "affinity entry ({i},{j}) = {a} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(AffinityMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// True when every patch reaches every other through positive affinities.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, &a) in self.row(i).iter().enumerate() {
                if a > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }
}

/// Unit-normalized copies of the patch vectors; rejects zero-norm patches.
pub fn normalized_features(features: &FeatureMap) -> Result<Vec<Vec<f64>>> {
    (0..features.num_patches())
        .map(|i| {
            let f = features.patch(i);
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroNormFeature { index: i });
            }
            Ok(f.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Clamped cosine similarity between every pair of patches.
pub fn build_affinity(features: &FeatureMap) -> Result<AffinityMatrix> {
    let n = features.num_patches();
    if n < 2 {
        return Err(Error::Invalid(format!("affinity needs >= 2 patches, got {n}")));
    }
    let unit = normalized_features(features)?;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in i + 1..n {
            let dot: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            let a = dot.clamp(0.0, 1.0);
            data[i * n + j] = a;
            data[j * n + i] = a;
        }
    }
    Ok(AffinityMatrix { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FrameRef;

    fn fm(vectors: &[&[f64]]) -> FeatureMap {
        let c = vectors[0].len();
        let data = vectors.iter().flat_map(|v| v.iter().copied()).collect();
        FeatureMap::new(
            FrameRef::new("v", 0, 64, 16).unwrap(),
            "b",
            1,
            vectors.len(),
            c,
            16,
            data,
        )
        .unwrap()
    }

    #[test]
    fn identical_orthogonal_and_sixty_degrees() {
        let a = build_affinity(&fm(&[&[1.0, 2.0], &[2.0, 4.0]])).unwrap();
        assert!((a.get(0, 1) - 1.0).abs() < 1e-15);
        let a = build_affinity(&fm(&[&[1.0, 0.0], &[0.0, 3.0]])).unwrap();
        assert_eq!(a.get(0, 1), 0.0);
        let (s, c) = (60f64.to_radians().sin(), 60f64.to_radians().cos());
        let a = build_affinity(&fm(&[&[1.0, 0.0], &[c, s]])).unwrap();
        let oracle = 1.0 * c + 0.0 * s;
        assert!((a.get(0, 1) - oracle).abs() < 1e-12);
        assert!((a.get(0, 1) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn negative_cosine_clamped_and_symmetric() {
        let a = build_affinity(&fm(&[&[1.0, 0.0], &[-1.0, 0.1], &[0.3, 0.7]])).unwrap();
        assert_eq!(a.get(0, 1), 0.0);
        for i in 0..3 {
            assert_eq!(a.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn zero_norm_rejected_with_index() {
        let err = build_affinity(&fm(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroNormFeature { index: 1 }));
    }

    #[test]
    fn connectivity() {
        let a = AffinityMatrix::from_dense(3, vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!a.is_connected());
        let a = AffinityMatrix::from_dense(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(a.is_connected());
        assert!(AffinityMatrix::from_dense(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    }
}
