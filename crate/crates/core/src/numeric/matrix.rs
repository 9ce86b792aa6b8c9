use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm floor below which a vector cannot be normalized.
pub const NORM_EPS: f64 = 1e-12;

/// Dense row-major matrix of embedding rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                context: "embedding matrix data length",
                expected: rows * dim,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "embedding row",
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// Copy with every row scaled to unit length.
    pub fn normalized_rows(&self) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let unit = l2_normalize(self.row(i))?;
            out.row_mut(i).copy_from_slice(&unit);
        }
        Ok(out)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFiniteValue {
                row: pos / self.dim.max(1),
                col: pos % self.dim.max(1),
            }),
            None => Ok(()),
        }
    }

    /// `self · other^T`, i.e. all pairwise row dot products.
    pub fn gram(&self, other: &EmbeddingMatrix) -> Result<Vec<f64>> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                context: "gram",
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut out = vec![0.0; self.rows * other.rows];
        for i in 0..self.rows {
            let a = self.row(i);
            let dst = &mut out[i * other.rows..(i + 1) * other.rows];
            for (j, d) in dst.iter_mut().enumerate() {
                *d = dot(a, other.row(j));
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > NORM_EPS) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Back-propagate `upstream` (gradient w.r.t. the normalized output) through
/// `v ↦ v / ‖v‖`. `unit` is the forward output and `input_norm` is ‖v‖.
pub fn l2_normalize_backward(unit: &[f64], input_norm: f64, upstream: &[f64]) -> Vec<f64> {
    let proj = dot(unit, upstream);
    unit.iter()
        .zip(upstream)
        .map(|(u, g)| (g - u * proj) / input_norm)
        .collect()
}

/// Dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine_sim",
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(dot(u, v).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn cosine_examples() {
        let u = [0.6, 0.8];
        assert!((cosine_sim(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[0.6, 0.8], &[0.8, 0.6]).unwrap() - 0.96).abs() < 1e-15);
        assert!(cosine_sim(&[1.0], &[1.0, 0.0]).is_err());
        // rounding past 1 is clamped
        assert_eq!(cosine_sim(&[1.0 + 1e-12], &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        assert!(EmbeddingMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFiniteValue { row: 0, col: 1 })
        ));
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let v = [0.3, -1.2, 0.7];
        let up = [0.5, 0.25, -1.0];
        let n = norm(&v);
        let unit = l2_normalize(&v).unwrap();
        let g = l2_normalize_backward(&unit, n, &up);
        let h = 1e-6;
        for k in 0..3 {
            let mut p = v;
            let mut m = v;
            p[k] += h;
            m[k] -= h;
            let fp = dot(&l2_normalize(&p).unwrap(), &up);
            let fm = dot(&l2_normalize(&m).unwrap(), &up);
            assert!(((fp - fm) / (2.0 * h) - g[k]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..16)) {
            prop_assume!(norm(&v) > 1e-6);
            let once = l2_normalize(&v).unwrap();
            let twice = l2_normalize(&once).unwrap();
            prop_assert!((norm(&once) - 1.0).abs() < 1e-9);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
