use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::{l2_normalize_backward, norm, EmbeddingMatrix, NORM_EPS};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Affine projection `x ↦ Wᵀx + b` into the shared embedding space.
///
/// `weight` is stored row-major with shape `in_dim × out_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: EmbeddingMatrix,
}

/// Head outputs scaled to unit length, keeping the pre-normalization norms
/// for the backward pass.
#[derive(Clone, Debug)]
pub struct UnitProjection {
    pub unit: EmbeddingMatrix,
    pub norms: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                context: "head weight",
                expected: in_dim * out_dim,
                actual: weight.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "head bias",
                expected: out_dim,
                actual: bias.len(),
            });
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite head parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    /// Gaussian init with variance `1 / in_dim`, zero bias.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let weight = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let weight = EmbeddingMatrix::identity(dim).into_vec();
        Self {
            in_dim: dim,
            out_dim: dim,
            weight,
            bias: vec![0.0; dim],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_input(&self, x: &EmbeddingMatrix) -> Result<()> {
        if x.dim() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "head input",
                expected: self.in_dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn forward_row_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let w = &self.weight[k * self.out_dim..(k + 1) * self.out_dim];
            for (o, wkj) in out.iter_mut().zip(w) {
                *o += xk * wkj;
            }
        }
    }

    pub fn forward(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_input(x)?;
        let mut out = EmbeddingMatrix::zeros(x.rows(), self.out_dim);
        for i in 0..x.rows() {
            self.forward_row_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Forward pass followed by per-row L2 normalization.
    pub fn forward_unit(&self, x: &EmbeddingMatrix) -> Result<UnitProjection> {
        let mut unit = self.forward(x)?;
        let mut norms = Vec::with_capacity(unit.rows());
        for i in 0..unit.rows() {
            let row = unit.row_mut(i);
            let n = norm(row);
            if !(n > NORM_EPS) {
                return Err(Error::ZeroVector { norm: n });
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(UnitProjection { unit, norms })
    }

    /// Gradients of a scalar loss given `upstream = ∂L/∂(head output)`.
    pub fn backward(&self, x: &EmbeddingMatrix, upstream: &EmbeddingMatrix) -> Result<HeadGrads> {
        self.check_input(x)?;
        if upstream.dim() != self.out_dim || upstream.rows() != x.rows() {
            return Err(Error::DimensionMismatch {
                context: "head upstream gradient",
                expected: x.rows() * self.out_dim,
                actual: upstream.rows() * upstream.dim(),
            });
        }
        let mut weight = vec![0.0; self.weight.len()];
        let mut bias = vec![0.0; self.out_dim];
        let mut input = EmbeddingMatrix::zeros(x.rows(), self.in_dim);
        for i in 0..x.rows() {
            self.accumulate_row(x.row(i), upstream.row(i), &mut weight, &mut bias);
            let gx = input.row_mut(i);
            for (k, g) in gx.iter_mut().enumerate() {
                let w = &self.weight[k * self.out_dim..(k + 1) * self.out_dim];
                *g = w.iter().zip(upstream.row(i)).map(|(a, b)| a * b).sum();
            }
        }
        Ok(HeadGrads {
            weight,
            bias,
            input,
        })
    }

    /// Add one row's parameter gradient into the accumulators (no input grad).
    pub fn accumulate_row(&self, x: &[f64], upstream: &[f64], weight: &mut [f64], bias: &mut [f64]) {
        for (b, g) in bias.iter_mut().zip(upstream) {
            *b += g;
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let w = &mut weight[k * self.out_dim..(k + 1) * self.out_dim];
            for (wkj, g) in w.iter_mut().zip(upstream) {
                *wkj += xk * g;
            }
        }
    }
}

impl UnitProjection {
    /// Map gradients w.r.t. unit rows back to gradients w.r.t. raw head outputs.
    pub fn backward(&self, upstream: &EmbeddingMatrix) -> EmbeddingMatrix {
        let mut out = EmbeddingMatrix::zeros(self.unit.rows(), self.unit.dim());
        for i in 0..self.unit.rows() {
            let g = l2_normalize_backward(self.unit.row(i), self.norms[i], upstream.row(i));
            out.row_mut(i).copy_from_slice(&g);
        }
        out
    }
}

/// Random unit-length Gaussian vector.
pub fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rand_distr::StandardNormal.sample(rng))
            .collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::finite_difference_check;
    use crate::seed::rng_for;

    #[test]
    fn identity_and_bias_only() {
        let x = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let id = ProjectionHead::identity(2);
        assert_eq!(id.forward(&x).unwrap(), x);

        let b = ProjectionHead::new(2, 3, vec![0.0; 6], vec![1.0, -2.0, 0.5]).unwrap();
        let out = b.forward(&x).unwrap();
        for r in out.iter_rows() {
            assert_eq!(r, &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        // W = [[1,2],[3,4]] (in × out), b = [0.5, -1]
        let head = ProjectionHead::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -1.0]).unwrap();
        let x = EmbeddingMatrix::from_rows(&[[1.0, 1.0], [2.0, -1.0]]).unwrap();
        let out = head.forward(&x).unwrap();
        // row0: [1+3, 2+4] + b = [4.5, 5]; row1: [2-3, 4-4] + b = [-0.5, -1]
        assert_eq!(out.as_slice(), &[4.5, 5.0, -0.5, -1.0]);
    }

    #[test]
    fn scalar_backward() {
        let head = ProjectionHead::new(1, 1, vec![3.0], vec![0.2]).unwrap();
        let x = EmbeddingMatrix::from_rows(&[[2.0]]).unwrap();
        let g = head
            .backward(&x, &EmbeddingMatrix::from_rows(&[[1.0]]).unwrap())
            .unwrap();
        assert_eq!(g.weight, vec![2.0]);
        assert_eq!(g.bias, vec![1.0]);
        assert_eq!(g.input.as_slice(), &[3.0]);

        let z = head
            .backward(&x, &EmbeddingMatrix::zeros(1, 1))
            .unwrap();
        assert_eq!(z.weight, vec![0.0]);
        assert_eq!(z.bias, vec![0.0]);
        assert_eq!(z.input.as_slice(), &[0.0]);
    }

    #[test]
    fn shape_errors() {
        let head = ProjectionHead::identity(3);
        let x = EmbeddingMatrix::zeros(2, 2);
        assert!(matches!(head.forward(&x), Err(Error::DimensionMismatch { .. })));
        let x = EmbeddingMatrix::zeros(2, 3);
        assert!(head.backward(&x, &EmbeddingMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn random_4x3_matches_finite_differences() {
        let mut rng = rng_for(11, "head-test");
        let head = ProjectionHead::random(4, 3, &mut rng);
        let x = EmbeddingMatrix::from_rows(&[random_unit(4, &mut rng), random_unit(4, &mut rng)]).unwrap();
        let coef = EmbeddingMatrix::from_rows(&[random_unit(3, &mut rng), random_unit(3, &mut rng)]).unwrap();
        let grads = head.backward(&x, &coef).unwrap();

        let loss_w = |w: &[f64]| {
            let h = ProjectionHead::new(4, 3, w.to_vec(), head.bias.clone()).unwrap();
            crate::numeric::matrix::dot(h.forward(&x).unwrap().as_slice(), coef.as_slice())
        };
        let err = finite_difference_check(loss_w, &head.weight, &grads.weight, 1e-5).unwrap();
        assert!(err < 1e-6, "weight rel err {err}");

        let loss_x = |xs: &[f64]| {
            let xm = EmbeddingMatrix::new(2, 4, xs.to_vec()).unwrap();
            crate::numeric::matrix::dot(head.forward(&xm).unwrap().as_slice(), coef.as_slice())
        };
        let err = finite_difference_check(loss_x, x.as_slice(), grads.input.as_slice(), 1e-5).unwrap();
        assert!(err < 1e-6, "input rel err {err}");
    }

    #[test]
    fn unit_projection_has_unit_rows() {
        let mut rng = rng_for(2, "unit");
        let head = ProjectionHead::random(8, 4, &mut rng);
        let x = EmbeddingMatrix::from_rows(&[random_unit(8, &mut rng), random_unit(8, &mut rng)]).unwrap();
        let p = head.forward_unit(&x).unwrap();
        for r in p.unit.iter_rows() {
            assert!((norm(r) - 1.0).abs() < 1e-6);
        }
    }
}
