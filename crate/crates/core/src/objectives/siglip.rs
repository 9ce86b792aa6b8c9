//! Pairwise sigmoid contrastive loss over a batch of matched image/text rows.
//!
//! ```text
//! L = −(1/N) Σᵢ Σⱼ log σ(sᵢⱼ · (t⟨imgᵢ, txtⱼ⟩ + b)),   sᵢⱼ = +1 if i = j else −1
//! ```

use serde::{Deserialize, Serialize};

use super::{log_sigmoid, sigmoid};
use crate::error::{Error, Result};
use crate::numeric::{dot, EmbeddingMatrix};

/// Learnable logit scale `t` and bias `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigLipParams {
    pub temperature_t: f64,
    pub bias_b: f64,
}

impl Default for SigLipParams {
    fn default() -> Self {
        Self {
            temperature_t: 10.0,
            bias_b: -10.0,
        }
    }
}

impl SigLipParams {
    pub fn new(temperature_t: f64, bias_b: f64) -> Result<Self> {
        if !(temperature_t > 0.0) || !temperature_t.is_finite() || !bias_b.is_finite() {
            return Err(Error::NonPositiveTau(temperature_t));
        }
        Ok(Self {
            temperature_t,
            bias_b,
        })
    }

    /// The shared temperature τ = 1/t used by the prompt objective.
    pub fn tau(&self) -> f64 {
        1.0 / self.temperature_t
    }
}

#[derive(Clone, Debug)]
pub struct SigLipOutput {
    pub loss: f64,
    pub grad_img: EmbeddingMatrix,
    pub grad_txt: EmbeddingMatrix,
    pub grad_t: f64,
    pub grad_b: f64,
}

pub fn siglip_loss(img: &EmbeddingMatrix, txt: &EmbeddingMatrix, params: &SigLipParams) -> Result<SigLipOutput> {
    let n = img.rows();
    if txt.rows() != n {
        return Err(Error::DimensionMismatch {
            context: "siglip batch size",
            expected: n,
            actual: txt.rows(),
        });
    }
    if img.dim() != txt.dim() {
        return Err(Error::DimensionMismatch {
            context: "siglip embedding dim",
            expected: img.dim(),
            actual: txt.dim(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let SigLipParams {
        temperature_t: t,
        bias_b: b,
    } = *params;
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut grad_img = EmbeddingMatrix::zeros(n, img.dim());
    let mut grad_txt = EmbeddingMatrix::zeros(n, img.dim());
    let mut grad_t = 0.0;
    let mut grad_b = 0.0;
    for i in 0..n {
        let xi = img.row(i);
        for j in 0..n {
            let yj = txt.row(j);
            let sim = dot(xi, yj);
            let sign = if i == j { 1.0 } else { -1.0 };
            let logit = t * sim + b;
            loss -= log_sigmoid(sign * logit);
            // ∂/∂logit of −log σ(s·logit) is −s·σ(−s·logit)
            let dlogit = -sign * sigmoid(-sign * logit) * inv_n;
            grad_t += dlogit * sim;
            grad_b += dlogit;
            let scale = dlogit * t;
            for (g, y) in grad_img.row_mut(i).iter_mut().zip(yj) {
                *g += scale * y;
            }
            for (g, x) in grad_txt.row_mut(j).iter_mut().zip(xi) {
                *g += scale * x;
            }
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("siglip loss {loss}")));
    }
    Ok(SigLipOutput {
        loss,
        grad_img,
        grad_txt,
        grad_t,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::random_unit;
    use crate::objectives::finite_difference_check;
    use crate::seed::rng_for;

    /// Independent re-evaluation of the double sum, written directly from
    /// the formula with naive sigmoid/log.
    fn brute_force(img: &EmbeddingMatrix, txt: &EmbeddingMatrix, t: f64, b: f64) -> f64 {
        let n = img.rows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let s: f64 = img.row(i).iter().zip(txt.row(j)).map(|(a, c)| a * c).sum();
                let z = if i == j { 1.0 } else { -1.0 } * (t * s + b);
                total += -(1.0 / (1.0 + (-z).exp())).ln();
            }
        }
        total / n as f64
    }

    #[test]
    fn zero_logit_gives_ln2() {
        let e = EmbeddingMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        // t·1 + b = 0
        let out = siglip_loss(&e, &e, &SigLipParams::new(10.0, -10.0).unwrap()).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_logit_is_near_zero() {
        let e = EmbeddingMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let out = siglip_loss(&e, &e, &SigLipParams::new(10.0, 10.0).unwrap()).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((out.loss - expected).abs() < 1e-20);
        assert!((out.loss - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn two_rows_match_brute_force() {
        let mut rng = rng_for(5, "siglip-n2");
        let img = EmbeddingMatrix::from_rows(&[random_unit(6, &mut rng), random_unit(6, &mut rng)]).unwrap();
        let txt = EmbeddingMatrix::from_rows(&[random_unit(6, &mut rng), random_unit(6, &mut rng)]).unwrap();
        let out = siglip_loss(&img, &txt, &SigLipParams::default()).unwrap();
        let oracle = brute_force(&img, &txt, 10.0, -10.0);
        assert!((out.loss - oracle).abs() < 1e-12, "{} vs {}", out.loss, oracle);
    }

    #[test]
    fn errors() {
        let a = EmbeddingMatrix::zeros(2, 3);
        let b = EmbeddingMatrix::zeros(3, 3);
        assert!(matches!(
            siglip_loss(&a, &b, &SigLipParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let e = EmbeddingMatrix::zeros(0, 3);
        assert!(matches!(siglip_loss(&e, &e, &SigLipParams::default()), Err(Error::EmptyBatch)));
        assert!(SigLipParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_for(9, "siglip-fd");
        let n = 3;
        let e = 5;
        let rows = |rng: &mut _| (0..n).map(|_| random_unit(e, rng)).collect::<Vec<_>>();
        let img = EmbeddingMatrix::from_rows(&rows(&mut rng)).unwrap();
        let txt = EmbeddingMatrix::from_rows(&rows(&mut rng)).unwrap();
        let p = SigLipParams::new(4.0, -2.0).unwrap();
        let out = siglip_loss(&img, &txt, &p).unwrap();

        let mut flat = img.as_slice().to_vec();
        flat.extend_from_slice(txt.as_slice());
        flat.push(p.temperature_t);
        flat.push(p.bias_b);
        let mut analytic = out.grad_img.as_slice().to_vec();
        analytic.extend_from_slice(out.grad_txt.as_slice());
        analytic.push(out.grad_t);
        analytic.push(out.grad_b);
        let ne = n * e;
        let err = finite_difference_check(
            |v| {
                let a = EmbeddingMatrix::new(n, e, v[..ne].to_vec()).unwrap();
                let b = EmbeddingMatrix::new(n, e, v[ne..2 * ne].to_vec()).unwrap();
                brute_force(&a, &b, v[2 * ne], v[2 * ne + 1])
            },
            &flat,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn symmetric_under_joint_permutation() {
        let mut rng = rng_for(1, "siglip-perm");
        let rows: Vec<_> = (0..4).map(|_| random_unit(3, &mut rng)).collect();
        let rows2: Vec<_> = (0..4).map(|_| random_unit(3, &mut rng)).collect();
        let img = EmbeddingMatrix::from_rows(&rows).unwrap();
        let txt = EmbeddingMatrix::from_rows(&rows2).unwrap();
        let perm = [2, 0, 3, 1];
        let base = siglip_loss(&img, &txt, &SigLipParams::default()).unwrap().loss;
        let permuted = siglip_loss(&img.select_rows(&perm), &txt.select_rows(&perm), &SigLipParams::default())
            .unwrap()
            .loss;
        assert!((base - permuted).abs() < 1e-12);
    }
}
