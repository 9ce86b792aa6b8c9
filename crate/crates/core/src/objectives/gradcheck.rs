use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-5;

/// Compare `analytic` against numerical derivatives of `loss_fn` around
/// `params` and return the worst per-coordinate relative error
/// `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)`.
///
/// The numerical derivative Richardson-extrapolates central differences at
/// `h` and `h/2`, cancelling the O(h²) term. That allows a step large enough
/// to keep rounding noise small even when the loss itself is large.
pub fn finite_difference_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != params.len() {
        return Err(Error::DimensionMismatch {
            context: "finite_difference_check",
            expected: params.len(),
            actual: analytic.len(),
        });
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let mut central = |step: f64| -> Result<f64> {
            let orig = probe[k];
            probe[k] = orig + step;
            let plus = loss_fn(&probe);
            probe[k] = orig - step;
            let minus = loss_fn(&probe);
            probe[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "loss at coordinate {k} ± {step}: {plus} / {minus}"
                )));
            }
            Ok((plus - minus) / (2.0 * step))
        };
        let coarse = central(h)?;
        let fine = central(h / 2.0)?;
        let numeric = (4.0 * fine - coarse) / 3.0;
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}
