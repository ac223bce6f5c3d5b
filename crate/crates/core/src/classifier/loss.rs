use candle_core::Tensor;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all N+1 class slots.
pub fn bce_multilabel_loss(targets: &[f32], probs: &[f64]) -> Result<f64> {
    if targets.len() != probs.len() {
        return Err(Error::contract(format!(
            "{} targets vs {} probabilities",
            targets.len(),
            probs.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::contract("loss over zero classes"));
    }
    let total: f64 = targets
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let y = y as f64;
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / targets.len() as f64)
}

/// Batched, differentiable form used in training: `logits` and `targets`
/// are `[B, N+1]`; returns the scalar mean over batch and classes.
///
/// Works on logits for stability: log σ(z) = -softplus(-z), computed as
/// `-(max(-z, 0) + ln(1 + e^{-|z|}))`. Values are then clamped to the same
/// `[ln EPS, ln(1-EPS)]` window as [`bce_multilabel_loss`].
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.dims() != targets.dims() {
        return Err(Error::contract(format!(
            "logits {:?} vs targets {:?}",
            logits.dims(),
            targets.dims()
        )));
    }
    let log_sigmoid = |z: &Tensor| -> candle_core::Result<Tensor> {
        let softplus = (z.neg()?.relu()? + (z.abs()?.neg()?.exp()? + 1.0)?.log()?)?;
        let lo = PROB_EPS.ln();
        let hi = (1.0 - PROB_EPS).ln();
        softplus.neg()?.clamp(lo, hi)
    };
    let log_p = log_sigmoid(logits)?;
    let log_not_p = log_sigmoid(&logits.neg()?)?;
    let not_targets = targets.affine(-1.0, 1.0)?;
    let per_slot = ((targets * log_p)? + (not_targets * log_not_p)?)?;
    Ok(per_slot.mean_all()?.neg()?)
}
