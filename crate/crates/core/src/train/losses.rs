use crate::nn::Tensor2;
use crate::{Error, Result};

/// Scores are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy of `scores` (an `n x 1` column) against a
/// constant target, with its gradient w.r.t. the scores.
pub fn bce(scores: &Tensor2, target: f64) -> (f64, Tensor2) {
    let n = scores.len().max(1) as f64;
    let mut grad = Tensor2::zeros(scores.raw_dim());
    let mut loss = 0.0;
    for (g, &s) in grad.iter_mut().zip(scores.iter()) {
        if target == 1.0 {
            let c = s.max(BCE_CLAMP);
            loss -= c.ln();
            *g = if s > BCE_CLAMP { -1.0 / (s * n) } else { 0.0 };
        } else {
            let c = (1.0 - s).max(BCE_CLAMP);
            loss -= c.ln();
            *g = if 1.0 - s > BCE_CLAMP { 1.0 / ((1.0 - s) * n) } else { 0.0 };
        }
    }
    (loss / n, grad)
}

/// Adversarial generator loss: mean BCE of fake scores against "real".
pub fn generator_loss(fake_scores: &Tensor2) -> f64 {
    bce(fake_scores, 1.0).0
}

/// Discriminator loss: BCE(real -> 1) + BCE(fake -> 0), each a batch mean.
pub fn discriminator_loss(real_scores: &Tensor2, fake_scores: &Tensor2) -> f64 {
    bce(real_scores, 1.0).0 + bce(fake_scores, 0.0).0
}

/// Mean over stages of each stage's mean squared joint distance, measured in
/// `unit_mm`. Returns the loss and its gradient w.r.t. every stage prediction
/// (per millimeter).
pub fn pose_loss(preds: &[&Tensor2], targets: &[&Tensor2], unit_mm: f64) -> Result<(f64, Vec<Tensor2>)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::shape("pose loss needs one target per stage"));
    }
    let stages = preds.len() as f64;
    let u2 = unit_mm * unit_mm;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        if p.dim() != t.dim() || p.ncols() % 3 != 0 || p.nrows() == 0 {
            return Err(Error::shape(format!(
                "stage prediction {:?} vs target {:?}",
                p.dim(),
                t.dim()
            )));
        }
        let count = (p.nrows() * p.ncols() / 3) as f64;
        let diff = *p - *t;
        total += diff.mapv(|v| v * v).sum() / (count * u2);
        grads.push(diff * (2.0 / (count * u2 * stages)));
    }
    Ok((total / stages, grads))
}
