use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;

use super::{NetError, Network};

// Probability floor inside the cross-entropy logarithm.
const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Batch loss: mean over samples of the squared residual (mse) or of the
/// negative log-likelihood under one-hot (or soft) targets (cross_entropy).
pub fn loss_value(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64, NetError> {
    if pred.shape() != target.shape() {
        return Err(NetError::Shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let batch = pred.shape()[0] as f64;
    match kind {
        LossKind::Mse => {
            let sum: f64 = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            Ok(sum / batch)
        }
        LossKind::CrossEntropy => {
            let mut sum = 0.0;
            for (p, t) in pred.data().iter().zip(target.data()) {
                if *t == 0.0 {
                    continue;
                }
                let clamped = p.max(CE_FLOOR);
                if !(clamped > 0.0) {
                    return Err(NetError::Domain(format!(
                        "cross-entropy probability {p} invalid after clamping"
                    )));
                }
                sum -= t * clamped.ln();
            }
            Ok(sum / batch)
        }
    }
}

/// Gradient of [`loss_value`] with respect to the predictions.
pub fn loss_grad(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<Tensor, NetError> {
    if pred.shape() != target.shape() {
        return Err(NetError::Shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let batch = pred.shape()[0] as f64;
    let mut grad = Tensor::zeros(pred.shape());
    match kind {
        LossKind::Mse => {
            for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
                *g = 2.0 * (p - t) / batch;
            }
        }
        LossKind::CrossEntropy => {
            for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
                // The loss is flat below the clamp floor.
                if *t != 0.0 && *p > CE_FLOOR {
                    *g = -t / (p * batch);
                }
            }
        }
    }
    Ok(grad)
}

/// Snapshot of one trainable layer's parameters used as the penalty anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Anchored Frobenius penalty: the loss becomes
/// `E(theta) + gamma * sum_l |theta_l - anchor_l|_F^2`.
///
/// The anchor is the rank-1 simplification of the best-validation weights;
/// biases anchor to their snapshot values unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub gamma: f64,
    pub anchor: Vec<AnchorEntry>,
}

/// Penalized loss: `base_loss + gamma * sum_l |theta_l - anchor_l|_F^2`
/// over the trainable layers' weights and biases.
pub fn lrf_penalty_loss(
    net: &Network,
    base_loss: f64,
    cfg: &PenaltyConfig,
) -> Result<f64, NetError> {
    let trainable = net.trainable_indices();
    if cfg.anchor.len() != trainable.len() {
        return Err(NetError::Shape(format!(
            "penalty anchor covers {} layers, network has {} trainable",
            cfg.anchor.len(),
            trainable.len()
        )));
    }
    if cfg.gamma == 0.0 {
        return Ok(base_loss);
    }
    let mut penalty = 0.0;
    for (anchor, &idx) in cfg.anchor.iter().zip(&trainable) {
        let layer = &net.layers()[idx];
        let w = layer.state.weight.as_ref().expect("trainable layer");
        if anchor.weight.shape() != w.shape() {
            return Err(NetError::Shape("penalty anchor weight shape mismatch".into()));
        }
        let dw = w.sub(&anchor.weight)?.frobenius_norm();
        penalty += dw * dw;
        match (&layer.state.bias, &anchor.bias) {
            (Some(b), Some(ab)) => {
                let db = b.sub(ab)?.frobenius_norm();
                penalty += db * db;
            }
            (None, None) => {}
            _ => return Err(NetError::Shape("penalty anchor bias presence mismatch".into())),
        }
    }
    Ok(base_loss + cfg.gamma * penalty)
}
