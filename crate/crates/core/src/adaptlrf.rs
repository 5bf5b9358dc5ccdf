//! Overfit-triggered rank-1 weight simplification.
//!
//! Each epoch the controller records the validation-to-train error ratio
//! `v`. Once the last `patience` ratios average above the threshold, it
//! takes the epoch's condition report, draws a Bernoulli gate per trainable
//! layer with probability `gamma` (the max-normalized condition number), and
//! replaces every gated layer's weight tensor with its best rank-1
//! reconstruction. Biases are never touched. The ratio window is cleared
//! after a trigger so a fresh run of high ratios is needed to fire again.
//!
//! Layer indices in selections and logs count trainable layers only,
//! 0-based, in network order.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionReport;
use crate::linalg::{lrf_simplify, rank1_factorize, LinalgError};
use crate::net::Network;

/// Ratio reported when the training error underflows: maximal overfitting
/// suspicion, capped so downstream means stay finite.
pub const ZERO_TRAIN_SENTINEL: f64 = 1e6;

const ZERO_TRAIN_FLOOR: f64 = 1e-12;

/// Validation-to-train error ratio, the per-epoch overfitting signal.
/// A vanishing training error maps to the capped sentinel.
pub fn error_ratio(train_err: f64, val_err: f64) -> f64 {
    if train_err <= ZERO_TRAIN_FLOOR {
        ZERO_TRAIN_SENTINEL
    } else {
        val_err / train_err
    }
}

/// Ring buffer of recent validation/train error ratios with a trigger
/// threshold. No verdict is produced until `patience` ratios are recorded.
#[derive(Debug, Clone)]
pub struct OverfitSignal {
    window: VecDeque<f64>,
    patience: usize,
    tau: f64,
}

impl OverfitSignal {
    pub fn new(patience: usize, tau: f64) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            window: VecDeque::with_capacity(patience),
            patience,
            tau,
        }
    }

    /// Record one epoch's errors and return the ratio `v = val / train`.
    pub fn record_errors(&mut self, train_err: f64, val_err: f64) -> f64 {
        let v = error_ratio(train_err, val_err);
        if self.window.len() == self.patience {
            self.window.pop_front();
        }
        self.window.push_back(v);
        v
    }

    /// Mean of the window once it holds `patience` values.
    pub fn mean(&self) -> Option<f64> {
        (self.window.len() == self.patience)
            .then(|| self.window.iter().sum::<f64>() / self.patience as f64)
    }

    /// True once the window is full and its mean exceeds the threshold.
    pub fn overfit_detected(&self) -> bool {
        self.mean().is_some_and(|m| m > self.tau)
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn patience(&self) -> usize {
        self.patience
    }
}

/// Which layers to simplify when a trigger fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// The first `k` trainable layers, unconditionally.
    FirstK { k: usize },
    /// The last `d` trainable layers, unconditionally.
    LastD { d: usize },
    /// Independent Bernoulli gate per layer with probability `gamma`; the
    /// max-condition layer has `gamma = 1` and is always selected.
    AdaptiveRandom,
}

impl Strategy {
    pub fn validate(&self, trainable_layers: usize) -> Result<(), String> {
        match self {
            Strategy::FirstK { k } => {
                if *k < 1 || *k > trainable_layers {
                    return Err(format!(
                        "first_k: k = {k} outside [1, {trainable_layers}]"
                    ));
                }
            }
            Strategy::LastD { d } => {
                if *d < 1 || *d > trainable_layers {
                    return Err(format!(
                        "last_d: d = {d} outside [1, {trainable_layers}]"
                    ));
                }
            }
            Strategy::AdaptiveRandom => {}
        }
        Ok(())
    }
}

/// Pick trainable-layer positions according to the strategy. The adaptive
/// strategy draws one uniform `r` in [0, 1) per layer and selects it when
/// `r <= gamma`.
pub fn select_layers(
    strategy: Strategy,
    report: &ConditionReport,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let l = report.gamma.len();
    match strategy {
        Strategy::FirstK { k } => (0..k.min(l)).collect(),
        Strategy::LastD { d } => (l.saturating_sub(d)..l).collect(),
        Strategy::AdaptiveRandom => (0..l)
            .filter(|&i| rng.gen::<f64>() <= report.gamma[i])
            .collect(),
    }
}

/// How 4-D kernels are fed to the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplifyMode {
    /// Slice per input channel and factorize each slice.
    #[default]
    Tensor,
    /// Reshape the whole kernel to (kh*kw*cin, cout) and factorize once.
    Matrix,
}

/// Replace each selected layer's weights by their rank-1 reconstruction.
/// `selected` holds trainable-layer positions. Biases stay bit-identical.
/// Returns the number of layers modified.
///
/// Callers that keep per-parameter optimizer moments should reset the
/// moments of replaced weights; the old moments describe a surface that no
/// longer exists.
pub fn apply_regularization(
    net: &mut Network,
    selected: &[usize],
    mode: SimplifyMode,
) -> Result<usize, LinalgError> {
    let trainable = net.trainable_indices();
    let mut count = 0;
    for &pos in selected {
        let idx = trainable[pos];
        let layer = net.layer_mut(idx);
        let weight = layer.state.weight.as_ref().expect("trainable layer");
        let simplified = match (weight.rank(), mode) {
            (4, SimplifyMode::Matrix) => {
                let shape = weight.shape().to_vec();
                let rows = shape[0] * shape[1] * shape[2];
                let flat = weight.reshape(&[rows, shape[3]])?;
                rank1_factorize(&flat)?.reconstruct().reshape(&shape)?
            }
            _ => lrf_simplify(weight)?,
        };
        layer.state.weight = Some(simplified);
        count += 1;
    }
    Ok(count)
}

/// One JSONL entry per epoch describing what the controller did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub epoch: usize,
    /// This epoch's validation/train error ratio.
    pub v: f64,
    /// Mean of the patience window, once full.
    pub mean_v: Option<f64>,
    pub triggered: bool,
    /// Trainable-layer positions simplified this epoch.
    pub selected_layers: Vec<usize>,
    pub sncn_before: Option<f64>,
    pub sncn_after: Option<f64>,
}

/// The per-run controller: owns the ratio window and applies the trigger
/// pipeline once per epoch, after evaluation.
#[derive(Debug, Clone)]
pub struct AdaptiveLrf {
    signal: OverfitSignal,
    strategy: Strategy,
    mode: SimplifyMode,
}

impl AdaptiveLrf {
    pub fn new(tau: f64, patience: usize, strategy: Strategy, mode: SimplifyMode) -> Self {
        Self {
            signal: OverfitSignal::new(patience, tau),
            strategy,
            mode,
        }
    }

    pub fn signal(&self) -> &OverfitSignal {
        &self.signal
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Record this epoch's errors; on a trigger, select layers from the
    /// report and simplify their weights, then clear the window.
    ///
    /// `sncn_after` is left `None`; the trainer fills it from a fresh
    /// condition report after the mutation.
    pub fn step(
        &mut self,
        net: &mut Network,
        epoch: usize,
        train_err: f64,
        val_err: f64,
        report: &ConditionReport,
        rng: &mut impl Rng,
    ) -> Result<ActionRecord, LinalgError> {
        let v = self.signal.record_errors(train_err, val_err);
        let mean_v = self.signal.mean();
        let triggered = self.signal.overfit_detected();
        let mut selected = Vec::new();
        let mut sncn_before = None;
        if triggered {
            selected = select_layers(self.strategy, report, rng);
            apply_regularization(net, &selected, self.mode)?;
            sncn_before = Some(report.sncn);
            self.signal.clear();
        }
        Ok(ActionRecord {
            epoch,
            v,
            mean_v,
            triggered,
            selected_layers: selected,
            sncn_before,
            sncn_after: None,
        })
    }
}
