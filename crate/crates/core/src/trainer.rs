//! The optimization loop: minibatch Adam, per-epoch evaluation on all
//! splits, condition reports, the simplification controller, and
//! best-validation snapshots for the anchor penalty.
//!
//! A `fit` call owns its network and optimizer exclusively. Everything is
//! driven by explicitly seeded RNG streams (shuffling, dropout, probe
//! sampling, layer selection), so a (seed, config, data) triple fully
//! determines the run history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptlrf::{error_ratio, ActionRecord, AdaptiveLrf, SimplifyMode, Strategy};
use crate::conditioning::{condition_report, CondError, ConditionReport};
use crate::harness::Dataset;
use crate::linalg::{lrf_simplify, LinalgError, Tensor};
use crate::net::{
    loss_value, AnchorEntry, LayerGrads, NetError, Network, ParamSet, PenaltyConfig,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        /// Parameters from the end of the previous epoch, for dumping.
        last_good: Box<ParamSet>,
    },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("dataset has {dataset} classes but the network outputs {network}")]
    ClassMismatch { dataset: usize, network: usize },
    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Cond(#[from] CondError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Adam constants plus the minibatch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
        }
    }
}

/// Per-parameter Adam moments, aligned with the network's layers.
#[derive(Debug, Clone)]
pub struct OptimState {
    cfg: OptimConfig,
    first: Vec<(Option<Tensor>, Option<Tensor>)>,
    second: Vec<(Option<Tensor>, Option<Tensor>)>,
    step: usize,
}

impl OptimState {
    pub fn new(net: &Network, cfg: OptimConfig) -> Self {
        let zeros = |t: &Option<Tensor>| t.as_ref().map(|t| Tensor::zeros(t.shape()));
        let mirror: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (zeros(&l.state.weight), zeros(&l.state.bias)))
            .collect();
        Self {
            cfg,
            first: mirror.clone(),
            second: mirror,
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One bias-corrected Adam update from per-layer gradients.
    pub fn adam_step(
        &mut self,
        net: &mut Network,
        grads: &[LayerGrads],
    ) -> Result<(), TrainError> {
        if grads.len() != self.first.len() {
            return Err(NetError::Shape("gradient set does not match optimizer state".into()).into());
        }
        self.step += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for (idx, grad) in grads.iter().enumerate() {
            for (param_grad, is_bias) in [(&grad.weight, false), (&grad.bias, true)] {
                let Some(g) = param_grad else { continue };
                let layer = net.layer_mut(idx);
                let param = if is_bias {
                    layer.state.bias.as_mut()
                } else {
                    layer.state.weight.as_mut()
                }
                .ok_or_else(|| NetError::Shape("gradient for a missing parameter".into()))?;
                if param.shape() != g.shape() {
                    return Err(NetError::Shape("gradient shape mismatch".into()).into());
                }
                let slot = &mut self.first[idx];
                let m = if is_bias { &mut slot.1 } else { &mut slot.0 };
                let m = m.as_mut().expect("moments mirror parameters");
                let slot = &mut self.second[idx];
                let v = if is_bias { &mut slot.1 } else { &mut slot.0 };
                let v = v.as_mut().expect("moments mirror parameters");
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                for ((p, g), (m, v)) in param
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
                }
            }
        }
        Ok(())
    }

    /// Zero the weight moments of one layer; used after its weights were
    /// replaced wholesale, when the old moments describe a surface that no
    /// longer exists.
    pub fn reset_weight_moments(&mut self, layer_index: usize) {
        for moments in [&mut self.first, &mut self.second] {
            if let Some(m) = moments[layer_index].0.as_mut() {
                m.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
}

/// Which regularizer a run uses: one family per run, or an explicitly
/// flagged combination of distinct families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    None,
    /// Inverted dropout at probability `p` on every trainable layer except
    /// the output layer (applied when the network is built).
    Dropout { p: f64 },
    WeightDecay { lambda: f64 },
    AdaptiveLrf {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_patience")]
        patience: usize,
        #[serde(default = "default_strategy")]
        strategy: Strategy,
        #[serde(default)]
        mode: SimplifyMode,
        #[serde(default = "default_true")]
        reset_moments: bool,
    },
    LrfPenalty {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    /// At most one part per family; rejected by config validation unless
    /// the config flags combinations as allowed.
    Combined { parts: Vec<Regularizer> },
}

/// Adaptive-simplification knobs extracted from a [`Regularizer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub tau: f64,
    pub patience: usize,
    pub strategy: Strategy,
    pub mode: SimplifyMode,
    pub reset_moments: bool,
}

/// Flattened view of a regularizer choice, one slot per family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegularizerPlan {
    pub dropout_p: f64,
    pub weight_decay: f64,
    pub adaptive: Option<AdaptiveParams>,
    pub penalty_gamma: Option<f64>,
}

impl Regularizer {
    /// Merge into per-family slots; duplicate families and nested
    /// combinations are errors.
    pub fn plan(&self) -> Result<RegularizerPlan, String> {
        let mut plan = RegularizerPlan::default();
        self.merge_into(&mut plan, false)?;
        Ok(plan)
    }

    fn merge_into(&self, plan: &mut RegularizerPlan, nested: bool) -> Result<(), String> {
        match self {
            Regularizer::None => {}
            Regularizer::Dropout { p } => {
                if plan.dropout_p != 0.0 {
                    return Err("dropout specified twice".into());
                }
                if !(0.0..1.0).contains(p) {
                    return Err(format!("dropout p = {p} outside [0, 1)"));
                }
                plan.dropout_p = *p;
            }
            Regularizer::WeightDecay { lambda } => {
                if plan.weight_decay != 0.0 {
                    return Err("weight_decay specified twice".into());
                }
                if *lambda < 0.0 {
                    return Err(format!("weight_decay lambda = {lambda} negative"));
                }
                plan.weight_decay = *lambda;
            }
            Regularizer::AdaptiveLrf {
                tau,
                patience,
                strategy,
                mode,
                reset_moments,
            } => {
                if plan.adaptive.is_some() {
                    return Err("adaptive_lrf specified twice".into());
                }
                if *patience == 0 {
                    return Err("adaptive_lrf patience must be at least 1".into());
                }
                plan.adaptive = Some(AdaptiveParams {
                    tau: *tau,
                    patience: *patience,
                    strategy: *strategy,
                    mode: *mode,
                    reset_moments: *reset_moments,
                });
            }
            Regularizer::LrfPenalty { gamma } => {
                if plan.penalty_gamma.is_some() {
                    return Err("lrf_penalty specified twice".into());
                }
                if *gamma < 0.0 {
                    return Err(format!("lrf_penalty gamma = {gamma} negative"));
                }
                plan.penalty_gamma = Some(*gamma);
            }
            Regularizer::Combined { parts } => {
                if nested {
                    return Err("nested combined regularizers".into());
                }
                if parts.is_empty() {
                    return Err("combined regularizer has no parts".into());
                }
                for part in parts {
                    part.merge_into(plan, true)?;
                }
            }
        }
        Ok(())
    }

    /// Stable human-readable name used for file names and summary rows.
    pub fn default_label(&self) -> String {
        match self {
            Regularizer::None => "none".into(),
            Regularizer::Dropout { p } => format!("dropout_{p}"),
            Regularizer::WeightDecay { lambda } => format!("weight_decay_{lambda}"),
            Regularizer::AdaptiveLrf { strategy, .. } => match strategy {
                Strategy::FirstK { k } => format!("adaptive_lrf_first_{k}"),
                Strategy::LastD { d } => format!("adaptive_lrf_last_{d}"),
                Strategy::AdaptiveRandom => "adaptive_lrf".into(),
            },
            Regularizer::LrfPenalty { gamma } => format!("lrf_penalty_{gamma}"),
            Regularizer::Combined { parts } => {
                let names: Vec<String> = parts.iter().map(|p| p.default_label()).collect();
                format!("combined_{}", names.join("_"))
            }
        }
    }
}

pub(crate) fn default_tau() -> f64 {
    1.4
}

pub(crate) fn default_patience() -> usize {
    3
}

fn default_strategy() -> Strategy {
    Strategy::AdaptiveRandom
}

fn default_true() -> bool {
    true
}

pub(crate) fn default_gamma() -> f64 {
    1.0
}

/// Everything `fit` needs besides the network and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optim: OptimConfig,
    pub regularizer: Regularizer,
    pub seed: u64,
    /// Validation samples per condition-report probe batch.
    pub probe_size: usize,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            optim: OptimConfig::default(),
            regularizer: Regularizer::None,
            seed,
            probe_size: 64,
            early_stop_patience: None,
        }
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer) -> Self {
        self.regularizer = regularizer;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub f_measure: f64,
}

/// One row of the per-epoch history. The CSV projection keeps the columns
/// `epoch,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc,v,sncn,triggered`;
/// the F-measures feed the run summary only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: EvalMetrics,
    pub val: EvalMetrics,
    pub test: EvalMetrics,
    pub v: f64,
    pub sncn: f64,
    pub triggered: bool,
}

/// Best-validation parameters seen so far.
#[derive(Debug, Clone)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_loss: f64,
    pub params: ParamSet,
}

/// Full per-run trace: per-epoch records, controller actions, condition
/// reports, and the best-validation snapshot.
#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    pub records: Vec<EpochRecord>,
    pub actions: Vec<ActionRecord>,
    pub conditions: Vec<ConditionReport>,
    pub best: Option<BestSnapshot>,
}

/// Copy the given sample rows into a new batch tensor.
pub fn gather_rows(t: &Tensor, indices: &[usize]) -> Tensor {
    let row: usize = t.shape()[1..].iter().product();
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    let mut data = Vec::with_capacity(indices.len() * row);
    for &i in indices {
        data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    Tensor::new(shape, data).expect("rows of a valid tensor")
}

/// One-hot rows for integer class labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.set2(i, l, 1.0);
    }
    t
}

/// Macro-averaged F1 over all classes; classes with no true or predicted
/// instances contribute zero.
pub fn macro_f1(predictions: &[usize], labels: &[usize], classes: usize) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let mut f_sum = 0.0;
    for c in 0..classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f_sum += 2.0 * tp / denom;
        }
    }
    f_sum / classes as f64
}

const EVAL_CHUNK: usize = 256;

/// Loss, argmax accuracy, and macro F1 on a dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<EvalMetrics, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let out_shape = net.output_shape();
    if out_shape.len() != 1 || out_shape[0] != data.classes {
        return Err(TrainError::ClassMismatch {
            dataset: data.classes,
            network: out_shape.iter().product(),
        });
    }
    let n = data.len();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let x = gather_rows(&data.features, &indices);
        let targets = one_hot(&data.labels[start..end], data.classes);
        let pred = net.forward_eval(&x)?;
        loss_sum += loss_value(&pred, &targets, net.loss_kind())? * (end - start) as f64;
        for i in 0..(end - start) {
            let row = &pred.data()[i * data.classes..(i + 1) * data.classes];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(j, _)| j)
                .unwrap_or(0);
            predictions.push(argmax);
        }
        start = end;
    }
    let correct = predictions
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(EvalMetrics {
        loss: loss_sum / n as f64,
        accuracy: correct as f64 / n as f64,
        f_measure: macro_f1(&predictions, &data.labels, data.classes),
    })
}

// Argmax ties in `evaluate` break toward the lower class index.

fn fisher_yates(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// RNG stream ids per concern, so enabling one knob never perturbs another.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_PROBE: u64 = 3;
const STREAM_CONTROLLER: u64 = 4;

fn build_anchor(params: &ParamSet, net: &Network, gamma: f64) -> Result<PenaltyConfig, TrainError> {
    let mut anchor = Vec::new();
    for &idx in &net.trainable_indices() {
        let (w, b) = &params.layers[idx];
        let w = w.as_ref().expect("trainable layer weight");
        anchor.push(AnchorEntry {
            weight: lrf_simplify(w)?,
            bias: b.clone(),
        });
    }
    Ok(PenaltyConfig { gamma, anchor })
}

/// Train for the configured number of epochs.
///
/// Each epoch: shuffled minibatch Adam passes, evaluation on every split, a
/// condition report on a fresh probe batch of validation samples, the
/// controller step (when adaptive simplification is active), and the
/// best-validation snapshot update. In penalty mode the anchor refreshes to
/// the simplified snapshot whenever validation improves.
///
/// Aborts with [`TrainError::NonFiniteLoss`] carrying the last good
/// parameters if any split loss turns NaN or infinite.
pub fn fit(
    net: &mut Network,
    splits: &crate::harness::DataSplits,
    cfg: &TrainConfig,
) -> Result<RunHistory, TrainError> {
    let mut history = RunHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if splits.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if splits.val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    if splits.test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }

    let mut shuffle_rng = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut probe_rng = stream_rng(cfg.seed, STREAM_PROBE);
    let mut ctrl_rng = stream_rng(cfg.seed, STREAM_CONTROLLER);

    let plan = cfg
        .regularizer
        .plan()
        .map_err(TrainError::InvalidRegularizer)?;
    let mut optim = OptimState::new(net, cfg.optim);
    let weight_decay = plan.weight_decay;
    let penalty_gamma = plan.penalty_gamma;
    let mut controller = plan
        .adaptive
        .map(|a| AdaptiveLrf::new(a.tau, a.patience, a.strategy, a.mode));
    let reset_moments = plan.adaptive.is_some_and(|a| a.reset_moments);

    let mut penalty: Option<PenaltyConfig> = None;
    let mut best: Option<BestSnapshot> = None;
    let mut last_good = net.params();
    let n_train = splits.train.len();
    let trainable = net.trainable_indices();

    for epoch in 1..=cfg.epochs {
        // Minibatch passes.
        let mut order: Vec<usize> = (0..n_train).collect();
        fisher_yates(&mut order, &mut shuffle_rng);
        for chunk in order.chunks(cfg.optim.batch_size.max(1)) {
            let x = gather_rows(&splits.train.features, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| splits.train.labels[i]).collect();
            let targets = one_hot(&labels, splits.train.classes);
            net.forward_train(&x, &mut dropout_rng)?;
            let grads = net.backward(&targets, penalty.as_ref(), weight_decay)?;
            optim.adam_step(net, &grads)?;
        }

        // Evaluation on every split.
        let train_m = evaluate(net, &splits.train)?;
        let val_m = evaluate(net, &splits.val)?;
        let test_m = evaluate(net, &splits.test)?;
        if !(train_m.loss.is_finite() && val_m.loss.is_finite() && test_m.loss.is_finite()) {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                last_good: Box::new(last_good),
            });
        }

        // Condition report on a fresh probe batch of validation samples.
        let mut val_indices: Vec<usize> = (0..splits.val.len()).collect();
        fisher_yates(&mut val_indices, &mut probe_rng);
        val_indices.truncate(cfg.probe_size.min(splits.val.len()));
        let probe = gather_rows(&splits.val.features, &val_indices);
        let report = condition_report(net, &probe, epoch)?;

        // Snapshot before any mutation this epoch.
        if best.as_ref().is_none_or(|b| val_m.loss < b.val_loss) {
            let snapshot = BestSnapshot {
                epoch,
                val_loss: val_m.loss,
                params: net.params(),
            };
            if let Some(gamma) = penalty_gamma {
                penalty = Some(build_anchor(&snapshot.params, net, gamma)?);
            }
            best = Some(snapshot);
        }

        let mut triggered = false;
        let sncn = report.sncn;
        if let Some(ctrl) = controller.as_mut() {
            let mut action = ctrl.step(net, epoch, train_m.loss, val_m.loss, &report, &mut ctrl_rng)?;
            if action.triggered {
                triggered = true;
                let after = condition_report(net, &probe, epoch)?;
                action.sncn_after = Some(after.sncn);
                if reset_moments {
                    for &pos in &action.selected_layers {
                        optim.reset_weight_moments(trainable[pos]);
                    }
                }
            }
            history.actions.push(action);
        }
        history.conditions.push(report);

        history.records.push(EpochRecord {
            epoch,
            train: train_m,
            val: val_m,
            test: test_m,
            v: error_ratio(train_m.loss, val_m.loss),
            sncn,
            triggered,
        });
        last_good = net.params();

        if let (Some(patience), Some(b)) = (cfg.early_stop_patience, best.as_ref()) {
            if epoch - b.epoch >= patience {
                break;
            }
        }
    }
    history.best = best;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_noisy_surface_dataset, split_dataset};
    use crate::net::{Activation, LayerSpec, LossKind};

    fn tiny_net(seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::new(
            vec![2],
            vec![
                LayerSpec::dense(2, 8, Activation::Tanh),
                LayerSpec::dense(8, 2, Activation::Softmax),
            ],
            LossKind::CrossEntropy,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = tiny_net(1);
        let before = net.params();
        let mut optim = OptimState::new(&net, OptimConfig::default());
        let grads: Vec<LayerGrads> = net
            .layers()
            .iter()
            .map(|l| LayerGrads {
                weight: l.state.weight.as_ref().map(|w| Tensor::zeros(w.shape())),
                bias: l.state.bias.as_ref().map(|b| Tensor::zeros(b.shape())),
            })
            .collect();
        optim.adam_step(&mut net, &grads).unwrap();
        assert_eq!(net.params(), before);
    }

    #[test]
    fn first_adam_step_has_closed_form_magnitude() {
        // From theta = 0 with constant gradient g, the bias-corrected first
        // step is lr * g / (|g| + eps).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::new(
            vec![1],
            vec![LayerSpec::dense(1, 1, Activation::None).without_bias()],
            LossKind::Mse,
            &mut rng,
        )
        .unwrap();
        net.layer_mut(0).state.weight = Some(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let cfg = OptimConfig::default();
        let mut optim = OptimState::new(&net, cfg);
        let g = 0.37;
        let grads = vec![LayerGrads {
            weight: Some(Tensor::matrix(1, 1, vec![g]).unwrap()),
            bias: None,
        }];
        optim.adam_step(&mut net, &grads).unwrap();
        let expected = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
        let got = net.layers()[0].state.weight.as_ref().unwrap().data()[0];
        assert!((got - expected).abs() < 1e-9, "step {got} vs {expected}");
    }

    #[test]
    fn perfect_predictions_score_perfectly() {
        let mut net = tiny_net(3);
        // Make the network output class = argmax of input coordinates by
        // training-free construction: identity-ish weights suffice for the
        // separable two-point dataset below.
        net.layer_mut(0).state.weight =
            Some(Tensor::from_fn(&[2, 8], |i| if i % 9 == 0 { 5.0 } else { 0.0 }).unwrap());
        net.layer_mut(1).state.weight =
            Some(Tensor::from_fn(&[8, 2], |i| if i % 3 == 0 { 5.0 } else { 0.0 }).unwrap());
        let data = Dataset::new(
            Tensor::matrix(2, 2, vec![2.0, -2.0, -2.0, 2.0]).unwrap(),
            vec![0, 1],
            2,
        )
        .unwrap();
        let m = evaluate(&net, &data).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f_measure, 1.0);
    }

    #[test]
    fn macro_f1_matches_confusion_matrix_oracle() {
        // Binary confusion: TP=3 FP=1 FN=1 TN=5.
        // class-1 F1 = 0.75, class-0 F1 = 10/12, macro = 0.791666...
        let labels = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let preds = vec![1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
        let f = macro_f1(&preds, &labels, 2);
        let expected = (0.75 + 10.0 / 12.0) / 2.0;
        assert!((f - expected).abs() < 1e-12, "macro f1 {f}");
        assert!((f - 0.7917).abs() < 1e-4);
    }

    #[test]
    fn single_class_predictions_on_balanced_set() {
        let labels = vec![0, 1, 0, 1];
        let preds = vec![0, 0, 0, 0];
        let acc = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / 4.0;
        assert_eq!(acc, 0.5);
        // class 0: tp=2 fp=2 fn=0 -> 2/3; class 1: 0
        let f = macro_f1(&preds, &labels, 2);
        assert!((f - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_touch_nothing() {
        let mut net = tiny_net(4);
        let before = net.params();
        let ds = make_noisy_surface_dataset(50, 0.1, 5);
        let splits = split_dataset(&ds, 0.6, 0.2, 5);
        let history = fit(&mut net, &splits, &TrainConfig::new(0, 5)).unwrap();
        assert!(history.records.is_empty());
        assert_eq!(net.params(), before);
    }

    #[test]
    fn fit_is_deterministic_given_seed() {
        let ds = make_noisy_surface_dataset(80, 0.2, 6);
        let splits = split_dataset(&ds, 0.6, 0.2, 6);
        let cfg = TrainConfig::new(10, 42);
        let mut net_a = tiny_net(42);
        let hist_a = fit(&mut net_a, &splits, &cfg).unwrap();
        let mut net_b = tiny_net(42);
        let hist_b = fit(&mut net_b, &splits, &cfg).unwrap();
        assert_eq!(net_a.params(), net_b.params());
        assert_eq!(hist_a.records, hist_b.records);
    }

    #[test]
    fn snapshot_tracks_minimum_validation_loss() {
        let ds = make_noisy_surface_dataset(80, 0.25, 7);
        let splits = split_dataset(&ds, 0.6, 0.2, 7);
        let cfg = TrainConfig::new(15, 3);
        let mut net = tiny_net(3);
        let history = fit(&mut net, &splits, &cfg).unwrap();
        let best = history.best.as_ref().unwrap();
        let min_val = history
            .records
            .iter()
            .map(|r| r.val.loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best.val_loss, min_val);
    }

    #[test]
    fn separable_blobs_are_learned() {
        // Two linearly separable blobs: a small MLP must fit the training
        // set almost perfectly within 50 epochs.
        let n = 100;
        let features = Tensor::from_fn(&[n, 2], |i| {
            let sample = i / 2;
            let offset = if sample % 2 == 0 { 2.0 } else { -2.0 };
            offset + ((i * 37 % 17) as f64 / 17.0 - 0.5)
        })
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = Dataset::new(features, labels, 2).unwrap();
        let splits = split_dataset(&ds, 0.6, 0.2, 8);
        let mut net = tiny_net(8);
        let mut cfg = TrainConfig::new(50, 8);
        cfg.optim.learning_rate = 0.02;
        let history = fit(&mut net, &splits, &cfg).unwrap();
        let last = history.records.last().unwrap();
        assert!(last.train.accuracy >= 0.95, "train acc {}", last.train.accuracy);
    }
}
