//! Minimal feedforward networks: dense and 2-D convolution layers with fused
//! activations, inverted dropout, exact backpropagation, and the rank-1
//! anchor penalty loss.
//!
//! A `Network` is single-writer: train-mode forwards cache activations that
//! `backward` consumes, so one training loop owns the instance exclusively.
//! Eval-mode forwards are read-only and safe to share.

mod checkpoint;
mod layer;
mod loss;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{LinalgError, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LayerCheckpoint};
pub use layer::{Activation, LayerKind, LayerSpec, LayerState};
pub use loss::{loss_grad, loss_value, lrf_penalty_loss, AnchorEntry, LossKind, PenaltyConfig};

use layer::Cache;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no cached train-mode forward pass precedes this backward call")]
    StaleCache,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    pub state: LayerState,
}

/// Ordered layers plus a loss tag. Adjacent layer shapes are validated at
/// construction; at least one trainable layer is required.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    loss: LossKind,
    last_output: Option<Tensor>,
}

/// Per-layer gradient of the (penalized) loss, aligned with the network's
/// layer order. Non-trainable layers carry `None`.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

/// Copy of every parameter tensor, aligned with the layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<(Option<Tensor>, Option<Tensor>)>,
}

/// Forward observations for one trainable layer, used by the
/// condition-number diagnostics.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Tensor,
    pub pre_activation: Tensor,
    pub output: Tensor,
}

impl Network {
    pub fn new(
        input_shape: Vec<usize>,
        specs: Vec<LayerSpec>,
        loss: LossKind,
        rng: &mut impl Rng,
    ) -> Result<Self, NetError> {
        if input_shape.is_empty() || input_shape.len() > 3 {
            return Err(NetError::Shape(format!(
                "per-sample input shape must have rank 1..=3, got {input_shape:?}"
            )));
        }
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            shape = spec
                .output_shape(&shape)
                .map_err(|e| NetError::Shape(format!("layer {i}: {e}")))?;
            if spec.activation.is_softmax() && shape.len() != 1 {
                return Err(NetError::Shape(format!(
                    "layer {i}: softmax needs a flat per-sample shape, got {shape:?}"
                )));
            }
            if !(0.0..1.0).contains(&spec.dropout_p) {
                return Err(NetError::Domain(format!(
                    "layer {i}: dropout_p {} outside [0, 1)",
                    spec.dropout_p
                )));
            }
            let state = spec.init_state(rng);
            layers.push(Layer { spec, state });
        }
        let net = Self {
            input_shape,
            layers,
            loss,
            last_output: None,
        };
        if net.trainable_indices().is_empty() {
            return Err(NetError::Shape("network has no trainable layers".into()));
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer {
        &mut self.layers[index]
    }

    /// Indices of dense/conv layers, in network order.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spec.is_trainable())
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.spec.output_shape(&shape).expect("validated at build");
        }
        shape
    }

    pub fn params(&self) -> ParamSet {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| (l.state.weight.clone(), l.state.bias.clone()))
                .collect(),
        }
    }

    pub fn set_params(&mut self, params: &ParamSet) -> Result<(), NetError> {
        if params.layers.len() != self.layers.len() {
            return Err(NetError::Shape(format!(
                "parameter set covers {} layers, network has {}",
                params.layers.len(),
                self.layers.len()
            )));
        }
        for (layer, (w, b)) in self.layers.iter_mut().zip(&params.layers) {
            match (&layer.state.weight, w) {
                (Some(cur), Some(new)) if cur.shape() == new.shape() => {
                    layer.state.weight = Some(new.clone());
                }
                (None, None) => {}
                _ => return Err(NetError::Shape("weight shape mismatch in set_params".into())),
            }
            match (&layer.state.bias, b) {
                (Some(cur), Some(new)) if cur.shape() == new.shape() => {
                    layer.state.bias = Some(new.clone());
                }
                (None, None) => {}
                _ => return Err(NetError::Shape("bias shape mismatch in set_params".into())),
            }
        }
        Ok(())
    }

    fn check_batch(&self, x: &Tensor) -> Result<usize, NetError> {
        if x.rank() != self.input_shape.len() + 1 || &x.shape()[1..] != self.input_shape.as_slice()
        {
            return Err(NetError::Shape(format!(
                "batch shape {:?} does not extend input shape {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(x.shape()[0])
    }

    /// Eval-mode forward: deterministic, dropout-free, no caching.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor, NetError> {
        self.check_batch(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            let (_, _, out) = layer_forward(&layer.spec, &layer.state, &cur, None)?;
            cur = out;
        }
        Ok(cur)
    }

    /// Train-mode forward: applies inverted dropout to pre-activation units
    /// and caches everything `backward` needs.
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor, NetError> {
        self.check_batch(x)?;
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let (pre, mask, out) = layer_forward(&layer.spec, &layer.state, &cur, Some(rng))?;
            layer.state.cache = Some(Cache {
                input: cur,
                pre_activation: pre,
                output: out.clone(),
                dropout_scale: mask,
            });
            cur = out;
        }
        self.last_output = Some(cur.clone());
        Ok(cur)
    }

    /// Eval-mode forward that records each trainable layer's input,
    /// pre-activation and output without touching network state.
    pub fn forward_trace(&self, x: &Tensor) -> Result<(Tensor, Vec<Option<LayerTrace>>), NetError> {
        self.check_batch(x)?;
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (pre, _, out) = layer_forward(&layer.spec, &layer.state, &cur, None)?;
            traces.push(layer.spec.is_trainable().then(|| LayerTrace {
                input: cur.clone(),
                pre_activation: pre.clone().expect("trainable layers have pre-activations"),
                output: out.clone(),
            }));
            cur = out;
        }
        Ok((cur, traces))
    }

    /// Exact gradients of the (penalized) loss for every parameter tensor.
    ///
    /// Requires a preceding train-mode forward on this instance. Weight decay
    /// adds `lambda * W` to weight gradients only; the anchor penalty adds
    /// `2 * gamma * (theta - anchor)` to weights and biases.
    pub fn backward(
        &mut self,
        target: &Tensor,
        penalty: Option<&PenaltyConfig>,
        weight_decay: f64,
    ) -> Result<Vec<LayerGrads>, NetError> {
        let output = self.last_output.as_ref().ok_or(NetError::StaleCache)?;
        let mut grad = loss_grad(output, target, self.loss)?;

        let mut grads: Vec<LayerGrads> = (0..self.layers.len())
            .map(|_| LayerGrads {
                weight: None,
                bias: None,
            })
            .collect();

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let cache = layer.state.cache.as_ref().ok_or(NetError::StaleCache)?;
            let (gw, gb, gin) = layer_backward(&layer.spec, &layer.state, cache, &grad)?;
            grads[idx].weight = gw;
            grads[idx].bias = gb;
            grad = gin;
        }

        if weight_decay != 0.0 {
            for (layer, g) in self.layers.iter().zip(grads.iter_mut()) {
                if let (Some(w), Some(gw)) = (&layer.state.weight, g.weight.as_mut()) {
                    gw.add_scaled_in_place(w, weight_decay);
                }
            }
        }
        if let Some(cfg) = penalty {
            if cfg.gamma != 0.0 {
                self.apply_penalty_grads(cfg, &mut grads)?;
            }
        }
        Ok(grads)
    }

    fn apply_penalty_grads(
        &self,
        cfg: &PenaltyConfig,
        grads: &mut [LayerGrads],
    ) -> Result<(), NetError> {
        let trainable = self.trainable_indices();
        if cfg.anchor.len() != trainable.len() {
            return Err(NetError::Shape(format!(
                "penalty anchor covers {} layers, network has {} trainable",
                cfg.anchor.len(),
                trainable.len()
            )));
        }
        for (anchor, &idx) in cfg.anchor.iter().zip(&trainable) {
            let layer = &self.layers[idx];
            let w = layer.state.weight.as_ref().expect("trainable layer");
            if anchor.weight.shape() != w.shape() {
                return Err(NetError::Shape("penalty anchor weight shape mismatch".into()));
            }
            let gw = grads[idx].weight.as_mut().expect("trainable layer grad");
            let diff = w.sub(&anchor.weight)?;
            gw.add_scaled_in_place(&diff, 2.0 * cfg.gamma);
            match (&layer.state.bias, &anchor.bias) {
                (Some(b), Some(ab)) => {
                    if ab.shape() != b.shape() {
                        return Err(NetError::Shape("penalty anchor bias shape mismatch".into()));
                    }
                    let gb = grads[idx].bias.as_mut().expect("bias grad");
                    let diff = b.sub(ab)?;
                    gb.add_scaled_in_place(&diff, 2.0 * cfg.gamma);
                }
                (None, None) => {}
                _ => return Err(NetError::Shape("penalty anchor bias presence mismatch".into())),
            }
        }
        Ok(())
    }
}

// Single-layer eval-mode forward: (pre_activation, output).
pub(crate) fn layer_eval(
    spec: &LayerSpec,
    state: &LayerState,
    x: &Tensor,
) -> Result<(Option<Tensor>, Tensor), NetError> {
    let (pre, _, out) = layer_forward(spec, state, x, None)?;
    Ok((pre, out))
}

type ForwardParts = (Option<Tensor>, Option<Vec<f64>>, Tensor);

// Returns (pre_activation, dropout_scale, output). Pre-activation is None
// for parameterless layers; dropout applies only in train mode (rng given).
fn layer_forward(
    spec: &LayerSpec,
    state: &LayerState,
    x: &Tensor,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<ForwardParts, NetError> {
    match &spec.kind {
        LayerKind::Dense { .. } => {
            let w = state.weight.as_ref().expect("dense weight");
            if x.rank() != 2 {
                return Err(NetError::Shape(format!(
                    "dense layer expects a rank-2 batch, got {:?}",
                    x.shape()
                )));
            }
            let mut z = x.matmul(w)?;
            if let Some(b) = &state.bias {
                let (rows, cols) = (z.shape()[0], z.shape()[1]);
                for i in 0..rows {
                    for j in 0..cols {
                        z.set2(i, j, z.at2(i, j) + b.data()[j]);
                    }
                }
            }
            finish_trainable(spec, z, rng)
        }
        LayerKind::Conv2d { kh, kw, cin, cout, stride, .. } => {
            let k = state.weight.as_ref().expect("conv kernel");
            if x.rank() != 4 || x.shape()[3] != *cin {
                return Err(NetError::Shape(format!(
                    "conv2d expects batch shape [b, h, w, {cin}], got {:?}",
                    x.shape()
                )));
            }
            let (bsz, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let ho = (h - kh) / stride + 1;
            let wo = (w - kw) / stride + 1;
            let mut z = Tensor::zeros(&[bsz, ho, wo, *cout]);
            for b in 0..bsz {
                for oy in 0..ho {
                    for ox in 0..wo {
                        for co in 0..*cout {
                            let mut acc = state.bias.as_ref().map_or(0.0, |b| b.data()[co]);
                            for ky in 0..*kh {
                                for kx in 0..*kw {
                                    for ci in 0..*cin {
                                        acc += x.at4(b, oy * stride + ky, ox * stride + kx, ci)
                                            * k.at4(ky, kx, ci, co);
                                    }
                                }
                            }
                            z.set4(b, oy, ox, co, acc);
                        }
                    }
                }
            }
            finish_trainable(spec, z, rng)
        }
        LayerKind::Activation => Ok((None, None, spec.activation.apply(x))),
        LayerKind::Flatten => {
            let bsz = x.shape()[0];
            let flat: usize = x.shape()[1..].iter().product();
            Ok((None, None, x.reshape(&[bsz, flat])?))
        }
    }
}

fn finish_trainable(
    spec: &LayerSpec,
    mut z: Tensor,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<ForwardParts, NetError> {
    let mut mask = None;
    if let Some(rng) = rng {
        if spec.dropout_p > 0.0 {
            let keep_scale = 1.0 / (1.0 - spec.dropout_p);
            let scales: Vec<f64> = (0..z.len())
                .map(|_| {
                    if rng.gen::<f64>() < spec.dropout_p {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect();
            for (v, s) in z.data_mut().iter_mut().zip(&scales) {
                *v *= s;
            }
            mask = Some(scales);
        }
    }
    let y = spec.activation.apply(&z);
    Ok((Some(z), mask, y))
}

// Backward through the activation: dL/dz from dL/dy.
fn activation_backward(
    activation: Activation,
    grad_out: &Tensor,
    z: &Tensor,
    y: &Tensor,
) -> Tensor {
    if activation.is_softmax() {
        let (b, k) = (y.shape()[0], y.shape()[1]);
        let mut dz = Tensor::zeros(&[b, k]);
        for i in 0..b {
            let mut weighted = 0.0;
            for j in 0..k {
                weighted += grad_out.at2(i, j) * y.at2(i, j);
            }
            for j in 0..k {
                dz.set2(i, j, y.at2(i, j) * (grad_out.at2(i, j) - weighted));
            }
        }
        dz
    } else {
        let mut dz = grad_out.clone();
        for (d, zv) in dz.data_mut().iter_mut().zip(z.data()) {
            *d *= activation.derivative(*zv);
        }
        dz
    }
}

type BackwardParts = (Option<Tensor>, Option<Tensor>, Tensor);

// Returns (grad_weight, grad_bias, grad_input).
fn layer_backward(
    spec: &LayerSpec,
    state: &LayerState,
    cache: &Cache,
    grad_out: &Tensor,
) -> Result<BackwardParts, NetError> {
    if grad_out.shape() != cache.output.shape() {
        return Err(NetError::Shape(format!(
            "gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.output.shape()
        )));
    }
    match &spec.kind {
        LayerKind::Dense { .. } => {
            let w = state.weight.as_ref().expect("dense weight");
            let z = cache.pre_activation.as_ref().expect("dense cache");
            let mut dz = activation_backward(spec.activation, grad_out, z, &cache.output);
            if let Some(scales) = &cache.dropout_scale {
                for (d, s) in dz.data_mut().iter_mut().zip(scales) {
                    *d *= s;
                }
            }
            let x = &cache.input;
            let gw = x.transposed().matmul(&dz)?;
            let gb = state.bias.as_ref().map(|_| {
                let (bsz, fo) = (dz.shape()[0], dz.shape()[1]);
                Tensor::from_fn(&[fo], |j| (0..bsz).map(|i| dz.at2(i, j)).sum())
                    .expect("positive dims")
            });
            let gin = dz.matmul(&w.transposed())?;
            Ok((Some(gw), gb, gin))
        }
        LayerKind::Conv2d { kh, kw, cin, cout, stride, .. } => {
            let k = state.weight.as_ref().expect("conv kernel");
            let z = cache.pre_activation.as_ref().expect("conv cache");
            let mut dz = activation_backward(spec.activation, grad_out, z, &cache.output);
            if let Some(scales) = &cache.dropout_scale {
                for (d, s) in dz.data_mut().iter_mut().zip(scales) {
                    *d *= s;
                }
            }
            let x = &cache.input;
            let (bsz, ho, wo) = (dz.shape()[0], dz.shape()[1], dz.shape()[2]);
            let mut gk = Tensor::zeros(&[*kh, *kw, *cin, *cout]);
            let mut gin = Tensor::zeros(x.shape());
            let mut gb = state.bias.as_ref().map(|_| Tensor::zeros(&[*cout]));
            for b in 0..bsz {
                for oy in 0..ho {
                    for ox in 0..wo {
                        for co in 0..*cout {
                            let d = dz.at4(b, oy, ox, co);
                            if d == 0.0 {
                                continue;
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb.data_mut()[co] += d;
                            }
                            for ky in 0..*kh {
                                for kx in 0..*kw {
                                    let (iy, ix) = (oy * stride + ky, ox * stride + kx);
                                    for ci in 0..*cin {
                                        let gv = gk.at4(ky, kx, ci, co) + d * x.at4(b, iy, ix, ci);
                                        gk.set4(ky, kx, ci, co, gv);
                                        let incr = d * k.at4(ky, kx, ci, co);
                                        let cur = gin.at4(b, iy, ix, ci);
                                        gin.set4(b, iy, ix, ci, cur + incr);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok((Some(gk), gb, gin))
        }
        LayerKind::Activation => {
            let z = &cache.input;
            let dz = activation_backward(spec.activation, grad_out, z, &cache.output);
            Ok((None, None, dz))
        }
        LayerKind::Flatten => Ok((None, None, grad_out.reshape(cache.input.shape())?)),
    }
}
