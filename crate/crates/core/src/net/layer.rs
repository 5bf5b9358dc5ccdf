use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    /// Elementwise derivative at pre-activation `z`. Relu's subgradient at
    /// exactly zero is defined as 0. Softmax is not elementwise and is
    /// handled by its full per-row Jacobian instead.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Softmax => panic!("softmax derivative is row-wise, not elementwise"),
        }
    }

    pub fn is_softmax(&self) -> bool {
        matches!(self, Activation::Softmax)
    }

    /// Apply to a batch tensor. Softmax normalizes each row of a rank-2
    /// tensor; every other activation is elementwise on any rank.
    pub fn apply(&self, z: &Tensor) -> Tensor {
        match self {
            Activation::None => z.clone(),
            Activation::Relu => map(z, |v| v.max(0.0)),
            Activation::Tanh => map(z, f64::tanh),
            Activation::Sigmoid => map(z, |v| 1.0 / (1.0 + (-v).exp())),
            Activation::Softmax => {
                assert_eq!(z.rank(), 2, "softmax applies to row-per-sample tensors");
                let (b, k) = (z.shape()[0], z.shape()[1]);
                let mut out = Tensor::zeros(&[b, k]);
                for i in 0..b {
                    let row = &z.data()[i * k..(i + 1) * k];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for j in 0..k {
                        let e = (row[j] - max).exp();
                        out.set2(i, j, e);
                        sum += e;
                    }
                    for j in 0..k {
                        out.set2(i, j, out.at2(i, j) / sum);
                    }
                }
                out
            }
        }
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    Conv2d {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        #[serde(default = "default_one")]
        stride: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    /// Applies the activation tag to its input; no parameters.
    Activation,
    Flatten,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Train-mode inverted-dropout probability on pre-activation units.
    #[serde(default)]
    pub dropout_p: f64,
}

fn default_activation() -> Activation {
    Activation::None
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense {
                fan_in,
                fan_out,
                bias: true,
            },
            activation,
            dropout_p: 0.0,
        }
    }

    pub fn conv2d(kh: usize, kw: usize, cin: usize, cout: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                kh,
                kw,
                cin,
                cout,
                stride,
                bias: true,
            },
            activation: Activation::None,
            dropout_p: 0.0,
        }
    }

    pub fn activation(activation: Activation) -> Self {
        Self {
            kind: LayerKind::Activation,
            activation,
            dropout_p: 0.0,
        }
    }

    pub fn flatten() -> Self {
        Self {
            kind: LayerKind::Flatten,
            activation: Activation::None,
            dropout_p: 0.0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn without_bias(mut self) -> Self {
        match &mut self.kind {
            LayerKind::Dense { bias, .. } | LayerKind::Conv2d { bias, .. } => *bias = false,
            _ => {}
        }
        self
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Per-sample output shape given the per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NetError> {
        match &self.kind {
            LayerKind::Dense { fan_in, fan_out, .. } => {
                if input != [*fan_in] {
                    return Err(NetError::Shape(format!(
                        "dense layer expects input shape [{fan_in}], got {input:?}"
                    )));
                }
                Ok(vec![*fan_out])
            }
            LayerKind::Conv2d {
                kh,
                kw,
                cin,
                cout,
                stride,
                ..
            } => {
                if input.len() != 3 || input[2] != *cin {
                    return Err(NetError::Shape(format!(
                        "conv2d expects input shape [h, w, {cin}], got {input:?}"
                    )));
                }
                let (h, w) = (input[0], input[1]);
                if *stride == 0 || h < *kh || w < *kw {
                    return Err(NetError::Shape(format!(
                        "conv2d {kh}x{kw} stride {stride} does not fit input {input:?}"
                    )));
                }
                let ho = (h - kh) / stride + 1;
                let wo = (w - kw) / stride + 1;
                Ok(vec![ho, wo, *cout])
            }
            LayerKind::Activation => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Fresh parameter tensors: He-style uniform weights scaled by fan-in,
    /// zero biases.
    pub fn init_state(&self, rng: &mut impl Rng) -> LayerState {
        match &self.kind {
            LayerKind::Dense {
                fan_in,
                fan_out,
                bias,
            } => {
                let limit = (6.0 / *fan_in as f64).sqrt();
                let weight = Tensor::from_fn(&[*fan_in, *fan_out], |_| {
                    rng.gen::<f64>() * 2.0 * limit - limit
                })
                .expect("positive dims");
                LayerState {
                    weight: Some(weight),
                    bias: bias.then(|| Tensor::zeros(&[*fan_out])),
                    cache: None,
                }
            }
            LayerKind::Conv2d {
                kh,
                kw,
                cin,
                cout,
                bias,
                ..
            } => {
                let fan_in = kh * kw * cin;
                let limit = (6.0 / fan_in as f64).sqrt();
                let weight = Tensor::from_fn(&[*kh, *kw, *cin, *cout], |_| {
                    rng.gen::<f64>() * 2.0 * limit - limit
                })
                .expect("positive dims");
                LayerState {
                    weight: Some(weight),
                    bias: bias.then(|| Tensor::zeros(&[*cout])),
                    cache: None,
                }
            }
            LayerKind::Activation | LayerKind::Flatten => LayerState {
                weight: None,
                bias: None,
                cache: None,
            },
        }
    }
}

/// Parameters plus the cached forward pass used by backprop and by the
/// condition-number Jacobians.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
    pub(crate) cache: Option<Cache>,
}

impl LayerState {
    pub fn new(weight: Option<Tensor>, bias: Option<Tensor>) -> Self {
        Self {
            weight,
            bias,
            cache: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    /// Layer input for the most recent train-mode forward.
    pub input: Tensor,
    /// Pre-activation values after dropout; what the activation actually saw.
    pub pre_activation: Option<Tensor>,
    /// Post-activation output (needed for the softmax Jacobian).
    pub output: Tensor,
    /// Per-unit inverted-dropout multiplier (0 or 1/(1-p)).
    pub dropout_scale: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-12), 1.0);
        assert_eq!(Activation::Relu.derivative(-1e-12), 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let y = Activation::Softmax.apply(&z);
        for i in 0..2 {
            let s: f64 = (0..3).map(|j| y.at2(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_shape_arithmetic() {
        let spec = LayerSpec::conv2d(3, 3, 2, 8, 1);
        assert_eq!(spec.output_shape(&[5, 5, 2]).unwrap(), vec![3, 3, 8]);
        assert!(spec.output_shape(&[2, 2, 2]).is_err());
        assert!(spec.output_shape(&[5, 5, 3]).is_err());
    }

    #[test]
    fn flatten_collapses_sample_dims() {
        let spec = LayerSpec::flatten();
        assert_eq!(spec.output_shape(&[3, 3, 8]).unwrap(), vec![72]);
    }
}
