//! Per-layer nonlinear condition numbers and their normalized summary.
//!
//! A layer's condition number is `|J|_F * |theta|_F / |f|_F`, where `f` is
//! the layer's post-activation output stacked over a probe batch (its input
//! held fixed), `theta` concatenates the layer's weights and bias, and `J`
//! is the Jacobian of `f` with respect to `theta`. `|J|_F` is computed in
//! closed form for dense layers and by exact per-output-pixel accumulation
//! for convolutions; a finite-difference oracle cross-checks both.
//!
//! All functions here are read-only over network state; per-layer values are
//! independent and may be computed in parallel on a frozen network.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Tensor;
use crate::net::{layer_eval, Layer, LayerKind, NetError, Network};

/// Parameter-count ceiling for the finite-difference oracle, which costs
/// two forward passes per parameter.
pub const FD_PARAM_LIMIT: usize = 10_000;

// Outputs with Frobenius norm below this are degenerate for Eq-style ratios.
const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CondError {
    #[error("layer output is numerically zero; condition number undefined")]
    DegenerateOutput,
    #[error("all condition numbers are zero; nothing to normalize")]
    AllZero,
    #[error("finite-difference oracle limited to {max} parameters, layer has {actual}")]
    CostGuard { max: usize, actual: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Per-layer condition numbers for one epoch: raw values, their max-normalized
/// form, and the summed diagnostic. Serialized as one JSONL object per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub epoch: usize,
    /// One entry per trainable layer, in network order.
    pub kappa: Vec<f64>,
    /// `kappa` divided by its maximum; every entry in [0, 1], max exactly 1.
    pub gamma: Vec<f64>,
    /// Sum of `gamma`; between 1 and the trainable-layer count.
    pub sncn: f64,
}

/// Condition number of a single layer evaluated on `batch` as its input.
pub fn layer_condition_number(layer: &Layer, batch: &Tensor) -> Result<f64, CondError> {
    let (pre, output) = layer_eval(&layer.spec, &layer.state, batch)?;
    let pre = pre.ok_or_else(|| {
        CondError::Net(NetError::Shape(
            "condition number requires a trainable layer".into(),
        ))
    })?;
    kappa_from_parts(layer, batch, &pre, &output)
}

fn theta_norm(layer: &Layer) -> f64 {
    let w = layer.state.weight.as_ref().expect("trainable layer");
    let wsq = w.data().iter().map(|v| v * v).sum::<f64>();
    let bsq = layer
        .state
        .bias
        .as_ref()
        .map_or(0.0, |b| b.data().iter().map(|v| v * v).sum::<f64>());
    (wsq + bsq).sqrt()
}

pub(crate) fn kappa_from_parts(
    layer: &Layer,
    input: &Tensor,
    pre: &Tensor,
    output: &Tensor,
) -> Result<f64, CondError> {
    let out_norm = output.frobenius_norm();
    if out_norm < DEGENERATE_NORM {
        return Err(CondError::DegenerateOutput);
    }
    let jfro = analytic_jacobian_fro_norm(layer, input, pre, output)?;
    Ok(jfro * theta_norm(layer) / out_norm)
}

// Closed-form |J|_F of the layer map theta -> f(theta) on the given input.
fn analytic_jacobian_fro_norm(
    layer: &Layer,
    input: &Tensor,
    pre: &Tensor,
    output: &Tensor,
) -> Result<f64, CondError> {
    let act = layer.spec.activation;
    match &layer.spec.kind {
        LayerKind::Dense { bias, .. } => {
            let (bsz, fan_out) = (pre.shape()[0], pre.shape()[1]);
            let fan_in = input.shape()[1];
            let bias_term = if *bias { 1.0 } else { 0.0 };
            let mut total = 0.0;
            for b in 0..bsz {
                let xsq: f64 = (0..fan_in).map(|i| input.at2(b, i).powi(2)).sum();
                let dsq = if act.is_softmax() {
                    softmax_jacobian_sq(output, b, fan_out)
                } else {
                    (0..fan_out)
                        .map(|j| act.derivative(pre.at2(b, j)).powi(2))
                        .sum()
                };
                total += (xsq + bias_term) * dsq;
            }
            Ok(total.sqrt())
        }
        LayerKind::Conv2d {
            kh,
            kw,
            cin,
            cout,
            stride,
            bias,
        } => {
            // Softmax is rejected for non-flat shapes at network build.
            let (bsz, ho, wo) = (pre.shape()[0], pre.shape()[1], pre.shape()[2]);
            let bias_term = if *bias { 1.0 } else { 0.0 };
            let mut total = 0.0;
            for b in 0..bsz {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut patch_sq = 0.0;
                        for ky in 0..*kh {
                            for kx in 0..*kw {
                                for ci in 0..*cin {
                                    patch_sq += input
                                        .at4(b, oy * stride + ky, ox * stride + kx, ci)
                                        .powi(2);
                                }
                            }
                        }
                        let dsq: f64 = (0..*cout)
                            .map(|co| act.derivative(pre.at4(b, oy, ox, co)).powi(2))
                            .sum();
                        total += (patch_sq + bias_term) * dsq;
                    }
                }
            }
            Ok(total.sqrt())
        }
        _ => Err(CondError::Net(NetError::Shape(
            "condition number requires a trainable layer".into(),
        ))),
    }
}

// Squared Frobenius norm of the softmax Jacobian at one output row.
fn softmax_jacobian_sq(output: &Tensor, row: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..k {
        let yj = output.at2(row, j);
        for l in 0..k {
            let d = if j == l { 1.0 } else { 0.0 };
            let e = yj * (d - output.at2(row, l));
            total += e * e;
        }
    }
    total
}

/// Central-difference estimate of `|J|_F` for a single layer on `batch`.
///
/// Costs two forward passes per parameter, hence the parameter ceiling.
/// Independent of the closed-form path above; used to cross-check it.
pub fn jacobian_fro_norm_fd(layer: &Layer, batch: &Tensor, h: f64) -> Result<f64, CondError> {
    assert!(h > 0.0, "step must be positive");
    let n_params = layer.state.weight.as_ref().map_or(0, Tensor::len)
        + layer.state.bias.as_ref().map_or(0, Tensor::len);
    if n_params == 0 {
        return Err(CondError::Net(NetError::Shape(
            "finite differences require a trainable layer".into(),
        )));
    }
    if n_params > FD_PARAM_LIMIT {
        return Err(CondError::CostGuard {
            max: FD_PARAM_LIMIT,
            actual: n_params,
        });
    }

    let mut probe = layer.clone();
    let mut total = 0.0;
    for target_bias in [false, true] {
        let len = if target_bias {
            probe.state.bias.as_ref().map_or(0, Tensor::len)
        } else {
            probe.state.weight.as_ref().map_or(0, Tensor::len)
        };
        for p in 0..len {
            let original = {
                let t = if target_bias {
                    probe.state.bias.as_ref().unwrap()
                } else {
                    probe.state.weight.as_ref().unwrap()
                };
                t.data()[p]
            };
            let eval_at = |value: f64, probe: &mut Layer| -> Result<Tensor, CondError> {
                let t = if target_bias {
                    probe.state.bias.as_mut().unwrap()
                } else {
                    probe.state.weight.as_mut().unwrap()
                };
                t.data_mut()[p] = value;
                let (_, out) = layer_eval(&probe.spec, &probe.state, batch)?;
                Ok(out)
            };
            let plus = eval_at(original + h, &mut probe)?;
            let minus = eval_at(original - h, &mut probe)?;
            eval_at(original, &mut probe)?;
            total += plus
                .data()
                .iter()
                .zip(minus.data())
                .map(|(a, b)| {
                    let d = (a - b) / (2.0 * h);
                    d * d
                })
                .sum::<f64>();
        }
    }
    Ok(total.sqrt())
}

/// Divide each condition number by the maximum. Ties all map to exactly 1.
pub fn normalize_condition_numbers(kappa: &[f64]) -> Result<Vec<f64>, CondError> {
    let max = kappa.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(CondError::AllZero);
    }
    Ok(kappa.iter().map(|&k| k / max).collect())
}

/// Summed normalized condition numbers: lower means the layer spectrum is
/// dominated by one layer; higher means many layers look equally strained.
pub fn sncn(gamma: &[f64]) -> f64 {
    gamma.iter().sum()
}

/// Full per-layer report over a probe batch.
///
/// Layers with numerically zero output get the maximum kappa seen among the
/// others (most suspicious). If every layer is degenerate or zero, all kappa
/// are set to 1 so the normalized values stay defined.
pub fn condition_report(
    net: &Network,
    probe: &Tensor,
    epoch: usize,
) -> Result<ConditionReport, CondError> {
    let (_, traces) = net.forward_trace(probe)?;
    let mut kappa = Vec::new();
    for (layer, trace) in net.layers().iter().zip(&traces) {
        let Some(trace) = trace else { continue };
        match kappa_from_parts(layer, &trace.input, &trace.pre_activation, &trace.output) {
            Ok(k) => kappa.push(k),
            Err(CondError::DegenerateOutput) => kappa.push(f64::NAN),
            Err(e) => return Err(e),
        }
    }
    let finite_max = kappa.iter().cloned().filter(|k| k.is_finite()).fold(0.0, f64::max);
    for k in kappa.iter_mut() {
        if !k.is_finite() {
            *k = if finite_max > 0.0 { finite_max } else { 1.0 };
        }
    }
    let gamma = match normalize_condition_numbers(&kappa) {
        Ok(g) => g,
        Err(CondError::AllZero) => {
            kappa.iter_mut().for_each(|k| *k = 1.0);
            vec![1.0; kappa.len()]
        }
        Err(e) => return Err(e),
    };
    let sncn = sncn(&gamma);
    Ok(ConditionReport {
        epoch,
        kappa,
        gamma,
        sncn,
    })
}
