//! Shared test oracles, independent of the library's numerical routes:
//! a one-sided Jacobi SVD for singular-value ground truth, and
//! finite-difference objectives for gradient ground truth.

#![allow(dead_code)]

use adaptive_lrf::net::{loss_value, lrf_penalty_loss, Network, PenaltyConfig};
use adaptive_lrf::Tensor;

/// All singular values of a matrix, descending, by one-sided Jacobi
/// (Hestenes) rotations on the columns.
pub fn jacobi_singular_values(a: &Tensor) -> Vec<f64> {
    assert_eq!(a.rank(), 2, "oracle expects a matrix");
    let (m, n) = (a.shape()[0], a.shape()[1]);
    // Work on the transpose when needed so columns are the short axis.
    let (rows, cols, wide) = if m >= n { (m, n, false) } else { (n, m, true) };
    let mut col: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| if wide { a.at2(j, i) } else { a.at2(i, j) })
                .collect()
        })
        .collect();

    for _sweep in 0..100 {
        let mut max_cos = 0.0_f64;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..rows {
                    alpha += col[i][k] * col[i][k];
                    beta += col[j][k] * col[j][k];
                    gamma += col[i][k] * col[j][k];
                }
                if alpha * beta == 0.0 {
                    continue;
                }
                max_cos = max_cos.max(gamma.abs() / (alpha * beta).sqrt());
                if gamma == 0.0 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let vi = col[i][k];
                    let vj = col[j][k];
                    col[i][k] = c * vi - s * vj;
                    col[j][k] = s * vi + c * vj;
                }
            }
        }
        if max_cos < 1e-15 {
            break;
        }
    }

    let mut values: Vec<f64> = col
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values
}

/// Frobenius norm of the part of `a` beyond rank one: sqrt of the sum of
/// squared singular values after the first.
pub fn rank1_residual_oracle(a: &Tensor) -> f64 {
    let sv = jacobi_singular_values(a);
    sv.iter().skip(1).map(|s| s * s).sum::<f64>().sqrt()
}

/// Relative agreement check with an absolute floor for values that are
/// both essentially zero at the given scale.
pub fn close_rel(a: f64, b: f64, rel: f64, zero_floor: f64) -> bool {
    let mag = a.abs().max(b.abs());
    if mag <= zero_floor {
        return true;
    }
    (a - b).abs() <= rel * mag
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let mag = a.abs().max(b.abs());
    if mag == 0.0 {
        0.0
    } else {
        (a - b).abs() / mag
    }
}

/// The full training objective at the network's current parameters:
/// data loss, plus the anchored penalty, plus the weight-decay term
/// `lambda/2 * sum |W|_F^2` whose gradient is `lambda * W`.
pub fn total_objective(
    net: &Network,
    x: &Tensor,
    target: &Tensor,
    penalty: Option<&PenaltyConfig>,
    weight_decay: f64,
) -> f64 {
    let pred = net.forward_eval(x).expect("forward");
    let base = loss_value(&pred, target, net.loss_kind()).expect("loss");
    let with_penalty = match penalty {
        Some(cfg) => lrf_penalty_loss(net, base, cfg).expect("penalty"),
        None => base,
    };
    let decay: f64 = net
        .layers()
        .iter()
        .filter_map(|l| l.state.weight.as_ref())
        .map(|w| {
            let f = w.frobenius_norm();
            f * f
        })
        .sum();
    with_penalty + 0.5 * weight_decay * decay
}

/// Central-difference gradient of the total objective with respect to one
/// parameter entry.
#[allow(clippy::too_many_arguments)]
pub fn fd_param_gradient(
    net: &mut Network,
    x: &Tensor,
    target: &Tensor,
    penalty: Option<&PenaltyConfig>,
    weight_decay: f64,
    layer: usize,
    bias: bool,
    index: usize,
    h: f64,
) -> f64 {
    fn set(net: &mut Network, layer: usize, bias: bool, index: usize, value: f64) {
        let state = &mut net.layer_mut(layer).state;
        let t = if bias {
            state.bias.as_mut().expect("bias present")
        } else {
            state.weight.as_mut().expect("weight present")
        };
        t.data_mut()[index] = value;
    }
    let state = &net.layers()[layer].state;
    let original = if bias {
        state.bias.as_ref().expect("bias present").data()[index]
    } else {
        state.weight.as_ref().expect("weight present").data()[index]
    };
    set(net, layer, bias, index, original + h);
    let plus = total_objective(net, x, target, penalty, weight_decay);
    set(net, layer, bias, index, original - h);
    let minus = total_objective(net, x, target, penalty, weight_decay);
    set(net, layer, bias, index, original);
    (plus - minus) / (2.0 * h)
}

/// Read a surface grid CSV (x1,x2,score) back into a resolution x resolution
/// score matrix, assuming the export's row-major point order.
pub fn read_grid_scores(path: &std::path::Path, resolution: usize) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).expect("grid file");
    let mut scores = vec![vec![0.0; resolution]; resolution];
    for (row, line) in text.lines().skip(1).enumerate() {
        let score: f64 = line.split(',').nth(2).expect("score column").parse().expect("float");
        scores[row / resolution][row % resolution] = score;
    }
    scores
}

/// Discrete total variation of a grid: sum of absolute neighbor differences
/// along both axes.
pub fn total_variation(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len();
    let mut tv = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                tv += (scores[i + 1][j] - scores[i][j]).abs();
            }
            if j + 1 < n {
                tv += (scores[i][j + 1] - scores[i][j]).abs();
            }
        }
    }
    tv
}
