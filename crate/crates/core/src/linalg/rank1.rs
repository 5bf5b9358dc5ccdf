use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LinalgError, Tensor};

/// Default power-iteration tolerance on the Gram eigen residual.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default power-iteration budget before the dense fallback kicks in.
pub const DEFAULT_MAX_ITER: usize = 1000;

// Fixed seed for the power-iteration start vector so that factorization is a
// pure function of the input matrix.
const START_SEED: u64 = 0x1df5_eed0;

/// Top singular triplet of a matrix: `sigma * left * right^T` is the best
/// rank-1 approximation in Frobenius norm.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    /// Unit left singular vector, length = rows.
    pub left: Vec<f64>,
    /// Unit right singular vector, length = cols.
    pub right: Vec<f64>,
}

/// Rank-1 factor pair: `column * row` reconstructs the approximation.
///
/// Canonical form: the first nonzero entry of `column` is positive, so equal
/// inputs factorize to bitwise-equal pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Pair {
    /// Column factor, length = rows of the input.
    pub column: Tensor,
    /// Row factor, length = cols of the input.
    pub row: Tensor,
}

impl Rank1Pair {
    pub fn reconstruct(&self) -> Tensor {
        let n = self.column.len();
        let m = self.row.len();
        let w = self.column.data();
        let h = self.row.data();
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..m {
                out.set2(i, j, w[i] * h[j]);
            }
        }
        out
    }
}

fn matvec(a: &Tensor, x: &[f64]) -> Vec<f64> {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    debug_assert_eq!(m, x.len());
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..m {
            acc += a.at2(i, j) * x[j];
        }
        out[i] = acc;
    }
    out
}

fn matvec_t(a: &Tensor, x: &[f64]) -> Vec<f64> {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    debug_assert_eq!(n, x.len());
    let mut out = vec![0.0; m];
    for i in 0..n {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for j in 0..m {
            out[j] += a.at2(i, j) * xi;
        }
    }
    out
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = norm2(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
    n
}

fn unit_axis(len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[0] = 1.0;
    e
}

// Flip (left, right) jointly so the first nonzero entry of `left` is positive.
fn canonical_sign(left: &mut [f64], right: &mut [f64]) {
    if let Some(&pivot) = left.iter().find(|v| **v != 0.0) {
        if pivot < 0.0 {
            for v in left.iter_mut() {
                *v = -*v;
            }
            for v in right.iter_mut() {
                *v = -*v;
            }
        }
    }
}

/// Top singular triplet by power iteration on the Gram matrix, iterating on
/// the smaller side. Converges when the eigen residual `|Bv - lambda*v|`
/// drops below `tol * lambda`.
///
/// Returns `NonConvergence` when `max_iter` is exhausted, which signals the
/// caller to fall back to a dense eigen solve of the Gram matrix.
pub fn top_singular_triplet(
    a: &Tensor,
    tol: f64,
    max_iter: usize,
    rng: &mut impl Rng,
) -> Result<SingularTriplet, LinalgError> {
    if a.rank() != 2 {
        return Err(LinalgError::Shape(format!(
            "top_singular_triplet expects a matrix, got rank {}",
            a.rank()
        )));
    }
    assert!(tol > 0.0 && max_iter >= 1, "tol > 0 and max_iter >= 1 required");
    let (n, m) = (a.shape()[0], a.shape()[1]);

    if a.frobenius_norm() == 0.0 {
        return Ok(SingularTriplet {
            sigma: 0.0,
            left: unit_axis(n),
            right: unit_axis(m),
        });
    }

    // Iterate on the shorter side; the other singular vector is recovered
    // through one application of A at the end.
    let iterate_right = m <= n;
    let side = if iterate_right { m } else { n };

    let mut v: Vec<f64> = (0..side).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    if normalize(&mut v) == 0.0 {
        v = unit_axis(side);
    }

    let mut converged = false;
    for _ in 0..max_iter {
        let image = if iterate_right {
            matvec_t(a, &matvec(a, &v))
        } else {
            matvec(a, &matvec_t(a, &v))
        };
        let lambda = dot(&v, &image);
        let resid: f64 = image
            .iter()
            .zip(&v)
            .map(|(z, vi)| {
                let r = z - lambda * vi;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        let image_norm = norm2(&image);
        if image_norm == 0.0 {
            // Start vector landed in the null space; redraw.
            v = (0..side).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            normalize(&mut v);
            continue;
        }
        v = image;
        for x in v.iter_mut() {
            *x /= image_norm;
        }
        if resid <= tol * lambda.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NonConvergence { max_iter });
    }

    let (mut left, mut right, sigma);
    if iterate_right {
        let av = matvec(a, &v);
        sigma = norm2(&av);
        left = if sigma > 0.0 {
            av.iter().map(|x| x / sigma).collect()
        } else {
            unit_axis(n)
        };
        right = v;
    } else {
        let atu = matvec_t(a, &v);
        sigma = norm2(&atu);
        right = if sigma > 0.0 {
            atu.iter().map(|x| x / sigma).collect()
        } else {
            unit_axis(m)
        };
        left = v;
    }
    canonical_sign(&mut left, &mut right);
    Ok(SingularTriplet { sigma, left, right })
}

// Dense fallback: cyclic Jacobi eigen solve of the Gram matrix on the
// shorter side, returning its top eigenpair.
fn gram_top_eigenpair(a: &Tensor) -> (f64, Vec<f64>, bool) {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    let iterate_right = m <= n;
    let side = if iterate_right { m } else { n };

    // B = A^T A (or A A^T), symmetric positive semidefinite.
    let mut b = vec![0.0; side * side];
    for i in 0..side {
        for j in i..side {
            let mut acc = 0.0;
            if iterate_right {
                for k in 0..n {
                    acc += a.at2(k, i) * a.at2(k, j);
                }
            } else {
                for k in 0..m {
                    acc += a.at2(i, k) * a.at2(j, k);
                }
            }
            b[i * side + j] = acc;
            b[j * side + i] = acc;
        }
    }

    let mut q = vec![0.0; side * side];
    for i in 0..side {
        q[i * side + i] = 1.0;
    }

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..side {
            for r in (p + 1)..side {
                off += b[p * side + r] * b[p * side + r];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + norm2(&b)) {
            break;
        }
        for p in 0..side {
            for r in (p + 1)..side {
                let bpq = b[p * side + r];
                if bpq == 0.0 {
                    continue;
                }
                let theta = (b[r * side + r] - b[p * side + p]) / (2.0 * bpq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..side {
                    let bkp = b[k * side + p];
                    let bkq = b[k * side + r];
                    b[k * side + p] = c * bkp - s * bkq;
                    b[k * side + r] = s * bkp + c * bkq;
                }
                for k in 0..side {
                    let bpk = b[p * side + k];
                    let bqk = b[r * side + k];
                    b[p * side + k] = c * bpk - s * bqk;
                    b[r * side + k] = s * bpk + c * bqk;
                }
                for k in 0..side {
                    let qkp = q[k * side + p];
                    let qkq = q[k * side + r];
                    q[k * side + p] = c * qkp - s * qkq;
                    q[k * side + r] = s * qkp + c * qkq;
                }
            }
        }
    }

    let mut best = 0usize;
    for i in 1..side {
        if b[i * side + i] > b[best * side + best] {
            best = i;
        }
    }
    let vec: Vec<f64> = (0..side).map(|k| q[k * side + best]).collect();
    (b[best * side + best].max(0.0), vec, iterate_right)
}

fn triplet_dense(a: &Tensor) -> SingularTriplet {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    let (lambda, mut v, iterate_right) = gram_top_eigenpair(a);
    normalize(&mut v);
    let sigma = lambda.sqrt();
    let (mut left, mut right);
    if iterate_right {
        let av = matvec(a, &v);
        let s = norm2(&av);
        left = if s > 0.0 {
            av.iter().map(|x| x / s).collect()
        } else {
            unit_axis(n)
        };
        right = v;
    } else {
        let atu = matvec_t(a, &v);
        let s = norm2(&atu);
        right = if s > 0.0 {
            atu.iter().map(|x| x / s).collect()
        } else {
            unit_axis(m)
        };
        left = v;
    }
    canonical_sign(&mut left, &mut right);
    SingularTriplet { sigma, left, right }
}

/// Best rank-1 factorization of a matrix in Frobenius norm.
///
/// Power iteration first; if it stalls (near-tied top singular values) the
/// dense Gram eigen solve takes over, so the call practically always
/// succeeds. The singular value is split evenly between the two factors so
/// a zero matrix factorizes to zero vectors.
pub fn rank1_factorize(a: &Tensor) -> Result<Rank1Pair, LinalgError> {
    if a.rank() != 2 {
        return Err(LinalgError::Shape(format!(
            "rank1_factorize expects a matrix, got rank {}",
            a.rank()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let triplet = match top_singular_triplet(a, DEFAULT_TOL, DEFAULT_MAX_ITER, &mut rng) {
        Ok(t) => t,
        Err(LinalgError::NonConvergence { .. }) => triplet_dense(a),
        Err(e) => return Err(e),
    };
    let scale = triplet.sigma.sqrt();
    let column = Tensor::vector(triplet.left.iter().map(|u| u * scale).collect())?;
    let row = Tensor::vector(triplet.right.iter().map(|v| v * scale).collect())?;
    Ok(Rank1Pair { column, row })
}

/// Replace a weight tensor by its best rank-1 reconstruction.
///
/// Matrices are factorized directly; rank-4 convolution kernels are sliced
/// per input channel, each slice factorized, and the kernel reassembled.
/// Output shape always equals input shape.
pub fn lrf_simplify(theta: &Tensor) -> Result<Tensor, LinalgError> {
    match theta.rank() {
        2 => Ok(rank1_factorize(theta)?.reconstruct()),
        4 => {
            let mut slices = super::slice_conv_kernel(theta)?;
            for slice in &mut slices.slices {
                *slice = rank1_factorize(slice)?.reconstruct();
            }
            super::unslice_conv_kernel(&slices)
        }
        r => Err(LinalgError::Shape(format!(
            "lrf_simplify expects a matrix or a rank-4 kernel, got rank {r}"
        ))),
    }
}
