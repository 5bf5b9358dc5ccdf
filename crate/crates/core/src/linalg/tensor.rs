use serde::{Deserialize, Serialize};

use super::LinalgError;

/// Dense numeric array of rank 1 to 4, stored row-major as `f64`.
///
/// Carries weights, activations and gradients throughout the crate. The
/// shape product always equals the data length and every entry is finite;
/// both are checked at construction (including deserialization) so
/// downstream code can rely on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = LinalgError;

    fn try_from(raw: RawTensor) -> Result<Self, Self::Error> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, LinalgError> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(LinalgError::Rank { rank: shape.len() });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(LinalgError::Empty);
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(LinalgError::Shape(format!(
                "shape {:?} expects {} entries, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len: usize = shape.iter().product();
        assert!(
            !shape.is_empty() && shape.len() <= 4 && len > 0,
            "invalid shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, LinalgError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        Self::new(vec![rows, cols], data)
    }

    /// Build from a generator over flat row-major indices.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self, LinalgError> {
        let len: usize = shape.iter().product();
        Self::new(shape.to_vec(), (0..len).map(|i| f(i)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    #[inline]
    pub fn at4(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        debug_assert_eq!(self.rank(), 4);
        let s = &self.shape;
        self.data[((a * s[1] + b) * s[2] + c) * s[3] + d]
    }

    #[inline]
    pub fn set4(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        debug_assert_eq!(self.rank(), 4);
        let s = &self.shape;
        self.data[((a * s[1] + b) * s[2] + c) * s[3] + d] = v;
    }

    /// Reinterpret the same flat data under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, LinalgError> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn transposed(&self) -> Tensor {
        assert_eq!(self.rank(), 2, "transpose expects a matrix");
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Tensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.set2(j, i, self.at2(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, LinalgError> {
        if self.rank() != 2 || rhs.rank() != 2 {
            return Err(LinalgError::Shape("matmul expects matrices".into()));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(LinalgError::Shape(format!(
                "matmul {m}x{k} by {k2}x{n}: inner dimensions differ"
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for p in 0..k {
                let a = self.at2(i, p);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.at2(p, j);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, LinalgError> {
        if self.shape != rhs.shape {
            return Err(LinalgError::Shape(format!(
                "elementwise op on shapes {:?} and {:?}",
                self.shape, rhs.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add_scaled_in_place(&mut self, rhs: &Tensor, c: f64) {
        assert_eq!(self.shape, rhs.shape, "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += c * b;
        }
    }
}
