use serde::{Deserialize, Serialize};

use super::{LinalgError, Tensor};

/// Slicing scheme tag, recorded so alternative layouts can be added without
/// breaking stored slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelLayout {
    /// One matrix per input channel, shaped (kh*kw, cout): rows enumerate
    /// filter-window positions, columns enumerate output filters.
    PerInputChannel,
}

/// A rank-4 convolution kernel decomposed into per-input-channel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSlices {
    pub slices: Vec<Tensor>,
    /// (kh, kw, cin, cout) of the source kernel.
    pub original_shape: [usize; 4],
    pub layout: KernelLayout,
}

/// Slice a (kh, kw, cin, cout) kernel into cin matrices of shape (kh*kw, cout).
pub fn slice_conv_kernel(k: &Tensor) -> Result<KernelSlices, LinalgError> {
    if k.rank() != 4 {
        return Err(LinalgError::Shape(format!(
            "slice_conv_kernel expects a rank-4 kernel, got rank {}",
            k.rank()
        )));
    }
    let [kh, kw, cin, cout] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let mut slices = Vec::with_capacity(cin);
    for ci in 0..cin {
        let mut slice = Tensor::zeros(&[kh * kw, cout]);
        for ky in 0..kh {
            for kx in 0..kw {
                for co in 0..cout {
                    slice.set2(ky * kw + kx, co, k.at4(ky, kx, ci, co));
                }
            }
        }
        slices.push(slice);
    }
    Ok(KernelSlices {
        slices,
        original_shape: [kh, kw, cin, cout],
        layout: KernelLayout::PerInputChannel,
    })
}

/// Exact inverse of [`slice_conv_kernel`].
pub fn unslice_conv_kernel(s: &KernelSlices) -> Result<Tensor, LinalgError> {
    let [kh, kw, cin, cout] = s.original_shape;
    if s.slices.len() != cin {
        return Err(LinalgError::Shape(format!(
            "expected {} slices for shape {:?}, got {}",
            cin,
            s.original_shape,
            s.slices.len()
        )));
    }
    for (ci, slice) in s.slices.iter().enumerate() {
        if slice.shape() != [kh * kw, cout] {
            return Err(LinalgError::Shape(format!(
                "slice {} has shape {:?}, expected [{}, {}]",
                ci,
                slice.shape(),
                kh * kw,
                cout
            )));
        }
    }
    let mut k = Tensor::zeros(&[kh, kw, cin, cout]);
    for (ci, slice) in s.slices.iter().enumerate() {
        for ky in 0..kh {
            for kx in 0..kw {
                for co in 0..cout {
                    k.set4(ky, kx, ci, co, slice.at2(ky * kw + kx, co));
                }
            }
        }
    }
    Ok(k)
}
