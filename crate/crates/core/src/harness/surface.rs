use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::linalg::Tensor;
use crate::net::{NetError, Network};

use super::HarnessError;

/// Rectangle of input space covered by the exported grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SurfaceBounds {
    /// Parse "x_min,x_max,y_min,y_max".
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("expected 4 comma-separated bounds, got {}", parts.len()));
        }
        let vals: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| format!("bad bound: {e}"))?;
        let b = SurfaceBounds {
            x_min: vals[0],
            x_max: vals[1],
            y_min: vals[2],
            y_max: vals[3],
        };
        if b.x_min >= b.x_max || b.y_min >= b.y_max {
            return Err("bounds must satisfy x_min < x_max and y_min < y_max".into());
        }
        Ok(b)
    }
}

impl Default for SurfaceBounds {
    fn default() -> Self {
        Self {
            x_min: -3.0,
            x_max: 3.0,
            y_min: -3.0,
            y_max: 3.0,
        }
    }
}

const GRID_CHUNK: usize = 512;

/// Evaluate the network over a uniform `resolution x resolution` grid and
/// write CSV rows `x1,x2,score`, where the score is the class-1 output
/// (softmax nets export the class-1 probability). Exactly `resolution^2`
/// data rows, endpoints included.
pub fn export_surface_grid(
    net: &Network,
    bounds: &SurfaceBounds,
    resolution: usize,
    out: &Path,
) -> Result<(), HarnessError> {
    if net.input_shape() != [2] {
        return Err(HarnessError::Net(NetError::Shape(format!(
            "surface export needs a 2-D input network, got input shape {:?}",
            net.input_shape()
        ))));
    }
    if resolution < 2 {
        return Err(HarnessError::Dataset("resolution must be at least 2".into()));
    }
    let out_dim: usize = net.output_shape().iter().product();
    let score_col = if out_dim >= 2 { 1 } else { 0 };

    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut csv = String::from("x1,x2,score\n");
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            points.push((
                step(bounds.x_min, bounds.x_max, i),
                step(bounds.y_min, bounds.y_max, j),
            ));
        }
    }
    for chunk in points.chunks(GRID_CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * 2);
        for (x1, x2) in chunk {
            data.push(*x1);
            data.push(*x2);
        }
        let batch = Tensor::new(vec![chunk.len(), 2], data)
            .map_err(|e| HarnessError::Dataset(format!("grid batch: {e}")))?;
        let pred = net.forward_eval(&batch)?;
        for (row, (x1, x2)) in chunk.iter().enumerate() {
            let score = pred.data()[row * out_dim + score_col];
            let _ = writeln!(csv, "{x1},{x2},{score}");
        }
    }
    fs::write(out, csv).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))
}
