//! Dense optical flow and the box/mask statistics derived from it.

mod farneback;

pub use farneback::{estimate_flow, FlowParams};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::grid::Grid;
use crate::tensor_io::{MaskGrid, TensorData, TensorFile};

/// Per-pixel displacement from a source frame to a destination frame.
///
/// `u` is horizontal and `v` vertical displacement in pixels: content at
/// `p` in the source appears at `p + (u(p), v(p))` in the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Grid,
    pub v: Grid,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            u: Grid::zeros(width, height),
            v: Grid::zeros(width, height),
        }
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            u: Grid::filled(width, height, u),
            v: Grid::filled(width, height, v),
        }
    }

    pub fn width(&self) -> usize {
        self.u.width
    }

    pub fn height(&self) -> usize {
        self.u.height
    }

    /// `[2, H, W]` f32 tensor, u plane then v plane.
    pub fn to_tensor(&self) -> TensorFile {
        let data = self
            .u
            .data
            .iter()
            .chain(&self.v.data)
            .map(|&x| x as f32)
            .collect();
        TensorFile {
            dims: vec![2, self.height(), self.width()],
            data: TensorData::F32(data),
        }
    }

    pub fn from_tensor(t: &TensorFile) -> Result<Self> {
        match t.dims.as_slice() {
            [2, h, w] => {
                let all = t.to_f64();
                let n = h * w;
                Ok(FlowField {
                    u: Grid::from_vec(*w, *h, all[..n].to_vec())?,
                    v: Grid::from_vec(*w, *h, all[n..].to_vec())?,
                })
            }
            dims => Err(Error::DimensionMismatch(format!(
                "flow tensor must be [2, H, W], got {dims:?}"
            ))),
        }
    }
}

/// Pixel index range whose centers lie strictly inside `[lo, hi]`, clipped to `[0, n)`.
fn centers_inside(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    // center of pixel i is i + 0.5; need lo < i + 0.5 < hi
    let start = (lo - 0.5).floor() + 1.0;
    let end = (hi - 0.5).ceil();
    let start = start.max(0.0).min(n as f64) as usize;
    let end = end.max(0.0).min(n as f64) as usize;
    start..end.max(start)
}

/// Mean displacement over the pixels whose centers lie strictly inside `b`.
pub fn mean_flow_in_box(flow: &FlowField, b: &BBox) -> Result<(f64, f64)> {
    let xs = centers_inside(b.x1, b.x2, flow.width());
    let ys = centers_inside(b.y1, b.y2, flow.height());
    let count = xs.len() * ys.len();
    if count == 0 {
        return Err(Error::EmptyRegion(format!(
            "box {:?} covers no pixel of a {}x{} flow field",
            b.to_array(),
            flow.width(),
            flow.height()
        )));
    }
    // deviations from the first sample, so a constant field averages exactly
    let (u0, v0) = (flow.u.get(xs.start, ys.start), flow.v.get(xs.start, ys.start));
    let (mut su, mut sv) = (0.0, 0.0);
    for y in ys {
        for x in xs.clone() {
            su += flow.u.get(x, y) - u0;
            sv += flow.v.get(x, y) - v0;
        }
    }
    Ok((u0 + su / count as f64, v0 + sv / count as f64))
}

/// Translates a box by a mean displacement; size is preserved.
pub fn warp_box(b: &BBox, mean_flow: (f64, f64)) -> BBox {
    b.translate(mean_flow.0, mean_flow.1)
}

/// Mean flow magnitude over the foreground (>= 0.5) pixels of `mask`.
pub fn mean_flow_magnitude_in_mask(flow: &FlowField, mask: &MaskGrid) -> Result<f64> {
    if mask.width != flow.width() || mask.height != flow.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs flow {}x{}",
            mask.width,
            mask.height,
            flow.width(),
            flow.height()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &m) in mask.values.iter().enumerate() {
        if m >= 0.5 {
            sum += flow.u.data[i].hypot(flow.v.data[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion("mask has no foreground pixel".into()));
    }
    Ok(sum / n as f64)
}
