//! Two-frame dense flow by polynomial expansion (Farnebäck).
//!
//! Each level of an image pyramid is expanded into local quadratic models
//! `f(x) ~ x^T A x + b^T x + c` by Gaussian-weighted least squares. Given a
//! prior displacement `d~`, the second frame's model is sampled at
//! `x + d~`, and the per-pixel constraint `A d = db` with
//!
//! ```text
//! A  = (A1(x) + A2(x + d~)) / 2
//! db = -(b2(x + d~) - b1(x)) / 2 + A d~
//! ```
//!
//! is accumulated as `A^T A`, `A^T db` under a Gaussian window and solved for
//! `d`. Levels run coarse to fine, the flow of each level seeding the next.

use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{Error, Result};
use crate::grid::{reflect, Grid};

/// Border ramp applied to the constraint matrices near the image edge.
const BORDER_WEIGHTS: [f64; 5] = [0.14, 0.14, 0.4472, 0.4472, 0.4472];
/// Regularizer on the 2x2 determinant (intensities scaled to 0..255).
const DET_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("flow params: {msg}")));
        if self.pyramid_levels < 1 {
            return bad("pyramid-levels must be >= 1".into());
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!("pyramid-scale {} outside (0,1)", self.pyramid_scale));
        }
        if self.window_size.is_multiple_of(2) {
            return bad(format!("window-size {} must be odd", self.window_size));
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.poly_n.is_multiple_of(2) || self.poly_n < 3 {
            return bad(format!("poly-n {} must be odd and >= 3", self.poly_n));
        }
        if !(self.poly_sigma > 0.0) {
            return bad(format!("poly-sigma {} must be positive", self.poly_sigma));
        }
        Ok(())
    }
}

/// Estimates dense flow from `prev` to `next` (luminance in `[0, 1]`).
pub fn estimate_flow(prev: &Grid, next: &Grid, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if !prev.same_dims(next) {
        return Err(Error::DimensionMismatch(format!(
            "frames {}x{} and {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    let (w, h) = (prev.width, prev.height);
    if w < params.window_size || h < params.window_size {
        return Err(Error::Invalid(format!(
            "frame {w}x{h} smaller than window {}",
            params.window_size
        )));
    }

    let prev = scale_intensity(prev);
    let next = scale_intensity(next);
    let expander = PolyExpander::new(params.poly_n, params.poly_sigma);

    let min_side = params.window_size.max(params.poly_n);
    let mut levels = 1;
    for k in 1..params.pyramid_levels {
        let s = params.pyramid_scale.powi(k as i32);
        if ((w.min(h) as f64) * s).round() < min_side as f64 {
            break;
        }
        levels = k + 1;
    }

    let mut flow: Option<FlowField> = None;
    for k in (0..levels).rev() {
        let s = params.pyramid_scale.powi(k as i32);
        let (p, n) = if k == 0 {
            (prev.clone(), next.clone())
        } else {
            let lw = ((w as f64) * s).round() as usize;
            let lh = ((h as f64) * s).round() as usize;
            let sigma = (1.0 / s - 1.0) * 0.5;
            (
                resize(&gaussian_blur(&prev, sigma), lw, lh),
                resize(&gaussian_blur(&next, sigma), lw, lh),
            )
        };
        let mut f = match flow.take() {
            None => FlowField::zeros(p.width, p.height),
            Some(coarse) => {
                let up = 1.0 / params.pyramid_scale;
                let mut u = resize(&coarse.u, p.width, p.height);
                let mut v = resize(&coarse.v, p.width, p.height);
                u.data.iter_mut().for_each(|x| *x *= up);
                v.data.iter_mut().for_each(|x| *x *= up);
                FlowField { u, v }
            }
        };
        let r1 = expander.expand(&p);
        let r2 = expander.expand(&n);
        for _ in 0..params.iterations {
            f = update_flow(&r1, &r2, &f, params.window_size);
        }
        flow = Some(f);
    }
    Ok(flow.expect("at least one pyramid level"))
}

fn scale_intensity(g: &Grid) -> Grid {
    Grid {
        width: g.width,
        height: g.height,
        data: g.data.iter().map(|&v| v * 255.0).collect(),
    }
}

/// Quadratic-model coefficients per pixel. `axy` is the off-diagonal entry of
/// the symmetric matrix `A`, i.e. half the `xy` monomial coefficient.
struct Expansion {
    bx: Grid,
    by: Grid,
    axx: Grid,
    ayy: Grid,
    axy: Grid,
}

struct PolyExpander {
    radius: isize,
    /// Offsets `(dx, dy)` of the neighborhood taps.
    offsets: Vec<(isize, isize)>,
    /// Least-squares filters for the x, y, xx, yy, xy monomials.
    filters: [Vec<f64>; 5],
}

impl PolyExpander {
    fn new(n: usize, sigma: f64) -> Self {
        let radius = (n / 2) as isize;
        let mut offsets = Vec::new();
        let mut basis = Vec::new();
        let mut weights = Vec::new();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (fx, fy) = (dx as f64, dy as f64);
                offsets.push((dx, dy));
                basis.push([1.0, fx, fy, fx * fx, fy * fy, fx * fy]);
                weights.push((-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp());
            }
        }
        let mut gram = [[0.0; 6]; 6];
        for (phi, &w) in basis.iter().zip(&weights) {
            for i in 0..6 {
                for j in 0..6 {
                    gram[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        let inv = invert6(gram);
        let filters = std::array::from_fn(|c| {
            let row = &inv[c + 1];
            basis
                .iter()
                .zip(&weights)
                .map(|(phi, &w)| w * (0..6).map(|j| row[j] * phi[j]).sum::<f64>())
                .collect()
        });
        PolyExpander {
            radius,
            offsets,
            filters,
        }
    }

    fn expand(&self, img: &Grid) -> Expansion {
        let (w, h) = (img.width, img.height);
        let mut planes: [Grid; 5] = std::array::from_fn(|_| Grid::zeros(w, h));
        let mut taps = vec![0.0; self.offsets.len()];
        let r = self.radius;
        for y in 0..h {
            for x in 0..w {
                let interior = x as isize >= r
                    && y as isize >= r
                    && (x as isize) < w as isize - r
                    && (y as isize) < h as isize - r;
                for (t, &(dx, dy)) in taps.iter_mut().zip(&self.offsets) {
                    let (sx, sy) = (x as isize + dx, y as isize + dy);
                    *t = if interior {
                        img.get(sx as usize, sy as usize)
                    } else {
                        img.get_reflect(sx, sy)
                    };
                }
                for (plane, filter) in planes.iter_mut().zip(&self.filters) {
                    let c: f64 = filter.iter().zip(&taps).map(|(a, b)| a * b).sum();
                    plane.set(x, y, c);
                }
            }
        }
        let [bx, by, axx, ayy, mut axy] = planes;
        axy.data.iter_mut().for_each(|v| *v *= 0.5);
        Expansion {
            bx,
            by,
            axx,
            ayy,
            axy,
        }
    }
}

fn border_weight(i: usize, n: usize) -> f64 {
    let d = i.min(n - 1 - i);
    BORDER_WEIGHTS.get(d).copied().unwrap_or(1.0)
}

fn update_flow(r1: &Expansion, r2: &Expansion, flow: &FlowField, window: usize) -> FlowField {
    let (w, h) = (flow.width(), flow.height());
    // G11, G12, G22, h1, h2
    let mut m: [Grid; 5] = std::array::from_fn(|_| Grid::zeros(w, h));
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (flow.u.data[i], flow.v.data[i]);
            let (sx, sy) = (x as f64 + dx, y as f64 + dy);
            if !(sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64) {
                continue;
            }
            let a11 = 0.5 * (r1.axx.data[i] + r2.axx.sample_bilinear(sx, sy));
            let a22 = 0.5 * (r1.ayy.data[i] + r2.ayy.sample_bilinear(sx, sy));
            let a12 = 0.5 * (r1.axy.data[i] + r2.axy.sample_bilinear(sx, sy));
            let db1 = -0.5 * (r2.bx.sample_bilinear(sx, sy) - r1.bx.data[i]) + a11 * dx + a12 * dy;
            let db2 = -0.5 * (r2.by.sample_bilinear(sx, sy) - r1.by.data[i]) + a12 * dx + a22 * dy;
            let s = border_weight(x, w) * border_weight(y, h);
            m[0].data[i] = s * (a11 * a11 + a12 * a12);
            m[1].data[i] = s * (a12 * (a11 + a22));
            m[2].data[i] = s * (a12 * a12 + a22 * a22);
            m[3].data[i] = s * (a11 * db1 + a12 * db2);
            m[4].data[i] = s * (a12 * db1 + a22 * db2);
        }
    }
    let radius = window / 2;
    let kernel = gaussian_kernel(radius, 0.3 * radius as f64);
    let m = m.map(|g| convolve_separable(&g, &kernel));

    let mut out = FlowField::zeros(w, h);
    for i in 0..w * h {
        let (g11, g12, g22, h1, h2) = (m[0].data[i], m[1].data[i], m[2].data[i], m[3].data[i], m[4].data[i]);
        let idet = 1.0 / (g11 * g22 - g12 * g12 + DET_EPS);
        out.u.data[i] = (g22 * h1 - g12 * h2) * idet;
        out.v.data[i] = (g11 * h2 - g12 * h1) * idet;
    }
    out
}

/// Normalized 1-D Gaussian taps over `[-radius, radius]`.
fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn convolve_separable(g: &Grid, kernel: &[f64]) -> Grid {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (g.width, g.height);
    let mut tmp = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * g.get(reflect(x as isize + k as isize - r, w), y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * tmp.get(x, reflect(y as isize + k as isize - r, h));
            }
            out.set(x, y, acc);
        }
    }
    out
}

pub(crate) fn gaussian_blur(g: &Grid, sigma: f64) -> Grid {
    let ksize = ((sigma * 5.0).round() as usize) | 1;
    convolve_separable(g, &gaussian_kernel(ksize / 2, sigma))
}

/// Bilinear resize with pixel-center alignment.
pub(crate) fn resize(g: &Grid, width: usize, height: usize) -> Grid {
    let sx = g.width as f64 / width as f64;
    let sy = g.height as f64 / height as f64;
    Grid::from_fn(width, height, |x, y| {
        g.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

/// Gauss-Jordan inverse of a well-conditioned 6x6 matrix.
fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..6 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..6 {
            if i != col {
                let f = a[i][col];
                for j in 0..6 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}
