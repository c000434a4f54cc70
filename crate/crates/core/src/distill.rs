//! Numeric kernels of teacher-student mask distillation.
//!
//! `total = seg + score`, with `seg = 0.5 bce + 0.3 dice + 0.2 boundary` and
//! `score` the scalar BCE between student and teacher confidences. The
//! boundary term is the mean absolute difference of 3x3 Sobel gradient
//! magnitudes (reflected borders). Gradients are analytic; the boundary
//! gradient uses the adjoint of the Sobel taps, including reflected ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reflect, Grid};
use crate::numeric::pairwise_sum;
use crate::tensor_io::MaskGrid;

pub const BCE_WEIGHT: f64 = 0.5;
pub const DICE_WEIGHT: f64 = 0.3;
pub const BOUNDARY_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LossParams {
    /// Probabilities are clamped to `[eps, 1 - eps]` inside BCE.
    pub bce_eps: f64,
    pub dice_smooth: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            bce_eps: 1e-7,
            dice_smooth: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bce_eps > 0.0 && self.bce_eps < 0.5) || !(self.dice_smooth > 0.0) {
            return Err(Error::Invalid(format!(
                "loss params: need 0 < bce-eps < 0.5 and dice-smooth > 0, got {} and {}",
                self.bce_eps, self.dice_smooth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub dice: f64,
    pub boundary: f64,
    pub seg: f64,
    pub score: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Assembles the weighted sums from the four terms.
    pub fn from_terms(bce: f64, dice: f64, boundary: f64, score: f64) -> Self {
        let seg = BCE_WEIGHT * bce + DICE_WEIGHT * dice + BOUNDARY_WEIGHT * boundary;
        LossBreakdown {
            bce,
            dice,
            boundary,
            seg,
            score,
            total: seg + score,
        }
    }
}

/// One student prediction and its teacher target.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillSample {
    /// Student mask probabilities.
    pub student: MaskGrid,
    /// Binarized teacher mask.
    pub teacher: MaskGrid,
    pub student_score: f64,
    pub teacher_score: f64,
}

impl DistillSample {
    /// Binarizes `teacher` and checks dimensions and score ranges.
    pub fn new(student: MaskGrid, teacher: &MaskGrid, student_score: f64, teacher_score: f64) -> Result<Self> {
        if !student.same_dims(teacher) {
            return Err(Error::DimensionMismatch(format!(
                "student {}x{} vs teacher {}x{}",
                student.width, student.height, teacher.width, teacher.height
            )));
        }
        for (name, s) in [("student", student_score), ("teacher", teacher_score)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Invalid(format!("{name} score {s} outside [0,1]")));
            }
        }
        Ok(DistillSample {
            student,
            teacher: teacher.binarize(),
            student_score,
            teacher_score,
        })
    }
}

fn check_dims(pred: &MaskGrid, target: &MaskGrid) -> Result<()> {
    if pred.same_dims(target) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.width, pred.height, target.width, target.height
        )))
    }
}

fn bce_term(p: f64, t: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// d/dp of [`bce_term`]; zero where the clamp is active.
fn bce_term_grad(p: f64, t: f64, eps: f64) -> f64 {
    if p < eps || p > 1.0 - eps {
        0.0
    } else {
        -t / p + (1.0 - t) / (1.0 - p)
    }
}

pub fn bce_loss(pred: &MaskGrid, target: &MaskGrid, params: &LossParams) -> Result<f64> {
    check_dims(pred, target)?;
    let terms: Vec<f64> = pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(&p, &t)| bce_term(p, t, params.bce_eps))
        .collect();
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

struct DiceSums {
    inter: f64,
    pred: f64,
    target: f64,
}

fn dice_sums(pred: &MaskGrid, target: &MaskGrid) -> DiceSums {
    let prod: Vec<f64> = pred.values.iter().zip(&target.values).map(|(p, t)| p * t).collect();
    DiceSums {
        inter: pairwise_sum(&prod),
        pred: pairwise_sum(&pred.values),
        target: pairwise_sum(&target.values),
    }
}

pub fn dice_loss(pred: &MaskGrid, target: &MaskGrid, params: &LossParams) -> Result<f64> {
    check_dims(pred, target)?;
    let s = dice_sums(pred, target);
    let sm = params.dice_smooth;
    Ok(1.0 - (2.0 * s.inter + sm) / (s.pred + s.target + sm))
}

/// Sobel responses `(gx, gy)` with reflected borders. Differences are taken
/// before weighting so flat regions give exactly zero.
pub fn sobel(values: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
    let at = |x: isize, y: isize| values[reflect(y, height) * width + reflect(x, width)];
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let (xi, yi) = (x as isize, y as isize);
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (d, w) in (-1..=1).zip(SMOOTH) {
                sx += w * (at(xi + 1, yi + d) - at(xi - 1, yi + d));
                sy += w * (at(xi + d, yi + 1) - at(xi + d, yi - 1));
            }
            gx[y * width + x] = sx;
            gy[y * width + x] = sy;
        }
    }
    (gx, gy)
}

/// Visits the nine taps of output pixel `(x, y)` as `(input index, kx, ky)`;
/// the adjoint of [`sobel`].
fn for_each_tap(x: usize, y: usize, width: usize, height: usize, mut f: impl FnMut(usize, f64, f64)) {
    const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
    const DIFF: [f64; 3] = [-1.0, 0.0, 1.0];
    for dy in 0..3 {
        let yy = reflect(y as isize + dy as isize - 1, height);
        for dx in 0..3 {
            let xx = reflect(x as isize + dx as isize - 1, width);
            f(yy * width + xx, DIFF[dx] * SMOOTH[dy], SMOOTH[dx] * DIFF[dy]);
        }
    }
}

fn sobel_magnitude(values: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (gx, gy) = sobel(values, width, height);
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    (gx, gy, mag)
}

fn check_boundary_dims(pred: &MaskGrid) -> Result<()> {
    if pred.width < 3 || pred.height < 3 {
        return Err(Error::Invalid(format!(
            "boundary loss needs at least 3x3, got {}x{}",
            pred.width, pred.height
        )));
    }
    Ok(())
}

pub fn boundary_loss(pred: &MaskGrid, target: &MaskGrid) -> Result<f64> {
    check_dims(pred, target)?;
    check_boundary_dims(pred)?;
    let (_, _, mp) = sobel_magnitude(&pred.values, pred.width, pred.height);
    let (_, _, mt) = sobel_magnitude(&target.values, target.width, target.height);
    let diffs: Vec<f64> = mp.iter().zip(&mt).map(|(a, b)| (a - b).abs()).collect();
    Ok(pairwise_sum(&diffs) / diffs.len() as f64)
}

pub fn total_loss(sample: &DistillSample, params: &LossParams) -> Result<LossBreakdown> {
    let (p, t) = (&sample.student, &sample.teacher);
    let bce = bce_loss(p, t, params)?;
    let dice = dice_loss(p, t, params)?;
    let boundary = boundary_loss(p, t)?;
    let score = bce_term(sample.student_score, sample.teacher_score, params.bce_eps);
    Ok(LossBreakdown::from_terms(bce, dice, boundary, score))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    /// d total / d student probability, per pixel.
    pub mask: Grid,
    /// d total / d student score.
    pub score: f64,
}

impl LossGradients {
    pub fn max_abs(&self) -> f64 {
        self.mask
            .data
            .iter()
            .fold(self.score.abs(), |m, g| m.max(g.abs()))
    }
}

/// Analytic gradients of [`total_loss`].
///
/// Non-differentiable points take the zero sub-gradient: clamped BCE
/// probabilities, zero Sobel magnitudes, and ties in the L1 boundary term.
pub fn loss_gradients(sample: &DistillSample, params: &LossParams) -> Result<LossGradients> {
    let (p, t) = (&sample.student, &sample.teacher);
    check_dims(p, t)?;
    check_boundary_dims(p)?;
    let (w, h) = (p.width, p.height);
    let n = (w * h) as f64;
    let mut grad = vec![0.0; w * h];

    for ((g, &pi), &ti) in grad.iter_mut().zip(&p.values).zip(&t.values) {
        *g += BCE_WEIGHT * bce_term_grad(pi, ti, params.bce_eps) / n;
    }

    let s = dice_sums(p, t);
    let den = s.pred + s.target + params.dice_smooth;
    let num = 2.0 * s.inter + params.dice_smooth;
    for (g, &ti) in grad.iter_mut().zip(&t.values) {
        // d/dp_i of 1 - num/den
        *g += DICE_WEIGHT * -(2.0 * ti * den - num) / (den * den);
    }

    let (gx, gy, mp) = sobel_magnitude(&p.values, w, h);
    let (_, _, mt) = sobel_magnitude(&t.values, w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = mp[i] - mt[i];
            if d == 0.0 || mp[i] == 0.0 {
                continue;
            }
            let scale = BOUNDARY_WEIGHT * d.signum() / n / mp[i];
            let (cx, cy) = (scale * gx[i], scale * gy[i]);
            for_each_tap(x, y, w, h, |j, kx, ky| grad[j] += cx * kx + cy * ky);
        }
    }

    Ok(LossGradients {
        mask: Grid::from_vec(w, h, grad)?,
        score: bce_term_grad(sample.student_score, sample.teacher_score, params.bce_eps),
    })
}

/// Samples whose teacher score is strictly above `threshold`, in order.
pub fn teacher_filter(samples: &[DistillSample], threshold: f64) -> Vec<DistillSample> {
    samples
        .iter()
        .filter(|s| s.teacher_score > threshold)
        .cloned()
        .collect()
}

/// Per-sample losses and their mean, with a reduction order independent of
/// the thread count.
pub fn batch_losses(samples: &[DistillSample], params: &LossParams) -> Result<(Vec<LossBreakdown>, LossBreakdown)> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::Invalid("empty distillation batch".into()));
    }
    let per: Vec<LossBreakdown> = samples
        .par_iter()
        .map(|s| total_loss(s, params))
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |f: fn(&LossBreakdown) -> f64| pairwise_sum(&per.iter().map(f).collect::<Vec<_>>()) / n;
    let summary = LossBreakdown::from_terms(
        mean(|l| l.bce),
        mean(|l| l.dice),
        mean(|l| l.boundary),
        mean(|l| l.score),
    );
    Ok((per, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ScheduleParams {
    pub peak_lr: f64,
    pub warmup_epochs: f64,
    pub restart_epoch: f64,
    pub total_epochs: f64,
    pub min_lr: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            peak_lr: 2e-4,
            warmup_epochs: 5.0,
            restart_epoch: 20.0,
            total_epochs: 40.0,
            min_lr: 1e-6,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.min_lr
            && self.min_lr < self.peak_lr
            && 0.0 < self.warmup_epochs
            && self.warmup_epochs < self.restart_epoch
            && self.restart_epoch < self.total_epochs;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("schedule params out of order: {self:?}")))
        }
    }
}

/// Cosine interpolation from `peak` (at `frac = 0`) to `min` (at `frac = 1`),
/// exact at both ends.
fn cosine_segment(peak: f64, min: f64, frac: f64) -> f64 {
    let c = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
    if c >= 0.5 {
        peak - (peak - min) * (1.0 - c)
    } else {
        min + (peak - min) * c
    }
}

/// Learning rate at a (fractional) epoch: linear warmup from 0, cosine decay
/// to `min_lr`, then a restart at peak with a second cosine decay.
pub fn lr_at(epoch: f64, params: &ScheduleParams) -> Result<f64> {
    params.validate()?;
    let p = params;
    if !(0.0..=p.total_epochs).contains(&epoch) {
        return Err(Error::EpochOutOfRange {
            epoch,
            total: p.total_epochs,
        });
    }
    Ok(if epoch <= p.warmup_epochs {
        p.peak_lr * epoch / p.warmup_epochs
    } else if epoch < p.restart_epoch {
        let frac = (epoch - p.warmup_epochs) / (p.restart_epoch - p.warmup_epochs);
        cosine_segment(p.peak_lr, p.min_lr, frac)
    } else {
        let frac = (epoch - p.restart_epoch) / (p.total_epochs - p.restart_epoch);
        cosine_segment(p.peak_lr, p.min_lr, frac)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f64, n: usize) -> MaskGrid {
        MaskGrid::new(n, n, vec![v; n * n]).unwrap()
    }

    fn step(n: usize, col: usize) -> MaskGrid {
        let mut m = MaskGrid::zeros(n, n);
        for y in 0..n {
            for x in col..n {
                m.set(x, y, 1.0);
            }
        }
        m
    }

    #[test]
    fn bce_closed_forms() {
        let p = LossParams::default();
        let half = constant(0.5, 8);
        for t in [constant(0.0, 8), constant(1.0, 8), step(8, 3)] {
            assert!((bce_loss(&half, &t, &p).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        }
        let t = step(8, 4);
        let v = bce_loss(&t, &t, &p).unwrap();
        assert!((v - -(1.0f64 - 1e-7).ln()).abs() < 1e-15);
    }

    #[test]
    fn dice_closed_forms() {
        let p = LossParams::default();
        let ones = constant(1.0, 64);
        let zeros = constant(0.0, 64);
        assert_eq!(dice_loss(&ones, &ones, &p).unwrap(), 0.0);
        assert_eq!(dice_loss(&zeros, &zeros, &p).unwrap(), 0.0);
        let v = dice_loss(&zeros, &ones, &p).unwrap();
        assert!((v - (1.0 - 1.0 / 4097.0)).abs() < 1e-15);
    }

    #[test]
    fn boundary_blind_spot_and_identity() {
        assert_eq!(boundary_loss(&constant(0.2, 6), &constant(0.9, 6)).unwrap(), 0.0);
        let s = step(16, 5);
        assert_eq!(boundary_loss(&s, &s).unwrap(), 0.0);
        assert!(boundary_loss(&constant(0.0, 2), &constant(0.0, 2)).is_err());
    }

    #[test]
    fn step_edge_oracle() {
        // a unit step between columns c-1 and c yields |gx| = 4 on both
        // adjacent columns and 0 elsewhere, so two steps far apart differ on
        // four columns of full height
        let (a, b) = (step(64, 32), step(64, 40));
        let v = boundary_loss(&a, &b).unwrap();
        assert!((v - 4.0 * 4.0 * 64.0 / 4096.0).abs() < 1e-12);
    }

    #[test]
    fn weights_recompose() {
        let l = LossBreakdown::from_terms(1.0, 1.0, 1.0, 0.0);
        assert_eq!(l.seg, 1.0);
        assert_eq!(l.total, 1.0);
    }

    #[test]
    fn teacher_filter_strict() {
        let m = constant(0.5, 4);
        let samples: Vec<_> = [0.6, 0.71, 0.9, 0.7]
            .iter()
            .map(|&s| DistillSample::new(m.clone(), &m, 0.5, s).unwrap())
            .collect();
        let kept = teacher_filter(&samples, 0.7);
        assert_eq!(kept.iter().map(|s| s.teacher_score).collect::<Vec<_>>(), vec![0.71, 0.9]);
        assert!(teacher_filter(&[], 0.7).is_empty());
    }

    #[test]
    fn lr_anchors() {
        let p = ScheduleParams::default();
        assert_eq!(lr_at(0.0, &p).unwrap(), 0.0);
        assert_eq!(lr_at(5.0, &p).unwrap(), 2e-4);
        assert_eq!(lr_at(20.0, &p).unwrap(), 2e-4);
        assert_eq!(lr_at(40.0, &p).unwrap(), 1e-6);
        assert!((lr_at(12.5, &p).unwrap() - 1.005e-4).abs() < 1e-18);
        assert!(lr_at(19.999_999, &p).unwrap() < 1.0001e-6);
        assert!(matches!(lr_at(40.5, &p), Err(Error::EpochOutOfRange { .. })));
        assert!(lr_at(-0.1, &p).is_err());
    }

    #[test]
    fn sample_validation() {
        let a = constant(0.5, 4);
        let b = constant(0.5, 5);
        assert!(DistillSample::new(a.clone(), &b, 0.5, 0.5).is_err());
        assert!(DistillSample::new(a.clone(), &a, 1.5, 0.5).is_err());
        let s = DistillSample::new(a.clone(), &constant(0.7, 4), 0.5, 0.5).unwrap();
        assert_eq!(s.teacher, constant(1.0, 4));
    }
}
