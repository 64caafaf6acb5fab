//! DIS evaluation measures.
//!
//! Nine scores per prediction/ground-truth pair: max F-measure, weighted
//! F-measure, mean E-measure, S-measure, MAE, and Dice/IoU/BER/accuracy at a
//! fixed binarization threshold. Everything accumulates in `f64`.
//!
//! Conventions worth knowing before comparing against other toolkits:
//! - Max F sweeps the 256 thresholds `k/255` with the predicate `q >= t`, β² = 0.3.
//! - Mean E-measure sweeps `(k+1)/256`, `k = 0..256`, so a perfect binary
//!   prediction scores exactly 1 at every threshold, and averages pixels over `N`.
//! - Weighted F follows Margolin et al. with β² = 1; nearest-foreground ties
//!   resolve to the smallest row, then column.
//! - S-measure quadrant centroids round half away from zero.

mod edt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_separable_zero, gaussian_kernel};
use crate::imagecore::{BinaryMask, ProbabilityMap};

pub use edt::nearest_foreground;

/// β² for the max F-measure.
pub const BETA2_MAX_F: f64 = 0.3;
/// β² for the weighted F-measure.
pub const BETA2_WEIGHTED_F: f64 = 1.0;
/// Number of thresholds in the F and E sweeps.
pub const SWEEP_LEVELS: usize = 256;
/// Default binarization threshold for Dice/IoU/BER/Acc.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Threshold `k` of the max-F sweep.
#[inline]
pub fn f_threshold(k: usize) -> f64 {
    k as f64 / 255.0
}

/// Threshold `k` of the E-measure sweep.
#[inline]
pub fn e_threshold(k: usize) -> f64 {
    (k + 1) as f64 / 256.0
}

fn ensure_same(q: &ProbabilityMap, y: &BinaryMask) -> Result<()> {
    if q.dims() != y.dims() {
        return Err(Error::ShapeMismatch {
            expected: y.dims(),
            got: q.dims(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn dice(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }

    pub fn iou(&self) -> f64 {
        let den = self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            self.tp as f64 / den as f64
        }
    }

    pub fn ber(&self) -> f64 {
        let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        0.5 * (rate(self.fn_, self.tp + self.fn_) + rate(self.fp, self.tn + self.fp))
    }

    pub fn acc(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Confusion counts for the prediction `q >= t`.
pub fn confusion(q: &ProbabilityMap, y: &BinaryMask, t: f64) -> Result<ConfusionCounts> {
    ensure_same(q, y)?;
    let mut c = ConfusionCounts::default();
    for (&qi, &yi) in q.data().iter().zip(y.data()) {
        match (qi as f64 >= t, yi == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn dice(q: &ProbabilityMap, y: &BinaryMask, t: f64) -> Result<f64> {
    Ok(confusion(q, y, t)?.dice())
}

pub fn iou(q: &ProbabilityMap, y: &BinaryMask, t: f64) -> Result<f64> {
    Ok(confusion(q, y, t)?.iou())
}

pub fn ber(q: &ProbabilityMap, y: &BinaryMask, t: f64) -> Result<f64> {
    Ok(confusion(q, y, t)?.ber())
}

pub fn acc(q: &ProbabilityMap, y: &BinaryMask, t: f64) -> Result<f64> {
    Ok(confusion(q, y, t)?.acc())
}

pub fn mae(q: &ProbabilityMap, y: &BinaryMask) -> Result<f64> {
    ensure_same(q, y)?;
    let sum: f64 = q
        .data()
        .iter()
        .zip(y.data())
        .map(|(&qi, &yi)| (qi as f64 - yi as f64).abs())
        .sum();
    Ok(sum / q.len() as f64)
}

/// `(1 + β²) P R / (β² P + R)`, zero when the denominator vanishes.
#[inline]
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

/// Largest `k` in `0..levels` with `v >= thr(k)`, or `None`.
fn sweep_level(v: f64, levels: usize, thr: impl Fn(usize) -> f64) -> Option<usize> {
    // Start from an estimate and correct it against the exact thresholds.
    let mut k = ((v * levels as f64) as isize).clamp(-1, levels as isize - 1);
    while k + 1 < levels as isize && v >= thr((k + 1) as usize) {
        k += 1;
    }
    while k >= 0 && v < thr(k as usize) {
        k -= 1;
    }
    (k >= 0).then_some(k as usize)
}

/// Per-threshold (tp, fp) counts for a monotone sweep, from a histogram of
/// each pixel's highest passing level.
fn sweep_counts(
    q: &ProbabilityMap,
    y: &BinaryMask,
    thr: impl Fn(usize) -> f64 + Copy,
) -> Vec<(u64, u64)> {
    let mut fg = [0u64; SWEEP_LEVELS];
    let mut bg = [0u64; SWEEP_LEVELS];
    for (&qi, &yi) in q.data().iter().zip(y.data()) {
        if let Some(k) = sweep_level(qi as f64, SWEEP_LEVELS, thr) {
            if yi == 1 {
                fg[k] += 1;
            } else {
                bg[k] += 1;
            }
        }
    }
    // Pixels passing threshold k are those whose level is >= k.
    let mut out = vec![(0, 0); SWEEP_LEVELS];
    let (mut tp, mut fp) = (0, 0);
    for k in (0..SWEEP_LEVELS).rev() {
        tp += fg[k];
        fp += bg[k];
        out[k] = (tp, fp);
    }
    out
}

/// Maximum F-measure (β² = 0.3) over the 256-threshold sweep.
pub fn max_f(q: &ProbabilityMap, y: &BinaryMask) -> Result<f64> {
    ensure_same(q, y)?;
    let positives = y.foreground_count() as u64;
    if positives == 0 {
        return Err(Error::EmptyForeground);
    }
    let best = sweep_counts(q, y, f_threshold)
        .into_iter()
        .map(|(tp, fp)| {
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = tp as f64 / positives as f64;
            f_beta(precision, recall, BETA2_MAX_F)
        })
        .fold(0.0, f64::max);
    Ok(best)
}

/// Enhanced-alignment score of one binarized prediction, given its counts.
pub fn enhanced_alignment(tp: u64, fp: u64, n: u64, gt_fg: u64) -> f64 {
    let pred_fg = tp + fp;
    if gt_fg == 0 {
        return (n - pred_fg) as f64 / n as f64;
    }
    if gt_fg == n {
        return pred_fg as f64 / n as f64;
    }
    let fn_ = gt_fg - tp;
    let tn = n - pred_fg - fn_;
    let mean_p = pred_fg as f64 / n as f64;
    let mean_y = gt_fg as f64 / n as f64;
    let part = |count: u64, phi_p: f64, phi_y: f64| {
        if count == 0 {
            return 0.0;
        }
        let align = 2.0 * phi_p * phi_y / (phi_p * phi_p + phi_y * phi_y);
        count as f64 * (align + 1.0) * (align + 1.0) / 4.0
    };
    let sum = part(tp, 1.0 - mean_p, 1.0 - mean_y)
        + part(fp, 1.0 - mean_p, -mean_y)
        + part(fn_, -mean_p, 1.0 - mean_y)
        + part(tn, -mean_p, -mean_y);
    sum / n as f64
}

/// Mean E-measure over the 256-threshold sweep.
pub fn e_measure(q: &ProbabilityMap, y: &BinaryMask) -> Result<f64> {
    ensure_same(q, y)?;
    let n = q.len() as u64;
    let gt_fg = y.foreground_count() as u64;
    let total: f64 = sweep_counts(q, y, e_threshold)
        .into_iter()
        .map(|(tp, fp)| enhanced_alignment(tp, fp, n, gt_fg))
        .sum();
    Ok(total / SWEEP_LEVELS as f64)
}

/// Weighted F-measure (Margolin et al.), β² = 1.
pub fn weighted_f(q: &ProbabilityMap, y: &BinaryMask) -> Result<f64> {
    ensure_same(q, y)?;
    let (h, w) = y.dims();
    let gt = y.data();
    let (dist2, nearest) = nearest_foreground(gt, h, w).ok_or(Error::EmptyForeground)?;

    let err: Vec<f64> = q
        .data()
        .iter()
        .zip(gt)
        .map(|(&qi, &yi)| (qi as f64 - yi as f64).abs())
        .collect();
    // Background errors inherit the error at their nearest foreground pixel.
    let et: Vec<f64> = (0..h * w)
        .map(|i| if gt[i] == 1 { err[i] } else { err[nearest[i]] })
        .collect();
    let ea = convolve_separable_zero(&et, h, w, &gaussian_kernel(7, 5.0));

    let decay = 0.5f64.ln() / 5.0;
    let (mut fg_ew, mut bg_ew, mut fg_n) = (0.0, 0.0, 0usize);
    for i in 0..h * w {
        if gt[i] == 1 {
            fg_ew += if ea[i] < err[i] { ea[i] } else { err[i] };
            fg_n += 1;
        } else {
            let importance = 2.0 - (decay * (dist2[i] as f64).sqrt()).exp();
            bg_ew += err[i] * importance;
        }
    }
    let tpw = fg_n as f64 - fg_ew;
    let fpw = bg_ew;
    let recall = 1.0 - fg_ew / fg_n as f64;
    let precision = if tpw + fpw == 0.0 { 0.0 } else { tpw / (tpw + fpw) };
    Ok(f_beta(precision, recall, BETA2_WEIGHTED_F).clamp(0.0, 1.0))
}

/// Structure measure: `0.5 S_object + 0.5 S_region`, clamped to `[0, 1]`.
pub fn s_measure(q: &ProbabilityMap, y: &BinaryMask) -> Result<f64> {
    ensure_same(q, y)?;
    let qd: Vec<f64> = q.data().iter().map(|&v| v as f64).collect();
    let gt = y.data();
    let fg_ratio = y.foreground_fraction();
    let score = if fg_ratio == 0.0 {
        1.0 - qd.iter().sum::<f64>() / qd.len() as f64
    } else if fg_ratio == 1.0 {
        qd.iter().sum::<f64>() / qd.len() as f64
    } else {
        0.5 * s_object(&qd, gt, fg_ratio) + 0.5 * s_region(&qd, gt, y.height(), y.width())
    };
    Ok(score.clamp(0.0, 1.0))
}

/// `2 x̄ / (x̄² + 1 + σ)` over the selected values (sample std).
fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let std = if n > 1 {
        (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std)
}

fn s_object(q: &[f64], gt: &[u8], fg_ratio: f64) -> f64 {
    let pairs = q.iter().zip(gt);
    let fg = object_score(pairs.clone().filter(|(_, &g)| g == 1).map(|(&v, _)| v));
    let bg = object_score(pairs.filter(|(_, &g)| g == 0).map(|(&v, _)| 1.0 - v));
    fg_ratio * fg + (1.0 - fg_ratio) * bg
}

/// Foreground centroid in 1-based coordinates, rounded half away from zero:
/// the split column/row for the quadrant decomposition.
pub(crate) fn centroid_split(gt: &[u8], h: usize, w: usize) -> (usize, usize) {
    let (mut n, mut sr, mut sc) = (0u64, 0u64, 0u64);
    for r in 0..h {
        for c in 0..w {
            if gt[r * w + c] == 1 {
                n += 1;
                sr += r as u64;
                sc += c as u64;
            }
        }
    }
    if n == 0 {
        return ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize);
    }
    let x = (sc as f64 / n as f64).round() as usize + 1;
    let y = (sr as f64 / n as f64).round() as usize + 1;
    (x.min(w), y.min(h))
}

/// SSIM-style similarity of one block (unbiased variances).
fn block_similarity(
    q: &[f64],
    gt: &[u8],
    w: usize,
    rows: (usize, usize),
    cols: (usize, usize),
) -> f64 {
    let n = (rows.1 - rows.0) * (cols.1 - cols.0);
    let cells = || (rows.0..rows.1).flat_map(move |r| (cols.0..cols.1).map(move |c| r * w + c));
    let mx = cells().map(|i| q[i]).sum::<f64>() / n as f64;
    let my = cells().map(|i| gt[i] as f64).sum::<f64>() / n as f64;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    if n > 1 {
        for i in cells() {
            let (dx, dy) = (q[i] - mx, gt[i] as f64 - my);
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
        let d = (n - 1) as f64;
        vx /= d;
        vy /= d;
        cxy /= d;
    }
    let alpha = 4.0 * mx * my * cxy;
    let beta = (mx * mx + my * my) * (vx + vy);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(q: &[f64], gt: &[u8], h: usize, w: usize) -> f64 {
    let (x, y) = centroid_split(gt, h, w);
    let blocks = [
        ((0, y), (0, x)),
        ((0, y), (x, w)),
        ((y, h), (0, x)),
        ((y, h), (x, w)),
    ];
    let mut acc = 0.0;
    for (rows, cols) in blocks {
        let area = (rows.1 - rows.0) * (cols.1 - cols.0);
        if area > 0 {
            acc += area as f64 * block_similarity(q, gt, w, rows, cols);
        }
    }
    acc / (h * w) as f64
}

/// The nine scores for one pair or averaged over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub max_f: f64,
    pub weighted_f: f64,
    pub e_measure: f64,
    pub s_measure: f64,
    pub mae: f64,
    pub dice: f64,
    pub iou: f64,
    pub ber: f64,
    pub acc: f64,
}

impl MetricReport {
    pub const IDEAL: MetricReport = MetricReport {
        max_f: 1.0,
        weighted_f: 1.0,
        e_measure: 1.0,
        s_measure: 1.0,
        mae: 0.0,
        dice: 1.0,
        iou: 1.0,
        ber: 0.0,
        acc: 1.0,
    };

    /// Field values in table order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.max_f,
            self.weighted_f,
            self.e_measure,
            self.s_measure,
            self.mae,
            self.dice,
            self.iou,
            self.ber,
            self.acc,
        ]
    }
}

/// Scores for one pair. The two F-measures are undefined (and `None`) when
/// the ground truth has no foreground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub max_f: Option<f64>,
    pub weighted_f: Option<f64>,
    pub e_measure: f64,
    pub s_measure: f64,
    pub mae: f64,
    pub dice: f64,
    pub iou: f64,
    pub ber: f64,
    pub acc: f64,
}

impl PairMetrics {
    pub fn is_degenerate(&self) -> bool {
        self.max_f.is_none()
    }

    pub fn report(&self) -> Option<MetricReport> {
        Some(MetricReport {
            max_f: self.max_f?,
            weighted_f: self.weighted_f?,
            e_measure: self.e_measure,
            s_measure: self.s_measure,
            mae: self.mae,
            dice: self.dice,
            iou: self.iou,
            ber: self.ber,
            acc: self.acc,
        })
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyForeground) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate_pair(q: &ProbabilityMap, y: &BinaryMask, threshold: f64) -> Result<PairMetrics> {
    let c = confusion(q, y, threshold)?;
    Ok(PairMetrics {
        max_f: defined(max_f(q, y))?,
        weighted_f: defined(weighted_f(q, y))?,
        e_measure: e_measure(q, y)?,
        s_measure: s_measure(q, y)?,
        mae: mae(q, y)?,
        dice: c.dice(),
        iou: c.iou(),
        ber: c.ber(),
        acc: c.acc(),
    })
}

/// Dataset-level means plus how many pairs were left out of the F-measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub report: MetricReport,
    pub pairs: usize,
    pub excluded: usize,
}

/// Arithmetic mean of per-pair scores, summed in input order.
pub fn aggregate(per_pair: &[PairMetrics]) -> Result<DatasetReport> {
    if per_pair.is_empty() {
        return Err(Error::EmptyInput("no prediction/ground-truth pairs"));
    }
    let n = per_pair.len() as f64;
    let mean = |f: fn(&PairMetrics) -> f64| per_pair.iter().map(f).sum::<f64>() / n;
    let valid: Vec<&PairMetrics> = per_pair.iter().filter(|p| !p.is_degenerate()).collect();
    let valid_mean = |f: fn(&PairMetrics) -> Option<f64>| {
        if valid.is_empty() {
            0.0
        } else {
            valid.iter().filter_map(|p| f(p)).sum::<f64>() / valid.len() as f64
        }
    };
    Ok(DatasetReport {
        report: MetricReport {
            max_f: valid_mean(|p| p.max_f),
            weighted_f: valid_mean(|p| p.weighted_f),
            e_measure: mean(|p| p.e_measure),
            s_measure: mean(|p| p.s_measure),
            mae: mean(|p| p.mae),
            dice: mean(|p| p.dice),
            iou: mean(|p| p.iou),
            ber: mean(|p| p.ber),
            acc: mean(|p| p.acc),
        },
        pairs: per_pair.len(),
        excluded: per_pair.len() - valid.len(),
    })
}

/// Evaluates every pair and averages; per-pair work may run in parallel but
/// the reduction order is fixed.
pub fn evaluate_dataset(
    pairs: &[(ProbabilityMap, BinaryMask)],
    threshold: f64,
) -> Result<(DatasetReport, Vec<PairMetrics>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no prediction/ground-truth pairs"));
    }
    let per_pair = crate::par::map_ordered(pairs, |(q, y)| evaluate_pair(q, y, threshold))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(&per_pair)?, per_pair))
}

#[cfg(test)]
mod tests;
