//! Structure loss and the multi-scale combined loss, with analytic gradients.
//!
//! `StructureLoss(p, y) = w_bce * WBCE(p, y) + w_iou * WIOU(σ(p), y) +
//! w_ssim * (1 - SSIM(σ(p), y))`, where WBCE and WIOU are weighted by a
//! boundary map `1 + 5 |meanpool31(y) - y|`. Every function returns the
//! gradient with respect to the logits in double precision.

mod ssim;

use serde::{Deserialize, Serialize};

pub use ssim::{C1 as SSIM_C1, C2 as SSIM_C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::filter::box_mean_replicate;
use crate::imagecore::{sigmoid, BinaryMask, LogitMap, ProbabilityMap};

/// Smoothing added to both IoU numerator and denominator.
pub const IOU_SMOOTH: f64 = 1.0;
/// Radius of the 31x31 box used for boundary weighting.
pub const BOUNDARY_RADIUS: usize = 15;
/// Gain on the local foreground/background disagreement.
pub const BOUNDARY_GAIN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_bce: f64,
    pub w_iou: f64,
    pub w_ssim: f64,
}

impl LossWeights {
    pub fn new(w_bce: f64, w_iou: f64, w_ssim: f64) -> Result<Self> {
        if [w_bce, w_iou, w_ssim].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and non-negative, got ({w_bce}, {w_iou}, {w_ssim})"
            )));
        }
        Ok(Self {
            w_bce,
            w_iou,
            w_ssim,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_bce: 4.0,
            w_iou: 1.0,
            w_ssim: 2.0,
        }
    }
}

/// Gradient of a scalar loss with respect to a logit map.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GradMap {
    fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    fn add_scaled(&mut self, other: &[f64], scale: f64) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// A loss value with its logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: GradMap,
}

/// Per-pixel weights, each in `[1, 6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl WeightMap {
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1.0; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `1 + 5 |meanpool31(y) - y|` with edge-replicating padding.
pub fn boundary_weight_map(y: &BinaryMask) -> WeightMap {
    let (h, w) = y.dims();
    let yf: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let pooled = box_mean_replicate(&yf, h, w, BOUNDARY_RADIUS);
    WeightMap {
        height: h,
        width: w,
        data: pooled
            .iter()
            .zip(&yf)
            .map(|(m, v)| 1.0 + BOUNDARY_GAIN * (m - v).abs())
            .collect(),
    }
}

fn ensure_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

fn logits_f64(p: &LogitMap) -> Vec<f64> {
    p.data().iter().map(|&v| v as f64).collect()
}

fn mask_f64(y: &BinaryMask) -> Vec<f64> {
    y.data().iter().map(|&v| v as f64).collect()
}

/// `max(p, 0) - p y + ln(1 + e^{-|p|})`, the logit form of binary cross-entropy.
#[inline]
fn bce_logit(p: f64, y: f64) -> f64 {
    p.max(0.0) - p * y + (-p.abs()).exp().ln_1p()
}

fn wbce_raw(p: &[f64], y: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let wsum: f64 = w.iter().sum();
    let mut acc = 0.0;
    let grad = p
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&pi, &yi), &wi)| {
            acc += wi * bce_logit(pi, yi);
            wi * (sigmoid(pi) - yi) / wsum
        })
        .collect();
    (acc / wsum, grad)
}

/// Returns the loss and `dL/dq` (not yet chained through the sigmoid).
fn wiou_raw(q: &[f64], y: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let mut inter = IOU_SMOOTH;
    let mut union = IOU_SMOOTH;
    for ((&qi, &yi), &wi) in q.iter().zip(y).zip(w) {
        inter += wi * qi * yi;
        union += wi * (qi + yi - qi * yi);
    }
    let loss = 1.0 - inter / union;
    let u2 = union * union;
    let grad = y
        .iter()
        .zip(w)
        .map(|(&yi, &wi)| -(wi * yi * union - inter * wi * (1.0 - yi)) / u2)
        .collect();
    (loss, grad)
}

fn chain_sigmoid(dq: &mut [f64], q: &[f64]) {
    for (d, &qi) in dq.iter_mut().zip(q) {
        *d *= qi * (1.0 - qi);
    }
}

fn check_window(h: usize, w: usize) -> Result<()> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::WindowTooLarge {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    Ok(())
}

/// Boundary-weighted binary cross-entropy, `Σ w·BCE / Σ w`.
pub fn wbce(p: &LogitMap, y: &BinaryMask, weights: &WeightMap) -> Result<LossTerm> {
    ensure_same(p.dims(), y.dims())?;
    ensure_same(p.dims(), weights.dims())?;
    let (value, data) = wbce_raw(&logits_f64(p), &mask_f64(y), &weights.data);
    Ok(LossTerm {
        value,
        grad: GradMap {
            height: p.height(),
            width: p.width(),
            data,
        },
    })
}

/// Weighted soft IoU loss on probabilities `q = σ(p)`; the gradient is with
/// respect to the logits, recovered through `q (1 - q)`.
pub fn wiou(q: &ProbabilityMap, y: &BinaryMask, weights: &WeightMap) -> Result<LossTerm> {
    ensure_same(q.dims(), y.dims())?;
    ensure_same(q.dims(), weights.dims())?;
    let qf: Vec<f64> = q.data().iter().map(|&v| v as f64).collect();
    Ok(wiou_on(&qf, y, weights))
}

/// [`wiou`] evaluated directly from logits in double precision.
pub fn wiou_logits(p: &LogitMap, y: &BinaryMask, weights: &WeightMap) -> Result<LossTerm> {
    ensure_same(p.dims(), y.dims())?;
    ensure_same(p.dims(), weights.dims())?;
    let q: Vec<f64> = p.data().iter().map(|&v| sigmoid(v as f64)).collect();
    Ok(wiou_on(&q, y, weights))
}

fn wiou_on(q: &[f64], y: &BinaryMask, weights: &WeightMap) -> LossTerm {
    let (value, mut data) = wiou_raw(q, &mask_f64(y), &weights.data);
    chain_sigmoid(&mut data, q);
    LossTerm {
        value,
        grad: GradMap {
            height: y.height(),
            width: y.width(),
            data,
        },
    }
}

/// `1 - mean SSIM(q, y)`; gradient with respect to the logits.
pub fn ssim_loss(q: &ProbabilityMap, y: &BinaryMask) -> Result<LossTerm> {
    ensure_same(q.dims(), y.dims())?;
    let qf: Vec<f64> = q.data().iter().map(|&v| v as f64).collect();
    ssim_on(&qf, y)
}

/// [`ssim_loss`] evaluated directly from logits in double precision.
pub fn ssim_loss_logits(p: &LogitMap, y: &BinaryMask) -> Result<LossTerm> {
    ensure_same(p.dims(), y.dims())?;
    let q: Vec<f64> = p.data().iter().map(|&v| sigmoid(v as f64)).collect();
    ssim_on(&q, y)
}

fn ssim_on(q: &[f64], y: &BinaryMask) -> Result<LossTerm> {
    let (h, w) = y.dims();
    check_window(h, w)?;
    let (mean, mut grad) = ssim::mean_ssim_with_grad(q, &mask_f64(y), h, w);
    for g in grad.iter_mut() {
        *g = -*g;
    }
    chain_sigmoid(&mut grad, q);
    Ok(LossTerm {
        value: 1.0 - mean,
        grad: GradMap {
            height: h,
            width: w,
            data: grad,
        },
    })
}

/// Per-term values plus the weighted total and its logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub wbce: f64,
    pub wiou: f64,
    pub ssim: f64,
    pub total: f64,
    pub grad: GradMap,
}

pub fn structure_loss(p: &LogitMap, y: &BinaryMask, lw: &LossWeights) -> Result<LossBreakdown> {
    ensure_same(p.dims(), y.dims())?;
    let (h, w) = p.dims();
    check_window(h, w)?;
    let weights = boundary_weight_map(y);
    let bce = wbce(p, y, &weights)?;
    let iou = wiou_logits(p, y, &weights)?;
    let ssim = ssim_loss_logits(p, y)?;

    let mut grad = GradMap::zeros(h, w);
    grad.add_scaled(&bce.grad.data, lw.w_bce);
    grad.add_scaled(&iou.grad.data, lw.w_iou);
    grad.add_scaled(&ssim.grad.data, lw.w_ssim);
    Ok(LossBreakdown {
        wbce: bce.value,
        wiou: iou.value,
        ssim: ssim.value,
        total: lw.w_bce * bce.value + lw.w_iou * iou.value + lw.w_ssim * ssim.value,
        grad,
    })
}

/// [`structure_loss`] on raw double-precision logits (row-major `h × w`),
/// returning the weighted total and its gradient. Used where the logits come
/// from a computation that is itself carried out in double precision.
pub fn structure_loss_values(
    p: &[f64],
    y: &BinaryMask,
    lw: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let (h, w) = y.dims();
    if p.len() != h * w {
        return Err(Error::BufferLength {
            height: h,
            width: w,
            channels: 1,
            got: p.len(),
        });
    }
    if let Some(index) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    check_window(h, w)?;
    let weights = boundary_weight_map(y);
    let yf = mask_f64(y);
    let q: Vec<f64> = p.iter().map(|&v| sigmoid(v)).collect();
    let (bce, g_bce) = wbce_raw(p, &yf, &weights.data);
    let (iou, mut g_iou) = wiou_raw(&q, &yf, &weights.data);
    chain_sigmoid(&mut g_iou, &q);
    let (mean, mut g_ssim) = ssim::mean_ssim_with_grad(&q, &yf, h, w);
    g_ssim.iter_mut().for_each(|g| *g = -*g);
    chain_sigmoid(&mut g_ssim, &q);
    let grad = (0..h * w)
        .map(|i| lw.w_bce * g_bce[i] + lw.w_iou * g_iou[i] + lw.w_ssim * g_ssim[i])
        .collect();
    Ok((lw.w_bce * bce + lw.w_iou * iou + lw.w_ssim * (1.0 - mean), grad))
}

/// One supervised prediction: logits and the ground truth at their resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePair {
    pub logits: LogitMap,
    pub gt: BinaryMask,
}

impl ScalePair {
    pub fn new(logits: LogitMap, gt: BinaryMask) -> Result<Self> {
        ensure_same(logits.dims(), gt.dims())?;
        Ok(Self { logits, gt })
    }

    /// Pairs `logits` with `gt` resampled to the logits' resolution.
    pub fn resampled(logits: LogitMap, gt: &BinaryMask) -> Result<Self> {
        let (h, w) = logits.dims();
        let gt = gt.resample_soft(h, w)?;
        Ok(Self { logits, gt })
    }
}

/// Side (local), global and token predictions supervised together.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleOutputs {
    pub local: Vec<ScalePair>,
    pub global: Vec<ScalePair>,
    pub token: Vec<ScalePair>,
}

impl MultiScaleOutputs {
    pub const DEFAULT_LOCAL: usize = 6;
    pub const DEFAULT_GLOBAL: usize = 5;
    pub const DEFAULT_TOKEN: usize = 4;

    pub fn new(local: Vec<ScalePair>, global: Vec<ScalePair>, token: Vec<ScalePair>) -> Self {
        Self {
            local,
            global,
            token,
        }
    }

    /// Builds the three lists from raw logits, resampling `gt` to each scale.
    pub fn from_logits(
        local: Vec<LogitMap>,
        global: Vec<LogitMap>,
        token: Vec<LogitMap>,
        gt: &BinaryMask,
    ) -> Result<Self> {
        let pair = |v: Vec<LogitMap>| -> Result<Vec<ScalePair>> {
            v.into_iter().map(|p| ScalePair::resampled(p, gt)).collect()
        };
        Ok(Self::new(pair(local)?, pair(global)?, pair(token)?))
    }
}

/// Scale factors on the three loss groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedCoefficients {
    pub global: f64,
    pub token: f64,
    pub local: f64,
}

impl Default for CombinedCoefficients {
    fn default() -> Self {
        Self {
            global: 0.3,
            token: 0.3,
            local: 1.0,
        }
    }
}

/// Combined loss value, unscaled group sums and per-map gradients (already
/// multiplied by the group coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub local: f64,
    pub global: f64,
    pub token: f64,
    pub local_grads: Vec<GradMap>,
    pub global_grads: Vec<GradMap>,
    pub token_grads: Vec<GradMap>,
}

/// `0.3 L_global + 0.3 L_token + L_local` with default structure-loss weights.
pub fn combined_loss(ms: &MultiScaleOutputs) -> Result<CombinedLoss> {
    combined_loss_with(ms, &CombinedCoefficients::default(), &LossWeights::default())
}

pub fn combined_loss_with(
    ms: &MultiScaleOutputs,
    coeffs: &CombinedCoefficients,
    lw: &LossWeights,
) -> Result<CombinedLoss> {
    if ms.local.is_empty() {
        return Err(Error::EmptyInput("local outputs (the final prediction is required)"));
    }
    let group = |pairs: &[ScalePair], scale: f64| -> Result<(f64, Vec<GradMap>)> {
        let mut sum = 0.0;
        let mut grads = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let b = structure_loss(&pair.logits, &pair.gt, lw)?;
            sum += b.total;
            let mut g = b.grad;
            g.data.iter_mut().for_each(|v| *v *= scale);
            grads.push(g);
        }
        Ok((sum, grads))
    };
    let (local, local_grads) = group(&ms.local, coeffs.local)?;
    let (global, global_grads) = group(&ms.global, coeffs.global)?;
    let (token, token_grads) = group(&ms.token, coeffs.token)?;
    Ok(CombinedLoss {
        total: coeffs.global * global + coeffs.token * token + coeffs.local * local,
        local,
        global,
        token,
        local_grads,
        global_grads,
        token_grads,
    })
}
