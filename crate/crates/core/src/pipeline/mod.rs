//! Base prediction → confidence trimap → refiner → final map.
//!
//! The base and the refiner are traits so that trained toy networks,
//! precomputed predictions and the deterministic [`HeuristicRefiner`] are
//! interchangeable.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{image_tensor, refiner_input, to_logit_map, NetKind, ToyNet};
use crate::error::{Error, Result};
use crate::filter::{box_mean_clipped, box_sum_clipped};
use crate::imagecore::{load_probability, load_trimap, save_probability, save_trimap, ProbabilityDepth};
use crate::imagecore::{
    sigmoid_map, BinaryMask, Image, LogitMap, ProbabilityMap, Trimap, TRIMAP_BACKGROUND, TRIMAP_FOREGROUND,
};
use crate::trimap::{generate_trimap, generate_trimap_from_probability, ThresholdPair};

/// How the final map combines base confidence and refiner output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositePolicy {
    /// The refiner's map is the final map.
    RefinerFull,
    /// Confident pixels keep their hard labels; the refiner only fills the
    /// unknown band.
    BandOnly,
}

impl CompositePolicy {
    pub const ALL: [CompositePolicy; 2] = [CompositePolicy::RefinerFull, CompositePolicy::BandOnly];

    pub fn name(self) -> &'static str {
        match self {
            CompositePolicy::RefinerFull => "refiner-full",
            CompositePolicy::BandOnly => "band-only",
        }
    }
}

impl std::fmt::Display for CompositePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CompositePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy {s:?} (refiner-full, band-only)")))
    }
}

/// A base prediction, either raw logits or an already-squashed map.
#[derive(Debug, Clone, PartialEq)]
pub enum BasePrediction {
    Logits(LogitMap),
    Probability(ProbabilityMap),
}

impl BasePrediction {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            BasePrediction::Logits(p) => p.dims(),
            BasePrediction::Probability(q) => q.dims(),
        }
    }

    pub fn probability(&self) -> ProbabilityMap {
        match self {
            BasePrediction::Logits(p) => sigmoid_map(p),
            BasePrediction::Probability(q) => q.clone(),
        }
    }

    /// Confidence trimap; logits are squashed in double precision.
    pub fn trimap(&self, th: &ThresholdPair) -> Trimap {
        match self {
            BasePrediction::Logits(p) => generate_trimap(p, th),
            BasePrediction::Probability(q) => generate_trimap_from_probability(q, th),
        }
    }
}

/// Anything that produces a base prediction for an image.
pub trait BaseModel {
    fn predict(&self, img: &Image) -> Result<BasePrediction>;
}

/// Anything that re-estimates the foreground from image, trimap and base.
pub trait Refiner {
    fn refine(&self, img: &Image, trimap: &Trimap, base_prob: &ProbabilityMap) -> Result<ProbabilityMap>;
}

/// A precomputed prediction, returned whatever the image.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPrediction(pub BasePrediction);

impl BaseModel for FixedPrediction {
    fn predict(&self, _img: &Image) -> Result<BasePrediction> {
        Ok(self.0.clone())
    }
}

impl BaseModel for ToyNet<f32> {
    fn predict(&self, img: &Image) -> Result<BasePrediction> {
        if self.kind != NetKind::Base {
            return Err(Error::InvalidConfig("a refiner network cannot act as the base".into()));
        }
        Ok(BasePrediction::Logits(to_logit_map(&ToyNet::predict(self, image_tensor(img))?)?))
    }
}

/// The learned refiner sees only image ⊕ trimap/255, not the base map.
impl Refiner for ToyNet<f32> {
    fn refine(&self, img: &Image, trimap: &Trimap, _base_prob: &ProbabilityMap) -> Result<ProbabilityMap> {
        if self.kind != NetKind::Refiner {
            return Err(Error::InvalidConfig("a base network cannot act as the refiner".into()));
        }
        Ok(sigmoid_map(&to_logit_map(&self.predict(refiner_input(img, trimap)?)?)?))
    }
}

/// Deterministic, training-free refiner: a confidence-weighted guided filter
/// that propagates the confident labels into the unknown band using image
/// luminance as the guide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicRefiner {
    pub radius: usize,
    pub eps: f64,
}

impl Default for HeuristicRefiner {
    fn default() -> Self {
        Self {
            radius: 8,
            eps: 1e-4,
        }
    }
}

impl Refiner for HeuristicRefiner {
    fn refine(&self, img: &Image, trimap: &Trimap, base_prob: &ProbabilityMap) -> Result<ProbabilityMap> {
        heuristic_refiner_with(img, trimap, base_prob, self.radius, self.eps)
    }
}

/// [`HeuristicRefiner`] with its default radius 8 and regularization 1e-4.
pub fn heuristic_refiner(img: &Image, trimap: &Trimap, base_prob: &ProbabilityMap) -> Result<ProbabilityMap> {
    let d = HeuristicRefiner::default();
    heuristic_refiner_with(img, trimap, base_prob, d.radius, d.eps)
}

fn ensure_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// In every window the labels are fitted as `a·I + b` by least squares
/// over the confident pixels only (weights 1 on confident, 0 on unknown);
/// windows without confident pixels fall back to `a = 0, b = 0.5`. As in
/// the guided filter, `a` and `b` are then box-averaged and evaluated at
/// each pixel. Confident pixels pass through as exact 0/1.
pub fn heuristic_refiner_with(
    img: &Image,
    trimap: &Trimap,
    base_prob: &ProbabilityMap,
    radius: usize,
    eps: f64,
) -> Result<ProbabilityMap> {
    ensure_dims(img.dims(), trimap.dims())?;
    ensure_dims(img.dims(), base_prob.dims())?;
    let (h, w) = img.dims();
    let guide = img.luminance();
    let conf: Vec<f64> = trimap.data().iter().map(|&t| f64::from(t != crate::imagecore::TRIMAP_UNKNOWN)).collect();
    let label: Vec<f64> = trimap.data().iter().map(|&t| f64::from(t == TRIMAP_FOREGROUND)).collect();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };

    let ci = prod(&conf, &guide);
    let cl = prod(&conf, &label);
    let s_c = box_sum_clipped(&conf, h, w, radius);
    let s_i = box_sum_clipped(&ci, h, w, radius);
    let s_l = box_sum_clipped(&cl, h, w, radius);
    let s_ii = box_sum_clipped(&prod(&ci, &guide), h, w, radius);
    let s_il = box_sum_clipped(&prod(&ci, &label), h, w, radius);

    let mut a = vec![0.0; h * w];
    let mut b = vec![0.5; h * w];
    for k in 0..h * w {
        if s_c[k] > 0.5 {
            let n = s_c[k];
            let (mi, ml) = (s_i[k] / n, s_l[k] / n);
            let var = (s_ii[k] / n - mi * mi).max(0.0);
            let cov = s_il[k] / n - mi * ml;
            a[k] = cov / (var + eps);
            b[k] = ml - a[k] * mi;
        }
    }
    let a_bar = box_mean_clipped(&a, h, w, radius);
    let b_bar = box_mean_clipped(&b, h, w, radius);
    let out = trimap
        .data()
        .iter()
        .enumerate()
        .map(|(k, &t)| match t {
            TRIMAP_BACKGROUND => 0.0,
            TRIMAP_FOREGROUND => 1.0,
            _ => (a_bar[k] * guide[k] + b_bar[k]).clamp(0.0, 1.0) as f32,
        })
        .collect();
    ProbabilityMap::new(h, w, out)
}

/// Final map from the refiner output according to `policy`.
pub fn composite(
    base_prob: &ProbabilityMap,
    refined_prob: &ProbabilityMap,
    trimap: &Trimap,
    policy: CompositePolicy,
) -> Result<ProbabilityMap> {
    ensure_dims(base_prob.dims(), refined_prob.dims())?;
    ensure_dims(base_prob.dims(), trimap.dims())?;
    match policy {
        CompositePolicy::RefinerFull => Ok(refined_prob.clone()),
        CompositePolicy::BandOnly => {
            let (h, w) = trimap.dims();
            let data = trimap
                .data()
                .iter()
                .zip(refined_prob.data())
                .map(|(&t, &r)| match t {
                    TRIMAP_FOREGROUND => 1.0,
                    TRIMAP_BACKGROUND => 0.0,
                    _ => r,
                })
                .collect();
            ProbabilityMap::new(h, w, data)
        }
    }
}

/// Every intermediate of one pipeline run, all at the image's size.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub base_prob: ProbabilityMap,
    pub trimap: Trimap,
    pub refined_prob: ProbabilityMap,
    pub final_prob: ProbabilityMap,
}

/// Runs the three stages in order; failures carry the stage name.
pub fn run_pipeline(
    img: &Image,
    base: &dyn BaseModel,
    refiner: &dyn Refiner,
    th: &ThresholdPair,
    policy: CompositePolicy,
) -> Result<PipelineResult> {
    let pred = base.predict(img).map_err(|e| e.in_stage("base"))?;
    ensure_dims(img.dims(), pred.dims()).map_err(|e| e.in_stage("base"))?;
    run_from_prediction(img, &pred, refiner, th, policy)
}

/// [`run_pipeline`] starting from an existing base prediction.
pub fn run_from_prediction(
    img: &Image,
    pred: &BasePrediction,
    refiner: &dyn Refiner,
    th: &ThresholdPair,
    policy: CompositePolicy,
) -> Result<PipelineResult> {
    ensure_dims(img.dims(), pred.dims()).map_err(|e| e.in_stage("base"))?;
    let base_prob = pred.probability();
    let trimap = pred.trimap(th);
    let refined_prob = refiner
        .refine(img, &trimap, &base_prob)
        .map_err(|e| e.in_stage("refiner"))?;
    ensure_dims(img.dims(), refined_prob.dims()).map_err(|e| e.in_stage("refiner"))?;
    let final_prob = composite(&base_prob, &refined_prob, &trimap, policy).map_err(|e| e.in_stage("composite"))?;
    Ok(PipelineResult {
        base_prob,
        trimap,
        refined_prob,
        final_prob,
    })
}

/// Noise injected into a band around the true boundary of a prediction,
/// standing in for a base that is unsure near edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandNoise {
    /// Pixels within this Chebyshev distance of a label change are affected.
    pub radius: usize,
    /// Affected logits are replaced by uniform noise in `[-amplitude, amplitude]`.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for BandNoise {
    /// Amplitude 90 % of `logit(0.95)`: every corrupted pixel lands in the
    /// unknown band of the default thresholds.
    fn default() -> Self {
        Self {
            radius: 2,
            amplitude: 0.9 * 19f64.ln(),
            seed: 0,
        }
    }
}

/// Replaces the logits near the boundary of `gt` with uniform noise.
pub fn corrupt_band(pred: &LogitMap, gt: &BinaryMask, noise: &BandNoise) -> Result<LogitMap> {
    ensure_dims(pred.dims(), gt.dims())?;
    let (h, w) = gt.dims();
    let y: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();
    let local = box_mean_clipped(&y, h, w, noise.radius);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let data = pred
        .data()
        .iter()
        .zip(&local)
        .map(|(&p, &m)| {
            if m > 0.0 && m < 1.0 {
                rng.gen_range(-noise.amplitude..=noise.amplitude) as f32
            } else {
                p
            }
        })
        .collect();
    LogitMap::new(h, w, data)
}

/// Thresholds and policy written next to a persisted result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSidecar {
    pub id: String,
    pub t_low: f64,
    pub t_high: f64,
    pub policy: CompositePolicy,
    pub height: usize,
    pub width: usize,
    pub files: [String; 4],
}

/// Writes `<id>_base.png`, `<id>_trimap.png`, `<id>_refined.png`,
/// `<id>_final.png` and `<id>.json` into `dir`.
pub fn save_result(
    r: &PipelineResult,
    dir: impl AsRef<Path>,
    id: &str,
    th: &ThresholdPair,
    policy: CompositePolicy,
    depth: ProbabilityDepth,
) -> Result<ResultSidecar> {
    let dir = dir.as_ref();
    let files = ["base", "trimap", "refined", "final"].map(|k| format!("{id}_{k}.png"));
    save_probability(&r.base_prob, dir.join(&files[0]), depth)?;
    save_trimap(&r.trimap, dir.join(&files[1]))?;
    save_probability(&r.refined_prob, dir.join(&files[2]), depth)?;
    save_probability(&r.final_prob, dir.join(&files[3]), depth)?;
    let (height, width) = r.trimap.dims();
    let sidecar = ResultSidecar {
        id: id.to_owned(),
        t_low: th.low(),
        t_high: th.high(),
        policy,
        height,
        width,
        files,
    };
    let path: PathBuf = dir.join(format!("{id}.json"));
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(sidecar)
}

/// Reads back what [`save_result`] wrote.
pub fn load_result(dir: impl AsRef<Path>, id: &str) -> Result<(PipelineResult, ResultSidecar)> {
    let dir = dir.as_ref();
    let path = dir.join(format!("{id}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: ResultSidecar = serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.clone(),
        cause: e.to_string(),
    })?;
    let r = PipelineResult {
        base_prob: load_probability(dir.join(&sidecar.files[0]))?,
        trimap: load_trimap(dir.join(&sidecar.files[1]))?,
        refined_prob: load_probability(dir.join(&sidecar.files[2]))?,
        final_prob: load_probability(dir.join(&sidecar.files[3]))?,
    };
    Ok((r, sidecar))
}
