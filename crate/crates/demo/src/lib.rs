//! WebAssembly bindings for the static demo page in `www/`.
//!
//! A [`Demo`] holds one synthetic scene and a base prediction that is sure of
//! itself everywhere except a noisy band around the true boundary. The page
//! drives three operations on it: thresholded trimap plus refinement, the
//! seven-pair threshold sweep, and the structure-loss breakdown.
//!
//! Every method returns `Result<_, String>`, which wasm-bindgen surfaces as a
//! thrown string and which native tests can inspect directly.

use cgm_core::datasets::{generate_synthetic, ShapeFamily, SynthSpec};
use cgm_core::imagecore::{sigmoid_map, BinaryMask, Image, LogitMap, ProbabilityMap, Trimap};
use cgm_core::losses::{structure_loss, LossWeights};
use cgm_core::metrics::{dice, mae};
use cgm_core::pipeline::{corrupt_band, run_from_prediction, BandNoise, BasePrediction, CompositePolicy, HeuristicRefiner};
use cgm_core::trimap::{ablation_pairs, region_fractions, ThresholdPair};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Magnitude of the clean base logits away from the boundary band.
const BASE_LOGIT: f32 = 8.0;

type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn gray_rgba(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values
        .flat_map(|v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn image_rgba(img: &Image) -> Vec<u8> {
    img.data()
        .chunks_exact(Image::CHANNELS)
        .flat_map(|p| {
            let [r, g, b] = [p[0], p[1], p[2]].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
            [r, g, b, 255]
        })
        .collect()
}

fn probability_rgba(q: &ProbabilityMap) -> Vec<u8> {
    gray_rgba(q.data().iter().copied())
}

/// Background black, foreground white, unknown band orange.
fn trimap_rgba(t: &Trimap) -> Vec<u8> {
    t.data()
        .iter()
        .flat_map(|&v| match v {
            0 => [0, 0, 0, 255],
            255 => [255, 255, 255, 255],
            _ => [255, 140, 0, 255],
        })
        .collect()
}

fn parse_policy(policy: &str) -> DemoResult<CompositePolicy> {
    policy.parse().map_err(err)
}

/// One row of the threshold sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub low: f64,
    pub high: f64,
    pub unknown: f64,
    pub mae: f64,
    pub dice: f64,
    pub is_default: bool,
}

#[wasm_bindgen]
pub struct Demo {
    image: Image,
    gt: BinaryMask,
    base: LogitMap,
    refiner: HeuristicRefiner,
    last_trimap: Option<Trimap>,
    last_final: Option<ProbabilityMap>,
}

#[wasm_bindgen]
impl Demo {
    /// Builds scene `seed` of `family` at `size`×`size`. `band_radius` sets
    /// how far from the true boundary the base prediction is scrambled.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32, family: &str, band_radius: u32) -> DemoResult<Demo> {
        let family: ShapeFamily = family.parse().map_err(err)?;
        let spec = SynthSpec {
            seed: seed as u64,
            count: 1,
            size: size as usize,
            family,
            ..SynthSpec::default()
        };
        let (image, gt) = generate_synthetic(&spec).map_err(err)?.remove(0);
        let (h, w) = gt.dims();
        let clean = gt.data().iter().map(|&v| if v == 1 { BASE_LOGIT } else { -BASE_LOGIT }).collect();
        let noise = BandNoise {
            radius: band_radius as usize,
            seed: seed as u64,
            ..BandNoise::default()
        };
        let base = corrupt_band(&LogitMap::new(h, w, clean).map_err(err)?, &gt, &noise).map_err(err)?;
        Ok(Demo {
            image,
            gt,
            base,
            refiner: HeuristicRefiner::default(),
            last_trimap: None,
            last_final: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.gt.width() as u32
    }

    pub fn height(&self) -> u32 {
        self.gt.height() as u32
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        image_rgba(&self.image)
    }

    pub fn gt_rgba(&self) -> Vec<u8> {
        probability_rgba(&self.gt.to_probability())
    }

    pub fn base_rgba(&self) -> Vec<u8> {
        probability_rgba(&sigmoid_map(&self.base))
    }

    /// Runs trimap, refiner and composite. Returns `[unknown fraction,
    /// base MAE, final MAE, base Dice, final Dice]`; the maps are available
    /// afterwards from [`Demo::trimap_rgba`] and [`Demo::final_rgba`].
    pub fn run(&mut self, t_low: f64, t_high: f64, policy: &str) -> DemoResult<Vec<f64>> {
        let th = ThresholdPair::new(t_low, t_high).map_err(err)?;
        let r = run_from_prediction(
            &self.image,
            &BasePrediction::Logits(self.base.clone()),
            &self.refiner,
            &th,
            parse_policy(policy)?,
        )
        .map_err(err)?;
        let stats = vec![
            region_fractions(&r.trimap).unknown,
            mae(&r.base_prob, &self.gt).map_err(err)?,
            mae(&r.final_prob, &self.gt).map_err(err)?,
            dice(&r.base_prob, &self.gt, 0.5).map_err(err)?,
            dice(&r.final_prob, &self.gt, 0.5).map_err(err)?,
        ];
        self.last_trimap = Some(r.trimap);
        self.last_final = Some(r.final_prob);
        Ok(stats)
    }

    pub fn trimap_rgba(&self) -> DemoResult<Vec<u8>> {
        self.last_trimap.as_ref().map(trimap_rgba).ok_or_else(|| "call run first".to_owned())
    }

    pub fn final_rgba(&self) -> DemoResult<Vec<u8>> {
        self.last_final.as_ref().map(probability_rgba).ok_or_else(|| "call run first".to_owned())
    }

    /// The seven standard threshold pairs, narrowest band first, as a JSON
    /// array of [`SweepRow`].
    pub fn sweep(&self, policy: &str) -> DemoResult<String> {
        let policy = parse_policy(policy)?;
        let pred = BasePrediction::Logits(self.base.clone());
        let default = ThresholdPair::default();
        let rows = ablation_pairs()
            .into_iter()
            .map(|th| -> DemoResult<SweepRow> {
                let r = run_from_prediction(&self.image, &pred, &self.refiner, &th, policy).map_err(err)?;
                Ok(SweepRow {
                    low: th.low(),
                    high: th.high(),
                    unknown: region_fractions(&r.trimap).unknown,
                    mae: mae(&r.final_prob, &self.gt).map_err(err)?,
                    dice: dice(&r.final_prob, &self.gt, 0.5).map_err(err)?,
                    is_default: th == default,
                })
            })
            .collect::<DemoResult<Vec<_>>>()?;
        serde_json::to_string(&rows).map_err(err)
    }

    /// Structure loss of the base logits under the given term weights:
    /// `[wbce, wiou, ssim, total]`.
    pub fn losses(&self, w_bce: f64, w_iou: f64, w_ssim: f64) -> DemoResult<Vec<f64>> {
        let lw = LossWeights::new(w_bce, w_iou, w_ssim).map_err(err)?;
        let b = structure_loss(&self.base, &self.gt, &lw).map_err(err)?;
        Ok(vec![b.wbce, b.wiou, b.ssim, b.total])
    }

    /// Gradient magnitude of the weighted loss with respect to each logit,
    /// normalized to the largest value, as gray RGBA.
    pub fn loss_grad_rgba(&self, w_bce: f64, w_iou: f64, w_ssim: f64) -> DemoResult<Vec<u8>> {
        let lw = LossWeights::new(w_bce, w_iou, w_ssim).map_err(err)?;
        let g = structure_loss(&self.base, &self.gt, &lw).map_err(err)?.grad;
        let peak = g.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        Ok(gray_rgba(g.data.iter().map(|v| (v.abs() * scale) as f32)))
    }
}
