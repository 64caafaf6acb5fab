use std::path::PathBuf;

use cgm_core::datasets::{generate_synthetic, ShapeFamily, SynthSpec};
use cgm_core::imagecore::{save_image, save_mask, save_probability, sigmoid_map, LogitMap, ProbabilityDepth};
use cgm_core::pipeline::{corrupt_band, BandNoise};

use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{ensure_dir, write_run_config};

/// Logit magnitude of the clean part of generated predictions
/// (σ(8) rounds to full scale in an 8-bit PNG, outside every standard band).
pub const PRED_LOGIT: f32 = 8.0;

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SynthArgs {
    /// Output directory; scenes go to im/ and gt/ (and pred/).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scene i depends only on the seed and i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of scenes.
    #[arg(long)]
    pub count: Option<usize>,
    /// Side of the square images.
    #[arg(long)]
    pub size: Option<usize>,
    /// Scene family: disks, polygons, rings, stars or mixed.
    #[arg(long)]
    pub family: Option<ShapeFamily>,
    /// Uniform noise amplitude on foreground pixels, at most 0.15.
    #[arg(long)]
    pub fg_noise: Option<f32>,
    /// Uniform noise amplitude on background pixels, at most 0.15.
    #[arg(long)]
    pub bg_noise: Option<f32>,
    /// Also write base predictions: confident ground truth with uniform
    /// logit noise in a band around every boundary.
    #[arg(long)]
    pub pred: Option<bool>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub config: RunConfig,
    pub ids: Vec<String>,
    pub dir: PathBuf,
}

pub fn scene_id(i: usize) -> String {
    format!("synth_{i:04}")
}

pub fn run(args: &SynthArgs) -> CliResult<SynthOutcome> {
    let d = SynthSpec::default();
    let mut r = Resolver::new("synth", args.common.config.as_deref())?;
    let out = r.required_path("out", args.out.clone())?;
    let spec = SynthSpec {
        seed: r.value("seed", args.seed, d.seed)?,
        count: r.value("count", args.count, d.count)?,
        size: r.value("size", args.size, d.size)?,
        family: r.value("family", args.family, d.family)?,
        fg_noise: r.value("fg-noise", args.fg_noise, d.fg_noise)?,
        bg_noise: r.value("bg-noise", args.bg_noise, d.bg_noise)?,
    };
    let pred = r.value("pred", args.pred, false)?;
    r.silent("jobs", args.common.jobs, 0usize)?;
    let rc = r.finish()?;
    spec.validate()?;

    let scenes = generate_synthetic(&spec)?;
    let dirs = ["im", "gt", "pred"].map(|s| out.join(s));
    for dir in &dirs[..if pred { 3 } else { 2 }] {
        ensure_dir(dir)?;
    }
    let mut ids = Vec::with_capacity(scenes.len());
    for (i, (img, gt)) in scenes.iter().enumerate() {
        let id = scene_id(i);
        save_image(img, dirs[0].join(format!("{id}.png")))?;
        save_mask(gt, dirs[1].join(format!("{id}.png")))?;
        if pred {
            let (h, w) = gt.dims();
            let clean = gt.data().iter().map(|&v| if v == 1 { PRED_LOGIT } else { -PRED_LOGIT }).collect();
            let noise = BandNoise {
                seed: spec.seed.wrapping_add(i as u64),
                ..BandNoise::default()
            };
            let logits = corrupt_band(&LogitMap::new(h, w, clean)?, gt, &noise)?;
            save_probability(&sigmoid_map(&logits), dirs[2].join(format!("{id}.png")), ProbabilityDepth::Eight)?;
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(CliError::config("nothing generated"));
    }
    write_run_config(&out, &rc)?;
    Ok(SynthOutcome {
        config: rc,
        ids,
        dir: out,
    })
}
