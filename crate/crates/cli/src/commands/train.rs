use std::path::{Path, PathBuf};

use cgm_core::autodiff::{Checkpoint, ToyNetConfig};
use cgm_core::datasets::{ShapeFamily, SynthSpec};
use cgm_core::training::{CurveRow, Stage, TrainConfig, TrainSummary, Trainer};

use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult};
use crate::inputs::with_jobs;
use crate::report::{ensure_dir, md, md_header, md_table, num, write_csv, write_file, write_run_config};

pub const CHECKPOINT_FILE: &str = "toy.ckpt";
pub const CURVE_FILE: &str = "loss_curve.csv";
pub const CURVE_HEADER: [&str; 3] = ["stage", "step", "loss"];

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// Output directory for toy.ckpt, loss_curve.csv and train.md.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for both the synthetic scenes and the weight initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Side of the square synthetic images and network input.
    #[arg(long)]
    pub size: Option<usize>,
    /// Base optimizer updates.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Refiner optimizer updates.
    #[arg(long)]
    pub refiner_steps: Option<u64>,
    /// Number of synthetic training scenes.
    #[arg(long)]
    pub count: Option<usize>,
    /// Samples per optimizer update.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate of the base.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam learning rate of the refiner.
    #[arg(long)]
    pub refiner_lr: Option<f64>,
    /// Channels of the first encoder stage.
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Pooling levels of the encoder.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Scene family: disks, polygons, rings, stars or mixed.
    #[arg(long)]
    pub family: Option<ShapeFamily>,
    /// Uniform noise amplitude on foreground pixels, at most 0.15.
    #[arg(long)]
    pub fg_noise: Option<f32>,
    /// Uniform noise amplitude on background pixels, at most 0.15.
    #[arg(long)]
    pub bg_noise: Option<f32>,
    /// Train on horizontally flipped copies every other pass: true or false.
    #[arg(long)]
    pub flip: Option<bool>,
    /// Lower trimap threshold for the refiner's training inputs.
    #[arg(long)]
    pub t_low: Option<f64>,
    /// Upper trimap threshold for the refiner's training inputs.
    #[arg(long)]
    pub t_high: Option<f64>,
    /// Continue the run saved in this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub config: RunConfig,
    pub train: TrainConfig,
    pub summary: TrainSummary,
    pub curve: Vec<CurveRow>,
    pub checkpoint: PathBuf,
}

fn resolve(args: &TrainArgs) -> CliResult<(RunConfig, TrainConfig, PathBuf, Option<PathBuf>, usize)> {
    let d = TrainConfig::default();
    let mut r = Resolver::new("train-toy", args.common.config.as_deref())?;
    let out = r.required_path("out", args.out.clone())?;
    let seed = r.value("seed", args.seed, d.data.seed)?;
    let size = r.value("size", args.size, d.data.size)?;
    let steps = r.value("steps", args.steps, d.steps)?;
    let refiner_steps = r.value("refiner-steps", args.refiner_steps, d.refiner_steps)?;
    let count = r.value("count", args.count, d.data.count)?;
    let batch = r.value("batch", args.batch, d.batch)?;
    let lr = r.value("lr", args.lr, d.lr)?;
    let refiner_lr = r.value("refiner-lr", args.refiner_lr, d.refiner_lr)?;
    let base_channels = r.value("base-channels", args.base_channels, d.net.base_channels)?;
    let depth = r.value("depth", args.depth, d.net.depth)?;
    let family = r.value("family", args.family, d.data.family)?;
    let fg_noise = r.value("fg-noise", args.fg_noise, d.data.fg_noise)?;
    let bg_noise = r.value("bg-noise", args.bg_noise, d.data.bg_noise)?;
    let flip = r.value("flip", args.flip, d.flip)?;
    let t_low = r.value("t-low", args.t_low, d.t_low)?;
    let t_high = r.value("t-high", args.t_high, d.t_high)?;
    let resume = r.optional_path("resume", args.resume.clone())?;
    let jobs = r.silent("jobs", args.common.jobs, 0)?;
    let rc = r.finish()?;
    let cfg = TrainConfig {
        net: ToyNetConfig {
            base_channels,
            depth,
            input_size: size,
            seed,
        },
        data: SynthSpec {
            seed,
            count,
            size,
            family,
            fg_noise,
            bg_noise,
        },
        steps,
        refiner_steps,
        batch,
        lr,
        refiner_lr,
        flip,
        t_low,
        t_high,
    };
    cfg.validate()?;
    Ok((rc, cfg, out, resume, jobs))
}

/// Rows of an earlier curve that the resumed run keeps.
fn kept_rows(path: &Path, (base, refiner): (u64, u64)) -> CliResult<Vec<CurveRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    let mut rd = csv::Reader::from_path(path)?;
    for rec in rd.records() {
        let rec = rec?;
        let bad = || CliError::io(path, format!("malformed curve row {:?}", rec.iter().collect::<Vec<_>>()));
        let stage = match rec.get(0) {
            Some("base") => Stage::Base,
            Some("refiner") => Stage::Refiner,
            _ => return Err(bad()),
        };
        let step: u64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let loss: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let done = match stage {
            Stage::Base => base,
            Stage::Refiner => refiner,
        };
        if step <= done {
            rows.push(CurveRow { stage, step, loss });
        }
    }
    Ok(rows)
}

fn write_curve(path: &Path, rows: &[CurveRow]) -> CliResult<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.stage.name().to_owned(), r.step.to_string(), num(r.loss)])
        .collect();
    write_csv(path, &CURVE_HEADER, &rows)
}

pub fn run(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let (rc, cfg, out, resume, jobs) = resolve(args)?;
    ensure_dir(&out)?;
    let curve_path = out.join(CURVE_FILE);
    let ck_path = out.join(CHECKPOINT_FILE);
    let (mut trainer, mut curve) = match &resume {
        Some(path) => {
            let t = Trainer::resume(cfg, &Checkpoint::load(path)?)?;
            let kept = kept_rows(&curve_path, t.steps_done())?;
            (t, kept)
        }
        None => (Trainer::new(cfg)?, Vec::new()),
    };

    let result = with_jobs(jobs, || trainer.run(|row| curve.push(*row)))?;
    // Whatever happened, persist the last good state and the curve so far.
    trainer.checkpoint().save(&ck_path)?;
    write_curve(&curve_path, &curve)?;
    write_run_config(&out, &rc)?;
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            let (b, r) = trainer.steps_done();
            let mut err = CliError::from(e);
            err.message = format!(
                "{}; last good checkpoint (base step {b}, refiner step {r}) saved to {}",
                err.message,
                ck_path.display()
            );
            return Err(err);
        }
    };
    write_file(&out.join("train.md"), &render_markdown(&rc, &cfg, &summary, trainer.sample_count()))?;
    Ok(TrainOutcome {
        config: rc,
        train: cfg,
        summary,
        curve,
        checkpoint: ck_path,
    })
}

fn render_markdown(rc: &RunConfig, cfg: &TrainConfig, s: &TrainSummary, samples: usize) -> String {
    let mut doc = md_header("Toy training", rc);
    let row = |name: &str, steps: u64, st: &cgm_core::training::StageSummary| {
        vec![
            name.to_owned(),
            steps.to_string(),
            md(st.initial),
            md(st.last),
            md(st.last / st.initial),
        ]
    };
    doc.push_str(&md_table(
        &["Stage", "Steps", "Initial loss", "Final loss", "Final / initial"],
        &[
            row("base (combined)", cfg.steps, &s.base),
            row("refiner (structure)", cfg.refiner_steps, &s.refiner),
        ],
    ));
    doc.push_str(&format!(
        "\nLosses are means over all {samples} training samples before the first and after the last update. \
         The per-update batch losses are in {CURVE_FILE}.\n"
    ));
    doc
}
