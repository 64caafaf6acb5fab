use std::path::PathBuf;

use cgm_core::datasets::IMAGE_EXTENSIONS;
use cgm_core::imagecore::ProbabilityDepth;
use cgm_core::pipeline::{run_from_prediction, save_result, CompositePolicy};
use cgm_core::trimap::{region_fractions, RegionFractions, ThresholdPair};

use super::source::{files_by_stem, Source, SourceArgs};
use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::inputs::{map_ordered, with_jobs};
use crate::report::{ensure_dir, md, md_header, md_table, num, write_csv, write_file, write_run_config};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Output directory for the per-image maps and refine.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confidence at or below which a pixel is background (default 0.05).
    #[arg(long)]
    pub t_low: Option<f64>,
    /// Confidence at or above which a pixel is foreground (default 0.95).
    #[arg(long)]
    pub t_high: Option<f64>,
    /// Composite policy: refiner-full or band-only.
    #[arg(long)]
    pub policy: Option<CompositePolicy>,
    /// Bit depth of the written probability PNGs: 8 or 16.
    #[arg(long)]
    pub png_depth: Option<u8>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub config: RunConfig,
    pub ids: Vec<String>,
    pub fractions: Vec<RegionFractions>,
    pub dir: PathBuf,
}

pub const CSV_HEADER: [&str; 6] = ["id", "height", "width", "background", "unknown", "foreground"];

pub fn run(args: &RefineArgs) -> CliResult<RefineOutcome> {
    let mut r = Resolver::new("refine", args.common.config.as_deref())?;
    let source = Source::resolve(&mut r, &args.source)?;
    let out = r.required_path("out", args.out.clone())?;
    let t_low = r.value("t-low", args.t_low, ThresholdPair::DEFAULT_LOW)?;
    let t_high = r.value("t-high", args.t_high, ThresholdPair::DEFAULT_HIGH)?;
    let policy = r.value("policy", args.policy, CompositePolicy::BandOnly)?;
    let depth = match r.value("png-depth", args.png_depth, 8u8)? {
        8 => ProbabilityDepth::Eight,
        16 => ProbabilityDepth::Sixteen,
        d => return Err(CliError::config(format!("png-depth must be 8 or 16, got {d}"))),
    };
    let jobs = r.silent("jobs", args.common.jobs, 0)?;
    let rc = r.finish()?;
    let th = ThresholdPair::new(t_low, t_high)?;

    let images = files_by_stem(&source.images, IMAGE_EXTENSIONS)?;
    for id in source.unmatched(&images) {
        eprintln!("warning: {id}: image or prediction missing, skipped");
    }
    let ids = source.ids(&images);
    if ids.is_empty() {
        return Err(CliError {
            kind: ErrorKind::Io,
            message: "no image has a matching prediction".into(),
        });
    }
    ensure_dir(&out)?;
    let results = with_jobs(jobs, || {
        map_ordered(&ids, |id| -> cgm_core::Result<((usize, usize), RegionFractions)> {
            let img = source.load_image(&images[id])?;
            let pred = source.predict(id, &img)?;
            let res = run_from_prediction(&img, &pred, source.refiner(), &th, policy)?;
            save_result(&res, &out, id, &th, policy, depth)?;
            Ok((img.dims(), region_fractions(&res.trimap)))
        })
    })?;
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    let mut first_err = None;
    for (id, res) in ids.iter().zip(results) {
        match res {
            Ok(((h, w), f)) => {
                rows.push(vec![
                    id.clone(),
                    h.to_string(),
                    w.to_string(),
                    num(f.background),
                    num(f.unknown),
                    num(f.foreground),
                ]);
                fractions.push(f);
            }
            Err(e) => {
                eprintln!("error: {id}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }
    write_csv(&out.join("refine.csv"), &CSV_HEADER, &rows)?;
    let n = fractions.len() as f64;
    let mut doc = md_header("Refinement", &rc);
    doc.push_str(&md_table(
        &["Images", "Policy", "Low", "High", "Mean unknown"],
        &[vec![
            fractions.len().to_string(),
            policy.to_string(),
            num(t_low),
            num(t_high),
            md(fractions.iter().map(|f| f.unknown).sum::<f64>() / n),
        ]],
    ));
    write_file(&out.join("refine.md"), &doc)?;
    write_run_config(&out, &rc)?;
    Ok(RefineOutcome {
        config: rc,
        ids,
        fractions,
        dir: out,
    })
}
