use std::path::PathBuf;

use cgm_core::imagecore::save_trimap;
use cgm_core::trimap::{region_fractions, RegionFractions, ThresholdPair};

use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult};
use crate::inputs::{check_logit_range, load_prediction, map_ordered, with_jobs, PredFormat, DEFAULT_LOGIT_RANGE};
use crate::report::{ensure_dir, list_files, md, md_header, md_table, num, stem, write_csv, write_file, write_run_config};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrimapArgs {
    /// Directory of prediction PNGs.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Output directory; one trimap PNG per prediction plus trimap_stats.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confidence at or below which a pixel is background (default 0.05).
    #[arg(long)]
    pub t_low: Option<f64>,
    /// Confidence at or above which a pixel is foreground (default 0.95).
    #[arg(long)]
    pub t_high: Option<f64>,
    /// Interpretation of prediction gray values: probability or logit.
    #[arg(long)]
    pub input: Option<PredFormat>,
    /// Logit PNGs map gray 0..full scale onto [-range, range].
    #[arg(long)]
    pub logit_range: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct TrimapOutcome {
    pub config: RunConfig,
    pub ids: Vec<String>,
    pub fractions: Vec<RegionFractions>,
    pub dir: PathBuf,
}

pub const CSV_HEADER: [&str; 4] = ["id", "background", "unknown", "foreground"];

pub fn run(args: &TrimapArgs) -> CliResult<TrimapOutcome> {
    let mut r = Resolver::new("trimap", args.common.config.as_deref())?;
    let pred = r.required_path("pred", args.pred.clone())?;
    let out = r.required_path("out", args.out.clone())?;
    let t_low = r.value("t-low", args.t_low, ThresholdPair::DEFAULT_LOW)?;
    let t_high = r.value("t-high", args.t_high, ThresholdPair::DEFAULT_HIGH)?;
    let input = r.value("input", args.input, PredFormat::Probability)?;
    let range = r.value("logit-range", args.logit_range, DEFAULT_LOGIT_RANGE)?;
    let jobs = r.silent("jobs", args.common.jobs, 0)?;
    let rc = r.finish()?;
    let th = ThresholdPair::new(t_low, t_high)?;
    check_logit_range(range)?;

    let files = list_files(&pred, &["png"])?;
    let ids: Vec<String> = files.iter().map(|p| stem(p)).collect();
    if let Some(i) = (1..ids.len()).find(|&i| ids[i] == ids[i - 1]) {
        return Err(CliError::config(format!("duplicate id {}", ids[i])));
    }
    ensure_dir(&out)?;
    let results = with_jobs(jobs, || {
        map_ordered(&files, |path| -> cgm_core::Result<RegionFractions> {
            let t = load_prediction(path, input, range, None)?.trimap(&th);
            save_trimap(&t, out.join(format!("{}.png", stem(path))))?;
            Ok(region_fractions(&t))
        })
    })?;
    let mut fractions = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (path, res) in files.iter().zip(results) {
        match res {
            Ok(f) => fractions.push(f),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }

    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&fractions)
        .map(|(id, f)| vec![id.clone(), num(f.background), num(f.unknown), num(f.foreground)])
        .collect();
    write_csv(&out.join("trimap_stats.csv"), &CSV_HEADER, &rows)?;
    let n = fractions.len() as f64;
    let mean = |g: fn(&RegionFractions) -> f64| fractions.iter().map(g).sum::<f64>() / n;
    let mut doc = md_header("Trimaps", &rc);
    doc.push_str("## Mean region fractions\n\n");
    doc.push_str(&md_table(
        &["Low", "High", "Background", "Unknown", "Foreground", "Maps"],
        &[vec![
            num(t_low),
            num(t_high),
            md(mean(|f| f.background)),
            md(mean(|f| f.unknown)),
            md(mean(|f| f.foreground)),
            fractions.len().to_string(),
        ]],
    ));
    write_file(&out.join("trimap.md"), &doc)?;
    write_run_config(&out, &rc)?;
    Ok(TrimapOutcome {
        config: rc,
        ids,
        fractions,
        dir: out,
    })
}
