use std::path::PathBuf;

use cgm_core::datasets::{match_dirs, MASK_EXTENSIONS};
use cgm_core::imagecore::load_mask;
use cgm_core::metrics::{aggregate, evaluate_pair, DatasetReport, PairMetrics};

use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::inputs::{fit_probability, map_ordered, with_jobs};
use crate::report::{ensure_dir, md, md_header, md_table, num, write_csv, write_file, write_run_config};

/// Table row labels, in column order of the CSV.
pub const METRIC_LABELS: [&str; 9] = [
    "$F_\\beta^{max}$",
    "$F_\\beta^\\omega$",
    "$E_\\phi^m$",
    "$S_m$",
    "MAE",
    "Dice",
    "IoU",
    "BER",
    "Acc",
];

pub const CSV_HEADER: [&str; 10] = [
    "id",
    "max_f",
    "weighted_f",
    "e_measure",
    "s_measure",
    "mae",
    "dice",
    "iou",
    "ber",
    "acc",
];

#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvalArgs {
    /// Directory of prediction PNGs (gray value / full scale = probability).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth mask PNGs, matched to predictions by file stem.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory for eval.csv and eval.md.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Binarization threshold for Dice, IoU, BER and Acc.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub config: RunConfig,
    pub ids: Vec<String>,
    pub per_pair: Vec<PairMetrics>,
    pub dataset: DatasetReport,
    pub csv: PathBuf,
    pub markdown: PathBuf,
}

pub fn run(args: &EvalArgs) -> CliResult<EvalOutcome> {
    let mut r = Resolver::new("eval", args.common.config.as_deref())?;
    let pred = r.required_path("pred", args.pred.clone())?;
    let gt = r.required_path("gt", args.gt.clone())?;
    let out = r.required_path("out", args.out.clone())?;
    let threshold = r.value("threshold", args.threshold, 0.5)?;
    let jobs = r.silent("jobs", args.common.jobs, 0)?;
    let rc = r.finish()?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::config(format!("threshold must be in [0, 1], got {threshold}")));
    }

    let manifest = match_dirs(&pred, &pred, MASK_EXTENSIONS, &gt, MASK_EXTENSIONS)?;
    for path in &manifest.unmatched {
        eprintln!("warning: {}: no counterpart, skipped", path.display());
    }
    let results = with_jobs(jobs, || {
        map_ordered(&manifest.entries, |e| -> cgm_core::Result<PairMetrics> {
            let y = load_mask(&e.gt)?;
            let q = cgm_core::imagecore::load_probability(&e.image)?;
            let q = fit_probability(q, y.dims())?;
            evaluate_pair(&q, &y, threshold)
        })
    })?;

    let mut per_pair = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (e, res) in manifest.entries.iter().zip(results) {
        match res {
            Ok(m) => per_pair.push(m),
            Err(err) => {
                eprintln!("error: {}: {err}", e.id);
                failures.push(ErrorKind::of(&err));
            }
        }
    }
    if !failures.is_empty() {
        let kind = if failures.contains(&ErrorKind::Io) {
            ErrorKind::Io
        } else {
            ErrorKind::Numeric
        };
        return Err(CliError {
            kind,
            message: format!("{} of {} pairs failed; no report written", failures.len(), manifest.len()),
        });
    }
    let dataset = aggregate(&per_pair)?;
    let ids: Vec<String> = manifest.entries.iter().map(|e| e.id.clone()).collect();

    ensure_dir(&out)?;
    let rows: Vec<Vec<String>> = ids.iter().zip(&per_pair).map(|(id, m)| csv_row(id, m)).collect();
    let csv = out.join("eval.csv");
    write_csv(&csv, &CSV_HEADER, &rows)?;
    let markdown = out.join("eval.md");
    write_file(&markdown, &render_markdown(&rc, &dataset, manifest.unmatched.len()))?;
    write_run_config(&out, &rc)?;
    Ok(EvalOutcome {
        config: rc,
        ids,
        per_pair,
        dataset,
        csv,
        markdown,
    })
}

fn csv_row(id: &str, m: &PairMetrics) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut row = vec![id.to_owned(), opt(m.max_f), opt(m.weighted_f)];
    row.extend([m.e_measure, m.s_measure, m.mae, m.dice, m.iou, m.ber, m.acc].map(num));
    row
}

fn render_markdown(rc: &RunConfig, d: &DatasetReport, unmatched: usize) -> String {
    let mut s = md_header("Evaluation", rc);
    s.push_str("## Aggregate\n\n");
    let rows: Vec<Vec<String>> = METRIC_LABELS
        .iter()
        .zip(d.report.values())
        .map(|(label, v)| vec![(*label).to_owned(), md(v)])
        .collect();
    s.push_str(&md_table(&["Metric", "Score"], &rows));
    s.push_str(&format!(
        "\n{} pairs evaluated. F-measures average {} pairs; {} excluded for an empty ground truth.\n",
        d.pairs,
        d.pairs - d.excluded,
        d.excluded
    ));
    if unmatched > 0 {
        s.push_str(&format!("{unmatched} files without a counterpart were skipped.\n"));
    }
    s
}
