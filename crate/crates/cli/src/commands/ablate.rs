use std::path::PathBuf;

use cgm_core::datasets::{IMAGE_EXTENSIONS, MASK_EXTENSIONS};
use cgm_core::imagecore::{load_mask, BinaryMask, ProbabilityMap};
use cgm_core::metrics::{confusion, mae};
use cgm_core::pipeline::{composite, CompositePolicy};
use cgm_core::trimap::{ablation_pairs, region_fractions, ThresholdPair};

use super::source::{files_by_stem, Source, SourceArgs};
use super::Common;
use crate::config::{Resolver, RunConfig};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::inputs::{fit_probability, map_ordered, with_jobs};
use crate::report::{ensure_dir, md, md_header, md_table, num, write_csv, write_file, write_run_config};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Directory of ground-truth mask PNGs, matched by file stem.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory for ablation.csv and ablation.md.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also evaluate the near-empty band (0.5 - eps, 0.5 + eps).
    #[arg(long)]
    pub degenerate_eps: Option<f64>,
    /// Binarization threshold for Dice, IoU, BER and Acc.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

/// Dataset means of the reported scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Scores {
    pub mae: f64,
    pub dice: f64,
    pub iou: f64,
    pub ber: f64,
    pub acc: f64,
}

impl Scores {
    fn of(q: &ProbabilityMap, y: &BinaryMask, threshold: f64) -> cgm_core::Result<Self> {
        let c = confusion(q, y, threshold)?;
        Ok(Self {
            mae: mae(q, y)?,
            dice: c.dice(),
            iou: c.iou(),
            ber: c.ber(),
            acc: c.acc(),
        })
    }

    fn values(&self) -> [f64; 5] {
        [self.mae, self.dice, self.iou, self.ber, self.acc]
    }

    fn mean(all: &[Scores]) -> Self {
        let n = all.len() as f64;
        let mut s = Scores::default();
        for x in all {
            s.mae += x.mae;
            s.dice += x.dice;
            s.iou += x.iou;
            s.ber += x.ber;
            s.acc += x.acc;
        }
        Scores {
            mae: s.mae / n,
            dice: s.dice / n,
            iou: s.iou / n,
            ber: s.ber / n,
            acc: s.acc / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// One of the seven standard threshold pairs.
    Sweep,
    /// The optional near-empty band.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub kind: RowKind,
    pub policy: CompositePolicy,
    pub thresholds: ThresholdPair,
    pub scores: Scores,
    /// Mean unknown-band fraction of the trimaps.
    pub unknown: f64,
    pub is_default: bool,
}

#[derive(Debug, Clone)]
pub struct AblateOutcome {
    pub config: RunConfig,
    pub images: usize,
    pub rows: Vec<AblationRow>,
    /// Scores of the base prediction binarized at the threshold.
    pub base: Scores,
    pub markdown: String,
    pub csv: String,
}

pub const CSV_HEADER: [&str; 11] = [
    "row", "policy", "low", "high", "mae", "dice", "iou", "ber", "acc", "unknown", "default",
];

const MD_HEADER: [&str; 8] = ["Low", "High", "MAE", "Dice", "IoU", "BER", "Acc", "Unknown"];

/// Per-image results: for each threshold pair, the scores of both policies
/// and the unknown fraction; plus the binarized base.
struct ImageResult {
    per_pair: Vec<([Scores; 2], f64)>,
    base: Scores,
}

pub fn run(args: &AblateArgs) -> CliResult<AblateOutcome> {
    let mut r = Resolver::new("ablate", args.common.config.as_deref())?;
    let source = Source::resolve(&mut r, &args.source)?;
    let gt = r.required_path("gt", args.gt.clone())?;
    let out = r.required_path("out", args.out.clone())?;
    let eps = r.optional("degenerate-eps", args.degenerate_eps)?;
    let threshold = r.value("threshold", args.threshold, 0.5)?;
    let jobs = r.silent("jobs", args.common.jobs, 0)?;
    let rc = r.finish()?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::config(format!("threshold must be in [0, 1], got {threshold}")));
    }

    let mut pairs: Vec<(RowKind, ThresholdPair)> = ablation_pairs().into_iter().map(|p| (RowKind::Sweep, p)).collect();
    if let Some(eps) = eps {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(CliError::config(format!("degenerate-eps must be in (0, 0.5), got {eps}")));
        }
        pairs.push((RowKind::Degenerate, ThresholdPair::new(0.5 - eps, 0.5 + eps)?));
    }

    let images = files_by_stem(&source.images, IMAGE_EXTENSIONS)?;
    let masks = files_by_stem(&gt, MASK_EXTENSIONS)?;
    for id in source.unmatched(&images) {
        eprintln!("warning: {id}: image or prediction missing, skipped");
    }
    let ids: Vec<String> = source
        .ids(&images)
        .into_iter()
        .filter(|id| {
            let ok = masks.contains_key(id);
            if !ok {
                eprintln!("warning: {id}: no ground truth, skipped");
            }
            ok
        })
        .collect();
    if ids.is_empty() {
        return Err(CliError {
            kind: ErrorKind::Io,
            message: "no image has both a prediction and a ground truth".into(),
        });
    }

    let results = with_jobs(jobs, || {
        map_ordered(&ids, |id| -> cgm_core::Result<ImageResult> {
            let img = source.load_image(&images[id])?;
            let y = load_mask(&masks[id])?;
            let pred = source.predict(id, &img)?;
            let base_prob = pred.probability();
            let base = Scores::of(&fit_probability(base_prob.binarize(threshold).to_probability(), y.dims())?, &y, threshold)?;
            let mut per_pair = Vec::with_capacity(pairs.len());
            for (_, th) in &pairs {
                let trimap = pred.trimap(th);
                let refined = source
                    .refiner()
                    .refine(&img, &trimap, &base_prob)
                    .map_err(|e| e.in_stage("refiner"))?;
                let scores = CompositePolicy::ALL.map(|policy| -> cgm_core::Result<Scores> {
                    let fin = composite(&base_prob, &refined, &trimap, policy).map_err(|e| e.in_stage("composite"))?;
                    Scores::of(&fit_probability(fin, y.dims())?, &y, threshold)
                });
                let [a, b] = scores;
                per_pair.push(([a?, b?], region_fractions(&trimap).unknown));
            }
            Ok(ImageResult { per_pair, base })
        })
    })?;
    let mut per_image = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (id, res) in ids.iter().zip(results) {
        match res {
            Ok(v) => per_image.push(v),
            Err(e) => {
                eprintln!("error: {id}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }

    let default = ThresholdPair::default();
    let mut rows = Vec::new();
    for (p, policy) in CompositePolicy::ALL.into_iter().enumerate() {
        for (k, &(kind, th)) in pairs.iter().enumerate() {
            let scores: Vec<Scores> = per_image.iter().map(|im| im.per_pair[k].0[p]).collect();
            let unknown = per_image.iter().map(|im| im.per_pair[k].1).sum::<f64>() / per_image.len() as f64;
            rows.push(AblationRow {
                kind,
                policy,
                thresholds: th,
                scores: Scores::mean(&scores),
                unknown,
                is_default: kind == RowKind::Sweep && th == default,
            });
        }
    }
    let base = Scores::mean(&per_image.iter().map(|im| im.base).collect::<Vec<_>>());

    let csv = crate::report::csv_string(&CSV_HEADER, &csv_rows(&rows, &base))?;
    let markdown = render_markdown(&rc, &rows, &base, per_image.len(), threshold);
    ensure_dir(&out)?;
    write_csv(&out.join("ablation.csv"), &CSV_HEADER, &csv_rows(&rows, &base))?;
    write_file(&out.join("ablation.md"), &markdown)?;
    write_run_config(&out, &rc)?;
    Ok(AblateOutcome {
        config: rc,
        images: per_image.len(),
        rows,
        base,
        markdown,
        csv,
    })
}

fn csv_rows(rows: &[AblationRow], base: &Scores) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let kind = match r.kind {
                RowKind::Sweep => "sweep",
                RowKind::Degenerate => "degenerate",
            };
            let mut v = vec![
                kind.to_owned(),
                r.policy.to_string(),
                num(r.thresholds.low()),
                num(r.thresholds.high()),
            ];
            v.extend(r.scores.values().map(num));
            v.push(num(r.unknown));
            v.push(r.is_default.to_string());
            v
        })
        .collect();
    let mut b = vec!["base".to_owned(), String::new(), String::new(), String::new()];
    b.extend(base.values().map(num));
    b.push(String::new());
    b.push("false".to_owned());
    out.push(b);
    out
}

fn md_row(r: &AblationRow) -> Vec<String> {
    let mark = if r.is_default { " †" } else { "" };
    let mut v = vec![
        format!("{}{mark}", r.thresholds.low()),
        format!("{}{mark}", r.thresholds.high()),
    ];
    v.extend(r.scores.values().map(md));
    v.push(format!("{:.4}", r.unknown));
    v
}

fn render_markdown(rc: &RunConfig, rows: &[AblationRow], base: &Scores, images: usize, threshold: f64) -> String {
    let mut s = md_header("Refinement threshold ablation", rc);
    s.push_str(&format!(
        "{images} images. Dice, IoU, BER and Acc binarize at {threshold}; Unknown is the mean unknown-band fraction.\n\n"
    ));
    for policy in CompositePolicy::ALL {
        s.push_str(&format!("## Policy: {policy}\n\n"));
        let sweep: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.policy == policy && r.kind == RowKind::Sweep)
            .map(md_row)
            .collect();
        s.push_str(&md_table(&MD_HEADER, &sweep));
        s.push_str("\n† default thresholds.\n\n");
        let degenerate: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.policy == policy && r.kind == RowKind::Degenerate)
            .map(md_row)
            .collect();
        if !degenerate.is_empty() {
            s.push_str("### Degenerate band\n\n");
            s.push_str(&md_table(&MD_HEADER, &degenerate));
            s.push('\n');
        }
    }
    s.push_str("## Reference: binarized base\n\n");
    let mut b: Vec<String> = base.values().map(md).to_vec();
    b.insert(0, "—".into());
    b.insert(0, "—".into());
    b.push("—".into());
    s.push_str(&md_table(&MD_HEADER, &[b]));
    s
}
