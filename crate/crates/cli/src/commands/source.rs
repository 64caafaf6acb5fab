//! Where base predictions and the refiner come from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cgm_core::autodiff::{Checkpoint, ToyNet};
use cgm_core::imagecore::{load_image, resize_bilinear, Image};
use cgm_core::pipeline::{BaseModel, BasePrediction, HeuristicRefiner, Refiner};
use cgm_core::training::load_networks;

use crate::config::Resolver;
use crate::error::{CliError, CliResult};
use crate::inputs::{check_logit_range, load_prediction, PredFormat, DEFAULT_LOGIT_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinerKind {
    /// The training-free guided filter.
    Heuristic,
    /// The refiner network stored in the checkpoint.
    Learned,
}

impl fmt::Display for RefinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinerKind::Heuristic => "heuristic",
            RefinerKind::Learned => "learned",
        })
    }
}

impl FromStr for RefinerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(RefinerKind::Heuristic),
            "learned" => Ok(RefinerKind::Learned),
            _ => Err(format!("expected heuristic or learned, got {s:?}")),
        }
    }
}

/// Flags shared by commands that run the pipeline.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SourceArgs {
    /// Directory of input images (png/jpg), the refiner's guide.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Directory of base prediction PNGs, matched to images by file stem;
    /// takes precedence over the checkpoint's base network.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Training checkpoint: its base predicts when --pred is absent and its
    /// refiner serves `--refiner learned`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Refiner: heuristic or learned (needs --checkpoint).
    #[arg(long)]
    pub refiner: Option<RefinerKind>,
    /// Interpretation of prediction gray values: probability or logit.
    #[arg(long)]
    pub input: Option<PredFormat>,
    /// Logit PNGs map gray 0..full scale onto [-range, range].
    #[arg(long)]
    pub logit_range: Option<f64>,
    /// Working size (square) the pipeline runs at; 0 keeps each image's size.
    /// With a checkpoint it must be 0 or the network's input size.
    #[arg(long)]
    pub size: Option<usize>,
}

enum Base {
    Files {
        by_id: BTreeMap<String, PathBuf>,
        format: PredFormat,
        range: f64,
    },
    Net(Box<ToyNet<f32>>),
}

/// A resolved base source and refiner.
pub struct Source {
    pub images: PathBuf,
    base: Base,
    refiner: Box<dyn Refiner + Sync>,
    size: usize,
}

/// Files in `dir` with one of `exts`, keyed by stem.
pub fn files_by_stem(dir: &Path, exts: &[&str]) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for path in crate::report::list_files(dir, exts)? {
        let id = crate::report::stem(&path);
        if let Some(prev) = out.insert(id.clone(), path.clone()) {
            return Err(CliError::config(format!(
                "ambiguous id {id}: both {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

impl Source {
    pub fn resolve(r: &mut Resolver, a: &SourceArgs) -> CliResult<Self> {
        let images = r.required_path("images", a.images.clone())?;
        let pred = r.optional_path("pred", a.pred.clone())?;
        let checkpoint = r.optional_path("checkpoint", a.checkpoint.clone())?;
        let kind = r.value("refiner", a.refiner, RefinerKind::Heuristic)?;
        let format = r.value("input", a.input, PredFormat::Probability)?;
        let range = r.value("logit-range", a.logit_range, DEFAULT_LOGIT_RANGE)?;
        let size = r.value("size", a.size, 0usize)?;
        check_logit_range(range)?;

        let nets = match &checkpoint {
            Some(path) => Some(load_networks(&Checkpoint::load(path)?)?),
            None => None,
        };
        let size = match &nets {
            Some((cfg, _, _)) if size == 0 || size == cfg.net.input_size => cfg.net.input_size,
            Some((cfg, _, _)) => {
                return Err(CliError::config(format!(
                    "size {size} differs from the checkpoint's input size {}",
                    cfg.net.input_size
                )))
            }
            None => size,
        };
        let (base_net, refiner_net) = match nets {
            Some((_, b, rf)) => (Some(b), Some(rf)),
            None => (None, None),
        };
        let base = match (pred, base_net) {
            // With both, the checkpoint only supplies the learned refiner.
            (Some(dir), _) => Base::Files {
                by_id: files_by_stem(&dir, &["png"])?,
                format,
                range,
            },
            (None, Some(net)) => Base::Net(Box::new(net)),
            (None, None) => return Err(CliError::config("a base source is required: --pred or --checkpoint")),
        };
        let refiner: Box<dyn Refiner + Sync> = match (kind, refiner_net) {
            (RefinerKind::Heuristic, _) => Box::new(HeuristicRefiner::default()),
            (RefinerKind::Learned, Some(net)) => Box::new(net),
            (RefinerKind::Learned, None) => {
                return Err(CliError::config("the learned refiner needs --checkpoint"));
            }
        };
        Ok(Self {
            images,
            base,
            refiner,
            size,
        })
    }

    pub fn refiner(&self) -> &(dyn Refiner + Sync) {
        self.refiner.as_ref()
    }

    /// Ids with an image and, for file-based bases, a prediction.
    pub fn ids(&self, images: &BTreeMap<String, PathBuf>) -> Vec<String> {
        images
            .keys()
            .filter(|id| match &self.base {
                Base::Files { by_id, .. } => by_id.contains_key(*id),
                Base::Net(_) => true,
            })
            .cloned()
            .collect()
    }

    /// Ids present on one side only, for diagnostics.
    pub fn unmatched(&self, images: &BTreeMap<String, PathBuf>) -> Vec<String> {
        match &self.base {
            Base::Files { by_id, .. } => {
                let mut v: Vec<String> = images.keys().filter(|id| !by_id.contains_key(*id)).cloned().collect();
                v.extend(by_id.keys().filter(|id| !images.contains_key(*id)).cloned());
                v.sort();
                v
            }
            Base::Net(_) => Vec::new(),
        }
    }

    /// Loads an image at the working size.
    pub fn load_image(&self, path: &Path) -> cgm_core::Result<Image> {
        let img = load_image(path)?;
        if self.size == 0 {
            Ok(img)
        } else {
            resize_bilinear(&img, self.size, self.size)
        }
    }

    /// The base prediction for `id`, at the size of `img`.
    pub fn predict(&self, id: &str, img: &Image) -> cgm_core::Result<BasePrediction> {
        match &self.base {
            Base::Files { by_id, format, range } => {
                load_prediction(&by_id[id], *format, *range, Some(img.dims())).map_err(|e| e.in_stage("base"))
            }
            Base::Net(net) => BaseModel::predict(net.as_ref(), img).map_err(|e| e.in_stage("base")),
        }
    }
}
