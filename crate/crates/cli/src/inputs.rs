//! Reading predictions and sizing the worker pool.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cgm_core::imagecore::{load_probability, resize_bilinear, LogitMap, ProbabilityMap};
use cgm_core::pipeline::BasePrediction;

use crate::error::{CliError, CliResult};

/// How the gray values of a prediction PNG are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredFormat {
    /// `value / full scale` is the foreground probability.
    Probability,
    /// `value / full scale` maps affinely onto logits in `[-range, range]`.
    Logit,
}

impl fmt::Display for PredFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredFormat::Probability => "probability",
            PredFormat::Logit => "logit",
        })
    }
}

impl FromStr for PredFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "probability" => Ok(PredFormat::Probability),
            "logit" => Ok(PredFormat::Logit),
            _ => Err(format!("expected probability or logit, got {s:?}")),
        }
    }
}

/// Default half-range of logit PNGs.
pub const DEFAULT_LOGIT_RANGE: f64 = 8.0;

/// Loads one prediction PNG under the chosen interpretation, resized
/// bilinearly to `dims` when given. The logit mapping is affine, so resizing
/// the gray values first is the same as resizing the logits.
pub fn load_prediction(
    path: &Path,
    format: PredFormat,
    logit_range: f64,
    dims: Option<(usize, usize)>,
) -> cgm_core::Result<BasePrediction> {
    let mut q = load_probability(path)?;
    if let Some(d) = dims {
        q = fit_probability(q, d)?;
    }
    Ok(match format {
        PredFormat::Probability => BasePrediction::Probability(q),
        PredFormat::Logit => {
            let (h, w) = q.dims();
            let data = q
                .data()
                .iter()
                .map(|&v| ((2.0 * v as f64 - 1.0) * logit_range) as f32)
                .collect();
            BasePrediction::Logits(LogitMap::new(h, w, data)?)
        }
    })
}

/// Bilinear resize of a probability map when its size differs.
pub fn fit_probability(q: ProbabilityMap, dims: (usize, usize)) -> cgm_core::Result<ProbabilityMap> {
    if q.dims() == dims {
        Ok(q)
    } else {
        resize_bilinear(&q, dims.0, dims.1)
    }
}

pub fn check_logit_range(range: f64) -> CliResult<()> {
    if range.is_finite() && range > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("logit-range must be positive, got {range}")))
    }
}

/// Runs `f` on a pool of `jobs` threads (0 = one per core).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Applies `f` to every item on the current pool, keeping input order.
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}
