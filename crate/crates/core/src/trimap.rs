//! Confidence trimaps from base-model logits.
//!
//! Each pixel's sigmoid confidence `M = σ(P)` is compared against a threshold
//! pair: `M >= t_high` is definite foreground (255), `M <= t_low` definite
//! background (0), and everything in between is the unknown band (128) that
//! the refiner owns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{
    sigmoid, LogitMap, ProbabilityMap, Trimap, TRIMAP_BACKGROUND, TRIMAP_FOREGROUND,
    TRIMAP_UNKNOWN,
};

/// Confidence thresholds with `0 < t_low < t_high < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    t_low: f64,
    t_high: f64,
}

impl ThresholdPair {
    pub const DEFAULT_LOW: f64 = 0.05;
    pub const DEFAULT_HIGH: f64 = 0.95;

    pub fn new(t_low: f64, t_high: f64) -> Result<Self> {
        if !(t_low > 0.0 && t_low < t_high && t_high < 1.0) {
            return Err(Error::InvalidThresholds {
                low: t_low,
                high: t_high,
            });
        }
        Ok(Self { t_low, t_high })
    }

    pub fn low(&self) -> f64 {
        self.t_low
    }

    pub fn high(&self) -> f64 {
        self.t_high
    }

    /// True when `self`'s band contains `other`'s band.
    pub fn contains(&self, other: &ThresholdPair) -> bool {
        self.t_low <= other.t_low && self.t_high >= other.t_high
    }
}

impl Default for ThresholdPair {
    fn default() -> Self {
        Self {
            t_low: Self::DEFAULT_LOW,
            t_high: Self::DEFAULT_HIGH,
        }
    }
}

/// The refinement settings swept in the ablation table, narrowest band first.
pub const ABLATION_THRESHOLDS: [(f64, f64); 7] = [
    (0.45, 0.55),
    (0.35, 0.65),
    (0.25, 0.75),
    (0.15, 0.85),
    (0.05, 0.95),
    (0.01, 0.99),
    (0.005, 0.995),
];

pub fn ablation_pairs() -> Vec<ThresholdPair> {
    ABLATION_THRESHOLDS
        .iter()
        .map(|&(lo, hi)| ThresholdPair::new(lo, hi).expect("table pairs are valid"))
        .collect()
}

/// Three-way classification of one confidence value.
#[inline]
pub fn classify_confidence(m: f64, th: &ThresholdPair) -> u8 {
    if m >= th.t_high {
        TRIMAP_FOREGROUND
    } else if m <= th.t_low {
        TRIMAP_BACKGROUND
    } else {
        TRIMAP_UNKNOWN
    }
}

/// Trimap from logits; the sigmoid is evaluated in double precision.
pub fn generate_trimap(p: &LogitMap, th: &ThresholdPair) -> Trimap {
    let data = p
        .data()
        .iter()
        .map(|&x| classify_confidence(sigmoid(x as f64), th))
        .collect();
    Trimap::new(p.height(), p.width(), data).expect("classification emits trimap labels")
}

/// Trimap from an already-squashed probability map (e.g. a prediction PNG).
pub fn generate_trimap_from_probability(q: &ProbabilityMap, th: &ThresholdPair) -> Trimap {
    let data = q
        .data()
        .iter()
        .map(|&m| classify_confidence(m as f64, th))
        .collect();
    Trimap::new(q.height(), q.width(), data).expect("classification emits trimap labels")
}

/// Pixel-count share of each trimap label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFractions {
    pub background: f64,
    pub unknown: f64,
    pub foreground: f64,
}

pub fn region_fractions(t: &Trimap) -> RegionFractions {
    let mut counts = [0usize; 3];
    for &v in t.data() {
        let slot = match v {
            TRIMAP_BACKGROUND => 0,
            TRIMAP_UNKNOWN => 1,
            _ => 2,
        };
        counts[slot] += 1;
    }
    let n = t.len() as f64;
    RegionFractions {
        background: counts[0] as f64 / n,
        unknown: counts[1] as f64 / n,
        foreground: counts[2] as f64 / n,
    }
}
