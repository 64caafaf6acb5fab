//! Dense 2-D maps shared by every stage of the pipeline.
//!
//! All maps are row-major and stored in single precision (`f32`) or bytes.
//! Each type validates its alphabet on construction so downstream code can
//! rely on the invariant without re-checking.

mod io;
mod resample;

pub use io::{
    load_image, load_mask, load_probability, load_trimap, save_image, save_mask,
    save_probability, save_trimap, ProbabilityDepth,
};
pub use resample::{resize_bilinear, resize_nearest, Bilinear, Nearest};

use crate::error::{Error, Result};

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions { height, width });
    }
    Ok(())
}

fn check_len(height: usize, width: usize, channels: usize, got: usize) -> Result<()> {
    check_dims(height, width)?;
    if height * width * channels != got {
        return Err(Error::BufferLength {
            height,
            width,
            channels,
            got,
        });
    }
    Ok(())
}

fn check_unit(data: &[f32]) -> Result<()> {
    for (index, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                index,
                value: v as f64,
                expected: "[0, 1]",
            });
        }
    }
    Ok(())
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// RGB image with intensities in `[0, 1]`, interleaved `HxWx3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_len(height, width, Self::CHANNELS, data.len())?;
        check_unit(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Rec. 601 luma, one value per pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    /// Planar `3xHxW` copy, the layout the networks consume.
    pub fn to_planar(&self) -> Vec<f32> {
        let n = self.height * self.width;
        let mut out = vec![0.0; 3 * n];
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            out[i] = p[0];
            out[n + i] = p[1];
            out[2 * n + i] = p[2];
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let (h, w) = self.dims();
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..h {
            for c in (0..w).rev() {
                data.extend_from_slice(&self.pixel(r, c));
            }
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }
}

macro_rules! scalar_map_common {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            #[inline]
            pub fn get(&self, r: usize, c: usize) -> $elem {
                self.data[r * self.width + c]
            }

            pub fn from_fn(
                height: usize,
                width: usize,
                mut f: impl FnMut(usize, usize) -> $elem,
            ) -> Result<Self> {
                check_dims(height, width)?;
                let mut data = Vec::with_capacity(height * width);
                for r in 0..height {
                    for c in 0..width {
                        data.push(f(r, c));
                    }
                }
                Self::new(height, width, data)
            }

            pub fn filled(height: usize, width: usize, value: $elem) -> Result<Self> {
                check_dims(height, width)?;
                Self::new(height, width, vec![value; height * width])
            }

            pub fn flip_horizontal(&self) -> Self {
                let mut data = Vec::with_capacity(self.data.len());
                for row in self.data.chunks_exact(self.width) {
                    data.extend(row.iter().rev().copied());
                }
                Self {
                    height: self.height,
                    width: self.width,
                    data,
                }
            }
        }
    };
}

/// Unbounded per-pixel scores; the base model's raw output.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }
}

scalar_map_common!(LogitMap, f32);

/// Elementwise logistic of a logit map.
pub fn sigmoid_map(p: &LogitMap) -> ProbabilityMap {
    ProbabilityMap {
        height: p.height,
        width: p.width,
        data: p.data.iter().map(|&x| sigmoid(x as f64) as f32).collect(),
    }
}

/// Per-pixel foreground probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        check_unit(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Clamps into `[0, 1]`; rejects non-finite input.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for (index, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, data)
    }

    /// Pixels with probability `>= threshold` become foreground.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| u8::from(v as f64 >= threshold))
                .collect(),
        }
    }
}

scalar_map_common!(ProbabilityMap, f32);

/// Hard `{0, 1}` labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(Error::OutOfRange {
                index,
                value: data[index] as f64,
                expected: "{0, 1}",
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / self.data.len() as f64
    }

    pub fn to_probability(&self) -> ProbabilityMap {
        ProbabilityMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Resamples to `height x width` with bilinear weights, then re-binarizes
    /// at 0.5. Keeps thin structures alive better than nearest at small scales.
    pub fn resample_soft(&self, height: usize, width: usize) -> Result<Self> {
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        Ok(resize_bilinear(&self.to_probability(), height, width)?.binarize(0.5))
    }
}

scalar_map_common!(BinaryMask, u8);

/// Trimap label for definite background.
pub const TRIMAP_BACKGROUND: u8 = 0;
/// Trimap label for the unknown band.
pub const TRIMAP_UNKNOWN: u8 = 128;
/// Trimap label for definite foreground.
pub const TRIMAP_FOREGROUND: u8 = 255;

/// Three-valued map over `{0, 128, 255}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Trimap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        if let Some(index) = data
            .iter()
            .position(|&v| !matches!(v, TRIMAP_BACKGROUND | TRIMAP_UNKNOWN | TRIMAP_FOREGROUND))
        {
            return Err(Error::OutOfRange {
                index,
                value: data[index] as f64,
                expected: "{0, 128, 255}",
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn is_unknown(&self, r: usize, c: usize) -> bool {
        self.get(r, c) == TRIMAP_UNKNOWN
    }
}

scalar_map_common!(Trimap, u8);
