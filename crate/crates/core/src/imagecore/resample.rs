use super::{check_dims, BinaryMask, Image, ProbabilityMap, Trimap};
use crate::error::Result;

/// Maps continuous-valued in `[0, 1]` that can be bilinearly resampled.
pub trait Bilinear: Sized {
    fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self>;
}

/// Maps with a discrete alphabet; resampled with nearest neighbor.
pub trait Nearest: Sized {
    fn resize_nearest(&self, height: usize, width: usize) -> Result<Self>;
}

pub fn resize_bilinear<T: Bilinear>(m: &T, height: usize, width: usize) -> Result<T> {
    m.resize_bilinear(height, width)
}

pub fn resize_nearest<T: Nearest>(m: &T, height: usize, width: usize) -> Result<T> {
    m.resize_nearest(height, width)
}

/// Source sample positions and weights along one axis (pixel-center
/// convention, clamped at the borders).
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let x0 = (x.floor() as usize).min(src - 1);
            let x1 = (x0 + 1).min(src - 1);
            let t = (x - x0 as f64).clamp(0.0, 1.0) as f32;
            (x0, x1, t)
        })
        .collect()
}

fn bilinear(
    src: &[f32],
    (h, w): (usize, usize),
    channels: usize,
    (nh, nw): (usize, usize),
) -> Vec<f32> {
    let ys = taps(h, nh);
    let xs = taps(w, nw);
    let mut out = Vec::with_capacity(nh * nw * channels);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for ch in 0..channels {
                let at = |y: usize, x: usize| src[(y * w + x) * channels + ch];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
                let bot = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
                // Convex combination; clamp guards the last ulp.
                out.push((top * (1.0 - ty) + bot * ty).clamp(0.0, 1.0));
            }
        }
    }
    out
}

fn nearest<T: Copy>(src: &[T], (h, w): (usize, usize), (nh, nw): (usize, usize)) -> Vec<T> {
    let idx = |dst: usize, n: usize| -> Vec<usize> {
        (0..dst)
            .map(|i| (((i as f64 + 0.5) * n as f64 / dst as f64).floor() as usize).min(n - 1))
            .collect()
    };
    let ys = idx(nh, h);
    let xs = idx(nw, w);
    let mut out = Vec::with_capacity(nh * nw);
    for &y in &ys {
        for &x in &xs {
            out.push(src[y * w + x]);
        }
    }
    out
}

impl Bilinear for Image {
    fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        Image::new(
            height,
            width,
            bilinear(self.data(), self.dims(), 3, (height, width)),
        )
    }
}

impl Bilinear for ProbabilityMap {
    fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        ProbabilityMap::new(
            height,
            width,
            bilinear(self.data(), self.dims(), 1, (height, width)),
        )
    }
}

impl Nearest for BinaryMask {
    fn resize_nearest(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        BinaryMask::new(height, width, nearest(self.data(), self.dims(), (height, width)))
    }
}

impl Nearest for Trimap {
    fn resize_nearest(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Trimap::new(height, width, nearest(self.data(), self.dims(), (height, width)))
    }
}
