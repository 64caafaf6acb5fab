//! Box and Gaussian filters over `f64` planes.

/// Box mean over a `(2r+1)^2` window with edge-replicating padding.
pub fn box_mean_replicate(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let horiz = running_replicate(src, h, w, r, Axis::Row);
    let both = running_replicate(&horiz, h, w, r, Axis::Col);
    let area = ((2 * r + 1) * (2 * r + 1)) as f64;
    both.into_iter().map(|v| v / area).collect()
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

/// Windowed sums along one axis, indices clamped into range.
fn running_replicate(src: &[f64], h: usize, w: usize, r: usize, axis: Axis) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let (lines, len) = match axis {
        Axis::Row => (h, w),
        Axis::Col => (w, h),
    };
    let at = |line: usize, i: usize| match axis {
        Axis::Row => line * w + i,
        Axis::Col => i * w + line,
    };
    let r = r as isize;
    let clamp = |i: isize| i.clamp(0, len as isize - 1) as usize;
    for line in 0..lines {
        let mut acc: f64 = (-r..=r).map(|d| src[at(line, clamp(d))]).sum();
        out[at(line, 0)] = acc;
        for i in 1..len as isize {
            acc += src[at(line, clamp(i + r))] - src[at(line, clamp(i - r - 1))];
            out[at(line, i as usize)] = acc;
        }
    }
    out
}

/// Summed-area table with a zero row/column prepended, `(h+1) x (w+1)`.
pub struct Integral {
    w1: usize,
    table: Vec<f64>,
}

impl Integral {
    pub fn new(src: &[f64], h: usize, w: usize) -> Self {
        let w1 = w + 1;
        let mut table = vec![0.0; (h + 1) * w1];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += src[r * w + c];
                table[(r + 1) * w1 + c + 1] = table[r * w1 + c + 1] + row;
            }
        }
        Self { w1, table }
    }

    /// Sum over rows `r0..r1`, cols `c0..c1` (half-open).
    pub fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let t = &self.table;
        t[r1 * self.w1 + c1] - t[r0 * self.w1 + c1] - t[r1 * self.w1 + c0] + t[r0 * self.w1 + c0]
    }
}

/// Box mean over the window clipped to the image (border windows shrink).
pub fn box_mean_clipped(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let ii = Integral::new(src, h, w);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (r0, r1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (c0, c1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            out.push(ii.sum(r0, r1, c0, c1) / n);
        }
    }
    out
}

/// Box sum over the clipped window.
pub fn box_sum_clipped(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let ii = Integral::new(src, h, w);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (r0, r1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (c0, c1) = (x.saturating_sub(r), (x + r + 1).min(w));
            out.push(ii.sum(r0, r1, c0, c1));
        }
    }
    out
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Same-size separable convolution with zero padding. With a symmetric kernel
/// this operator is its own adjoint.
pub fn convolve_separable_zero(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let xx = x + t as isize - r;
                if xx >= 0 && xx < w as isize {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for (t, &kv) in k.iter().enumerate() {
            let yy = y + t as isize - r;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            let src_row = &tmp[yy as usize * w..(yy as usize + 1) * w];
            let dst_row = &mut out[y as usize * w..(y as usize + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_box_replicate(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
        let r = r as isize;
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                        s += src[yy * w + xx];
                    }
                }
                out[y as usize * w + x as usize] = s / ((2 * r + 1) * (2 * r + 1)) as f64;
            }
        }
        out
    }

    #[test]
    fn running_box_matches_naive() {
        let (h, w) = (9, 13);
        let src: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        for r in [0, 1, 3, 15] {
            let a = box_mean_replicate(&src, h, w, r);
            let b = naive_box_replicate(&src, h, w, r);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipped_box_of_ones_is_one() {
        let src = vec![1.0; 20];
        assert!(box_mean_clipped(&src, 4, 5, 2).iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(box_sum_clipped(&src, 4, 5, 1)[0], 4.0);
    }

    #[test]
    fn gaussian_sums_to_one() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(k[5] > k[4] && (k[4] - k[6]).abs() < 1e-18);
    }

    #[test]
    fn separable_is_self_adjoint() {
        let (h, w) = (6, 7);
        let k = gaussian_kernel(5, 1.0);
        let a: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..h * w).map(|i| (i as f64 * 1.3).cos()).collect();
        let ga = convolve_separable_zero(&a, h, w, &k);
        let gb = convolve_separable_zero(&b, h, w, &k);
        let lhs: f64 = ga.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&gb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
