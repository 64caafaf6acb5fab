//! Gaussian-windowed SSIM with its exact gradient.

use crate::filter::{convolve_separable_zero, gaussian_kernel};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Mean SSIM between `x` and `y` and its gradient with respect to `x`.
///
/// Local statistics use an 11x11 Gaussian window (sigma 1.5) with zero
/// padding, so every pixel contributes one SSIM value to the mean. Writing
/// `G` for the window operator, the mean depends on `x` only through
/// `G x`, `G x^2` and `G (x y)`; since `G` is self-adjoint the gradient is
/// `(G a + 2 x G b + y G c) / N` with `a, b, c` the per-pixel partials.
pub fn mean_ssim_with_grad(x: &[f64], y: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
    let k = gaussian_kernel(WINDOW, SIGMA);
    let g = |v: &[f64]| convolve_separable_zero(v, h, w, &k);
    let n = h * w;

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = g(x);
    let mu_y = g(y);
    let s_xx = g(&xx);
    let s_yy = g(&yy);
    let s_xy = g(&xy);

    let mut total = 0.0;
    let mut d_mu = vec![0.0; n];
    let mut d_sxx = vec![0.0; n];
    let mut d_sxy = vec![0.0; n];
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = s_xx[i] - mx * mx;
        let var_y = s_yy[i] - my * my;
        let cov = s_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * cov + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = var_x + var_y + C2;
        let den = b1 * b2;
        let s = a1 * a2 / den;
        total += s;
        d_mu[i] = 2.0 * my * (a2 - a1) / den - 2.0 * mx * s * (1.0 / b1 - 1.0 / b2);
        d_sxx[i] = -s / b2;
        d_sxy[i] = 2.0 * a1 / den;
    }

    let ga = g(&d_mu);
    let gb = g(&d_sxx);
    let gc = g(&d_sxy);
    let inv_n = 1.0 / n as f64;
    let grad = (0..n)
        .map(|i| (ga[i] + 2.0 * x[i] * gb[i] + y[i] * gc[i]) * inv_n)
        .collect();
    (total * inv_n, grad)
}
