//! Evaluation protocol: Y-channel PSNR/SSIM and the antialiased bicubic
//! resampler used to manufacture LR inputs from HR ground truth.
//!
//! The Y conversion follows the BT.601 studio-swing convention (16-235 on an
//! 8-bit scale) that the SR literature's "Y channel of YCbCr" numbers use,
//! so metrics here are comparable with published tables.

use alloc::vec::Vec;

use crate::error::Error;
use crate::image::{ImageBuffer, Plane};
use crate::loss::{loss_value, Loss};
use crate::math;

/// Y-channel PSNR/SSIM plus the raw RGB losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// dB; infinite for identical inputs.
    pub psnr_y: f64,
    pub ssim_y: f64,
    pub l1: f64,
    pub l2: f64,
}

/// All metrics between two equally sized images. SSIM is NaN when the images
/// are smaller than its 11x11 window.
pub fn report(a: &ImageBuffer, b: &ImageBuffer) -> Result<MetricReport, Error> {
    a.same_dims(b)?;
    let ya = rgb_to_y(a);
    let yb = rgb_to_y(b);
    Ok(MetricReport {
        psnr_y: psnr(&ya, &yb)?,
        ssim_y: ssim(&ya, &yb).unwrap_or(f64::NAN),
        l1: loss_value(Loss::L1, a, b)?,
        l2: loss_value(Loss::L2, a, b)?,
    })
}

/// BT.601 studio-swing luma: Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255
/// for inputs in [0, 1].
pub fn rgb_to_y(img: &ImageBuffer) -> Plane {
    let data: Vec<f64> = img
        .pixels()
        .iter()
        .map(|p| (16.0 + 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0)
        .collect();
    Plane::from_data(img.height(), img.width(), data).expect("image buffers are consistent")
}

/// 10 log10(1 / MSE) with peak 1; infinite for identical inputs.
pub fn psnr(a: &Plane, b: &Plane) -> Result<f64, Error> {
    a.same_dims(b)?;
    let mut mse = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        let d = x - y;
        mse += d * d;
    }
    mse /= a.values().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * math::log10(1.0 / mse))
    }
}

/// SSIM window size.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for j in 0..SSIM_WINDOW {
        for i in 0..SSIM_WINDOW {
            let dx = i as f64 - c;
            let dy = j as f64 - c;
            let v = math::exp(-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
            w[j * SSIM_WINDOW + i] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, peak 1, valid windows only (no padding). Inputs must be at
/// least 11x11.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64, Error> {
    a.same_dims(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidConfig(alloc::format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} input, got {h}x{w}"
        )));
    }
    let window = ssim_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for j in 0..SSIM_WINDOW {
                for i in 0..SSIM_WINDOW {
                    let wgt = window[j * SSIM_WINDOW + i];
                    let va = a.get(x0 + i, y0 + j);
                    let vb = b.get(x0 + i, y0 + j);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Keys cubic kernel with a = -0.5.
fn cubic(t: f64) -> f64 {
    let t = math::abs(t);
    if t < 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

struct ResampleTap {
    start: usize,
    weights: Vec<f64>,
}

/// Per-output-coordinate taps along one axis. When downsampling
/// (out < in) the kernel is widened by the scale factor for antialiasing;
/// out-of-range taps clamp to the edge. Weights are normalized to sum 1.
fn resample_taps(in_len: usize, out_len: usize) -> Vec<ResampleTap> {
    let scale = in_len as f64 / out_len as f64;
    let kernel_scale = scale.max(1.0);
    let support = 2.0 * kernel_scale;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = math::ceil(center - support) as i64;
            let hi = math::floor(center + support) as i64;
            let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
            let mut sum = 0.0;
            for j in lo..=hi {
                let w = cubic((j as f64 - center) / kernel_scale);
                weights.push(w);
                sum += w;
            }
            for w in &mut weights {
                *w /= sum;
            }
            // Fold edge-clamped taps into the boundary samples.
            let start = lo.max(0) as usize;
            let mut folded = alloc::vec![0.0; (hi.min(in_len as i64 - 1).max(0) as usize) - start + 1];
            for (k, j) in (lo..=hi).enumerate() {
                let idx = j.clamp(0, in_len as i64 - 1) as usize - start;
                folded[idx] += weights[k];
            }
            ResampleTap {
                start,
                weights: folded,
            }
        })
        .collect()
}

/// Separable bicubic resize (Keys kernel, a = -0.5) with antialiasing on
/// downscale and edge clamping. Output is clamped to [0, 1].
pub fn bicubic_resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer, Error> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidConfig("resize target must be at least 1x1".into()));
    }
    let (in_h, in_w) = img.dims();
    let x_taps = resample_taps(in_w, out_w);
    let y_taps = resample_taps(in_h, out_h);

    // Horizontal pass.
    let mut horiz = ImageBuffer::zeros(in_h, out_w);
    for y in 0..in_h {
        for (x, tap) in x_taps.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for (k, w) in tap.weights.iter().enumerate() {
                let p = img.get(tap.start + k, y);
                acc[0] += w * p[0];
                acc[1] += w * p[1];
                acc[2] += w * p[2];
            }
            horiz.set(x, y, acc);
        }
    }

    // Vertical pass.
    let mut out = ImageBuffer::zeros(out_h, out_w);
    for (y, tap) in y_taps.iter().enumerate() {
        for x in 0..out_w {
            let mut acc = [0.0f64; 3];
            for (k, w) in tap.weights.iter().enumerate() {
                let p = horiz.get(x, tap.start + k);
                acc[0] += w * p[0];
                acc[1] += w * p[1];
                acc[2] += w * p[2];
            }
            out.set(x, y, acc);
        }
    }
    out.clamp_unit();
    Ok(out)
}
