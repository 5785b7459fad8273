//! Full-reference image quality metrics: PSNR and single-scale SSIM.
//!
//! Both operate on the shared floating-point raster type with pixel
//! values in [0, 1], so the dynamic range L is fixed at 1.0. Multichannel
//! images are converted to luma (BT.601 weights) before SSIM.

use serde::Serialize;
use thiserror::Error;

use crate::compositing::RasterImage;

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window.
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("channel counts differ: {0} vs {1}")]
    ChannelMismatch(u8, u8),
    #[error("image {0}x{1} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmallForWindow(u32, u32),
    #[error("empty image")]
    EmptyImage,
}

fn check_same_shape(a: &RasterImage, b: &RasterImage) -> Result<(), QualityError> {
    if a.width != b.width || a.height != b.height {
        return Err(QualityError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    if a.channels != b.channels {
        return Err(QualityError::ChannelMismatch(a.channels, b.channels));
    }
    if a.data.is_empty() {
        return Err(QualityError::EmptyImage);
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all channels. Identical images
/// have zero MSE; that case returns `f64::INFINITY`.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64, QualityError> {
    check_same_shape(a, b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (L * L / mse).log10())
}

/// Converts to a single luma plane. Single-channel images pass through;
/// 3-channel images use BT.601 weights; other channel counts average.
fn to_luma(img: &RasterImage) -> Vec<f64> {
    let n = (img.width * img.height) as usize;
    match img.channels {
        1 => img.data.clone(),
        3 => (0..n)
            .map(|i| {
                0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2]
            })
            .collect(),
        c => {
            let c = c as usize;
            (0..n)
                .map(|i| img.data[c * i..c * (i + 1)].iter().sum::<f64>() / c as f64)
                .collect()
        }
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let center = (SSIM_WINDOW - 1) as f64 / 2.0;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - center;
            let dy = y as f64 - center;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// valid-mode: only windows fully inside the image contribute. Errors if
/// either dimension is smaller than the window.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, QualityError> {
    check_same_shape(a, b)?;
    if (a.width as usize) < SSIM_WINDOW || (a.height as usize) < SSIM_WINDOW {
        return Err(QualityError::TooSmallForWindow(a.width, a.height));
    }
    let la = to_luma(a);
    let lb = to_luma(b);
    let w = gaussian_window();
    let c1 = (K1 * L) * (K1 * L);
    let c2 = (K2 * L) * (K2 * L);
    let (width, height) = (a.width as usize, a.height as usize);

    let mut sum = 0.0;
    let mut count = 0usize;
    for wy in 0..=(height - SSIM_WINDOW) {
        for wx in 0..=(width - SSIM_WINDOW) {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let g = w[ky * SSIM_WINDOW + kx];
                    let pa = la[(wy + ky) * width + wx + kx];
                    let pb = lb[(wy + ky) * width + wx + kx];
                    mu_a += g * pa;
                    mu_b += g * pb;
                    sa += g * pa * pa;
                    sb += g * pb * pb;
                    sab += g * pa * pb;
                }
            }
            let var_a = sa - mu_a * mu_a;
            let var_b = sb - mu_b * mu_b;
            let cov = sab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            sum += num / den;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// PSNR and SSIM for one image pair. `psnr_db` is `None` when the images
/// are identical (infinite PSNR), keeping the JSON serialization finite.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
}

pub fn quality_report(a: &RasterImage, b: &RasterImage) -> Result<QualityReport, QualityError> {
    let p = psnr(a, b)?;
    Ok(QualityReport {
        psnr_db: if p.is_finite() { Some(p) } else { None },
        psnr_infinite: p.is_infinite(),
        ssim: ssim(a, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(width: u32, height: u32, value: f64) -> RasterImage {
        RasterImage {
            width,
            height,
            channels: 1,
            data: vec![value; (width * height) as usize],
        }
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = constant(16, 16, 0.4);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_known_mse() {
        // uniform difference of 0.1 -> MSE 0.01 -> exactly 20 dB
        let a = constant(16, 16, 0.5);
        let b = constant(16, 16, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
        // halving the error adds ~6.02 dB
        let c = constant(16, 16, 0.55);
        assert!((psnr(&a, &c).unwrap() - 20.0 - 20.0 * 2.0f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn psnr_shape_errors() {
        let a = constant(16, 16, 0.5);
        let b = constant(8, 16, 0.5);
        assert!(matches!(
            psnr(&a, &b),
            Err(QualityError::DimensionMismatch(..))
        ));
        let mut c = constant(16, 16, 0.5);
        c.channels = 3;
        c.data = vec![0.5; 16 * 16 * 3];
        assert!(matches!(psnr(&a, &c), Err(QualityError::ChannelMismatch(..))));
    }

    #[test]
    fn gaussian_window_normalized_and_symmetric() {
        let w = gaussian_window();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for y in 0..SSIM_WINDOW {
            for x in 0..SSIM_WINDOW {
                let m = w[y * SSIM_WINDOW + (SSIM_WINDOW - 1 - x)];
                assert!((w[y * SSIM_WINDOW + x] - m).abs() < 1e-15);
            }
        }
        // center is the max
        let center = w[5 * SSIM_WINDOW + 5];
        assert!(w.iter().all(|&v| v <= center));
    }

    #[test]
    fn ssim_self_is_one() {
        let mut img = constant(20, 15, 0.0);
        for y in 0..15 {
            for x in 0..20 {
                img.data[y * 20 + x] = ((x * 31 + y * 17) % 97) as f64 / 96.0;
            }
        }
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_drops_with_distortion() {
        let mut a = constant(24, 24, 0.0);
        for i in 0..a.data.len() {
            a.data[i] = ((i * 53) % 101) as f64 / 100.0;
        }
        let mut small = a.clone();
        let mut large = a.clone();
        for i in 0..a.data.len() {
            let n = (((i * 7919) % 1000) as f64 / 1000.0 - 0.5) * 0.05;
            small.data[i] = (a.data[i] + n).clamp(0.0, 1.0);
            large.data[i] = (a.data[i] + 8.0 * n).clamp(0.0, 1.0);
        }
        let s_small = ssim(&a, &small).unwrap();
        let s_large = ssim(&a, &large).unwrap();
        assert!(s_small < 1.0);
        assert!(s_large < s_small);
        assert!(s_large > -1.0);
    }

    #[test]
    fn ssim_too_small_errors() {
        let a = constant(10, 11, 0.5);
        assert!(matches!(
            ssim(&a, &a),
            Err(QualityError::TooSmallForWindow(10, 11))
        ));
        let b = constant(11, 11, 0.5);
        assert!(ssim(&b, &b).is_ok());
    }

    #[test]
    fn ssim_symmetric() {
        let mut a = constant(16, 16, 0.0);
        let mut b = constant(16, 16, 0.0);
        for i in 0..a.data.len() {
            a.data[i] = ((i * 13) % 50) as f64 / 49.0;
            b.data[i] = ((i * 29) % 50) as f64 / 49.0;
        }
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-15);
    }

    #[test]
    fn quality_report_marks_infinite_psnr() {
        let a = constant(12, 12, 0.3);
        let r = quality_report(&a, &a).unwrap();
        assert!(r.psnr_infinite);
        assert_eq!(r.psnr_db, None);
        assert!((r.ssim - 1.0).abs() < 1e-9);
    }
}
