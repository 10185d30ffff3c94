//! Built-in full-reference scorers on the 8-bit sample scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Polarity;
use crate::error::{Error, Result};
use crate::image::RasterImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const PEAK: f64 = 255.0;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinScorer {
    Psnr,
    Ssim,
}

impl BuiltinScorer {
    pub fn id(self) -> &'static str {
        match self {
            BuiltinScorer::Psnr => "psnr",
            BuiltinScorer::Ssim => "ssim",
        }
    }

    pub fn polarity(self) -> Polarity {
        Polarity::HigherBetter
    }
}

impl fmt::Display for BuiltinScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BuiltinScorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "psnr" => Ok(BuiltinScorer::Psnr),
            "ssim" => Ok(BuiltinScorer::Ssim),
            other => Err(Error::InvalidArgument(format!("unknown built-in scorer {other:?}"))),
        }
    }
}

pub fn score_builtin(
    scorer: BuiltinScorer,
    reference: &RasterImage,
    distorted: &RasterImage,
    psnr_cap: f64,
) -> Result<f64> {
    match scorer {
        BuiltinScorer::Psnr => psnr(reference, distorted, psnr_cap),
        BuiltinScorer::Ssim => ssim(reference, distorted),
    }
}

/// PSNR in dB over all samples, peak 255. Returns `cap` when the images are
/// identical or the value would exceed it.
pub fn psnr(reference: &RasterImage, distorted: &RasterImage, cap: f64) -> Result<f64> {
    reference.same_dims(distorted)?;
    let sse: f64 = reference
        .data
        .iter()
        .zip(&distorted.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = sse / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(cap);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(cap))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Valid-region separable Gaussian filter of one plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 255, valid region only. Multi-channel images
/// average the per-channel means of the SSIM map.
pub fn ssim(reference: &RasterImage, distorted: &RasterImage) -> Result<f64> {
    reference.same_dims(distorted)?;
    let (w, h) = (reference.width, reference.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let k = gaussian_kernel();
    let mut total = 0.0;
    for c in 0..reference.channels {
        let x = reference.plane(c);
        let y = distorted.plane(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
        let mu_x = filter_valid(x, w, h, &k);
        let mu_y = filter_valid(y, w, h, &k);
        let e_xx = filter_valid(&xx, w, h, &k);
        let e_yy = filter_valid(&yy, w, h, &k);
        let e_xy = filter_valid(&xy, w, h, &k);
        let mut sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        }
        total += sum / mu_x.len() as f64;
    }
    Ok(total / reference.channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut s = seed;
        let data = (0..3 * w * h)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % 256) as f64
            })
            .collect();
        RasterImage::new(w, h, 3, data).unwrap()
    }

    /// Direct 2-D window sums, no separable filtering.
    #[allow(clippy::needless_range_loop)]
    fn ssim_oracle(a: &RasterImage, b: &RasterImage) -> f64 {
        let half = (SSIM_WINDOW / 2) as f64;
        let mut win = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
        let mut norm = 0.0;
        for (i, row) in win.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - half, j as f64 - half);
                *v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
                norm += *v;
            }
        }
        let c1 = (0.01f64 * 255.0).powi(2);
        let c2 = (0.03f64 * 255.0).powi(2);
        let mut total = 0.0;
        for c in 0..a.channels {
            let mut acc = 0.0;
            let mut count = 0.0;
            for y0 in 0..=a.height - SSIM_WINDOW {
                for x0 in 0..=a.width - SSIM_WINDOW {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..SSIM_WINDOW {
                        for j in 0..SSIM_WINDOW {
                            let wgt = win[i][j] / norm;
                            let p = a.at(c, y0 + i, x0 + j);
                            let q = b.at(c, y0 + i, x0 + j);
                            mx += wgt * p;
                            my += wgt * q;
                            sxx += wgt * p * p;
                            syy += wgt * q * q;
                            sxy += wgt * p * q;
                        }
                    }
                    let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                    acc += ((2.0 * mx * my + c1) * (2.0 * cv + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1.0;
                }
            }
            total += acc / count;
        }
        total / a.channels as f64
    }

    #[test]
    fn self_similarity() {
        let img = noise_image(16, 14, 3);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&img, &img, 100.0).unwrap(), 100.0);
    }

    #[test]
    fn constant_offset_matches_oracle_and_closed_form() {
        let a = RasterImage::filled(16, 16, 1, 100.0);
        let b = RasterImage::filled(16, 16, 1, 120.0);
        let oracle = ssim_oracle(&a, &b);
        let c1 = (0.01f64 * 255.0).powi(2);
        let closed = (2.0 * 100.0 * 120.0 + c1) / (100.0f64.powi(2) + 120.0f64.powi(2) + c1);
        assert!((oracle - closed).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn random_images_match_oracle() {
        let a = noise_image(15, 13, 1);
        let b = noise_image(15, 13, 2);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn psnr_known_value_and_mismatch() {
        let a = RasterImage::filled(4, 4, 3, 10.0);
        let b = RasterImage::filled(4, 4, 3, 20.0);
        let expected = 10.0 * (255.0f64 * 255.0 / 100.0).log10();
        assert!((psnr(&a, &b, 100.0).unwrap() - expected).abs() < 1e-12);
        let c = RasterImage::filled(5, 4, 3, 10.0);
        assert!(matches!(psnr(&a, &c, 100.0), Err(Error::DimensionMismatch(_))));
        assert!(ssim(&a, &b).is_err());
    }
}
