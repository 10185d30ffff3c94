//! Planar 8-bit-range images used by the scorers and the network input path.

use std::path::Path;

use image::imageops::FilterType;
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Planar (channel-major) image with samples on the 0..=255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        RasterImage {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_dims(&self, other: &RasterImage) -> Result<()> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * w * h];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = px[c] as f64;
            }
        }
        RasterImage {
            width: w,
            height: h,
            channels: 3,
            data,
        }
    }

    /// Quantizes to 8-bit RGB; grey images are replicated across channels.
    pub fn to_rgb8(&self) -> RgbImage {
        let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let ch = |c: usize| q(self.at(c.min(self.channels - 1), y, x));
            Rgb([ch(0), ch(1), ch(2)])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Aspect-ignoring resize through 8-bit RGB with a triangle filter.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        if (width, height) == (self.width, self.height) && self.channels == 3 {
            return self.clone();
        }
        let out = image::imageops::resize(
            &self.to_rgb8(),
            width as u32,
            height as u32,
            FilterType::Triangle,
        );
        Self::from_rgb8(&out)
    }

    /// Network input tensor `[3, H, W]`: `(v / 255 - mean[c]) / std[c]`.
    pub fn to_tensor(&self, mean: &[f64; 3], std: &[f64; 3]) -> Tensor {
        let n = self.width * self.height;
        let mut data = Vec::with_capacity(3 * n);
        for c in 0..3 {
            let src = self.plane(c.min(self.channels - 1));
            data.extend(src.iter().map(|v| (v / 255.0 - mean[c]) / std[c]));
        }
        Tensor::new(vec![3, self.height, self.width], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_and_resize() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..3 * 4 * 5).map(|i| (i * 4 % 256) as f64).collect();
        let img = RasterImage::new(5, 4, 3, data).unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(RasterImage::load(&p).unwrap(), img);
        let small = img.resized(2, 3);
        assert_eq!((small.width, small.height, small.channels), (2, 3, 3));
    }

    #[test]
    fn tensor_normalization() {
        let img = RasterImage::filled(2, 2, 3, 255.0);
        let t = img.to_tensor(&[0.5; 3], &[0.25; 3]);
        assert_eq!(t.shape, vec![3, 2, 2]);
        assert!(t.data.iter().all(|&v| v == 2.0));
    }
}
