//! Small grayscale images: synthetic class data, SSIM and PGM output.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return invalid(format!("{} pixels do not fill a {width}x{height} image", pixels.len()));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn inverted(&self) -> Self {
        GrayImage {
            pixels: self.pixels.iter().map(|v| 1.0 - v).collect(),
            ..self.clone()
        }
    }

    /// Plain (P2) PGM with 255 gray levels.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_pgm(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let bad = |m: &str| Error::Parse {
            line: 0,
            message: m.to_string(),
        };
        if tokens.next() != Some("P2") {
            return Err(bad("missing P2 magic"));
        }
        let mut num = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| bad("truncated PGM"))?
                .parse::<usize>()
                .map_err(|e| bad(&e.to_string()))
        };
        let (w, h, max) = (num()?, num()?, num()?);
        if max == 0 {
            return Err(bad("zero max value"));
        }
        let pixels = (0..w * h)
            .map(|_| num().map(|v| v as f64 / max as f64))
            .collect::<Result<Vec<_>>>()?;
        GrayImage::new(w, h, pixels)
    }
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Global (single-window) SSIM on dynamic range 1.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        ));
    }
    Ok(ssim_slices(&a.pixels, &b.pixels))
}

pub(crate) fn ssim_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mu_a, y - mu_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

pub const IMAGE_SIDE: usize = 8;
pub const PATTERN_COUNT: usize = 8;

/// An 8x8 image for `class`: a class pattern at a random offset, laid over
/// two smooth random blobs.
pub fn synthetic_image<R: Rng>(class: usize, rng: &mut R) -> GrayImage {
    let side = IMAGE_SIDE;
    let mut pattern = vec![0.0; side * side];
    let shift = rng.random_range(0..4) as isize - 1;
    let at = |r: isize, c: isize| -> Option<usize> {
        (r >= 0 && c >= 0 && (r as usize) < side && (c as usize) < side).then(|| r as usize * side + c as usize)
    };
    for r in 0..side as isize {
        for c in 0..side as isize {
            let on = match class % PATTERN_COUNT {
                0 => (r - 3 - shift).abs() <= 1,
                1 => (c - 3 - shift).abs() <= 1,
                2 => (r - c - shift).abs() <= 1,
                3 => {
                    let (dr, dc) = ((r - 3 - shift.max(0)).abs(), (c - 3 - shift.max(0)).abs());
                    dr.max(dc) == 2
                }
                4 => (r - 3 - shift).abs() == 0 || (c - 4 + shift).abs() == 0,
                5 => (r + c - 7 - shift).abs() <= 1,
                6 => {
                    let (dr, dc) = (r as f64 - 3.5 - shift as f64, c as f64 - 3.5);
                    dr * dr + dc * dc <= 5.0
                }
                _ => ((r + shift.max(0)) / 2 + c / 2) % 2 == 0,
            };
            if on {
                if let Some(i) = at(r, c) {
                    pattern[i] = 1.0;
                }
            }
        }
    }
    let mut pixels = vec![0.0; side * side];
    for _ in 0..2 {
        let cr = rng.random_range(0.0..side as f64);
        let cc = rng.random_range(0.0..side as f64);
        let sigma = rng.random_range(1.0..2.5);
        let amp = rng.random_range(0.15..0.4);
        for r in 0..side {
            for c in 0..side {
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                pixels[r * side + c] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let level = rng.random_range(0.05..0.15);
    let contrast = rng.random_range(0.55..0.75);
    for (p, on) in pixels.iter_mut().zip(&pattern) {
        *p = (level + *p + contrast * on).clamp(0.0, 1.0);
    }
    GrayImage {
        width: side,
        height: side,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn test_image() -> GrayImage {
        let pixels = (0..64).map(|i| ((i * 37) % 64) as f64 / 63.0).collect();
        GrayImage::new(8, 8, pixels).unwrap()
    }

    #[test]
    fn ssim_identity_and_constants() {
        let img = test_image();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        let c = GrayImage::filled(8, 8, 0.4);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_inverted_is_low() {
        // Inversion keeps the variance and flips the covariance sign.
        let img = test_image();
        let inv = img.inverted();
        let n = 64.0;
        let mu = img.pixels.iter().sum::<f64>() / n;
        let var = img.pixels.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let mu_inv = 1.0 - mu;
        let expected = ((2.0 * mu * mu_inv + SSIM_C1) * (-2.0 * var + SSIM_C2))
            / ((mu * mu + mu_inv * mu_inv + SSIM_C1) * (2.0 * var + SSIM_C2));
        let got = ssim(&img, &inv).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got < 0.5);
    }

    #[test]
    fn ssim_symmetric_and_rejects_size_mismatch() {
        let mut rng = rng_from_seed(4);
        let a = synthetic_image(0, &mut rng);
        let b = synthetic_image(1, &mut rng);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &GrayImage::filled(4, 4, 0.0)).is_err());
    }

    #[test]
    fn synthetic_images_in_range_and_distinct_by_class() {
        let mut rng = rng_from_seed(9);
        for class in 0..PATTERN_COUNT {
            let img = synthetic_image(class, &mut rng);
            assert!(img.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        let a = synthetic_image(0, &mut rng);
        let b = synthetic_image(1, &mut rng);
        assert!(ssim(&a, &b).unwrap() < 0.9);
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(2, 2, vec![0.0, 1.0, 0.2, 0.6]).unwrap();
        let text = img.to_pgm();
        assert_eq!(text, "P2\n2 2\n255\n0 255\n51 153\n");
        let back = GrayImage::from_pgm(&text).unwrap();
        for (a, b) in back.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0);
        }
        assert!(GrayImage::from_pgm("P5\n1 1\n255\n0").is_err());
    }
}
