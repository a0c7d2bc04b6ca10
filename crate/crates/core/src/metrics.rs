//! PSNR and MS-SSIM.
//!
//! MS-SSIM uses five dyadic scales, an 11×11 Gaussian window with σ = 1.5
//! ("valid" filtering, no padding), K1 = 0.01, K2 = 0.03, dynamic range 255
//! and the scale weights 0.0448, 0.2856, 0.3001, 0.2363, 0.1333. It is
//! computed on BT.601 luma. Scales are produced by 2×2 averaging. Negative
//! contrast-structure terms are clamped to zero before exponentiation.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::image::RgbImage;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

/// Smallest side length for which all five scales fit the window.
pub const MS_SSIM_MIN_SIDE: usize = WINDOW << (MS_SSIM_WEIGHTS.len() - 1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    pub psnr: f64,
    pub ms_ssim: Option<f64>,
    pub bpp: Option<f64>,
}

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

/// Mean squared error over all RGB samples.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// PSNR over all RGB samples jointly; identical images give `+∞`.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// PSNR on BT.601 luma.
pub fn psnr_luma(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let (la, lb) = (luma(a), luma(b));
    let m = la.data.iter().zip(&lb.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / la.data.len() as f64;
    Ok(psnr_from_mse(m))
}

/// Single-channel `f64` plane.
#[derive(Debug, Clone)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn downsample(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * x, 2 * y)
                    + self.at(2 * x + 1, 2 * y)
                    + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                data.push(s / 4.0);
            }
        }
        Plane { width: w, height: h, data }
    }

    fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

pub fn luma(img: &RgbImage) -> Plane {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    Plane {
        width: img.width(),
        height: img.height(),
        data,
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" Gaussian filtering.
fn filter_valid(p: &Plane, win: &[f64; WINDOW]) -> Plane {
    let ow = p.width - WINDOW + 1;
    let oh = p.height - WINDOW + 1;
    let mut horiz = vec![0.0; ow * p.height];
    for y in 0..p.height {
        let row = &p.data[y * p.width..(y + 1) * p.width];
        for x in 0..ow {
            horiz[y * ow + x] = win.iter().zip(&row[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut data = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            data[y * ow + x] = (0..WINDOW).map(|k| win[k] * horiz[(y + k) * ow + x]).sum();
        }
    }
    Plane { width: ow, height: oh, data }
}

/// Mean luminance·contrast·structure and mean contrast·structure at one scale.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let win = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let mu_a = filter_valid(a, &win);
    let mu_b = filter_valid(b, &win);
    let aa = filter_valid(&a.map2(a, |x, y| x * y), &win);
    let bb = filter_valid(&b.map2(b, |x, y| x * y), &win);
    let ab = filter_valid(&a.map2(b, |x, y| x * y), &win);
    let n = mu_a.data.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = aa.data[i] - ma * ma;
        let vb = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        let cs_i = (2.0 * cov + c2) / (va + vb + c2);
        let l_i = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += cs_i;
        ssim += l_i * cs_i;
    }
    (ssim / n, cs / n)
}

/// MS-SSIM of two single-channel planes in `[0, 255]`.
pub fn ms_ssim_planes(a: &Plane, b: &Plane) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return invalid("plane sizes differ");
    }
    if a.width < MS_SSIM_MIN_SIDE || a.height < MS_SSIM_MIN_SIDE {
        return invalid(format!(
            "MS-SSIM needs at least {MS_SSIM_MIN_SIDE}x{MS_SSIM_MIN_SIDE}, got {}x{}",
            a.width, a.height
        ));
    }
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut score = 1.0;
    for (j, &w) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b);
        let last = j + 1 == MS_SSIM_WEIGHTS.len();
        let term = if last { ssim } else { cs };
        score *= term.max(0.0).powf(w);
        if !last {
            a = a.downsample();
            b = b.downsample();
        }
    }
    Ok(score)
}

/// MS-SSIM on BT.601 luma.
pub fn ms_ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    ms_ssim_planes(&luma(a), &luma(b))
}

/// Quality of `reconstructed` against `original`; MS-SSIM is `None` when the
/// image is too small for five scales.
pub fn quality(original: &RgbImage, reconstructed: &RgbImage, bpp: Option<f64>) -> Result<QualityReport> {
    let psnr = psnr(original, reconstructed)?;
    let ms_ssim = if original.width() >= MS_SSIM_MIN_SIDE && original.height() >= MS_SSIM_MIN_SIDE {
        Some(ms_ssim(original, reconstructed)?)
    } else {
        None
    };
    Ok(QualityReport { psnr, ms_ssim, bpp })
}

/// `"PSNR / MS-SSIM / bit/px"` with 2/4/4 decimals; missing values print as `—`.
pub fn format_quality(r: &QualityReport) -> String {
    let psnr = if r.psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:.2}", r.psnr)
    };
    let ms = r.ms_ssim.map_or("—".to_string(), |v| format!("{v:.4}"));
    let bpp = r.bpp.map_or("—".to_string(), |v| format!("{v:.4}"));
    format!("{psnr} / {ms} / {bpp}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let v = 128.0 + 60.0 * ((x as f64) * 0.21).sin() * ((y as f64) * 0.13).cos() + ((x * y) % 17) as f64;
            [v as u8, (255 - v as u8) / 2, ((x + 2 * y) % 256) as u8]
        })
        .unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = texture(8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        // mpmath: 20 log10(255) = 48.1308036086791034
        assert!((psnr_from_mse(1.0) - 48.1308036086791).abs() < 1e-12);
        assert!(psnr_from_mse(255.0 * 255.0).abs() < 1e-12);
        let black = RgbImage::new(2, 2, vec![0; 12]).unwrap();
        let white = RgbImage::new(2, 2, vec![255; 12]).unwrap();
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);
        assert!(psnr(&a, &texture(8, 9)).is_err());
    }

    #[test]
    fn ms_ssim_identity_and_symmetry() {
        let a = texture(180, 192);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = RgbImage::from_fn(180, 192, |x, y| {
            let p = a.pixel(x, y);
            [p[0].saturating_add(((x * 7 + y * 3) % 11) as u8), p[1], p[2] / 2 + 40]
        })
        .unwrap();
        let s1 = ms_ssim(&a, &b).unwrap();
        let s2 = ms_ssim(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        assert!(s1 > 0.0 && s1 < 1.0);
    }

    #[test]
    fn constant_image_scores_one() {
        let c = RgbImage::new(176, 176, vec![90; 176 * 176 * 3]).unwrap();
        assert!((ms_ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ms_ssim_rejects_small_images() {
        let a = texture(175, 200);
        assert!(ms_ssim(&a, &a).is_err());
        assert!(quality(&a, &a, None).unwrap().ms_ssim.is_none());
    }

    #[test]
    fn caption_format() {
        let r = QualityReport {
            psnr: 40.4712,
            ms_ssim: Some(0.98734),
            bpp: Some(1.12381),
        };
        assert_eq!(format_quality(&r), "40.47 / 0.9873 / 1.1238");
        let r = QualityReport {
            psnr: f64::INFINITY,
            ms_ssim: Some(1.0),
            bpp: None,
        };
        assert_eq!(format_quality(&r), "inf / 1.0000 / —");
    }
}
