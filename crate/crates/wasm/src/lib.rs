//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations are exposed: the discretized PMF and code lengths of the
//! entropy models, a full compress/decompress round trip of a synthetic
//! image under random weights, and the autoregressive equivalence check.
//! The logic lives in plain functions so it can be tested natively.

use nlc_core::ar;
use nlc_core::codec::Codec;
use nlc_core::entropy::{bits_for_probability, pmf, quantize_cdf, BinGrid, Distribution, ScaleTable};
use nlc_core::image::RgbImage;
use nlc_core::metrics;
use nlc_core::nn::{NetworkSpec, WeightStore};
use wasm_bindgen::prelude::*;

/// Narrow networks keep the demo responsive in a browser tab.
const DEMO_HIDDEN: usize = 16;
const DEMO_LATENT: usize = 24;
const MAX_DEMO_SIDE: u32 = 512;
/// Bins shown either side of zero.
const CURVE_HALF_WIDTH: i32 = 24;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct EntropyCurve {
    bins: Vec<i32>,
    pmf: Vec<f64>,
    code_lengths: Vec<f64>,
    table_code_lengths: Vec<f64>,
    entropy_bits: f64,
    sigma_level: Option<f64>,
}

#[wasm_bindgen]
impl EntropyCurve {
    pub fn bins(&self) -> Vec<i32> {
        self.bins.clone()
    }
    pub fn pmf(&self) -> Vec<f64> {
        self.pmf.clone()
    }
    /// `-log2 p` under the continuous model.
    pub fn code_lengths(&self) -> Vec<f64> {
        self.code_lengths.clone()
    }
    /// `-log2 (freq / 2^16)` under the coder's integer table.
    pub fn table_code_lengths(&self) -> Vec<f64> {
        self.table_code_lengths.clone()
    }
    /// Entropy of the full PMF in bits per symbol.
    pub fn entropy_bits(&self) -> f64 {
        self.entropy_bits
    }
    /// Scale table level the coder would round σ up to; `NaN` for the prior.
    pub fn sigma_level(&self) -> f64 {
        self.sigma_level.unwrap_or(f64::NAN)
    }
}

/// `family` is `"logistic"` or `"gaussian"`; `sigma` is ignored for the
/// logistic prior. For Gaussians the coder's table is the one at the scale
/// level σ rounds up to.
pub fn entropy_curve_impl(family: &str, sigma: f64) -> Result<EntropyCurve, String> {
    let grid = BinGrid::default();
    let (dist, table, level) = match family {
        "logistic" => {
            let p = pmf(Distribution::Logistic, &grid).map_err(err)?;
            (Distribution::Logistic, quantize_cdf(&p, &grid).map_err(err)?, None)
        }
        "gaussian" => {
            let scales = ScaleTable::with_grid(grid).map_err(err)?;
            let level = scales.quantize_sigma(sigma);
            let dist = Distribution::gaussian(sigma).map_err(err)?;
            (dist, scales.table(level).clone(), Some(scales.levels()[level]))
        }
        other => return Err(format!("unknown family {other:?}, expected \"logistic\" or \"gaussian\"")),
    };
    let full = pmf(dist, &grid).map_err(err)?;
    let entropy_bits = full.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    let bins: Vec<i32> = (-CURVE_HALF_WIDTH..=CURVE_HALF_WIDTH).collect();
    let pmf: Vec<f64> = bins.iter().map(|&b| full[grid.index_of(b)]).collect();
    Ok(EntropyCurve {
        code_lengths: pmf.iter().map(|&p| bits_for_probability(p)).collect(),
        table_code_lengths: bins.iter().map(|&b| table.bits(grid.index_of(b))).collect(),
        bins,
        pmf,
        entropy_bits,
        sigma_level: level,
    })
}

#[wasm_bindgen]
pub fn entropy_curve(family: &str, sigma: f64) -> Result<EntropyCurve, JsError> {
    entropy_curve_impl(family, sigma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct DemoResult {
    width: u32,
    height: u32,
    bytes: usize,
    bpp: f64,
    payload_bpp: f64,
    psnr: f64,
    layer_bits: Vec<u32>,
    estimated_bits: Vec<f64>,
    original: Vec<u8>,
    reconstruction: Vec<u8>,
}

#[wasm_bindgen]
impl DemoResult {
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn bytes(&self) -> usize {
        self.bytes
    }
    pub fn bpp(&self) -> f64 {
        self.bpp
    }
    pub fn payload_bpp(&self) -> f64 {
        self.payload_bpp
    }
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
    /// Actual bits per latent layer, `z_L` first.
    pub fn layer_bits(&self) -> Vec<u32> {
        self.layer_bits.clone()
    }
    pub fn estimated_bits(&self) -> Vec<f64> {
        self.estimated_bits.clone()
    }
    /// RGBA bytes ready for `ImageData`.
    pub fn original_rgba(&self) -> Vec<u8> {
        self.original.clone()
    }
    pub fn reconstruction_rgba(&self) -> Vec<u8> {
        self.reconstruction.clone()
    }
}

/// Smooth gradients with a few hard-edged discs.
pub fn synthetic_image(width: u32, height: u32, seed: u64) -> Result<RgbImage, String> {
    let (w, h) = (width as usize, height as usize);
    let discs: Vec<(f64, f64, f64, [u8; 3])> = (0..4u64)
        .map(|i| {
            let k = seed.wrapping_mul(6364136223846793005).wrapping_add(i * 1442695040888963407);
            let f = |s: u32| ((k >> s) & 0xff) as f64 / 255.0;
            (f(8) * w as f64, f(16) * h as f64, 4.0 + f(24) * w.min(h) as f64 / 3.0, [(k >> 32) as u8, (k >> 40) as u8, (k >> 48) as u8])
        })
        .collect();
    RgbImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        for &(cx, cy, r, color) in &discs {
            if (fx - cx).powi(2) + (fy - cy).powi(2) < r * r {
                return color;
            }
        }
        [(255 * x / w.max(1)) as u8, (255 * y / h.max(1)) as u8, 128]
    })
    .map_err(err)
}

fn rgba(img: &RgbImage) -> Vec<u8> {
    img.data().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

pub fn compress_demo_impl(width: u32, height: u32, levels: usize, seed: u64) -> Result<DemoResult, String> {
    if !(1..=MAX_DEMO_SIDE).contains(&width) || !(1..=MAX_DEMO_SIDE).contains(&height) {
        return Err(format!("image sides must be in 1..={MAX_DEMO_SIDE}"));
    }
    let spec = NetworkSpec::with_channels(levels, DEMO_HIDDEN, DEMO_LATENT).map_err(err)?;
    let codec = Codec::new(WeightStore::random(spec, seed).map_err(err)?).map_err(err)?;
    let img = synthetic_image(width, height, seed)?;
    let c = codec.compress_checked(&img).map_err(err)?;
    let decoded = codec.decompress(&c.bytes).map_err(err)?.image;
    Ok(DemoResult {
        width,
        height,
        bytes: c.bytes.len(),
        bpp: c.report.summary.bpp,
        payload_bpp: c.report.summary.payload_bpp,
        psnr: metrics::psnr(&img, &decoded).map_err(err)?,
        layer_bits: c.report.layers.iter().map(|l| l.actual_bits as u32).collect(),
        estimated_bits: c.report.layers.iter().map(|l| l.estimated_bits).collect(),
        original: rgba(&img),
        reconstruction: rgba(&decoded),
    })
}

/// Compresses a synthetic image with seeded random weights and decodes it
/// again. Random weights are not trained, so the reconstruction is not
/// expected to resemble the input; the demo shows the coding pipeline.
#[wasm_bindgen]
pub fn compress_demo(width: u32, height: u32, levels: usize, seed: u64) -> Result<DemoResult, JsError> {
    compress_demo_impl(width, height, levels, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct ArResult {
    max_gap: f64,
    max_code_length_gap_bits: f64,
    total_mass_error: f64,
}

#[wasm_bindgen]
impl ArResult {
    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }
    pub fn max_code_length_gap_bits(&self) -> f64 {
        self.max_code_length_gap_bits
    }
    pub fn total_mass_error(&self) -> f64 {
        self.total_mass_error
    }
    pub fn passed(&self) -> bool {
        self.max_gap <= 1e-12
    }
}

pub fn ar_check_impl(pixels: usize, seed: u64, trials: usize) -> Result<ArResult, String> {
    let r = ar::run_check(pixels, seed, trials).map_err(err)?;
    Ok(ArResult {
        max_gap: r.max_gap,
        max_code_length_gap_bits: r.max_code_length_gap_bits,
        total_mass_error: r.total_mass_error,
    })
}

#[wasm_bindgen]
pub fn ar_check(pixels: usize, seed: u64, trials: usize) -> Result<ArResult, JsError> {
    ar_check_impl(pixels, seed, trials).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_curve_uses_rounded_up_level() {
        let c = entropy_curve_impl("gaussian", 1.0).unwrap();
        assert_eq!(c.bins().len(), 49);
        assert!(c.sigma_level() >= 1.0);
        let zero = c.bins().iter().position(|&b| b == 0).unwrap();
        // scipy.stats.norm: Φ(0.5) − Φ(−0.5) = 0.382924922548026
        assert!((c.pmf()[zero] - 0.382924922548026).abs() < 1e-12);
        assert!(c.entropy_bits() > 1.5 && c.entropy_bits() < 2.5);
        assert!(c.table_code_lengths().iter().all(|b| b.is_finite() && *b <= 16.0));
    }

    #[test]
    fn logistic_curve_and_bad_family() {
        let c = entropy_curve_impl("logistic", 0.0).unwrap();
        assert!(c.sigma_level().is_nan());
        let zero = c.bins().iter().position(|&b| b == 0).unwrap();
        // scipy.stats.logistic: −log2(0.244918662403709) = 2.0296253857814
        assert!((c.code_lengths()[zero] - 2.0296253857814).abs() < 1e-9);
        assert!(entropy_curve_impl("laplace", 1.0).is_err());
        assert!(entropy_curve_impl("gaussian", 0.0).is_err());
    }

    #[test]
    fn demo_round_trip() {
        let r = compress_demo_impl(37, 21, 2, 5).unwrap();
        assert_eq!(r.original_rgba().len(), 37 * 21 * 4);
        assert_eq!(r.reconstruction_rgba().len(), 37 * 21 * 4);
        assert_eq!(r.layer_bits().len(), 2);
        assert!(r.bpp() > r.payload_bpp() && r.psnr().is_finite());
        assert!(compress_demo_impl(0, 10, 1, 0).is_err());
        assert!(compress_demo_impl(10, 10, 0, 0).is_err());
    }

    #[test]
    fn ar_check_passes_and_rejects_large_t() {
        let r = ar_check_impl(5, 1, 10).unwrap();
        assert!(r.passed() && r.total_mass_error() < 1e-12);
        assert!(ar_check_impl(13, 0, 1).is_err());
    }
}
