#![allow(dead_code)]

use nlc_core::entropy::{quantize_cdf, BinGrid, QuantizedCdfTable, CDF_TOTAL};
use nlc_core::image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gradients, a checker pattern and mild noise, all drawn from `seed`.
pub fn seeded_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    let base: [f64; 3] = [r.random_range(0.0..255.0), r.random_range(0.0..255.0), r.random_range(0.0..255.0)];
    let gx: [f64; 3] = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
    let gy: [f64; 3] = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
    let cell = r.random_range(2..9);
    RgbImage::from_fn(width, height, |x, y| {
        let checker = if (x / cell + y / cell) % 2 == 0 { 25.0 } else { -25.0 };
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = base[c] + gx[c] * x as f64 + gy[c] * y as f64 + checker + r.random_range(-8.0..8.0);
            px[c] = v.rem_euclid(256.0) as u8;
        }
        px
    })
    .unwrap()
}

/// Table from a random sparse PMF over `grid`.
pub fn random_table(r: &mut ChaCha8Rng, grid: &BinGrid) -> QuantizedCdfTable {
    let mut pmf: Vec<f64> = (0..grid.size())
        .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random::<f64>().powi(4) })
        .collect();
    let hot = r.random_range(0..pmf.len());
    pmf[hot] += 1e-3;
    let s: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= s);
    quantize_cdf(&pmf, grid).unwrap()
}

/// Draws a symbol with probability `freq / 2^16`.
pub fn sample(r: &mut ChaCha8Rng, table: &QuantizedCdfTable) -> usize {
    table.symbol_for_slot(r.random_range(0..CDF_TOTAL))
}
