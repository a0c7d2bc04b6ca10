//! End-to-end pipeline: analysis, quantization, entropy coding and synthesis.
//!
//! Encoding order follows the nested model. `z̃_L` is coded under the
//! standard logistic prior; then for `l = L-1 … 1` the scale stack maps the
//! quantized `z̃_{l+1}` to `σ_l` and `z̃_l` is coded under zero-mean
//! Gaussians whose σ is rounded up to the scale table. The decoder repeats
//! the same `f32` computations from the same integers, so both sides pick
//! identical tables.

pub mod container;
pub mod tiles;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use container::{Container, ContainerHeader, LayerRecord};

use crate::entropy::{
    estimate_rate_bits, prior_table, BinGrid, Distribution, QuantizedCdfTable, ScaleTable, CDF_BITS,
};
use crate::error::{corrupt, invalid, Error, Result};
use crate::image::RgbImage;
use crate::metrics;
use crate::nn::{run_named, ModelHash, StackId, WeightStore};
use crate::rans;
use crate::tensor::Tensor;

/// Upper bound on scale levels accepted from a container header.
const MAX_SCALE_LEVELS: u16 = 1024;

/// Largest padded image a single container may hold; bigger images are
/// meant to be tiled.
pub const MAX_CONTAINER_PIXELS: usize = 1 << 24;

fn check_pixels(padded_w: usize, padded_h: usize) -> Result<()> {
    match padded_w.checked_mul(padded_h) {
        Some(n) if n <= MAX_CONTAINER_PIXELS => Ok(()),
        _ => Err(Error::ResourceBound(format!(
            "{padded_w}x{padded_h} exceeds {MAX_CONTAINER_PIXELS} pixels per container; use tiles"
        ))),
    }
}

/// Integer latent grid `(channels, height, width)`, channel-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<i32>,
}

impl LatentGrid {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            self.channels,
            self.height,
            self.width,
            self.values.iter().map(|&v| v as f32).collect(),
        )
        .expect("latent grid shape is valid")
    }
}

/// Quantized latents `z̃_1 … z̃_L`; `layers[0]` is `z̃_1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentStack {
    pub layers: Vec<LatentGrid>,
}

/// Rounds half away from zero and clamps into the grid.
pub fn quantize_value(v: f32, grid: &BinGrid) -> i32 {
    (v.round() as i32).clamp(grid.min(), grid.max())
}

pub fn quantize(latent: &Tensor, grid: &BinGrid) -> LatentGrid {
    let (c, h, w) = latent.shape();
    LatentGrid {
        channels: c,
        height: h,
        width: w,
        values: latent.data().iter().map(|&v| quantize_value(v, grid)).collect(),
    }
}

/// Continuous latents: `z_1 = A_1(x)`, `z_{l+1} = A_{l+1}(z_l)`.
pub fn analyze_continuous(x: &Tensor, weights: &WeightStore) -> Result<Vec<Tensor>> {
    let spec = weights.network();
    if x.channels() != spec.image_channels {
        return invalid(format!("image has {} channels, model expects {}", x.channels(), spec.image_channels));
    }
    spec.latent_shapes(x.height(), x.width())?;
    let mut out: Vec<Tensor> = Vec::with_capacity(spec.levels);
    for l in 1..=spec.levels {
        let input = out.last().unwrap_or(x);
        let z = run_named(input, StackId::Analysis(l), weights)?;
        out.push(z);
    }
    Ok(out)
}

/// Analysis on continuous latents, then quantization of every layer.
pub fn analyze(x: &Tensor, weights: &WeightStore, grid: &BinGrid) -> Result<LatentStack> {
    Ok(LatentStack {
        layers: analyze_continuous(x, weights)?
            .iter()
            .map(|z| quantize(z, grid))
            .collect(),
    })
}

/// Ideal bits-per-pixel of `bytes` over `width × height` pixels.
pub fn bits_per_pixel(bytes: usize, width: usize, height: usize) -> f64 {
    (bytes * 8) as f64 / (width * height) as f64
}

#[derive(Debug, Clone)]
struct Tables {
    grid: BinGrid,
    prior: QuantizedCdfTable,
    scales: ScaleTable,
}

impl Tables {
    fn new(grid: BinGrid, scales: ScaleTable) -> Result<Self> {
        Ok(Self {
            prior: prior_table(&grid)?,
            grid,
            scales,
        })
    }

    fn matches(&self, h: &ContainerHeader) -> bool {
        h.precision as u32 == self.grid.precision()
            && h.scale_count as usize == self.scales.levels().len()
            && h.scale_min == self.scales.min()
            && h.scale_max == self.scales.max()
    }
}

/// Per-layer accounting taken from a container alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    /// 1-based latent index.
    pub level: usize,
    pub shape: (usize, usize, usize),
    pub bytes: usize,
}

/// Size accounting of one container.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainerSummary {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub header_bytes: usize,
    pub payload_bytes: usize,
    pub total_bytes: usize,
    pub bpp: f64,
    pub payload_bpp: f64,
    /// `z_L` first.
    pub layers: Vec<LayerSummary>,
}

impl ContainerSummary {
    pub fn of(c: &Container) -> Self {
        let h = &c.header;
        let (w, ht) = (h.width as usize, h.height as usize);
        let levels = h.layers.len();
        let payload = c.payload_len();
        let total = c.encoded_len();
        Self {
            width: w,
            height: ht,
            levels,
            header_bytes: h.encoded_len(),
            payload_bytes: payload,
            total_bytes: total,
            bpp: bits_per_pixel(total, w, ht),
            payload_bpp: bits_per_pixel(payload, w, ht),
            layers: h
                .layers
                .iter()
                .enumerate()
                .map(|(i, r)| LayerSummary {
                    level: levels - i,
                    shape: (r.channels as usize, r.height as usize, r.width as usize),
                    bytes: r.segment_len as usize,
                })
                .collect(),
        }
    }
}

/// Rate estimates next to the actual segment size of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRate {
    pub level: usize,
    pub symbols: usize,
    pub actual_bits: usize,
    /// `Σ -log2(freq / 2^16)` under the tables actually used.
    pub estimated_bits: f64,
    /// `Σ -log2 p` under the continuous model with unrounded σ.
    pub model_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressReport {
    pub summary: ContainerSummary,
    /// `z_L` first.
    pub layers: Vec<LayerRate>,
}

impl CompressReport {
    pub fn estimated_bits(&self) -> f64 {
        self.layers.iter().map(|l| l.estimated_bits).sum()
    }

    pub fn payload_bits(&self) -> usize {
        self.summary.payload_bytes * 8
    }
}

pub struct Compressed {
    pub bytes: Vec<u8>,
    pub container: Container,
    /// What the decoder will output, computed on the encoder side.
    pub reconstruction: RgbImage,
    pub report: CompressReport,
    /// Fingerprint of every σ field used, for encoder/decoder comparison.
    pub scale_digest: [u8; 8],
}

pub struct Decompressed {
    pub image: RgbImage,
    pub latents: LatentStack,
    pub scale_digest: [u8; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    Mse,
    /// `1 - MS-SSIM`
    MsSsim,
}

/// One point of a rate-distortion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdPoint {
    pub bpp: f64,
    pub payload_bpp: f64,
    pub distortion: f64,
    pub kind: DistortionKind,
    /// Model label, e.g. the λ the weights were trained for.
    pub lambda_id: Option<String>,
}

/// Encoder and decoder for one set of weights.
pub struct Codec {
    weights: WeightStore,
    hash: ModelHash,
    tables: Tables,
}

impl Codec {
    pub fn new(weights: WeightStore) -> Result<Self> {
        Self::with_precision(weights, crate::entropy::DEFAULT_PRECISION)
    }

    pub fn with_precision(weights: WeightStore, precision: u32) -> Result<Self> {
        let grid = BinGrid::new(precision)?;
        Self::with_tables(weights, ScaleTable::with_grid(grid)?)
    }

    pub fn with_tables(weights: WeightStore, scales: ScaleTable) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            hash: weights.hash(),
            tables: Tables::new(scales.grid(), scales)?,
            weights,
        })
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn hash(&self) -> ModelHash {
        self.hash
    }

    pub fn grid(&self) -> BinGrid {
        self.tables.grid
    }

    pub fn scales(&self) -> &ScaleTable {
        &self.tables.scales
    }

    pub fn prior(&self) -> &QuantizedCdfTable {
        &self.tables.prior
    }

    /// Padded size used for a `width × height` image.
    pub fn padded_size(&self, width: usize, height: usize) -> (usize, usize) {
        let f = self.weights.network().total_downsampling();
        (width.div_ceil(f) * f, height.div_ceil(f) * f)
    }

    pub fn analyze(&self, x: &Tensor) -> Result<LatentStack> {
        analyze(x, &self.weights, &self.tables.grid)
    }

    /// `σ_l` from `z̃_{l+1}`, clamped into the scale table range.
    pub fn predict_sigma(&self, level: usize, above: &LatentGrid) -> Result<Tensor> {
        let log_sigma = run_named(&above.to_tensor(), StackId::Scale(level), &self.weights)?;
        let (lo, hi) = (self.tables.scales.min() as f32, self.tables.scales.max() as f32);
        Ok(log_sigma.map(|v| {
            let s = v.exp();
            if s.is_nan() {
                hi
            } else {
                s.clamp(lo, hi)
            }
        }))
    }

    pub fn synthesize(&self, z1: &LatentGrid, width: usize, height: usize) -> Result<RgbImage> {
        let x = run_named(&z1.to_tensor(), StackId::Synthesis, &self.weights)?;
        RgbImage::from_tensor(&x, width, height)
    }

    pub fn compress(&self, img: &RgbImage) -> Result<Compressed> {
        let (w, h) = (img.width(), img.height());
        let (pw, ph) = self.padded_size(w, h);
        check_pixels(pw, ph)?;
        let x = img.to_tensor_padded(pw, ph)?;
        let latents = self.analyze(&x)?;
        let levels = latents.layers.len();
        let t = &self.tables;
        let mut digest = Sha256::new();

        let mut records = Vec::with_capacity(levels);
        let mut segments = Vec::with_capacity(levels);
        let mut rates = Vec::with_capacity(levels);
        for level in (1..=levels).rev() {
            let z = &latents.layers[level - 1];
            let symbols: Vec<usize> = z.values.iter().map(|&v| t.grid.index_of(v)).collect();
            let (tables, dists): (Vec<&QuantizedCdfTable>, Vec<Distribution>) = if level == levels {
                (vec![&t.prior; symbols.len()], vec![Distribution::Logistic; symbols.len()])
            } else {
                let sigma = self.predict_sigma(level, &latents.layers[level])?;
                for v in sigma.data() {
                    digest.update(v.to_bits().to_le_bytes());
                }
                sigma
                    .data()
                    .iter()
                    .map(|&s| {
                        let lvl = t.scales.quantize_sigma(s as f64);
                        (t.scales.table(lvl), Distribution::Gaussian(s as f64))
                    })
                    .unzip()
            };
            let segment = rans::encode(&symbols, &tables)?;
            rates.push(LayerRate {
                level,
                symbols: symbols.len(),
                actual_bits: segment.len() * 8,
                estimated_bits: rans::ideal_bits(&symbols, &tables),
                model_bits: estimate_rate_bits(&z.values, &dists, &t.grid)?,
            });
            records.push(LayerRecord {
                channels: z.channels as u32,
                height: z.height as u32,
                width: z.width as u32,
                segment_len: segment.len() as u32,
            });
            segments.push(segment.0);
        }

        let container = Container {
            header: ContainerHeader {
                levels: levels as u8,
                precision: t.grid.precision() as u8,
                cdf_bits: CDF_BITS as u8,
                width: w as u32,
                height: h as u32,
                padded_width: pw as u32,
                padded_height: ph as u32,
                latent_channels: self.weights.network().latent_channels as u32,
                model_hash: self.hash,
                scale_count: t.scales.levels().len() as u16,
                scale_min: t.scales.min(),
                scale_max: t.scales.max(),
                layers: records,
            },
            segments,
        };
        let reconstruction = self.synthesize(&latents.layers[0], w, h)?;
        let report = CompressReport {
            summary: ContainerSummary::of(&container),
            layers: rates,
        };
        Ok(Compressed {
            bytes: container.to_bytes(),
            container,
            reconstruction,
            report,
            scale_digest: finish_digest(digest),
        })
    }

    /// Compresses, decodes the result and fails unless the decoder output
    /// and σ fields match the encoder's exactly.
    pub fn compress_checked(&self, img: &RgbImage) -> Result<Compressed> {
        let c = self.compress(img)?;
        let d = self.decompress(&c.bytes)?;
        if d.scale_digest != c.scale_digest {
            return corrupt("self-check: decoder scale fields differ from encoder");
        }
        if d.image != c.reconstruction {
            return corrupt("self-check: decoder output differs from encoder reconstruction");
        }
        Ok(c)
    }

    pub fn decompress(&self, bytes: &[u8]) -> Result<Decompressed> {
        self.decompress_container(&Container::from_bytes(bytes)?)
    }

    pub fn decompress_container(&self, c: &Container) -> Result<Decompressed> {
        let h = &c.header;
        if h.model_hash != self.hash {
            return Err(Error::WrongModel {
                expected: h.model_hash.to_hex(),
                actual: self.hash.to_hex(),
            });
        }
        let spec = self.weights.network();
        if h.levels as usize != spec.levels || h.latent_channels as usize != spec.latent_channels {
            return corrupt("header layer count or channels disagree with the model");
        }
        if h.cdf_bits as u32 != CDF_BITS {
            return corrupt(format!("unsupported table precision {}", h.cdf_bits));
        }
        let (pw, ph) = (h.padded_width as usize, h.padded_height as usize);
        if (pw, ph) != self.padded_size(h.width as usize, h.height as usize) {
            return corrupt("padded size disagrees with the model's downsampling");
        }
        check_pixels(pw, ph)?;
        let shapes = spec.latent_shapes(ph, pw).map_err(|e| Error::CorruptStream(e.to_string()))?;
        for (i, r) in h.layers.iter().enumerate() {
            let expect = shapes[spec.levels - 1 - i];
            if (r.channels as usize, r.height as usize, r.width as usize) != expect {
                return corrupt(format!("layer record {i} has the wrong shape"));
            }
        }

        let owned;
        let t = if self.tables.matches(h) {
            &self.tables
        } else {
            if h.scale_count > MAX_SCALE_LEVELS {
                return corrupt(format!("{} scale levels exceeds {MAX_SCALE_LEVELS}", h.scale_count));
            }
            let grid = BinGrid::new(h.precision as u32).map_err(|e| Error::CorruptStream(e.to_string()))?;
            let scales = ScaleTable::new(h.scale_count as usize, h.scale_min, h.scale_max, grid)
                .map_err(|e| Error::CorruptStream(e.to_string()))?;
            owned = Tables::new(grid, scales)?;
            &owned
        };

        let levels = spec.levels;
        let mut digest = Sha256::new();
        let mut decoded: Vec<Option<LatentGrid>> = vec![None; levels];
        for (i, segment) in c.segments.iter().enumerate() {
            let level = levels - i;
            let (ch, hh, ww) = shapes[level - 1];
            let n = ch * hh * ww;
            let tables: Vec<&QuantizedCdfTable> = if level == levels {
                vec![&t.prior; n]
            } else {
                let above = decoded[level].as_ref().expect("decoded top-down");
                let sigma = self.predict_sigma(level, above)?;
                for v in sigma.data() {
                    digest.update(v.to_bits().to_le_bytes());
                }
                sigma
                    .data()
                    .iter()
                    .map(|&s| t.scales.table(t.scales.quantize_sigma(s as f64)))
                    .collect()
            };
            let symbols = rans::decode(segment, &tables, n)?;
            decoded[level - 1] = Some(LatentGrid {
                channels: ch,
                height: hh,
                width: ww,
                values: symbols.into_iter().map(|s| t.grid.value_of(s)).collect(),
            });
        }
        let latents = LatentStack {
            layers: decoded.into_iter().map(|z| z.expect("every layer decoded")).collect(),
        };
        let image = self.synthesize(&latents.layers[0], h.width as usize, h.height as usize)?;
        Ok(Decompressed {
            image,
            latents,
            scale_digest: finish_digest(digest),
        })
    }

    /// Round-trips `img` and measures rate and distortion.
    pub fn evaluate(&self, img: &RgbImage, kind: DistortionKind) -> Result<RdPoint> {
        let c = self.compress(img)?;
        let decoded = self.decompress(&c.bytes)?.image;
        let distortion = match kind {
            DistortionKind::Mse => metrics::mse(img, &decoded)?,
            DistortionKind::MsSsim => 1.0 - metrics::ms_ssim(img, &decoded)?,
        };
        Ok(RdPoint {
            bpp: c.report.summary.bpp,
            payload_bpp: c.report.summary.payload_bpp,
            distortion,
            kind,
            lambda_id: self.weights.label().map(str::to_string),
        })
    }
}

fn finish_digest(d: Sha256) -> [u8; 8] {
    let full = d.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&full[..8]);
    out
}
