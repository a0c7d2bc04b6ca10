//! Size accounting shared by `compress --report` and `inspect`, so both
//! print the same totals for the same file.

use nlc_core::codec::tiles::Stream;
use nlc_core::codec::{bits_per_pixel, CompressReport, ContainerSummary};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub width: usize,
    pub height: usize,
    pub containers: usize,
    pub file_bytes: usize,
    /// Container headers plus the tile index, if any.
    pub header_bytes: usize,
    pub payload_bytes: usize,
    pub bpp: f64,
    pub payload_bpp: f64,
}

impl Totals {
    pub fn of(stream: &Stream, summaries: &[ContainerSummary], file_bytes: usize) -> Self {
        let (width, height) = stream.dimensions();
        let payload: usize = summaries.iter().map(|s| s.payload_bytes).sum();
        Self {
            width,
            height,
            containers: summaries.len(),
            file_bytes,
            header_bytes: file_bytes - payload,
            payload_bytes: payload,
            bpp: bits_per_pixel(file_bytes, width, height),
            payload_bpp: bits_per_pixel(payload, width, height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerBytes {
    pub level: usize,
    pub bytes: usize,
}

/// Segment bytes per latent level summed over all containers, `z_L` first.
pub fn layer_bytes(summaries: &[ContainerSummary]) -> Vec<LayerBytes> {
    let levels = summaries.first().map_or(0, |s| s.levels);
    (1..=levels)
        .rev()
        .map(|level| LayerBytes {
            level,
            bytes: summaries
                .iter()
                .flat_map(|s| &s.layers)
                .filter(|l| l.level == level)
                .map(|l| l.bytes)
                .sum(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerRates {
    pub level: usize,
    pub symbols: usize,
    pub actual_bits: usize,
    pub estimated_bits: f64,
    pub model_bits: f64,
}

/// Per-level rates summed over tiles, `z_L` first.
pub fn layer_rates(reports: &[CompressReport]) -> Vec<LayerRates> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .layers
        .iter()
        .map(|l| {
            let same = || reports.iter().flat_map(|r| &r.layers).filter(move |x| x.level == l.level);
            LayerRates {
                level: l.level,
                symbols: same().map(|x| x.symbols).sum(),
                actual_bits: same().map(|x| x.actual_bits).sum(),
                estimated_bits: same().map(|x| x.estimated_bits).sum(),
                model_bits: same().map(|x| x.model_bits).sum(),
            }
        })
        .collect()
}

pub fn print_totals(t: &Totals) {
    println!(
        "{}x{} in {} container(s): {} bytes ({} header, {} payload), {:.4} bpp, payload {:.4} bpp",
        t.width, t.height, t.containers, t.file_bytes, t.header_bytes, t.payload_bytes, t.bpp, t.payload_bpp
    );
}
