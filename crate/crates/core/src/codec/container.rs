//! `NLC1` container: a fixed header, one record per latent layer and the
//! per-layer rANS segments. All integers are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "NLC1"
//!      4     1  version (1)
//!      5     1  L, number of latent layers
//!      6     1  P, latent precision in bits
//!      7     1  frequency-table precision in bits (16)
//!      8     4  original width
//!     12     4  original height
//!     16     4  padded width
//!     20     4  padded height
//!     24     4  latent channels M
//!     28     8  model hash
//!     36     2  scale level count
//!     38     8  smallest scale level (f64)
//!     46     8  largest scale level (f64)
//!     54  16·L  per layer, z_L first: channels, height, width, segment bytes (u32 each)
//!  54+16L       segments, z_L first
//! ```

use crate::error::{corrupt, Result};
use crate::nn::ModelHash;

pub const CONTAINER_MAGIC: &[u8; 4] = b"NLC1";
pub const CONTAINER_VERSION: u8 = 1;
pub const FIXED_HEADER_LEN: usize = 54;
pub const LAYER_RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerRecord {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub segment_len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub levels: u8,
    pub precision: u8,
    pub cdf_bits: u8,
    pub width: u32,
    pub height: u32,
    pub padded_width: u32,
    pub padded_height: u32,
    pub latent_channels: u32,
    pub model_hash: ModelHash,
    pub scale_count: u16,
    pub scale_min: f64,
    pub scale_max: f64,
    /// `z_L` first.
    pub layers: Vec<LayerRecord>,
}

impl ContainerHeader {
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + LAYER_RECORD_LEN * self.layers.len()
    }
}

/// Parsed container; `segments[i]` belongs to `header.layers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: ContainerHeader,
    pub segments: Vec<Vec<u8>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let Some(s) = self.bytes.get(self.pos..self.pos + n) else {
            return corrupt(format!("container truncated at byte {}", self.pos));
        };
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn payload_len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn encoded_len(&self) -> usize {
        self.header.encoded_len() + self.payload_len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.push(h.levels);
        out.push(h.precision);
        out.push(h.cdf_bits);
        for v in [h.width, h.height, h.padded_width, h.padded_height, h.latent_channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.model_hash.0);
        out.extend_from_slice(&h.scale_count.to_le_bytes());
        out.extend_from_slice(&h.scale_min.to_le_bytes());
        out.extend_from_slice(&h.scale_max.to_le_bytes());
        for r in &h.layers {
            for v in [r.channels, r.height, r.width, r.segment_len] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for s in &self.segments {
            out.extend_from_slice(s);
        }
        out
    }

    /// Parses a container, requiring every byte to belong to it.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CONTAINER_MAGIC {
            return corrupt("not an NLC1 container");
        }
        let version = r.u8()?;
        if version != CONTAINER_VERSION {
            return corrupt(format!("unsupported container version {version}"));
        }
        let levels = r.u8()?;
        let precision = r.u8()?;
        let cdf_bits = r.u8()?;
        let width = r.u32()?;
        let height = r.u32()?;
        let padded_width = r.u32()?;
        let padded_height = r.u32()?;
        let latent_channels = r.u32()?;
        let model_hash = ModelHash(r.take(8)?.try_into().unwrap());
        let scale_count = r.u16()?;
        let scale_min = r.f64()?;
        let scale_max = r.f64()?;
        if levels == 0 {
            return corrupt("container declares zero layers");
        }
        if width == 0 || height == 0 || padded_width < width || padded_height < height {
            return corrupt("inconsistent image dimensions");
        }
        let mut layers = Vec::with_capacity(levels as usize);
        for _ in 0..levels {
            layers.push(LayerRecord {
                channels: r.u32()?,
                height: r.u32()?,
                width: r.u32()?,
                segment_len: r.u32()?,
            });
        }
        let mut segments = Vec::with_capacity(levels as usize);
        for l in &layers {
            segments.push(r.take(l.segment_len as usize)?.to_vec());
        }
        if r.pos != bytes.len() {
            return corrupt(format!("{} trailing bytes after container", bytes.len() - r.pos));
        }
        Ok(Self {
            header: ContainerHeader {
                levels,
                precision,
                cdf_bits,
                width,
                height,
                padded_width,
                padded_height,
                latent_channels,
                model_hash,
                scale_count,
                scale_min,
                scale_max,
                layers,
            },
            segments,
        })
    }
}
