//! Tiled coding for large images.
//!
//! Each tile is an independent `NLC1` container. The archive wraps them:
//!
//! ```text
//! "NLA1" | version u8 | width u32 | height u32 | tile u32 | count u32
//!        | (count + 1) × u64 offsets into the container area | containers
//! ```
//!
//! Tiles are laid out row-major; edge tiles are smaller.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{Codec, Compressed, Container, ContainerSummary};
use crate::error::{corrupt, invalid, Result};
use crate::image::RgbImage;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"NLA1";
pub const ARCHIVE_VERSION: u8 = 1;
const ARCHIVE_FIXED_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Row-major tiles of at most `tile × tile` covering `width × height`.
pub fn tile_rects(width: usize, height: usize, tile: usize) -> Result<Vec<TileRect>> {
    if tile == 0 {
        return invalid("tile size must be positive");
    }
    let mut out = Vec::new();
    for y in (0..height).step_by(tile) {
        for x in (0..width).step_by(tile) {
            out.push(TileRect {
                x,
                y,
                width: tile.min(width - x),
                height: tile.min(height - y),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub width: u32,
    pub height: u32,
    pub tile: u32,
    pub tiles: Vec<Vec<u8>>,
}

impl Archive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.push(ARCHIVE_VERSION);
        for v in [self.width, self.height, self.tile, self.tiles.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut offset = 0u64;
        out.extend_from_slice(&offset.to_le_bytes());
        for t in &self.tiles {
            offset += t.len() as u64;
            out.extend_from_slice(&offset.to_le_bytes());
        }
        for t in &self.tiles {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ARCHIVE_FIXED_LEN || &bytes[..4] != ARCHIVE_MAGIC {
            return corrupt("not an NLA1 archive");
        }
        if bytes[4] != ARCHIVE_VERSION {
            return corrupt(format!("unsupported archive version {}", bytes[4]));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let (width, height, tile, count) = (u32_at(5), u32_at(9), u32_at(13), u32_at(17) as usize);
        if width == 0 || height == 0 || tile == 0 {
            return corrupt("archive declares an empty image or tile");
        }
        let expected = width.div_ceil(tile) as u64 * height.div_ceil(tile) as u64;
        if count as u64 != expected {
            return corrupt(format!("archive holds {count} tiles, geometry implies {expected}"));
        }
        let table_end = ARCHIVE_FIXED_LEN + 8 * (count + 1);
        if bytes.len() < table_end {
            return corrupt("archive offset table truncated");
        }
        let offsets: Vec<u64> = (0..=count)
            .map(|i| {
                let p = ARCHIVE_FIXED_LEN + 8 * i;
                u64::from_le_bytes(bytes[p..p + 8].try_into().unwrap())
            })
            .collect();
        let body = &bytes[table_end..];
        if offsets[0] != 0 || offsets[count] != body.len() as u64 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return corrupt("archive offsets are inconsistent");
        }
        let tiles = offsets
            .windows(2)
            .map(|w| body[w[0] as usize..w[1] as usize].to_vec())
            .collect();
        Ok(Self {
            width,
            height,
            tile,
            tiles,
        })
    }

    /// Per-tile container summaries.
    pub fn summaries(&self) -> Result<Vec<ContainerSummary>> {
        self.tiles
            .iter()
            .map(|t| Ok(ContainerSummary::of(&Container::from_bytes(t)?)))
            .collect()
    }
}

/// A stream is either a single container or a tile archive.
pub enum Stream {
    Single(Container),
    Tiled(Archive),
}

impl Stream {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == ARCHIVE_MAGIC => Ok(Self::Tiled(Archive::from_bytes(bytes)?)),
            Some(m) if m == super::container::CONTAINER_MAGIC => Ok(Self::Single(Container::from_bytes(bytes)?)),
            _ => corrupt("unrecognized stream magic"),
        }
    }

    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            Self::Single(c) => (c.header.width as usize, c.header.height as usize),
            Self::Tiled(a) => (a.width as usize, a.height as usize),
        }
    }

    /// Summaries of every container in the stream.
    pub fn summaries(&self) -> Result<Vec<ContainerSummary>> {
        match self {
            Self::Single(c) => Ok(vec![ContainerSummary::of(c)]),
            Self::Tiled(a) => a.summaries(),
        }
    }
}

fn map_tiles<T: Send, F>(rects: &[TileRect], f: F) -> Result<Vec<T>>
where
    F: Fn(usize, &TileRect) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        rects.par_iter().enumerate().map(|(i, r)| f(i, r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        rects.iter().enumerate().map(|(i, r)| f(i, r)).collect()
    }
}

/// Compresses each tile of `img` independently, in tile order. With
/// `self_check` every tile is decoded again and compared.
pub fn compress_tiles(codec: &Codec, img: &RgbImage, tile: usize, self_check: bool) -> Result<Vec<Compressed>> {
    let rects = tile_rects(img.width(), img.height(), tile)?;
    map_tiles(&rects, |_, r| {
        let part = img.crop(r.x, r.y, r.width, r.height)?;
        if self_check {
            codec.compress_checked(&part)
        } else {
            codec.compress(&part)
        }
    })
}

/// Compresses `img` as an archive of independent tiles.
pub fn compress_tiled(codec: &Codec, img: &RgbImage, tile: usize) -> Result<Archive> {
    Ok(Archive {
        width: img.width() as u32,
        height: img.height() as u32,
        tile: tile as u32,
        tiles: compress_tiles(codec, img, tile, false)?.into_iter().map(|c| c.bytes).collect(),
    })
}

pub fn decompress_tiled(codec: &Codec, archive: &Archive) -> Result<RgbImage> {
    let (w, h) = (archive.width as usize, archive.height as usize);
    let rects = tile_rects(w, h, archive.tile as usize)?;
    let parts = map_tiles(&rects, |i, r| {
        let part = codec.decompress(&archive.tiles[i])?.image;
        if (part.width(), part.height()) != (r.width, r.height) {
            return corrupt(format!("tile {i} has the wrong size"));
        }
        Ok(part)
    })?;
    let mut out = RgbImage::new(w, h, vec![0; w * h * 3])?;
    for (r, part) in rects.iter().zip(&parts) {
        out.paste(part, r.x, r.y)?;
    }
    Ok(out)
}

/// Decodes either stream kind.
pub fn decompress_stream(codec: &Codec, bytes: &[u8]) -> Result<RgbImage> {
    match Stream::parse(bytes)? {
        Stream::Single(c) => Ok(codec.decompress_container(&c)?.image),
        Stream::Tiled(a) => decompress_tiled(codec, &a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetworkSpec, WeightStore};
    use crate::Error;

    #[test]
    fn rects_cover_the_image_once() {
        let rects = tile_rects(70, 33, 32).unwrap();
        assert_eq!(rects.len(), 6);
        assert_eq!(rects[2], TileRect { x: 64, y: 0, width: 6, height: 32 });
        assert_eq!(rects[5], TileRect { x: 64, y: 32, width: 6, height: 1 });
        let area: usize = rects.iter().map(|r| r.width * r.height).sum();
        assert_eq!(area, 70 * 33);
        assert!(tile_rects(4, 4, 0).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let spec = NetworkSpec::with_channels(1, 6, 8).unwrap();
        let codec = Codec::new(WeightStore::random(spec, 4).unwrap()).unwrap();
        let img = RgbImage::from_fn(21, 10, |x, y| [(x * 12) as u8, (y * 25) as u8, 99]).unwrap();
        let archive = compress_tiled(&codec, &img, 8).unwrap();
        assert_eq!(archive.tiles.len(), 6);
        let bytes = archive.to_bytes();
        assert_eq!(Archive::from_bytes(&bytes).unwrap(), archive);
        let out = decompress_stream(&codec, &bytes).unwrap();
        for (i, r) in tile_rects(21, 10, 8).unwrap().iter().enumerate() {
            let single = codec.decompress(&archive.tiles[i]).unwrap().image;
            assert_eq!(out.crop(r.x, r.y, r.width, r.height).unwrap(), single);
        }
        let mut bad = bytes.clone();
        bad.pop();
        assert!(matches!(decompress_stream(&codec, &bad), Err(Error::CorruptStream(_))));
        assert!(matches!(decompress_stream(&codec, b"JUNKJUNK"), Err(Error::CorruptStream(_))));
        // absurd geometry must be rejected from the offset table size alone
        let mut huge = bytes[..21].to_vec();
        huge[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[13..17].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(Archive::from_bytes(&huge), Err(Error::CorruptStream(_))));
    }
}
