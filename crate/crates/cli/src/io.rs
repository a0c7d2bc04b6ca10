//! File access: PPM always, PNG by extension, weight files.

use std::fs;
use std::path::Path;

use nlc_core::image::RgbImage;
use nlc_core::nn::WeightStore;

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn read_image(path: &Path) -> CliResult<RgbImage> {
    let bytes = read_bytes(path)?;
    if !is_png(path) {
        return RgbImage::from_ppm(&bytes).map_err(|e| CliError::Image {
            path: path.to_owned(),
            message: e.to_string(),
        });
    }
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| CliError::Image {
            path: path.to_owned(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = decoded.dimensions();
    Ok(RgbImage::new(w as usize, h as usize, decoded.into_raw())?)
}

pub fn write_image(path: &Path, img: &RgbImage) -> CliResult<()> {
    if !is_png(path) {
        return write_bytes(path, &img.to_ppm());
    }
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| CliError::Image {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    write_bytes(path, &out.into_inner())
}

pub fn read_model(path: &Path) -> CliResult<WeightStore> {
    Ok(WeightStore::from_bytes(&read_bytes(path)?)?)
}
