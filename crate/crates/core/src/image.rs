//! 8-bit RGB images, binary PPM I/O and conversions to tensors.

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Interleaved 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("empty image {width}x{height}"));
        }
        if data.len() != width * height * 3 {
            return invalid(format!(
                "{} bytes do not form a {width}x{height} RGB image",
                data.len()
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copy of the `w × h` region at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return invalid(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            ));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + w * 3]);
        }
        Self::new(w, h, data)
    }

    /// Writes `tile` into this image at `(x0, y0)`.
    pub fn paste(&mut self, tile: &RgbImage, x0: usize, y0: usize) -> Result<()> {
        if x0 + tile.width > self.width || y0 + tile.height > self.height {
            return invalid("tile does not fit");
        }
        for y in 0..tile.height {
            let dst = ((y0 + y) * self.width + x0) * 3;
            let src = y * tile.width * 3;
            self.data[dst..dst + tile.width * 3].copy_from_slice(&tile.data[src..src + tile.width * 3]);
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y)).unwrap()
    }

    /// Channels-first tensor scaled to `[0, 1]`, reflect-padded to
    /// `padded_w × padded_h`.
    pub fn to_tensor_padded(&self, padded_w: usize, padded_h: usize) -> Result<Tensor> {
        if padded_w < self.width || padded_h < self.height {
            return invalid("padded size smaller than image");
        }
        Tensor::from_fn(3, padded_h, padded_w, |c, y, x| {
            let sy = reflect(y, self.height);
            let sx = reflect(x, self.width);
            self.data[(sy * self.width + sx) * 3 + c] as f32 / 255.0
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        self.to_tensor_padded(self.width, self.height).unwrap()
    }

    /// Inverse of [`to_tensor`](Self::to_tensor): scales by 255, clamps,
    /// rounds and keeps the top-left `width × height` region.
    pub fn from_tensor(t: &Tensor, width: usize, height: usize) -> Result<Self> {
        if t.channels() != 3 || t.width() < width || t.height() < height {
            return invalid(format!("cannot crop {:?} to 3x{height}x{width}", t.shape()));
        }
        Self::from_fn(width, height, |x, y| {
            let px = |c| (t.get(c, y, x) * 255.0).clamp(0.0, 255.0).round() as u8;
            [px(0), px(1), px(2)]
        })
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parses binary PPM (`P6`, maxval 255).
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(ppm_error("header truncated"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| ppm_error("header not ASCII"))?);
        }
        if fields[0] != "P6" {
            return Err(ppm_error("only binary P6 is supported"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| ppm_error("bad header number"));
        let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(ppm_error("only maxval 255 is supported"));
        }
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(ppm_error("missing separator after header"));
        }
        pos += 1;
        let n = w.checked_mul(h).and_then(|v| v.checked_mul(3)).ok_or_else(|| ppm_error("size overflow"))?;
        let Some(data) = bytes.get(pos..pos + n) else {
            return Err(ppm_error("pixel data truncated"));
        };
        Self::new(w, h, data.to_vec())
    }
}

fn ppm_error(msg: &str) -> Error {
    Error::InvalidArgument(format!("PPM: {msg}"))
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}
