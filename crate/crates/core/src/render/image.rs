//! Rendered images and their on-disk forms: 8-bit RGB PNG, and a raw dump
//! of little-endian `f32` RGB behind a 16-byte header (`BXR1`, width,
//! height, channel count as `u32`s).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::geometry::Vec3;
use crate::scalar::Real;

const RAW_MAGIC: &[u8; 4] = b"BXR1";

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("malformed raw image: {0}")]
    Raw(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage<T> {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub rgb: Vec<Vec3<T>>,
    pub opacity: Vec<T>,
}

impl<T: Real> RenderedImage<T> {
    pub fn filled(width: usize, height: usize, color: Vec3<T>) -> Self {
        Self {
            width,
            height,
            rgb: vec![color; width * height],
            opacity: vec![T::zero(); width * height],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn mean_opacity(&self) -> T {
        if self.opacity.is_empty() {
            return T::zero();
        }
        self.opacity.iter().copied().sum::<T>() / T::count(self.opacity.len())
    }

    /// Mean absolute RGB difference; `None` on size mismatch.
    pub fn mean_abs_diff(&self, other: &Self) -> Option<T> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        let total: T = self
            .rgb
            .iter()
            .zip(&other.rgb)
            .map(|(a, b)| (*a - *b).map(|v| v.abs()).to_array().into_iter().sum::<T>())
            .sum();
        Some(total / T::count(3 * self.pixel_count().max(1)))
    }

    /// 8-bit quantization, `round(clamp(v, 0, 1) * 255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let q = |v: T| {
            (v.max(T::zero()).min(T::one()) * T::lit(255.0))
                .round()
                .to_u8()
                .unwrap_or(0)
        };
        self.rgb.iter().flat_map(|c| [q(c.x), q(c.y), q(c.z)]).collect()
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), ImageError> {
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.to_rgb8())?;
        writer.finish()?;
        Ok(())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        self.write_png(BufWriter::new(File::create(path)?))
    }

    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        w.write_all(RAW_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&3u32.to_le_bytes())?;
        for c in &self.rgb {
            for v in c.to_array() {
                w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        self.write_raw(BufWriter::new(File::create(path)?))
    }
}

/// Reads a raw dump back as `(width, height, rgb)`.
pub fn read_raw<R: Read>(mut r: R) -> Result<(usize, usize, Vec<[f32; 3]>), ImageError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != RAW_MAGIC {
        return Err(ImageError::Raw("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, ch) = (word(4), word(8), word(12));
    if ch != 3 {
        return Err(ImageError::Raw(format!("expected 3 channels, got {ch}")));
    }
    let mut px = Vec::with_capacity(w * h);
    let mut b = [0u8; 4];
    for _ in 0..w * h {
        let mut c = [0f32; 3];
        for v in &mut c {
            r.read_exact(&mut b)?;
            *v = f32::from_le_bytes(b);
        }
        px.push(c);
    }
    Ok((w, h, px))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<[f32; 3]>), ImageError> {
    read_raw(BufReader::new(File::open(path)?))
}
