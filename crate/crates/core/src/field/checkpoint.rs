//! Binary field checkpoints.
//!
//! Layout (little-endian): magic `BXF1`, `u32` resolution, `u32` grid count
//! (always 4: density, red, green, blue), then each grid as `res^3` `f64`
//! values in vertex order (x fastest). Values are stored at `f64` so both
//! `f32` and `f64` fields round-trip bit-exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FieldError, VoxelField};
use crate::geometry::Vec3;
use crate::scalar::Real;

pub const FIELD_MAGIC: &[u8; 4] = b"BXF1";
const GRID_COUNT: u32 = 4;
const MAX_RESOLUTION: u32 = 1024;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported grid count {0}")]
    GridCount(u32),
    #[error("unsupported resolution {0}")]
    Resolution(u32),
    #[error("value {0} not representable in the target scalar type")]
    Precision(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Writes raw density and color grids under the field header.
pub fn write_grids<T: Real, W: Write>(mut w: W, resolution: usize, density: &[T], color: &[Vec3<T>]) -> io::Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(resolution as u32).to_le_bytes())?;
    w.write_all(&GRID_COUNT.to_le_bytes())?;
    for v in density {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    for ch in 0..3 {
        for c in color {
            w.write_all(&c[ch].to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()
}

type Grids<T> = (usize, Vec<T>, Vec<Vec3<T>>);

pub fn read_grids<T: Real, R: Read>(mut r: R) -> Result<Grids<T>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(CheckpointError::Magic(magic));
    }
    let resolution = read_u32(&mut r)?;
    if !(2..=MAX_RESOLUTION).contains(&resolution) {
        return Err(CheckpointError::Resolution(resolution));
    }
    let count = read_u32(&mut r)?;
    if count != GRID_COUNT {
        return Err(CheckpointError::GridCount(count));
    }
    let res = resolution as usize;
    let n = res * res * res;
    let density = read_values::<T, _>(&mut r, n)?;
    let mut color = vec![Vec3::zero(); n];
    for ch in 0..3 {
        for (c, v) in color.iter_mut().zip(read_values::<T, _>(&mut r, n)?) {
            c[ch] = v;
        }
    }
    Ok((res, density, color))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_values<T: Real, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>, CheckpointError> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        let v = f64::from_le_bytes(b);
        let t = T::from_f64(v).ok_or(CheckpointError::Precision(v))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_field<T: Real, W: Write>(w: W, field: &VoxelField<T>) -> io::Result<()> {
    write_grids(w, field.resolution(), field.raw_density(), field.raw_color())
}

pub fn read_field<T: Real, R: Read>(r: R) -> Result<VoxelField<T>, CheckpointError> {
    let (res, density, color) = read_grids(r)?;
    Ok(VoxelField::from_raw(res, density, color)?)
}

pub fn save_field<T: Real>(path: impl AsRef<Path>, field: &VoxelField<T>) -> io::Result<()> {
    write_field(BufWriter::new(File::create(path)?), field)
}

pub fn load_field<T: Real>(path: impl AsRef<Path>) -> Result<VoxelField<T>, CheckpointError> {
    read_field(BufReader::new(File::open(path)?))
}
