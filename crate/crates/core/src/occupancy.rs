//! Binary occupancy grid gating field queries.
//!
//! A cell is occupied iff the field's density at the cell center exceeded
//! the threshold at the last update. Lookups in cleared cells return
//! `(0, black)` without touching the field.

use std::io::{self, Read, Write};

use crate::field::{FieldSample, RadianceField};
use crate::geometry::{Aabb, Vec3};
use crate::scalar::Real;

pub const DEFAULT_OCCUPANCY_RESOLUTION: usize = 32;
/// Density threshold, in the same units as the field's post-activation density.
pub const DEFAULT_OCCUPANCY_THRESHOLD: f64 = 2.0;
pub const DEFAULT_UPDATE_INTERVAL: u64 = 16;

const OCC_MAGIC: &[u8; 4] = b"BXO1";

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid<T> {
    resolution: usize,
    bits: Vec<bool>,
    pub threshold: T,
    pub update_interval: u64,
    steps_since_update: u64,
}

impl<T: Real> OccupancyGrid<T> {
    /// All cells cleared.
    pub fn new(resolution: usize, threshold: T, update_interval: u64) -> Self {
        assert!(resolution >= 1, "occupancy resolution must be positive");
        assert!(threshold > T::zero(), "occupancy threshold must be positive");
        assert!(update_interval >= 1, "update interval must be positive");
        Self {
            resolution,
            bits: vec![false; resolution * resolution * resolution],
            threshold,
            update_interval,
            steps_since_update: 0,
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(
            DEFAULT_OCCUPANCY_RESOLUTION,
            T::lit(DEFAULT_OCCUPANCY_THRESHOLD),
            DEFAULT_UPDATE_INTERVAL,
        )
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn steps_since_update(&self) -> u64 {
        self.steps_since_update
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn fill(&mut self, value: bool) {
        self.bits.iter_mut().for_each(|b| *b = value);
    }

    pub fn set(&mut self, cell: usize, value: bool) {
        self.bits[cell] = value;
    }

    pub fn cell_size(&self) -> T {
        T::lit(2.0) / T::count(self.resolution)
    }

    fn axis_cell(&self, v: T) -> usize {
        let c = ((v + T::one()) / self.cell_size()).floor().to_usize().unwrap_or(0);
        c.min(self.resolution - 1)
    }

    /// Cell containing `x`, or `None` outside `[-1, 1]^3`.
    pub fn cell_of(&self, x: Vec3<T>) -> Option<usize> {
        let one = T::one();
        if !(0..3).all(|a| x[a] >= -one && x[a] <= one) {
            return None;
        }
        let r = self.resolution;
        Some(self.axis_cell(x.x) + r * (self.axis_cell(x.y) + r * self.axis_cell(x.z)))
    }

    pub fn cell_center(&self, cell: usize) -> Vec3<T> {
        let r = self.resolution;
        let h = self.cell_size();
        let half = T::lit(0.5);
        let c = |i: usize| (T::count(i) + half) * h - T::one();
        Vec3::new(c(cell % r), c((cell / r) % r), c(cell / (r * r)))
    }

    pub fn cell_box(&self, cell: usize) -> Aabb<T> {
        let half = Vec3::splat(self.cell_size() * T::lit(0.5));
        let c = self.cell_center(cell);
        Aabb::new(c - half, c + half).expect("cells have positive size")
    }

    pub fn is_occupied(&self, x: Vec3<T>) -> bool {
        self.cell_of(x).is_some_and(|c| self.bits[c])
    }

    /// Recomputes every bit from the field, unconditionally.
    pub fn rebuild<F: RadianceField<T> + ?Sized>(&mut self, field: &F) {
        for cell in 0..self.bits.len() {
            let s = field.query(self.cell_center(cell), Vec3::zero());
            self.bits[cell] = s.sigma > self.threshold;
        }
        self.steps_since_update = 0;
    }

    /// Rebuilds when `step` is a multiple of the update interval (including
    /// step 0). Returns whether the grid was rebuilt.
    pub fn update_occupancy<F: RadianceField<T> + ?Sized>(&mut self, field: &F, step: u64) -> bool {
        if step.is_multiple_of(self.update_interval) {
            self.rebuild(field);
            true
        } else {
            self.steps_since_update += 1;
            false
        }
    }

    /// Number of occupied cells whose interior overlaps `bbox`.
    pub fn occupied_cells_in_box(&self, bbox: &Aabb<T>) -> usize {
        (0..self.bits.len())
            .filter(|&c| self.bits[c] && self.cell_box(c).intersection_volume(bbox) > T::zero())
            .count()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(OCC_MAGIC)?;
        w.write_all(&(self.resolution as u32).to_le_bytes())?;
        w.write_all(&self.threshold.to_f64_lossy().to_le_bytes())?;
        w.write_all(&self.update_interval.to_le_bytes())?;
        w.write_all(&self.steps_since_update.to_le_bytes())?;
        let mut packed = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&packed)?;
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != OCC_MAGIC {
            return Err(bad("bad occupancy magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let resolution = u32::from_le_bytes(b4) as usize;
        if resolution == 0 || resolution > 1024 {
            return Err(bad("bad occupancy resolution"));
        }
        r.read_exact(&mut b8)?;
        let threshold = T::from_f64(f64::from_le_bytes(b8)).ok_or_else(|| bad("bad threshold"))?;
        if !(threshold > T::zero()) {
            return Err(bad("threshold must be positive"));
        }
        r.read_exact(&mut b8)?;
        let update_interval = u64::from_le_bytes(b8);
        if update_interval == 0 {
            return Err(bad("update interval must be positive"));
        }
        r.read_exact(&mut b8)?;
        let steps_since_update = u64::from_le_bytes(b8);
        let n = resolution * resolution * resolution;
        let mut packed = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut packed)?;
        let bits = (0..n).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect();
        Ok(Self {
            resolution,
            bits,
            threshold,
            update_interval,
            steps_since_update,
        })
    }
}

/// `field(x, d)` when `x`'s cell is occupied, `(0, black)` otherwise.
pub fn gated_query<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    x: Vec3<T>,
    d: Vec3<T>,
) -> FieldSample<T> {
    if grid.is_occupied(x) {
        field.query(x, d)
    } else {
        FieldSample::empty()
    }
}
