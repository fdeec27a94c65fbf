use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};
use crate::scalar::Real;

/// Side length of the integer layout cube boxes are authored in.
pub const LAYOUT_EXTENT: i64 = 512;

/// Ray `o + t d` with unit direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Ray<T> {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>) -> Self {
        Self {
            origin,
            direction: direction.normalized(),
        }
    }

    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }
}

/// Axis-aligned box with `min < max` on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    min: Vec3<T>,
    max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self, GeometryError> {
        let ok = (0..3).all(|a| min[a] < max[a]) && min.is_finite() && max.is_finite();
        if !ok {
            return Err(GeometryError::DegenerateBox {
                min: min.cast::<f64>().to_array(),
                max: max.cast::<f64>().to_array(),
            });
        }
        Ok(Self { min, max })
    }

    pub fn from_center_size(center: Vec3<T>, size: Vec3<T>) -> Result<Self, GeometryError> {
        let half = size * T::lit(0.5);
        Self::new(center - half, center + half)
    }

    /// The `[-1, 1]^3` world cube.
    pub fn world() -> Self {
        Self {
            min: Vec3::splat(-T::one()),
            max: Vec3::splat(T::one()),
        }
    }

    pub fn min(&self) -> Vec3<T> {
        self.min
    }

    pub fn max(&self) -> Vec3<T> {
        self.max
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn size(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn half_extent(&self) -> Vec3<T> {
        self.size() * T::lit(0.5)
    }

    pub fn volume(&self) -> T {
        let s = self.size();
        s.x * s.y * s.z
    }

    /// Closed-box membership.
    pub fn contains(&self, p: Vec3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Volume of the overlap, zero when disjoint or touching.
    pub fn intersection_volume(&self, other: &Self) -> T {
        let lo = self.min.max_elem(other.min);
        let hi = self.max.min_elem(other.max);
        let d = (hi - lo).map(|v| v.max(T::zero()));
        d.x * d.y * d.z
    }

    pub fn cast<U: Real>(&self) -> Aabb<U> {
        Aabb {
            min: self.min.cast(),
            max: self.max.cast(),
        }
    }
}

/// Slab-method ray/box intersection.
///
/// Returns `(t_entry, t_exit)` with `t_entry` clamped to zero for origins
/// inside the box, or `None` when the ray misses or the box lies behind it.
pub fn ray_box_intersect<T: Real>(ray: &Ray<T>, bbox: &Aabb<T>) -> Option<(T, T)> {
    let mut t_entry = T::neg_infinity();
    let mut t_exit = T::infinity();
    for axis in 0..3 {
        let o = ray.origin[axis];
        let inv = T::one() / ray.direction[axis];
        let mut t0 = (bbox.min[axis] - o) * inv;
        let mut t1 = (bbox.max[axis] - o) * inv;
        if t0.is_nan() || t1.is_nan() {
            // 0 * inf: origin lies on a slab plane and the ray runs parallel to it.
            continue;
        }
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_entry = t_entry.max(t0);
        t_exit = t_exit.min(t1);
    }
    if t_exit <= T::zero() || t_entry > t_exit {
        None
    } else {
        Some((t_entry.max(T::zero()), t_exit))
    }
}

const BOX_FIELDS: [&str; 6] = ["x", "y", "z", "depth", "width", "height"];

/// Maps a layout box `[x, y, z, depth, width, height]` in the integer
/// `[0, extent]^3` cube onto world space `[-1, 1]^3`.
pub fn aabb_from_layout<T: Real>(box6: [i64; 6], extent: i64) -> Result<Aabb<T>, GeometryError> {
    for (i, &v) in box6.iter().enumerate() {
        if i < 3 && v < 0 {
            return Err(GeometryError::layout(BOX_FIELDS[i], v, "must be non-negative"));
        }
        if i >= 3 && v <= 0 {
            return Err(GeometryError::layout(BOX_FIELDS[i], v, "size must be positive"));
        }
        if v > extent {
            return Err(GeometryError::layout(BOX_FIELDS[i], v, "exceeds layout extent"));
        }
    }
    for axis in 0..3 {
        if box6[axis] + box6[axis + 3] > extent {
            return Err(GeometryError::layout(
                BOX_FIELDS[axis + 3],
                box6[axis + 3],
                "box extends past layout extent",
            ));
        }
    }
    let scale = T::lit(2.0) / T::lit(extent as f64);
    let to_world = |u: i64| T::lit(u as f64) * scale - T::one();
    let min = Vec3::new(to_world(box6[0]), to_world(box6[1]), to_world(box6[2]));
    let max = Vec3::new(
        to_world(box6[0] + box6[3]),
        to_world(box6[1] + box6[4]),
        to_world(box6[2] + box6[5]),
    );
    Aabb::new(min, max)
}

/// Inverse of [`aabb_from_layout`], rounding to the nearest layout integer.
pub fn layout_from_aabb<T: Real>(bbox: &Aabb<T>, extent: i64) -> [i64; 6] {
    let half = T::lit(extent as f64) * T::lit(0.5);
    let to_layout = |w: T| ((w + T::one()) * half).round().to_i64().unwrap_or(0);
    let lo: Vec<i64> = (0..3).map(|a| to_layout(bbox.min[a])).collect();
    let hi: Vec<i64> = (0..3).map(|a| to_layout(bbox.max[a])).collect();
    [lo[0], lo[1], lo[2], hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}
