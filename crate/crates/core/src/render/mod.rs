//! Volume rendering: depth sampling, compositing and the full, clipped and
//! inverse-clipped render modes, with exact adjoints for training.
//!
//! Depth samples and their `delta`s are laid out before occupancy skipping,
//! so a skipped sample behaves exactly like a `(0, black)` sample.

mod composite;
pub mod image;

pub use composite::{composite, composite_backward, compositing_weights, Composited, Sample, TransmittanceMode};
pub use image::{ImageError, RenderedImage};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{FieldGradient, GradContribution, RadianceField, VoxelField};
use crate::geometry::{ray_box_intersect, Aabb, Ray, RayBatch, Vec3};
use crate::occupancy::OccupancyGrid;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig<T> {
    pub samples_per_ray: usize,
    pub near: T,
    pub far: T,
    pub background: Vec3<T>,
    pub stratified: bool,
    /// Narrow `[near, far]` per ray to its chord through the `[-1, 1]^3` grid.
    pub clip_to_grid: bool,
    pub transmittance: TransmittanceMode,
}

impl<T: Real> Default for RenderConfig<T> {
    fn default() -> Self {
        Self {
            samples_per_ray: 128,
            near: T::lit(0.1),
            far: T::lit(8.0),
            background: Vec3::splat(T::one()),
            stratified: true,
            clip_to_grid: true,
            transmittance: TransmittanceMode::Exclusive,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("near ({near}) must be below far ({far})")]
    DepthRange { near: f64, far: f64 },
    #[error("samples_per_ray must be at least 1")]
    NoSamples,
    #[error("cotangent has {got} pixels, rays have {expected}")]
    CotangentShape { expected: usize, got: usize },
}

impl<T: Real> RenderConfig<T> {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.samples_per_ray == 0 {
            return Err(RenderError::NoSamples);
        }
        if !(self.near < self.far) {
            return Err(RenderError::DepthRange {
                near: self.near.to_f64_lossy(),
                far: self.far.to_f64_lossy(),
            });
        }
        Ok(())
    }

    fn depth_bounds(&self, ray: &Ray<T>) -> Option<(T, T)> {
        if !self.clip_to_grid {
            return Some((self.near, self.far));
        }
        let (a, b) = ray_box_intersect(ray, &Aabb::world())?;
        let lo = self.near.max(a);
        let hi = self.far.min(b);
        (lo < hi).then_some((lo, hi))
    }
}

/// A candidate depth and the interval it stands for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthSample<T> {
    pub t: T,
    pub delta: T,
}

/// `m` bin depths over the ray's `[near, far]`: bin centers, or one uniform
/// draw per bin when stratified. `delta_i = t_{i+1} - t_i`, last one
/// `far - t_m`. Unoccupied points are dropped.
pub fn sample_depths<T: Real, R: Rng + ?Sized>(
    ray: &Ray<T>,
    cfg: &RenderConfig<T>,
    grid: &OccupancyGrid<T>,
    rng: &mut R,
) -> Vec<DepthSample<T>> {
    candidate_depths(ray, cfg, rng)
        .into_iter()
        .filter(|s| grid.is_occupied(ray.at(s.t)))
        .collect()
}

fn candidate_depths<T: Real, R: Rng + ?Sized>(ray: &Ray<T>, cfg: &RenderConfig<T>, rng: &mut R) -> Vec<DepthSample<T>> {
    let Some((near, far)) = cfg.depth_bounds(ray) else {
        return Vec::new();
    };
    let m = cfg.samples_per_ray;
    let bin = (far - near) / T::count(m);
    let half = T::lit(0.5);
    let depths: Vec<T> = (0..m)
        .map(|k| {
            let u = if cfg.stratified {
                T::lit(rng.random::<f64>())
            } else {
                half
            };
            near + (T::count(k) + u) * bin
        })
        .collect();
    (0..m)
        .map(|k| {
            let next = if k + 1 < m { depths[k + 1] } else { far };
            DepthSample {
                t: depths[k],
                delta: next - depths[k],
            }
        })
        .collect()
}

/// Which parts of each ray may be queried.
#[derive(Clone, Copy, Debug)]
pub enum Clip<'a, T> {
    /// Every sample.
    Full,
    /// Samples strictly between the box's entry and exit depths.
    Inside(&'a Aabb<T>),
    /// Samples strictly inside at least one box's depth interval.
    InsideAny(&'a [Aabb<T>]),
    /// Samples outside every box's depth interval.
    Outside(&'a [Aabb<T>]),
}

struct RayMask<T> {
    intervals: Vec<Option<(T, T)>>,
    mode: MaskMode,
}

#[derive(Clone, Copy)]
enum MaskMode {
    All,
    Any,
    None,
}

impl<T: Real> RayMask<T> {
    fn new(clip: &Clip<'_, T>, ray: &Ray<T>) -> Self {
        let collect = |boxes: &[Aabb<T>]| boxes.iter().map(|b| ray_box_intersect(ray, b)).collect();
        match clip {
            Clip::Full => Self {
                intervals: Vec::new(),
                mode: MaskMode::All,
            },
            Clip::Inside(b) => Self {
                intervals: vec![ray_box_intersect(ray, b)],
                mode: MaskMode::Any,
            },
            Clip::InsideAny(boxes) => Self {
                intervals: collect(boxes),
                mode: MaskMode::Any,
            },
            Clip::Outside(boxes) => Self {
                intervals: collect(boxes),
                mode: MaskMode::None,
            },
        }
    }

    fn inside(iv: &Option<(T, T)>, t: T) -> bool {
        matches!(iv, Some((a, b)) if *a < t && t < *b)
    }

    fn keeps(&self, t: T) -> bool {
        match self.mode {
            MaskMode::All => true,
            MaskMode::Any => self.intervals.iter().any(|iv| Self::inside(iv, t)),
            MaskMode::None => !self.intervals.iter().any(|iv| Self::inside(iv, t)),
        }
    }
}

fn ray_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Shaded samples that survive occupancy gating and clipping.
fn shade_ray<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    ray: &Ray<T>,
    cfg: &RenderConfig<T>,
    clip: &Clip<'_, T>,
    seed: u64,
    index: usize,
) -> Vec<Sample<T>> {
    let mask = RayMask::new(clip, ray);
    if matches!(mask.mode, MaskMode::Any) && mask.intervals.iter().all(Option::is_none) {
        return Vec::new();
    }
    let mut rng = ray_rng(seed, index);
    sample_depths(ray, cfg, grid, &mut rng)
        .into_iter()
        .filter(|d| mask.keeps(d.t))
        .map(|d| {
            let s = field.query(ray.at(d.t), ray.direction);
            Sample {
                t: d.t,
                delta: d.delta,
                sigma: s.sigma,
                color: s.color,
            }
        })
        .collect()
}

/// Renders every ray under `clip`. `seed` drives stratified jitter; each ray
/// draws from its own stream so results do not depend on thread count.
pub fn render<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    clip: Clip<'_, T>,
    cfg: &RenderConfig<T>,
    seed: u64,
) -> RenderedImage<T> {
    let pixels: Vec<Composited<T>> = rays
        .rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| {
            let samples = shade_ray(field, grid, ray, cfg, &clip, seed, i);
            composite(&samples, cfg.background, cfg.transmittance)
        })
        .collect();
    RenderedImage {
        width: rays.width,
        height: rays.height,
        rgb: pixels.iter().map(|p| p.color).collect(),
        opacity: pixels.iter().map(|p| p.opacity).collect(),
    }
}

pub fn render_full<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    cfg: &RenderConfig<T>,
    seed: u64,
) -> RenderedImage<T> {
    render(field, grid, rays, Clip::Full, cfg, seed)
}

/// Only samples strictly inside `bbox`'s `(t_entry, t_exit)` are queried.
pub fn render_clipped<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    bbox: &Aabb<T>,
    cfg: &RenderConfig<T>,
    seed: u64,
) -> RenderedImage<T> {
    render(field, grid, rays, Clip::Inside(bbox), cfg, seed)
}

/// Only samples outside every box are queried.
pub fn render_inverse_clipped<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    boxes: &[Aabb<T>],
    cfg: &RenderConfig<T>,
    seed: u64,
) -> RenderedImage<T> {
    render(field, grid, rays, Clip::Outside(boxes), cfg, seed)
}

/// Preview of all objects together: samples inside any box.
pub fn render_clipped_union<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    boxes: &[Aabb<T>],
    cfg: &RenderConfig<T>,
    seed: u64,
) -> RenderedImage<T> {
    render(field, grid, rays, Clip::InsideAny(boxes), cfg, seed)
}

/// Adjoint of [`render`]: pulls an RGB cotangent per pixel back onto the
/// field's raw grids and adds it to `grad`.
///
/// Per-ray contributions are reduced in ray order.
pub fn render_backward<T: Real>(
    field: &VoxelField<T>,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    clip: Clip<'_, T>,
    cfg: &RenderConfig<T>,
    seed: u64,
    d_rgb: &[Vec3<T>],
    grad: &mut FieldGradient<T>,
) -> Result<(), RenderError> {
    if d_rgb.len() != rays.len() {
        return Err(RenderError::CotangentShape {
            expected: rays.len(),
            got: d_rgb.len(),
        });
    }
    let per_ray: Vec<Vec<GradContribution<T>>> = rays
        .rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| {
            let g = d_rgb[i];
            let mut out = Vec::new();
            if g == Vec3::zero() {
                return out;
            }
            let samples = shade_ray(field, grid, ray, cfg, &clip, seed, i);
            let adj = composite_backward(&samples, cfg.background, cfg.transmittance, g);
            for (s, (d_sigma, d_color)) in samples.iter().zip(adj) {
                field.gradient_contributions(ray.at(s.t), d_sigma, d_color, &mut out);
            }
            out
        })
        .collect();
    for contributions in &per_ray {
        grad.add_contributions(contributions);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn render_clipped_backward<T: Real>(
    field: &VoxelField<T>,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    bbox: &Aabb<T>,
    cfg: &RenderConfig<T>,
    seed: u64,
    d_rgb: &[Vec3<T>],
    grad: &mut FieldGradient<T>,
) -> Result<(), RenderError> {
    render_backward(field, grid, rays, Clip::Inside(bbox), cfg, seed, d_rgb, grad)
}

#[allow(clippy::too_many_arguments)]
pub fn render_inverse_clipped_backward<T: Real>(
    field: &VoxelField<T>,
    grid: &OccupancyGrid<T>,
    rays: &RayBatch<T>,
    boxes: &[Aabb<T>],
    cfg: &RenderConfig<T>,
    seed: u64,
    d_rgb: &[Vec3<T>],
    grad: &mut FieldGradient<T>,
) -> Result<(), RenderError> {
    render_backward(field, grid, rays, Clip::Outside(boxes), cfg, seed, d_rgb, grad)
}
