//! Guidance oracles: whatever turns a rendered object view into an image
//! cotangent. The synthetic denoiser keeps the noise-residual form of
//! score distillation, with a residual that pulls toward known targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::field::VoxelField;
use crate::geometry::{Aabb, CameraPose, RayBatch, Vec3};
use crate::occupancy::OccupancyGrid;
use crate::render::{render, Clip, RenderConfig, RenderedImage};
use crate::scalar::Real;

pub struct GuidanceRequest<'a, T> {
    pub object_id: usize,
    pub image: &'a RenderedImage<T>,
    pub pose: &'a CameraPose<T>,
    pub rays: &'a RayBatch<T>,
    pub background: Vec3<T>,
}

/// Image-space cotangent plus an optional scalar loss estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Guidance<T> {
    pub d_rgb: Vec<Vec3<T>>,
    pub loss: Option<T>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("no target for object {0}")]
    UnknownObject(usize),
    #[error("target has {got} pixels, image has {expected}")]
    Shape { expected: usize, got: usize },
    #[error("{0}")]
    Failed(String),
}

pub trait GuidanceOracle<T: Real> {
    fn gradient_of(&mut self, request: &GuidanceRequest<'_, T>) -> Result<Guidance<T>, OracleError>;
}

/// Always returns a zero cotangent and zero loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroOracle;

impl<T: Real> GuidanceOracle<T> for ZeroOracle {
    fn gradient_of(&mut self, request: &GuidanceRequest<'_, T>) -> Result<Guidance<T>, OracleError> {
        Ok(Guidance {
            d_rgb: vec![Vec3::zero(); request.image.pixel_count()],
            loss: Some(T::zero()),
        })
    }
}

/// Per-object reference images for arbitrary rays.
pub trait TargetSource<T: Real>: Sync {
    fn object_count(&self) -> usize;

    fn target(&self, object_id: usize, rays: &RayBatch<T>, background: Vec3<T>) -> Result<Vec<Vec3<T>>, OracleError>;
}

impl<T: Real, S: TargetSource<T> + ?Sized> TargetSource<T> for &S {
    fn object_count(&self) -> usize {
        (**self).object_count()
    }

    fn target(&self, object_id: usize, rays: &RayBatch<T>, background: Vec3<T>) -> Result<Vec<Vec3<T>>, OracleError> {
        (**self).target(object_id, rays, background)
    }
}

/// A solid, uniformly colored sphere seen as a hard silhouette.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereTarget<T> {
    pub center: Vec3<T>,
    pub radius: T,
    pub color: Vec3<T>,
}

impl<T: Real> SphereTarget<T> {
    /// Sphere at the box center with radius `fill` times the smallest half
    /// side.
    pub fn inscribed(bbox: &Aabb<T>, fill: T, color: Vec3<T>) -> Self {
        Self {
            center: bbox.center(),
            radius: bbox.half_extent().min_component() * fill,
            color,
        }
    }

    pub fn hit(&self, origin: Vec3<T>, dir: Vec3<T>) -> bool {
        let oc = origin - self.center;
        let b = oc.dot(dir);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        disc >= T::zero() && -b + disc.sqrt() > T::zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereTargets<T>(pub Vec<SphereTarget<T>>);

impl<T: Real> TargetSource<T> for SphereTargets<T> {
    fn object_count(&self) -> usize {
        self.0.len()
    }

    fn target(&self, object_id: usize, rays: &RayBatch<T>, background: Vec3<T>) -> Result<Vec<Vec3<T>>, OracleError> {
        let s = self.0.get(object_id).ok_or(OracleError::UnknownObject(object_id))?;
        Ok(rays
            .rays
            .iter()
            .map(|r| {
                if s.hit(r.origin, r.direction) {
                    s.color
                } else {
                    background
                }
            })
            .collect())
    }
}

/// Targets rendered from a reference field, clipped to each object's box,
/// at bin-center depths.
#[derive(Clone, Debug)]
pub struct FieldTargets<T> {
    pub field: VoxelField<T>,
    pub grid: OccupancyGrid<T>,
    pub boxes: Vec<Aabb<T>>,
    pub render: RenderConfig<T>,
}

impl<T: Real> FieldTargets<T> {
    pub fn new(field: VoxelField<T>, grid: OccupancyGrid<T>, boxes: Vec<Aabb<T>>, render: RenderConfig<T>) -> Self {
        Self {
            field,
            grid,
            boxes,
            render: RenderConfig {
                stratified: false,
                ..render
            },
        }
    }
}

impl<T: Real> TargetSource<T> for FieldTargets<T> {
    fn object_count(&self) -> usize {
        self.boxes.len()
    }

    fn target(&self, object_id: usize, rays: &RayBatch<T>, background: Vec3<T>) -> Result<Vec<Vec3<T>>, OracleError> {
        let bbox = self.boxes.get(object_id).ok_or(OracleError::UnknownObject(object_id))?;
        let cfg = RenderConfig {
            background,
            ..self.render
        };
        Ok(render(&self.field, &self.grid, rays, Clip::Inside(bbox), &cfg, 0).rgb)
    }
}

/// Denoiser stand-in: predicts `eps + kappa * (I - target)` for injected
/// noise `eps` at a random timestep `t`, and returns the residual
/// `w(t) * (eps_pred - eps)` spread over the image as the cotangent.
pub struct SyntheticDenoiserOracle<T, S> {
    pub targets: S,
    pub kappa: T,
    pub timestep_range: (f64, f64),
    pub weight: fn(f64) -> f64,
    rng: ChaCha8Rng,
}

fn unit_weight(_t: f64) -> f64 {
    1.0
}

impl<T: Real, S: TargetSource<T>> SyntheticDenoiserOracle<T, S> {
    pub fn new(targets: S, kappa: T, noise_seed: u64) -> Self {
        assert!(kappa > T::zero(), "kappa must be positive");
        Self {
            targets,
            kappa,
            timestep_range: (0.02, 0.98),
            weight: unit_weight,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        }
    }
}

impl<T: Real, S: TargetSource<T>> GuidanceOracle<T> for SyntheticDenoiserOracle<T, S> {
    fn gradient_of(&mut self, req: &GuidanceRequest<'_, T>) -> Result<Guidance<T>, OracleError> {
        let target = self.targets.target(req.object_id, req.rays, req.background)?;
        let n = req.image.pixel_count();
        if target.len() != n {
            return Err(OracleError::Shape {
                expected: n,
                got: target.len(),
            });
        }
        let (lo, hi) = self.timestep_range;
        let t = lo + (hi - lo) * self.rng.random::<f64>();
        let w = T::lit((self.weight)(t));
        let scale = T::one() / T::count(3 * n.max(1));
        let mut sq = T::zero();
        let d_rgb = req
            .image
            .rgb
            .iter()
            .zip(&target)
            .map(|(img, tgt)| {
                let mut d = Vec3::zero();
                for ch in 0..3 {
                    let diff = img[ch] - tgt[ch];
                    sq += diff * diff;
                    let eps = T::lit(self.rng.sample::<f64, _>(StandardNormal));
                    let eps_pred = eps + self.kappa * diff;
                    d[ch] = w * (eps_pred - eps) * scale;
                }
                d
            })
            .collect();
        let loss = w * self.kappa * T::lit(0.5) * sq * scale;
        Ok(Guidance {
            d_rgb,
            loss: Some(loss),
        })
    }
}
