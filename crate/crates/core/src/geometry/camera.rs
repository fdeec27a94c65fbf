use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, GeometryError, Ray, Vec3};
use crate::scalar::Real;

/// Pinhole camera. World space is z-up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose<T> {
    pub position: Vec3<T>,
    pub look_at: Vec3<T>,
    pub up: Vec3<T>,
    /// Vertical field of view in radians.
    pub fov_y: T,
}

impl<T: Real> CameraPose<T> {
    pub fn new(position: Vec3<T>, look_at: Vec3<T>, up: Vec3<T>, fov_y: T) -> Result<Self, GeometryError> {
        let pose = Self {
            position,
            look_at,
            up,
            fov_y,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.position == self.look_at {
            return Err(GeometryError::InvalidCamera("position equals look_at".into()));
        }
        if !(self.fov_y > T::zero() && self.fov_y < T::PI()) {
            return Err(GeometryError::InvalidCamera(format!(
                "fov_y {} outside (0, pi)",
                self.fov_y
            )));
        }
        Ok(())
    }

    pub fn forward(&self) -> Vec3<T> {
        (self.look_at - self.position).normalized()
    }

    /// Orthonormal `(right, up, forward)` frame.
    fn basis(&self) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let forward = self.forward();
        let mut right = forward.cross(self.up);
        if right.norm() < T::lit(1e-9) {
            // Looking straight along `up`; any perpendicular works.
            let alt = if forward.x.abs() < T::lit(0.9) {
                Vec3::lit(1.0, 0.0, 0.0)
            } else {
                Vec3::lit(0.0, 1.0, 0.0)
            };
            right = forward.cross(alt);
        }
        let right = right.normalized();
        let up = right.cross(forward);
        (right, up, forward)
    }
}

/// Rays for one image, stored in row-major pixel order.
#[derive(Clone, Debug)]
pub struct RayBatch<T> {
    pub width: usize,
    pub height: usize,
    pub rays: Vec<Ray<T>>,
}

impl<T: Real> RayBatch<T> {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// One ray per pixel center through a pinhole camera.
pub fn generate_camera_rays<T: Real>(pose: &CameraPose<T>, width: usize, height: usize) -> RayBatch<T> {
    assert!(width >= 1 && height >= 1, "image must have at least one pixel");
    let (right, up, forward) = pose.basis();
    let tan_half = (pose.fov_y * T::lit(0.5)).tan();
    let aspect = T::count(width) / T::count(height);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut rays = Vec::with_capacity(width * height);
    for j in 0..height {
        let v = (T::one() - (T::count(j) + half) / T::count(height) * two) * tan_half;
        for i in 0..width {
            let u = ((T::count(i) + half) / T::count(width) * two - T::one()) * tan_half * aspect;
            let dir = forward + right * u + up * v;
            rays.push(Ray::new(pose.position, dir));
        }
    }
    RayBatch { width, height, rays }
}

/// Ranges the base camera sampler draws from, plus the object-centric `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSamplerConfig<T> {
    pub beta: T,
    pub distance_range: (T, T),
    /// Radians above the xy-plane.
    pub elevation_range: (T, T),
    /// Radians around +z.
    pub azimuth_range: (T, T),
    pub fov_y: T,
}

impl<T: Real> Default for CameraSamplerConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::one(),
            distance_range: (T::lit(2.5), T::lit(3.5)),
            elevation_range: (T::lit(-10f64.to_radians()), T::lit(60f64.to_radians())),
            azimuth_range: (T::lit(-180f64.to_radians()), T::lit(180f64.to_radians())),
            fov_y: T::lit(40f64.to_radians()),
        }
    }
}

impl<T: Real> CameraSamplerConfig<T> {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidCamera(m.to_string()));
        if !(self.beta > T::zero()) {
            return bad("beta must be positive");
        }
        if !(self.distance_range.0 > T::zero()) || self.distance_range.0 > self.distance_range.1 {
            return bad("distance_range must be positive and ordered");
        }
        if self.elevation_range.0 > self.elevation_range.1 || self.azimuth_range.0 > self.azimuth_range.1 {
            return bad("angle ranges must be ordered");
        }
        if !(self.fov_y > T::zero() && self.fov_y < T::PI()) {
            return bad("fov_y outside (0, pi)");
        }
        Ok(())
    }
}

fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, range: (T, T)) -> T {
    let u = T::lit(rng.random::<f64>());
    range.0 + (range.1 - range.0) * u
}

/// Position on a sphere around `center` at the given spherical coordinates.
pub fn orbit_position<T: Real>(center: Vec3<T>, distance: T, elevation: T, azimuth: T) -> Vec3<T> {
    let dir = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    center + dir * distance
}

/// Draws a pose looking at `center` from the configured spherical ranges.
pub fn sample_base_pose<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    center: Vec3<T>,
    cfg: &CameraSamplerConfig<T>,
) -> CameraPose<T> {
    let distance = uniform(rng, cfg.distance_range);
    let elevation = uniform(rng, cfg.elevation_range);
    let azimuth = uniform(rng, cfg.azimuth_range);
    CameraPose {
        position: orbit_position(center, distance, elevation, azimuth),
        look_at: center,
        up: Vec3::lit(0.0, 0.0, 1.0),
        fov_y: cfg.fov_y,
    }
}

/// Offsets `(d_center, d_scale)` moving a scene-centered camera onto an object.
///
/// `d_center = c_obj - c_scene` and
/// `d_scale = (c_obj - p) * (max(l_scene) - max(l_obj)) / (beta * max(l_scene))`
/// where `p` is the base camera's look-at point.
pub fn object_centric_offsets<T: Real>(
    scene_box: &Aabb<T>,
    object_box: &Aabb<T>,
    principal_point: Vec3<T>,
    beta: T,
) -> (Vec3<T>, Vec3<T>) {
    let c_obj = object_box.center();
    let d_center = c_obj - scene_box.center();
    let scene_side = scene_box.size().max_component();
    let object_side = object_box.size().max_component();
    let ratio = (scene_side - object_side) / (beta * scene_side);
    let d_scale = (c_obj - principal_point) * ratio;
    (d_center, d_scale)
}

/// Base pose around the scene center, translated by the object-centric
/// offsets and re-aimed at the object center.
pub fn sample_object_centric_pose<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    scene_box: &Aabb<T>,
    object_box: &Aabb<T>,
    cfg: &CameraSamplerConfig<T>,
) -> CameraPose<T> {
    let base = sample_base_pose(rng, scene_box.center(), cfg);
    retarget_pose(&base, scene_box, object_box, cfg.beta)
}

/// Moves a scene-centered pose by the object-centric offsets and aims it at
/// the object center.
pub fn retarget_pose<T: Real>(
    base: &CameraPose<T>,
    scene_box: &Aabb<T>,
    object_box: &Aabb<T>,
    beta: T,
) -> CameraPose<T> {
    let (d_center, d_scale) = object_centric_offsets(scene_box, object_box, base.look_at, beta);
    CameraPose {
        position: base.position + d_center + d_scale,
        look_at: object_box.center(),
        ..*base
    }
}

/// `n` evenly spaced azimuth views at a fixed elevation.
pub fn turntable_poses<T: Real>(center: Vec3<T>, distance: T, elevation: T, fov_y: T, n: usize) -> Vec<CameraPose<T>> {
    (0..n)
        .map(|k| {
            let azimuth = T::lit(2.0) * T::PI() * T::count(k) / T::count(n);
            CameraPose {
                position: orbit_position(center, distance, elevation, azimuth),
                look_at: center,
                up: Vec3::lit(0.0, 0.0, 1.0),
                fov_y,
            }
        })
        .collect()
}
