//! Bounding-box constrained differentiable volume rendering and
//! optimization.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which the command-line tool uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod field;
pub mod geometry;
pub mod layout;
pub mod occupancy;
pub mod optimize;
pub mod render;
pub mod scalar;

pub use scalar::Real;

pub type Vec3f = geometry::Vec3<f64>;
pub type Aabbf = geometry::Aabb<f64>;
pub type Rayf = geometry::Ray<f64>;
pub type CameraPosef = geometry::CameraPose<f64>;
pub type VoxelFieldf = field::VoxelField<f64>;
pub type OccupancyGridf = occupancy::OccupancyGrid<f64>;
pub type RenderConfigf = render::RenderConfig<f64>;
pub type RenderedImagef = render::RenderedImage<f64>;
pub type SceneStatef = optimize::SceneState<f64>;
pub type OptimizerConfigf = optimize::OptimizerConfig<f64>;
