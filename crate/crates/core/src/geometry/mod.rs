//! Vectors, rays, axis-aligned boxes and camera models.

mod aabb;
mod camera;
mod vec3;

pub use aabb::{aabb_from_layout, layout_from_aabb, ray_box_intersect, Aabb, Ray, LAYOUT_EXTENT};
pub use camera::{
    generate_camera_rays, object_centric_offsets, orbit_position, retarget_pose, sample_base_pose,
    sample_object_centric_pose, turntable_poses, CameraPose, CameraSamplerConfig, RayBatch,
};
pub use vec3::Vec3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box: min {min:?} must be strictly below max {max:?}")]
    DegenerateBox { min: [f64; 3], max: [f64; 3] },
    #[error("layout box field `{field}` = {value}: {reason}")]
    LayoutField {
        field: &'static str,
        value: i64,
        reason: &'static str,
    },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

impl GeometryError {
    fn layout(field: &'static str, value: i64, reason: &'static str) -> Self {
        Self::LayoutField { field, value, reason }
    }
}
