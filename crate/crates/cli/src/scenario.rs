//! Small synthetic scenes for demos and the acceptance runs.

use std::path::Path;

use boxfield_core::field::VoxelField;
use boxfield_core::geometry::Vec3;
use boxfield_core::layout::SceneLayout;
use boxfield_core::occupancy::OccupancyGrid;
use boxfield_core::optimize::checkpoint::save_checkpoint;
use boxfield_core::optimize::SceneState;

use crate::CliError;

/// A wide slab (a table top) and a blue ball, both dense, on empty space.
pub fn furnished_room(resolution: usize) -> VoxelField<f64> {
    VoxelField::from_fn(resolution, |p: Vec3<f64>| {
        let table = p.x.abs() <= 0.8 && p.y.abs() <= 0.8 && (-0.6..=-0.3).contains(&p.z);
        let lamp = (p - Vec3::lit(-0.6, 0.6, 0.1)).norm() <= 0.2;
        if table {
            (30.0, Vec3::lit(0.55, 0.35, 0.2))
        } else if lamp {
            (30.0, Vec3::lit(0.2, 0.4, 0.8))
        } else {
            (0.0, Vec3::splat(0.5))
        }
    })
}

/// One box resting on the table of [`furnished_room`]; its floor dips
/// into the table top so the object is in contact with the scene.
pub fn placement_layout() -> SceneLayout {
    SceneLayout::new(
        "a ball on the table",
        vec![("ball".into(), [156, 156, 180, 200, 200, 200])],
    )
}

/// One box around the world center, half the world wide.
pub fn centered_layout() -> SceneLayout {
    SceneLayout::new("a ball", vec![("ball".into(), [128, 128, 128, 256, 256, 256])])
}

/// One box in the `(-1, -1, -1)` corner, clear of the uni-sphere blob.
pub fn corner_layout() -> SceneLayout {
    SceneLayout::new("a ball in the corner", vec![("ball".into(), [0, 0, 0, 128, 128, 128])])
}

/// Saves `field` with a freshly built grid as a checkpoint usable by
/// `place` and by the photometric oracle.
pub fn write_scene_checkpoint(dir: &Path, field: VoxelField<f64>, layout: SceneLayout) -> Result<(), CliError> {
    let state = SceneState::new(layout, field, OccupancyGrid::with_defaults())?;
    save_checkpoint(dir, &state)?;
    Ok(())
}
