use serde::{Deserialize, Serialize};

use crate::field::{AdamConfig, AdamState, DensityBiasConfig, VoxelField};
use crate::geometry::Aabb;
use crate::layout::SceneLayout;
use crate::occupancy::OccupancyGrid;
use crate::scalar::Real;

use super::OptimizeError;

/// Initial density blob.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// One ellipsoid per layout box.
    #[default]
    ObjectCentric,
    /// A single Gaussian at the world origin.
    UniSphere,
}

/// What the frozen reference is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeMode {
    /// An empty occupancy grid: renders pure background.
    Void,
    /// A deep copy of the current trainable field and grid.
    Snapshot,
}

#[derive(Clone, Debug)]
pub struct FrozenScene<T> {
    pub mode: FreezeMode,
    pub field: VoxelField<T>,
    pub grid: OccupancyGrid<T>,
}

#[derive(Clone, Debug)]
pub struct SceneObject<T> {
    pub description: String,
    pub bbox: Aabb<T>,
}

/// Trainable field and grid, the frozen reference, the layout and the
/// optimizer state.
#[derive(Clone, Debug)]
pub struct SceneState<T> {
    pub field: VoxelField<T>,
    pub grid: OccupancyGrid<T>,
    pub adam: AdamState<T>,
    pub step: u64,
    layout: SceneLayout,
    objects: Vec<SceneObject<T>>,
    frozen: Option<FrozenScene<T>>,
}

impl<T: Real> SceneState<T> {
    /// Wraps an existing field. The grid is rebuilt from the field, as the
    /// step-0 update.
    pub fn new(layout: SceneLayout, field: VoxelField<T>, mut grid: OccupancyGrid<T>) -> Result<Self, OptimizeError> {
        grid.update_occupancy(&field, 0);
        Self::from_parts(layout, field, grid)
    }

    /// Wraps a field and grid as they are, without a grid rebuild.
    pub fn from_parts(
        layout: SceneLayout,
        field: VoxelField<T>,
        grid: OccupancyGrid<T>,
    ) -> Result<Self, OptimizeError> {
        let boxes = layout.world_boxes::<T>()?;
        let objects = layout
            .objects
            .iter()
            .zip(boxes)
            .map(|(o, bbox)| SceneObject {
                description: o.description.clone(),
                bbox,
            })
            .collect();
        Ok(Self {
            adam: AdamState::new(&field, AdamConfig::default()),
            field,
            grid,
            step: 0,
            layout,
            objects,
            frozen: None,
        })
    }

    /// Fresh field of the given resolution with the chosen density bias.
    pub fn initialized(
        layout: SceneLayout,
        resolution: usize,
        init: Init,
        bias: &DensityBiasConfig<T>,
        grid: OccupancyGrid<T>,
    ) -> Result<Self, OptimizeError> {
        let mut field = VoxelField::empty(resolution);
        match init {
            Init::ObjectCentric => field.init_object_centric_bias(&layout.world_boxes::<T>()?, bias)?,
            Init::UniSphere => field.init_uni_sphere_bias(bias),
        }
        Self::new(layout, field, grid)
    }

    pub fn layout(&self) -> &SceneLayout {
        &self.layout
    }

    pub fn objects(&self) -> &[SceneObject<T>] {
        &self.objects
    }

    pub fn boxes(&self) -> Vec<Aabb<T>> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    /// The world cube; cameras orbit its center.
    pub fn scene_box(&self) -> Aabb<T> {
        Aabb::world()
    }

    pub fn frozen(&self) -> Option<&FrozenScene<T>> {
        self.frozen.as_ref()
    }

    /// Fixes the reference scene. Allowed once.
    pub fn freeze(&mut self, mode: FreezeMode) -> Result<(), OptimizeError> {
        if self.frozen.is_some() {
            return Err(OptimizeError::AlreadyFrozen);
        }
        self.frozen = Some(match mode {
            FreezeMode::Void => FrozenScene {
                mode,
                field: VoxelField::empty(2),
                grid: OccupancyGrid::new(1, self.grid.threshold, self.grid.update_interval),
            },
            FreezeMode::Snapshot => FrozenScene {
                mode,
                field: self.field.clone(),
                grid: self.grid.clone(),
            },
        });
        Ok(())
    }

    /// Resets Adam moments to match the current field shape.
    pub fn reset_optimizer(&mut self, config: AdamConfig<T>) {
        self.adam = AdamState::new(&self.field, config);
    }

    pub(crate) fn restore_frozen(&mut self, frozen: Option<FrozenScene<T>>) {
        self.frozen = frozen;
    }
}

pub fn freeze_scene<T: Real>(state: &mut SceneState<T>, mode: FreezeMode) -> Result<(), OptimizeError> {
    state.freeze(mode)
}
