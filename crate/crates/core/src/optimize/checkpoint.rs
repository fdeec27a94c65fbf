//! Scene checkpoints: a directory holding the field and grid binaries, the
//! Adam moments in the field format, an optional frozen snapshot, and a
//! `state.json` sidecar.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::checkpoint::{load_field, read_grids, save_field, write_grids, CheckpointError};
use crate::field::{AdamConfig, FieldGradient, VoxelField};
use crate::layout::SceneLayout;
use crate::occupancy::OccupancyGrid;
use crate::scalar::Real;

use super::state::FrozenScene;
use super::{FreezeMode, OptimizeError, SceneState};

pub const FIELD_FILE: &str = "field.bxf";
pub const GRID_FILE: &str = "occupancy.bxo";
pub const ADAM_M_FILE: &str = "adam_m.bxf";
pub const ADAM_V_FILE: &str = "adam_v.bxf";
pub const FROZEN_FIELD_FILE: &str = "frozen_field.bxf";
pub const FROZEN_GRID_FILE: &str = "frozen_occupancy.bxo";
pub const STATE_FILE: &str = "state.json";

const FORMAT: &str = "boxfield-checkpoint/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    step: u64,
    adam_step: u64,
    adam: AdamConfig<f64>,
    frozen: Option<FreezeMode>,
    layout: SceneLayout,
}

fn save_grid<T: Real>(path: &Path, grid: &OccupancyGrid<T>) -> Result<(), OptimizeError> {
    grid.write_to(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn load_grid<T: Real>(path: &Path) -> Result<OccupancyGrid<T>, OptimizeError> {
    Ok(OccupancyGrid::read_from(BufReader::new(File::open(path)?)).map_err(CheckpointError::from)?)
}

fn save_moments<T: Real>(path: &Path, resolution: usize, g: &FieldGradient<T>) -> Result<(), OptimizeError> {
    write_grids(
        BufWriter::new(File::create(path)?),
        resolution,
        &g.d_density,
        &g.d_color,
    )?;
    Ok(())
}

fn load_moments<T: Real>(path: &Path, resolution: usize) -> Result<FieldGradient<T>, OptimizeError> {
    let (res, d_density, d_color) = read_grids(BufReader::new(File::open(path)?))?;
    if res != resolution {
        return Err(OptimizeError::Config(format!(
            "{} has resolution {res}, field has {resolution}",
            path.display()
        )));
    }
    Ok(FieldGradient { d_density, d_color })
}

/// Writes `state` into `dir`, creating it if needed.
pub fn save_checkpoint<T: Real>(dir: impl AsRef<Path>, state: &SceneState<T>) -> Result<(), OptimizeError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let res = state.field.resolution();
    save_field(dir.join(FIELD_FILE), &state.field)?;
    save_grid(&dir.join(GRID_FILE), &state.grid)?;
    save_moments(&dir.join(ADAM_M_FILE), res, &state.adam.m)?;
    save_moments(&dir.join(ADAM_V_FILE), res, &state.adam.v)?;
    if let Some(f) = state.frozen().filter(|f| f.mode == FreezeMode::Snapshot) {
        save_field(dir.join(FROZEN_FIELD_FILE), &f.field)?;
        save_grid(&dir.join(FROZEN_GRID_FILE), &f.grid)?;
    }
    let c = state.adam.config;
    let sidecar = Sidecar {
        format: FORMAT.into(),
        step: state.step,
        adam_step: state.adam.step,
        adam: AdamConfig {
            beta1: c.beta1.to_f64_lossy(),
            beta2: c.beta2.to_f64_lossy(),
            eps: c.eps.to_f64_lossy(),
        },
        frozen: state.frozen().map(|f| f.mode),
        layout: state.layout().clone(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    fs::write(dir.join(STATE_FILE), json)?;
    Ok(())
}

/// Trainable field and grid of a checkpoint, as stored.
pub fn load_scene<T: Real>(dir: impl AsRef<Path>) -> Result<(VoxelField<T>, OccupancyGrid<T>), OptimizeError> {
    let dir = dir.as_ref();
    Ok((load_field(dir.join(FIELD_FILE))?, load_grid(&dir.join(GRID_FILE))?))
}

/// Full state, ready to continue training.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<SceneState<T>, OptimizeError> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(STATE_FILE))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| OptimizeError::Config(format!("{STATE_FILE}: {e}")))?;
    if sidecar.format != FORMAT {
        return Err(OptimizeError::Config(format!(
            "unsupported checkpoint format {:?}",
            sidecar.format
        )));
    }
    let (field, grid) = load_scene::<T>(dir)?;
    let res = field.resolution();
    let mut state = SceneState::from_parts(sidecar.layout, field, grid)?;
    state.step = sidecar.step;
    let to_t = |v: f64| T::from_f64(v).ok_or(CheckpointError::Precision(v));
    state.reset_optimizer(AdamConfig {
        beta1: to_t(sidecar.adam.beta1)?,
        beta2: to_t(sidecar.adam.beta2)?,
        eps: to_t(sidecar.adam.eps)?,
    });
    state.adam.step = sidecar.adam_step;
    state.adam.m = load_moments(&dir.join(ADAM_M_FILE), res)?;
    state.adam.v = load_moments(&dir.join(ADAM_V_FILE), res)?;
    match sidecar.frozen {
        None => {}
        Some(FreezeMode::Void) => state.freeze(FreezeMode::Void)?,
        Some(FreezeMode::Snapshot) => state.restore_frozen(Some(FrozenScene {
            mode: FreezeMode::Snapshot,
            field: load_field(dir.join(FROZEN_FIELD_FILE))?,
            grid: load_grid(&dir.join(FROZEN_GRID_FILE))?,
        })),
    }
    Ok(state)
}
