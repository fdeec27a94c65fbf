//! Files written under the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use boxfield_core::geometry::{generate_camera_rays, retarget_pose, turntable_poses, CameraPose};
use boxfield_core::optimize::checkpoint::save_checkpoint;
use boxfield_core::optimize::{MetricRecord, OptimizeError, RunObserver, SceneState};
use boxfield_core::render::{render, Clip, RenderConfig, RenderedImage};
use serde::Serialize;

use crate::CliError;

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TURNTABLE_DIR: &str = "turntable";
pub const TURNTABLE_VIEWS: usize = 8;
pub const TURNTABLE_ELEVATION_DEG: f64 = 15.0;
pub const TURNTABLE_DISTANCE: f64 = 3.0;
pub const TURNTABLE_SIZE: usize = 64;

pub fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("step_{step:06}"))
}

/// Streams metrics as one JSON object per line and writes checkpoints.
pub struct RunWriter {
    out: PathBuf,
    metrics: BufWriter<File>,
    echo: bool,
}

impl RunWriter {
    pub fn create(out: &Path, echo: bool) -> Result<Self, CliError> {
        fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            metrics: BufWriter::new(File::create(out.join(METRICS_FILE))?),
            echo,
        })
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.metrics.flush()?;
        Ok(())
    }
}

impl RunObserver<f64> for RunWriter {
    fn on_metrics(&mut self, record: &MetricRecord) -> Result<(), OptimizeError> {
        let line = serde_json::to_string(record).expect("metric record serializes");
        writeln!(self.metrics, "{line}")?;
        if self.echo {
            eprintln!(
                "step {:>6}  total {:>12}  grad_norm {:>12}  outside_opacity {:.5}",
                record.step,
                record.total.map_or("-".into(), |v| format!("{v:.6}")),
                record.grad_norm.map_or("-".into(), |v| format!("{v:.6}")),
                record.outside_box_opacity
            );
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &SceneState<f64>) -> Result<(), OptimizeError> {
        save_checkpoint(checkpoint_path(&self.out, state.step), state)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn save_image(image: &RenderedImage<f64>, path: &Path, raw: bool) -> Result<(), CliError> {
    image
        .save_png(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if raw {
        let raw_path = path.with_extension("raw");
        image
            .save_raw(&raw_path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", raw_path.display())))?;
    }
    Ok(())
}

pub fn turntable(state: &SceneState<f64>, fov_y: f64) -> Vec<CameraPose<f64>> {
    turntable_poses(
        state.scene_box().center(),
        TURNTABLE_DISTANCE,
        TURNTABLE_ELEVATION_DEG.to_radians(),
        fov_y,
        TURNTABLE_VIEWS,
    )
}

/// Merged scene views plus one clipped view set per object, aimed at the
/// object the same way training cameras are.
pub fn write_turntables(
    state: &SceneState<f64>,
    render_cfg: &RenderConfig<f64>,
    fov_y: f64,
    beta: f64,
    out: &Path,
) -> Result<(), CliError> {
    let dir = out.join(TURNTABLE_DIR);
    fs::create_dir_all(&dir)?;
    let cfg = RenderConfig {
        stratified: false,
        ..*render_cfg
    };
    let scene_box = state.scene_box();
    for (k, pose) in turntable(state, fov_y).iter().enumerate() {
        let rays = generate_camera_rays(pose, TURNTABLE_SIZE, TURNTABLE_SIZE);
        let image = render(&state.field, &state.grid, &rays, Clip::Full, &cfg, 0);
        save_image(&image, &dir.join(format!("scene_{k:02}.png")), false)?;
        for (i, obj) in state.objects().iter().enumerate() {
            let pose = retarget_pose(pose, &scene_box, &obj.bbox, beta);
            let rays = generate_camera_rays(&pose, TURNTABLE_SIZE, TURNTABLE_SIZE);
            let image = render(&state.field, &state.grid, &rays, Clip::Inside(&obj.bbox), &cfg, 0);
            save_image(&image, &dir.join(format!("object{i}_{k:02}.png")), false)?;
        }
    }
    Ok(())
}
