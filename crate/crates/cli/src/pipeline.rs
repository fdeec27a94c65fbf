//! Steps shared by the training commands: layout, targets, initial state
//! and the run itself.

use std::fs;
use std::path::Path;

use boxfield_core::field::VoxelField;
use boxfield_core::geometry::{Aabb, RayBatch, Vec3};
use boxfield_core::layout::{parse_layout, request_layout, validate_layout, SceneLayout};
use boxfield_core::occupancy::OccupancyGrid;
use boxfield_core::optimize::checkpoint::load_scene;
use boxfield_core::optimize::{
    run_generation, FieldTargets, FreezeMode, MetricRecord, OracleError, RunObserver, SceneState, SphereTarget,
    SphereTargets, SyntheticDenoiserOracle, TargetSource,
};
use boxfield_core::render::RenderConfig;

use crate::config::{LayoutSource, OracleSpec, RunConfig};
use crate::CliError;

/// Reads a layout file, reporting the offending field on failure.
pub fn read_layout_file(path: &Path) -> Result<SceneLayout, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let layout = parse_layout(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    layout
        .check()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(layout)
}

/// Prints every validation warning to stderr and returns how many there were.
pub fn report_warnings(layout: &SceneLayout) -> usize {
    let warnings = validate_layout(layout);
    for w in &warnings {
        eprintln!("warning: {}", w.describe(layout));
    }
    warnings.len()
}

pub fn load_layout(cfg: &RunConfig) -> Result<SceneLayout, CliError> {
    let layout = match &cfg.layout {
        Some(LayoutSource::Path(p)) => read_layout_file(p)?,
        Some(LayoutSource::Caption(c)) => {
            let layout = request_layout(&cfg.llm, c)?;
            layout.check().map_err(|e| CliError::Input(e.to_string()))?;
            layout
        }
        None => {
            return Err(CliError::Input(
                "no layout given (`layout.path` or `layout.caption`)".into(),
            ))
        }
    };
    report_warnings(&layout);
    Ok(layout)
}

/// Per-object targets for the synthetic oracle and the target-loss metric.
pub enum Targets {
    Spheres(SphereTargets<f64>),
    Field(Box<FieldTargets<f64>>),
}

impl TargetSource<f64> for Targets {
    fn object_count(&self) -> usize {
        match self {
            Targets::Spheres(t) => t.object_count(),
            Targets::Field(t) => t.object_count(),
        }
    }

    fn target(
        &self,
        object_id: usize,
        rays: &RayBatch<f64>,
        background: Vec3<f64>,
    ) -> Result<Vec<Vec3<f64>>, OracleError> {
        match self {
            Targets::Spheres(t) => t.target(object_id, rays, background),
            Targets::Field(t) => t.target(object_id, rays, background),
        }
    }
}

pub fn inscribed_spheres(boxes: &[Aabb<f64>], fill: f64, color: [f64; 3]) -> SphereTargets<f64> {
    SphereTargets(
        boxes
            .iter()
            .map(|b| SphereTarget::inscribed(b, fill, Vec3::from_array(color)))
            .collect(),
    )
}

pub fn build_targets(spec: &OracleSpec, boxes: &[Aabb<f64>], render: &RenderConfig<f64>) -> Result<Targets, CliError> {
    match spec {
        OracleSpec::Spheres {
            targets: Some(path), ..
        } => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let spheres: Vec<SphereTarget<f64>> =
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if spheres.len() != boxes.len() {
                return Err(CliError::Input(format!(
                    "{} lists {} targets for {} objects",
                    path.display(),
                    spheres.len(),
                    boxes.len()
                )));
            }
            Ok(Targets::Spheres(SphereTargets(spheres)))
        }
        OracleSpec::Spheres { fill, color, .. } => Ok(Targets::Spheres(inscribed_spheres(boxes, *fill, *color))),
        OracleSpec::Photometric { reference, .. } => {
            let (field, grid) = load_scene::<f64>(reference)
                .map_err(|e| CliError::Input(format!("reference {}: {e}", reference.display())))?;
            Ok(Targets::Field(Box::new(FieldTargets::new(
                field,
                grid,
                boxes.to_vec(),
                *render,
            ))))
        }
    }
}

fn kappa(spec: &OracleSpec) -> f64 {
    match spec {
        OracleSpec::Spheres { kappa, .. } | OracleSpec::Photometric { kappa, .. } => *kappa,
    }
}

fn empty_grid(cfg: &RunConfig) -> OccupancyGrid<f64> {
    OccupancyGrid::new(
        cfg.occupancy_resolution,
        cfg.occupancy_threshold,
        cfg.occupancy_interval,
    )
}

/// From-scratch state: biased field, frozen against an empty scene.
pub fn fresh_state(cfg: &RunConfig, layout: SceneLayout) -> Result<SceneState<f64>, CliError> {
    let mut state = SceneState::initialized(layout, cfg.resolution, cfg.init, &cfg.bias, empty_grid(cfg))?;
    state.freeze(FreezeMode::Void)?;
    Ok(state)
}

/// Placement state: the trained scene is both the starting point and the
/// frozen reference; the object-centric bias is added inside the boxes.
pub fn placement_state(
    cfg: &RunConfig,
    layout: SceneLayout,
    field: VoxelField<f64>,
    grid: OccupancyGrid<f64>,
) -> Result<SceneState<f64>, CliError> {
    let mut state = SceneState::from_parts(layout, field, grid)?;
    state.freeze(FreezeMode::Snapshot)?;
    let boxes = state.boxes();
    state
        .field
        .add_object_centric_bias(&boxes, &cfg.bias)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let field = state.field.clone();
    state.grid.rebuild(&field);
    Ok(state)
}

/// Objects whose boxes hold no occupied cell. With clipped rays their
/// renders never reach a trainable sample, so they get no gradient.
pub fn vanishing_objects(state: &SceneState<f64>, cfg: &RunConfig) -> Vec<usize> {
    if !cfg.optimizer.clipped_rays {
        return Vec::new();
    }
    state
        .objects()
        .iter()
        .enumerate()
        .filter(|(_, o)| state.grid.occupied_cells_in_box(&o.bbox) == 0)
        .map(|(i, _)| i)
        .collect()
}

pub fn warn_vanishing(state: &SceneState<f64>, cfg: &RunConfig) {
    for i in vanishing_objects(state, cfg) {
        eprintln!(
            "warning: object {i} ({:?}) has no occupied cell inside its box; its clipped renders see only \
             background and its gradient vanishes (try --init object-centric)",
            state.objects()[i].description
        );
    }
}

/// Noise stream of the synthetic oracle, kept apart from the pose stream.
pub fn oracle_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn train(
    state: &mut SceneState<f64>,
    cfg: &RunConfig,
    targets: &Targets,
    observer: &mut dyn RunObserver<f64>,
) -> Result<Vec<MetricRecord>, CliError> {
    let mut oracle = SyntheticDenoiserOracle::new(targets, kappa(&cfg.oracle), oracle_seed(cfg.seed));
    Ok(run_generation(
        state,
        &mut oracle,
        &cfg.optimizer,
        &cfg.schedule,
        Some(targets),
        observer,
    )?)
}
