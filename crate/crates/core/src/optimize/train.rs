use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::FieldGradient;
use crate::geometry::{
    generate_camera_rays, retarget_pose, sample_base_pose, sample_object_centric_pose, turntable_poses, CameraPose,
    CameraSamplerConfig,
};
use crate::render::{render, render_backward, Clip, RenderConfig};
use crate::scalar::Real;

use super::oracle::{GuidanceOracle, GuidanceRequest, TargetSource};
use super::{reconstruction_loss, OptimizeError, SceneState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    pub steps: u64,
    pub lr: T,
    /// Weight of the scene-preservation term.
    pub alpha: T,
    /// Side of the square image rendered per object per step.
    pub image_size: usize,
    pub seed: u64,
    /// Clip object renders to their boxes.
    pub clipped_rays: bool,
    pub render: RenderConfig<T>,
    pub camera: CameraSamplerConfig<T>,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            steps: 10_000,
            lr: T::lit(0.05),
            alpha: T::lit(0.3),
            image_size: 32,
            seed: 0,
            clipped_rays: true,
            render: RenderConfig::default(),
            camera: CameraSamplerConfig::default(),
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.to_string()));
        if !(self.alpha >= T::zero()) {
            return bad("alpha must be non-negative");
        }
        if !(self.lr > T::zero()) {
            return bad("lr must be positive");
        }
        if self.image_size == 0 {
            return bad("image_size must be positive");
        }
        self.render.validate()?;
        self.camera
            .validate()
            .map_err(|e| OptimizeError::Config(e.to_string()))?;
        Ok(())
    }

    fn object_clip<'a>(&self, bbox: &'a crate::geometry::Aabb<T>) -> Clip<'a, T> {
        if self.clipped_rays {
            Clip::Inside(bbox)
        } else {
            Clip::Full
        }
    }
}

/// Losses and gradient size of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport<T> {
    /// Step number after the update (first step is 1).
    pub step: u64,
    pub per_object: Vec<Option<T>>,
    pub rec_loss: T,
    /// `sum(per_object) + alpha * rec_loss`.
    pub total: T,
    pub grad_norm: T,
    pub grad_max_abs: T,
}

/// Object passes: one pose per object, oracle cotangent pulled back into
/// `grad`. Returns each object's loss estimate.
pub fn guidance_pass<T: Real, O: GuidanceOracle<T> + ?Sized, R: Rng + ?Sized>(
    state: &SceneState<T>,
    oracle: &mut O,
    cfg: &OptimizerConfig<T>,
    rng: &mut R,
    grad: &mut FieldGradient<T>,
) -> Result<Vec<Option<T>>, OptimizeError> {
    let scene_box = state.scene_box();
    let mut losses = Vec::with_capacity(state.objects().len());
    for (i, obj) in state.objects().iter().enumerate() {
        let pose = sample_object_centric_pose(rng, &scene_box, &obj.bbox, &cfg.camera);
        let seed: u64 = rng.random();
        let rays = generate_camera_rays(&pose, cfg.image_size, cfg.image_size);
        let clip = cfg.object_clip(&obj.bbox);
        let image = render(&state.field, &state.grid, &rays, clip, &cfg.render, seed);
        let guidance = oracle
            .gradient_of(&GuidanceRequest {
                object_id: i,
                image: &image,
                pose: &pose,
                rays: &rays,
                background: cfg.render.background,
            })
            .map_err(|source| OptimizeError::Oracle { object: i, source })?;
        if let Some(k) = guidance.d_rgb.iter().position(|d| !d.is_finite()) {
            return Err(OptimizeError::Oracle {
                object: i,
                source: super::OracleError::Failed(format!("non-finite cotangent at pixel {k}")),
            });
        }
        render_backward(
            &state.field,
            &state.grid,
            &rays,
            clip,
            &cfg.render,
            seed,
            &guidance.d_rgb,
            grad,
        )?;
        losses.push(guidance.loss);
    }
    Ok(losses)
}

/// Scene-preservation pass: inverse-clipped render against the frozen
/// reference from one scene-level pose. Adds `alpha` times the
/// reconstruction gradient to `grad` and returns the unweighted loss.
pub fn preservation_pass<T: Real, R: Rng + ?Sized>(
    state: &SceneState<T>,
    cfg: &OptimizerConfig<T>,
    rng: &mut R,
    grad: &mut FieldGradient<T>,
) -> Result<T, OptimizeError> {
    let frozen = state.frozen().ok_or(OptimizeError::NotFrozen)?;
    let pose = sample_base_pose(rng, state.scene_box().center(), &cfg.camera);
    let seed: u64 = rng.random();
    let rays = generate_camera_rays(&pose, cfg.image_size, cfg.image_size);
    let boxes = state.boxes();
    let inv = render(
        &state.field,
        &state.grid,
        &rays,
        Clip::Outside(&boxes),
        &cfg.render,
        seed,
    );
    let reference = render(
        &frozen.field,
        &frozen.grid,
        &rays,
        Clip::Outside(&boxes),
        &cfg.render,
        seed,
    );
    let (loss, mut cotangent) = reconstruction_loss(&inv, &reference)?;
    if cfg.alpha > T::zero() {
        for c in &mut cotangent {
            *c = *c * cfg.alpha;
        }
        render_backward(
            &state.field,
            &state.grid,
            &rays,
            Clip::Outside(&boxes),
            &cfg.render,
            seed,
            &cotangent,
            grad,
        )?;
    }
    Ok(loss)
}

/// One optimization step over the summed objective, then the scheduled
/// occupancy refresh.
pub fn training_step<T: Real, O: GuidanceOracle<T> + ?Sized, R: Rng + ?Sized>(
    state: &mut SceneState<T>,
    oracle: &mut O,
    cfg: &OptimizerConfig<T>,
    rng: &mut R,
) -> Result<LossReport<T>, OptimizeError> {
    let mut grad = FieldGradient::zeros_like(&state.field);
    let per_object = guidance_pass(state, oracle, cfg, rng, &mut grad)?;
    let rec_loss = preservation_pass(state, cfg, rng, &mut grad)?;
    let guidance_total: T = per_object.iter().map(|l| l.unwrap_or(T::zero())).sum();
    let report_grad = (grad.norm(), grad.max_abs());
    state.adam.apply_update(&mut state.field, &grad, cfg.lr);
    state.step += 1;
    state.grid.update_occupancy(&state.field, state.step);
    Ok(LossReport {
        step: state.step,
        per_object,
        rec_loss,
        total: guidance_total + cfg.alpha * rec_loss,
        grad_norm: report_grad.0,
        grad_max_abs: report_grad.1,
    })
}

/// Probe views and metric/checkpoint cadence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSchedule {
    pub metrics_every: u64,
    pub checkpoint_every: u64,
    pub probe_views: usize,
    pub probe_size: usize,
    pub probe_distance: f64,
    /// Degrees.
    pub probe_elevation: f64,
}

impl Default for RunSchedule {
    fn default() -> Self {
        Self {
            metrics_every: 50,
            checkpoint_every: 500,
            probe_views: 8,
            probe_size: 32,
            probe_distance: 3.0,
            probe_elevation: 15.0,
        }
    }
}

impl RunSchedule {
    /// Turntable poses around the scene center.
    pub fn probe_poses<T: Real>(&self, state: &SceneState<T>, fov_y: T) -> Vec<CameraPose<T>> {
        turntable_poses(
            state.scene_box().center(),
            T::lit(self.probe_distance),
            T::lit(self.probe_elevation.to_radians()),
            fov_y,
            self.probe_views.max(1),
        )
    }
}

/// One line of the metrics stream. Loss fields are absent before the first
/// step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub per_object_loss: Vec<Option<f64>>,
    pub rec_loss: Option<f64>,
    pub total: Option<f64>,
    pub grad_norm: Option<f64>,
    pub outside_box_opacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_loss: Option<f64>,
}

/// Receives metrics and checkpoint opportunities during a run.
pub trait RunObserver<T: Real> {
    fn on_metrics(&mut self, _record: &MetricRecord) -> Result<(), OptimizeError> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &SceneState<T>) -> Result<(), OptimizeError> {
        Ok(())
    }
}

/// Ignores everything.
pub struct NoObserver;

impl<T: Real> RunObserver<T> for NoObserver {}

fn probe_render_config<T: Real>(cfg: &RenderConfig<T>) -> RenderConfig<T> {
    RenderConfig {
        stratified: false,
        ..*cfg
    }
}

/// Mean inverse-clipped opacity of the trainable scene minus that of the
/// frozen one, over `poses`. Without a frozen scene the reference is 0.
pub fn outside_box_opacity<T: Real>(
    state: &SceneState<T>,
    poses: &[CameraPose<T>],
    size: usize,
    render_cfg: &RenderConfig<T>,
) -> T {
    if poses.is_empty() {
        return T::zero();
    }
    let cfg = probe_render_config(render_cfg);
    let boxes = state.boxes();
    let mut total = T::zero();
    for pose in poses {
        let rays = generate_camera_rays(pose, size, size);
        let live = render(&state.field, &state.grid, &rays, Clip::Outside(&boxes), &cfg, 0).mean_opacity();
        let reference = state.frozen().map_or(T::zero(), |f| {
            render(&f.field, &f.grid, &rays, Clip::Outside(&boxes), &cfg, 0).mean_opacity()
        });
        total += live - reference;
    }
    total / T::count(poses.len())
}

/// Mean absolute RGB difference between inverse-clipped renders of the
/// trainable and frozen scenes, over `poses`.
pub fn frozen_region_deviation<T: Real>(
    state: &SceneState<T>,
    poses: &[CameraPose<T>],
    size: usize,
    render_cfg: &RenderConfig<T>,
) -> Result<T, OptimizeError> {
    let frozen = state.frozen().ok_or(OptimizeError::NotFrozen)?;
    if poses.is_empty() {
        return Ok(T::zero());
    }
    let cfg = probe_render_config(render_cfg);
    let boxes = state.boxes();
    let mut total = T::zero();
    for pose in poses {
        let rays = generate_camera_rays(pose, size, size);
        let live = render(&state.field, &state.grid, &rays, Clip::Outside(&boxes), &cfg, 0);
        let reference = render(&frozen.field, &frozen.grid, &rays, Clip::Outside(&boxes), &cfg, 0);
        total += live.mean_abs_diff(&reference).expect("same ray batch");
    }
    Ok(total / T::count(poses.len()))
}

/// Mean squared error between object renders and their targets, from each
/// probe pose re-aimed at every object. Objects are always rendered clipped
/// to their boxes, so content elsewhere does not count.
pub fn target_loss<T: Real, S: TargetSource<T> + ?Sized>(
    state: &SceneState<T>,
    targets: &S,
    poses: &[CameraPose<T>],
    size: usize,
    cfg: &OptimizerConfig<T>,
) -> Result<T, OptimizeError> {
    let rcfg = probe_render_config(&cfg.render);
    let scene_box = state.scene_box();
    let mut total = T::zero();
    let mut count = 0usize;
    for (i, obj) in state.objects().iter().enumerate() {
        for base in poses {
            let pose = retarget_pose(base, &scene_box, &obj.bbox, cfg.camera.beta);
            let rays = generate_camera_rays(&pose, size, size);
            let image = render(&state.field, &state.grid, &rays, Clip::Inside(&obj.bbox), &rcfg, 0);
            let target = targets
                .target(i, &rays, rcfg.background)
                .map_err(|source| OptimizeError::Oracle { object: i, source })?;
            let sq: T = image
                .rgb
                .iter()
                .zip(&target)
                .map(|(a, b)| (*a - *b).norm_squared())
                .sum();
            total += sq / T::count(3 * image.pixel_count().max(1));
            count += 1;
        }
    }
    Ok(total / T::count(count.max(1)))
}

fn snapshot_metrics<T: Real>(
    state: &SceneState<T>,
    report: Option<&LossReport<T>>,
    targets: Option<&dyn TargetSource<T>>,
    cfg: &OptimizerConfig<T>,
    schedule: &RunSchedule,
) -> Result<MetricRecord, OptimizeError> {
    let poses = schedule.probe_poses(state, cfg.camera.fov_y);
    let f = |v: T| v.to_f64_lossy();
    Ok(MetricRecord {
        step: state.step,
        per_object_loss: report.map_or_else(Vec::new, |r| r.per_object.iter().map(|l| l.map(f)).collect()),
        rec_loss: report.map(|r| f(r.rec_loss)),
        total: report.map(|r| f(r.total)),
        grad_norm: report.map(|r| f(r.grad_norm)),
        outside_box_opacity: f(outside_box_opacity(state, &poses, schedule.probe_size, &cfg.render)),
        target_loss: targets
            .map(|t| target_loss(state, t, &poses, schedule.probe_size, cfg))
            .transpose()?
            .map(f),
    })
}

/// Runs `cfg.steps` training steps from `cfg.seed`. Metrics are taken
/// before the first step, after step 1, every `metrics_every` steps and
/// after the last step; checkpoints every `checkpoint_every` steps and at
/// the end.
pub fn run_generation<T: Real, O: GuidanceOracle<T> + ?Sized>(
    state: &mut SceneState<T>,
    oracle: &mut O,
    cfg: &OptimizerConfig<T>,
    schedule: &RunSchedule,
    targets: Option<&dyn TargetSource<T>>,
    observer: &mut dyn RunObserver<T>,
) -> Result<Vec<MetricRecord>, OptimizeError> {
    cfg.validate()?;
    if state.frozen().is_none() {
        return Err(OptimizeError::NotFrozen);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut emit = |rec: MetricRecord, observer: &mut dyn RunObserver<T>| -> Result<(), OptimizeError> {
        observer.on_metrics(&rec)?;
        records.push(rec);
        Ok(())
    };
    emit(snapshot_metrics(state, None, targets, cfg, schedule)?, observer)?;
    for k in 1..=cfg.steps {
        let report = training_step(state, oracle, cfg, &mut rng)?;
        let last = k == cfg.steps;
        if k == 1 || last || (schedule.metrics_every > 0 && k % schedule.metrics_every == 0) {
            emit(
                snapshot_metrics(state, Some(&report), targets, cfg, schedule)?,
                observer,
            )?;
        }
        if last || (schedule.checkpoint_every > 0 && k % schedule.checkpoint_every == 0) {
            observer.on_checkpoint(state)?;
        }
    }
    Ok(records)
}
