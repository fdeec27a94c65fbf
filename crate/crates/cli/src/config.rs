//! Run configuration: a TOML file with one table per concern, overlaid by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use boxfield_core::field::{BoxExtent, DensityBiasConfig};
use boxfield_core::geometry::Vec3;
use boxfield_core::layout::{LlmConfig, LlmMode};
use boxfield_core::optimize::{Init, OptimizerConfig, RunSchedule};
use boxfield_core::render::{RenderConfig, TransmittanceMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub occupancy: OccupancySection,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub path: Option<PathBuf>,
    pub caption: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub resolution: Option<usize>,
    pub init: Option<Init>,
    pub lambda_sigma: Option<f64>,
    pub s_sigma: Option<f64>,
    pub extent: Option<BoxExtent>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySection {
    pub resolution: Option<usize>,
    pub threshold: Option<f64>,
    pub update_interval: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    pub samples_per_ray: Option<usize>,
    pub near: Option<f64>,
    pub far: Option<f64>,
    pub background: Option<[f64; 3]>,
    pub stratified: Option<bool>,
    pub clip_to_grid: Option<bool>,
    pub transmittance: Option<TransmittanceMode>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub steps: Option<u64>,
    pub lr: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub image_size: Option<usize>,
    pub clipped_rays: Option<bool>,
    /// Degrees.
    pub fov_y: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Sphere silhouettes, from a file or inscribed in each box.
    #[default]
    Spheres,
    /// Renders of a reference checkpoint, clipped to each box.
    Photometric,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub kind: Option<OracleKind>,
    /// JSON list of `{center, radius, color}`, one per object.
    pub targets: Option<PathBuf>,
    /// Inscribed sphere radius as a fraction of the smallest half extent.
    pub fill: Option<f64>,
    pub color: Option<[f64; 3]>,
    pub kappa: Option<f64>,
    /// Checkpoint directory of the photometric reference.
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub metrics_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub probe_views: Option<usize>,
    pub probe_size: Option<usize>,
}

impl ConfigFile {
    /// Reads `path`; relative paths inside are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.out);
        rebase(&mut cfg.layout.path);
        rebase(&mut cfg.oracle.targets);
        rebase(&mut cfg.oracle.reference);
        if let Some(llm) = cfg.llm.as_mut() {
            rebase(&mut llm.mock_dir);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutSource {
    Path(PathBuf),
    Caption(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum OracleSpec {
    Spheres {
        targets: Option<PathBuf>,
        fill: f64,
        color: [f64; 3],
        kappa: f64,
    },
    Photometric {
        reference: PathBuf,
        kappa: f64,
    },
}

/// Everything a training command needs, after flags are applied.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub layout: Option<LayoutSource>,
    pub llm: LlmConfig,
    pub resolution: usize,
    pub init: Init,
    pub bias: DensityBiasConfig<f64>,
    pub occupancy_resolution: usize,
    pub occupancy_threshold: f64,
    pub occupancy_interval: u64,
    pub optimizer: OptimizerConfig<f64>,
    pub schedule: RunSchedule,
    pub oracle: OracleSpec,
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub steps: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub init: Option<Init>,
    pub no_crs: bool,
    pub no_sp: bool,
    pub mock_llm: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: &Overrides) -> Result<Self, CliError> {
        let seed = flags
            .seed
            .or(file.seed)
            .ok_or_else(|| CliError::Input("a seed is required (--seed N or `seed` in the config)".into()))?;
        let out = flags
            .out
            .clone()
            .or(file.out)
            .ok_or_else(|| CliError::Input("an output directory is required (--out DIR)".into()))?;
        let layout = match (file.layout.path, file.layout.caption) {
            (Some(p), _) => Some(LayoutSource::Path(p)),
            (None, Some(c)) => Some(LayoutSource::Caption(c)),
            (None, None) => None,
        };
        let mut llm = file.llm.unwrap_or_default();
        if let Some(dir) = &flags.mock_llm {
            llm.mode = LlmMode::Mock;
            llm.mock_dir = Some(dir.clone());
        }

        let f = file.field;
        let bias_default = DensityBiasConfig::<f64>::default();
        let bias = DensityBiasConfig {
            lambda_sigma: f.lambda_sigma.unwrap_or(bias_default.lambda_sigma),
            s_sigma: f.s_sigma.unwrap_or(bias_default.s_sigma),
            extent: f.extent.unwrap_or(bias_default.extent),
        };

        let r = file.render;
        let rd = RenderConfig::<f64>::default();
        let render = RenderConfig {
            samples_per_ray: r.samples_per_ray.unwrap_or(rd.samples_per_ray),
            near: r.near.unwrap_or(rd.near),
            far: r.far.unwrap_or(rd.far),
            background: r.background.map(Vec3::from_array).unwrap_or(rd.background),
            stratified: r.stratified.unwrap_or(rd.stratified),
            clip_to_grid: r.clip_to_grid.unwrap_or(rd.clip_to_grid),
            transmittance: r.transmittance.unwrap_or(rd.transmittance),
        };

        let o = file.optimizer;
        let od = OptimizerConfig::<f64>::default();
        let mut camera = od.camera;
        camera.beta = flags.beta.or(o.beta).unwrap_or(camera.beta);
        if let Some(fov) = o.fov_y {
            camera.fov_y = fov.to_radians();
        }
        let alpha = if flags.no_sp {
            0.0
        } else {
            flags.alpha.or(o.alpha).unwrap_or(od.alpha)
        };
        let optimizer = OptimizerConfig {
            steps: flags.steps.or(o.steps).unwrap_or(od.steps),
            lr: o.lr.unwrap_or(od.lr),
            alpha,
            image_size: o.image_size.unwrap_or(od.image_size),
            seed,
            clipped_rays: !flags.no_crs && o.clipped_rays.unwrap_or(od.clipped_rays),
            render,
            camera,
        };
        optimizer.validate().map_err(|e| CliError::Input(e.to_string()))?;

        let s = file.schedule;
        let sd = RunSchedule::default();
        let schedule = RunSchedule {
            metrics_every: s.metrics_every.unwrap_or(sd.metrics_every),
            checkpoint_every: s.checkpoint_every.unwrap_or(sd.checkpoint_every),
            probe_views: s.probe_views.unwrap_or(sd.probe_views),
            probe_size: s.probe_size.unwrap_or(sd.probe_size),
            ..sd
        };

        let q = file.oracle;
        let kappa = q.kappa.unwrap_or(1.0);
        let oracle = match q.kind.unwrap_or_default() {
            OracleKind::Spheres => OracleSpec::Spheres {
                targets: q.targets,
                fill: q.fill.unwrap_or(0.8),
                color: q.color.unwrap_or([0.9, 0.3, 0.2]),
                kappa,
            },
            OracleKind::Photometric => OracleSpec::Photometric {
                reference: q
                    .reference
                    .ok_or_else(|| CliError::Input("photometric oracle needs `oracle.reference`".into()))?,
                kappa,
            },
        };

        let o = file.occupancy;
        let cfg = Self {
            seed,
            out,
            layout,
            llm,
            resolution: f.resolution.unwrap_or(64),
            init: flags.init.or(f.init).unwrap_or_default(),
            bias,
            occupancy_resolution: o.resolution.unwrap_or(32),
            occupancy_threshold: o.threshold.unwrap_or(2.0),
            occupancy_interval: o.update_interval.unwrap_or(16),
            optimizer,
            schedule,
            oracle,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.resolution < 2 {
            return Err(CliError::Input("field.resolution must be at least 2".into()));
        }
        if self.occupancy_resolution == 0 || self.occupancy_interval == 0 {
            return Err(CliError::Input(
                "occupancy resolution and update_interval must be positive".into(),
            ));
        }
        if !(self.bias.lambda_sigma >= 0.0 && self.bias.s_sigma > 0.0) {
            return Err(CliError::Input(
                "field.lambda_sigma must be >= 0 and s_sigma > 0".into(),
            ));
        }
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Input(format!("{what} {} does not exist", p.display())))
            }
        };
        if let Some(LayoutSource::Path(p)) = &self.layout {
            must_exist(p, "layout file")?;
        }
        match &self.oracle {
            OracleSpec::Spheres { targets: Some(p), .. } => must_exist(p, "target file")?,
            OracleSpec::Photometric { reference, .. } => must_exist(reference, "reference checkpoint")?,
            _ => {}
        }
        if let Some(dir) = &self.llm.mock_dir {
            must_exist(dir, "mock directory")?;
        }
        Ok(())
    }
}
