use std::fs;
use std::path::{Path, PathBuf};

use boxfield_core::geometry::{aabb_from_layout, generate_camera_rays, CameraPose, LAYOUT_EXTENT};
use boxfield_core::layout::{request_layout, LlmConfig, LlmMode};
use boxfield_core::optimize::checkpoint::load_scene;
use boxfield_core::optimize::{frozen_region_deviation, Init, MetricRecord, RunObserver, SceneState};
use boxfield_core::render::{render, Clip, RenderConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::ablate::{run_ablation, AblationTable};
use crate::config::{ConfigFile, Overrides, RunConfig};
use crate::output::{self, write_json, RunWriter};
use crate::pipeline::{self, build_targets, load_layout, read_layout_file, report_warnings, Targets};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "boxfield", version, about = "Bounding-box constrained 3D generation")]
pub struct Cli {
    /// Worker threads for rendering (results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask the layout model for boxes matching a caption.
    Layout(LayoutArgs),
    /// Generate objects from scratch inside their boxes.
    Generate(RunArgs),
    /// Generate objects inside a trained scene, preserving the rest.
    Place(PlaceArgs),
    /// Render a checkpoint from a list of poses or a turntable.
    Render(RenderArgs),
    /// Run the CRS / OCDB / SP component grid.
    Ablate(RunArgs),
    /// Check a layout file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = parse_init)]
    pub init: Option<Init>,
    /// Render objects through the whole scene instead of their boxes.
    #[arg(long)]
    pub no_crs: bool,
    /// Drop the scene-preservation term (alpha = 0).
    #[arg(long)]
    pub no_sp: bool,
    /// Answer layout requests from this directory.
    #[arg(long)]
    pub mock_llm: Option<PathBuf>,
    /// Layout file, overriding the config.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// No per-step progress on stderr; warnings still print.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint directory of the trained scene.
    #[arg(long)]
    pub scene: PathBuf,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[arg(long)]
    pub caption: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mock_llm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON list of `{position, look_at, up, fov_y}`; a turntable if absent.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Render only inside this layout box, given as `x,y,z,depth,width,height`.
    #[arg(long, value_parser = parse_box6)]
    pub clip: Option<[i64; 6]>,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    /// Also write the float image next to each PNG.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
}

fn parse_init(s: &str) -> Result<Init, String> {
    match s {
        "object-centric" => Ok(Init::ObjectCentric),
        "uni-sphere" => Ok(Init::UniSphere),
        _ => Err(format!("expected object-centric or uni-sphere, got {s:?}")),
    }
}

fn parse_box6(s: &str) -> Result<[i64; 6], String> {
    let parts: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<i64>| format!("expected 6 integers, got {}", p.len()))
}

/// Runs one command, on a pool of `workers` threads if given.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Layout(a) => cmd_layout(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Place(a) => cmd_place(a),
        Command::Render(a) => cmd_render(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn resolve(args: &RunArgs) -> Result<(RunConfig, bool), CliError> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        steps: args.steps,
        alpha: args.alpha,
        beta: args.beta,
        init: args.init,
        no_crs: args.no_crs,
        no_sp: args.no_sp,
        mock_llm: args.mock_llm.clone(),
    };
    let mut cfg = RunConfig::resolve(file, &flags)?;
    if let Some(p) = &args.layout {
        if !p.exists() {
            return Err(CliError::Input(format!("layout file {} does not exist", p.display())));
        }
        cfg.layout = Some(crate::LayoutSource::Path(p.clone()));
    }
    Ok((cfg, !args.quiet))
}

#[derive(Serialize)]
struct Summary<'a> {
    final_metrics: Option<&'a MetricRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frozen_region_deviation: Option<f64>,
    vanishing_objects: Vec<usize>,
}

fn finish_run(
    state: &SceneState<f64>,
    cfg: &RunConfig,
    targets: &Targets,
    echo: bool,
    deviation: bool,
) -> Result<(), CliError> {
    let vanishing = pipeline::vanishing_objects(state, cfg);
    pipeline::warn_vanishing(state, cfg);
    let mut writer = RunWriter::create(&cfg.out, echo)?;
    write_json(&cfg.out.join("run.json"), cfg)?;
    fs::write(cfg.out.join("layout.json"), state.layout().to_json())?;
    let mut state = state.clone();
    let records = pipeline::train(&mut state, cfg, targets, &mut writer)?;
    writer.finish()?;
    output::write_turntables(
        &state,
        &cfg.optimizer.render,
        cfg.optimizer.camera.fov_y,
        cfg.optimizer.camera.beta,
        &cfg.out,
    )?;
    let deviation = if deviation {
        let poses = cfg.schedule.probe_poses(&state, cfg.optimizer.camera.fov_y);
        Some(frozen_region_deviation(
            &state,
            &poses,
            cfg.schedule.probe_size,
            &cfg.optimizer.render,
        )?)
    } else {
        None
    };
    write_json(
        &cfg.out.join("summary.json"),
        &Summary {
            final_metrics: records.last(),
            frozen_region_deviation: deviation,
            vanishing_objects: vanishing,
        },
    )?;
    Ok(())
}

fn cmd_generate(args: RunArgs) -> Result<(), CliError> {
    let (cfg, echo) = resolve(&args)?;
    let layout = load_layout(&cfg)?;
    let state = pipeline::fresh_state(&cfg, layout)?;
    let targets = build_targets(&cfg.oracle, &state.boxes(), &cfg.optimizer.render)?;
    finish_run(&state, &cfg, &targets, echo, false)
}

fn cmd_place(args: PlaceArgs) -> Result<(), CliError> {
    let (cfg, echo) = resolve(&args.run)?;
    let (field, grid) = load_scene::<f64>(&args.scene)
        .map_err(|e| CliError::Input(format!("scene checkpoint {}: {e}", args.scene.display())))?;
    let layout = load_layout(&cfg)?;
    let state = pipeline::placement_state(&cfg, layout, field, grid)?;
    let targets = build_targets(&cfg.oracle, &state.boxes(), &cfg.optimizer.render)?;
    finish_run(&state, &cfg, &targets, echo, true)
}

fn cmd_ablate(args: RunArgs) -> Result<(), CliError> {
    let (cfg, echo) = resolve(&args)?;
    let layout = load_layout(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("run.json"), &cfg)?;
    let rows = run_ablation(&cfg, &layout, |s| {
        let dir = cfg.out.join("rows").join(s.label());
        Ok(Some(
            Box::new(RunWriter::create(&dir, false)?) as Box<dyn RunObserver<f64>>
        ))
    })?;
    write_json(&cfg.out.join("ablation.json"), &rows)?;
    let table = AblationTable(&rows).to_string();
    fs::write(cfg.out.join("ablation.txt"), &table)?;
    if echo {
        print!("{table}");
    }
    Ok(())
}

fn cmd_layout(args: LayoutArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let caption = args
        .caption
        .or(file.layout.caption)
        .ok_or_else(|| CliError::Input("no caption given (--caption)".into()))?;
    let out = args
        .out
        .or(file.out)
        .ok_or_else(|| CliError::Input("an output directory is required (--out DIR)".into()))?;
    let mut llm: LlmConfig = file.llm.unwrap_or_default();
    if let Some(dir) = args.mock_llm {
        llm.mode = LlmMode::Mock;
        llm.mock_dir = Some(dir);
    }
    let layout = request_layout(&llm, &caption)?;
    if let Err(e) = layout.check() {
        return Err(CliError::Input(format!("layout for {caption:?} is invalid: {e}")));
    }
    report_warnings(&layout);
    fs::create_dir_all(&out)?;
    let path = out.join("layout.json");
    fs::write(&path, layout.to_json())?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let layout = read_layout_file(&args.path)?;
    let warnings = report_warnings(&layout);
    println!(
        "{}: {} objects, {} warnings",
        args.path.display(),
        layout.objects.len(),
        warnings
    );
    Ok(())
}

fn read_poses(path: &Path) -> Result<Vec<CameraPose<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let poses: Vec<CameraPose<f64>> =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for (i, p) in poses.iter().enumerate() {
        p.validate()
            .map_err(|e| CliError::Input(format!("{} pose {i}: {e}", path.display())))?;
    }
    Ok(poses)
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    if args.size == 0 || args.samples == 0 {
        return Err(CliError::Input("--size and --samples must be positive".into()));
    }
    let (field, grid) = load_scene::<f64>(&args.checkpoint)
        .map_err(|e| CliError::Input(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let clip_box = args
        .clip
        .map(|b| aabb_from_layout::<f64>(b, LAYOUT_EXTENT))
        .transpose()
        .map_err(|e| CliError::Input(format!("--clip: {e}")))?;
    let cfg = RenderConfig {
        samples_per_ray: args.samples,
        stratified: false,
        ..RenderConfig::default()
    };
    let poses = match &args.poses {
        Some(p) => read_poses(p)?,
        None => boxfield_core::geometry::turntable_poses(
            boxfield_core::geometry::Vec3::zero(),
            output::TURNTABLE_DISTANCE,
            output::TURNTABLE_ELEVATION_DEG.to_radians(),
            40f64.to_radians(),
            output::TURNTABLE_VIEWS,
        ),
    };
    fs::create_dir_all(&args.out)?;
    let clip = match &clip_box {
        Some(b) => Clip::Inside(b),
        None => Clip::Full,
    };
    for (k, pose) in poses.iter().enumerate() {
        let rays = generate_camera_rays(pose, args.size, args.size);
        let image = render(&field, &grid, &rays, clip, &cfg, 0);
        output::save_image(&image, &args.out.join(format!("view_{k:02}.png")), args.raw)?;
    }
    Ok(())
}
