//! Command-line driver: the `pipeline`, `synth`, `eval`, `segment`, `clean`
//! and `mesh` subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod output;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde_json::Value;
use splat2twin::clean::clean_pipeline;
use splat2twin::ply::{encode_ply, load_ply};
use splat2twin::semantics::split_partitions;
use splat2twin::synth::{materialize, SceneSpec, Shape};

use crate::config::{apply_override, Alpha, Paths, PipelineConfig};
use crate::error::{CliError, StageContext};
use crate::output::{to_json, write_error, OutDir};

pub const THREADS_ENV: &str = "SPLAT2TWIN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "splat2twin",
    version,
    about = "Gaussian splat clouds to semantically partitioned collision meshes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift, partition, clean, mesh and optionally evaluate.
    Pipeline(PipelineArgs),
    /// Write a synthetic scene in pipeline input layout.
    Synth(SynthArgs),
    /// Score predictions against ground truth, or run the ablation / divisor sweep.
    Eval(EvalArgs),
    /// Semantic lifting only: label field and raw partitions.
    Segment(SegmentArgs),
    /// Geometric cleaning of one PLY.
    Clean(CleanArgs),
    /// Alpha-shape meshing of one PLY.
    Mesh(MeshArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override a config field, e.g. `--set vote.threshold_divisor=1.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SceneSpec JSON; alternative to `--preset`.
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// box_on_table, tabletop or shelf_fragment.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub floaters: Option<f64>,
    #[arg(long)]
    pub ghosts: Option<f64>,
    #[arg(long)]
    pub needles: Option<f64>,
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction directory; for `--ablation`/`--sweep` the scene input directory.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Four-row cleaning ablation on the raw `splats.ply`.
    #[arg(long)]
    pub ablation: bool,
    /// Consistency and ghost index per consensus divisor.
    #[arg(long)]
    pub sweep: bool,
    /// Pipeline config supplying vote/clean/eval parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Report path; defaults to `<pred>/eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub splats: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// none, denoise-only, cluster-only or full.
    #[arg(long, default_value = "full")]
    pub stages: String,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output mesh; the extension (.obj or .stl) picks the format.
    #[arg(long)]
    pub output: PathBuf,
    /// Radius in metres or "auto".
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    #[arg(long)]
    pub target_faces: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Size of the worker pool requested through the environment.
pub fn thread_count_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Pipeline(a) => cmd_pipeline(&a.config, &a.overrides.set),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Segment(a) => cmd_segment(&a),
        Command::Clean(a) => cmd_clean(&a),
        Command::Mesh(a) => cmd_mesh(&a),
    }
}

/// Default parameters with overrides but without real paths, for commands
/// that take their paths as flags.
fn parameters(base: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let cfg = match base {
        Some(p) => PipelineConfig::load(p, overrides)?,
        None => {
            let mut v = serde_json::to_value(PipelineConfig::new(Paths {
                splats: PathBuf::new(),
                cameras: PathBuf::new(),
                masks_dir: PathBuf::new(),
                out_dir: PathBuf::new(),
            }))
            .expect("config serializes");
            for o in overrides {
                apply_override(&mut v, o)?;
            }
            serde_json::from_value::<PipelineConfig>(v).map_err(|e| CliError::config(e.to_string()))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_pipeline(config: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(config, overrides)?;
    match pipeline::run_pipeline(&cfg) {
        Ok(report) => {
            println!("{}", render_stage_table(&report));
            Ok(())
        }
        Err(e) => {
            // failures before the output directory was set up still leave a record
            if matches!(e.kind, error::ErrorKind::Config | error::ErrorKind::Input) {
                write_error(&cfg.paths.out_dir, &e);
            }
            Err(e)
        }
    }
}

fn render_stage_table(r: &pipeline::PipelineReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "label", "input", "opacity", "needle", "sor", "conn", "kept", "faces", "closed"
    );
    for p in &r.partitions {
        let c = &p.clean;
        let (faces, closed) = p.mesh.as_ref().map_or(("-".to_string(), "-"), |m| {
            (m.faces.to_string(), if m.closed { "yes" } else { "no" })
        });
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7}",
            p.label,
            p.input_count,
            c.removed_by_opacity,
            c.removed_by_needle,
            c.removed_by_sor,
            c.removed_by_connectivity,
            c.output_count,
            faces,
            closed
        );
    }
    s
}

fn preset(name: &str, seed: u64) -> Result<SceneSpec, CliError> {
    match name {
        "box_on_table" => Ok(SceneSpec::box_on_table(seed)),
        "tabletop" => Ok(SceneSpec::tabletop(seed)),
        "shelf_fragment" => Ok(SceneSpec::shelf_fragment(seed)),
        _ => Err(CliError::config(format!(
            "unknown preset '{name}' (box_on_table, tabletop, shelf_fragment)"
        ))),
    }
}

/// Pipeline config written next to a synth scene, so `pipeline --config`
/// runs on it directly.
pub fn scene_pipeline_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::new(Paths {
        splats: "splats.ply".into(),
        cameras: "cameras.json".into(),
        masks_dir: "masks".into(),
        out_dir: "out".into(),
    });
    cfg.eval.enabled = true;
    cfg.eval.gt_dir = Some(".".into());
    cfg
}

pub fn build_spec(a: &SynthArgs) -> Result<SceneSpec, CliError> {
    let mut spec = match (&a.spec, &a.preset) {
        (Some(p), _) => {
            if !p.is_file() {
                return Err(CliError::input(p, "scene spec not found"));
            }
            SceneSpec::load(p).map_err(|e| CliError::config(e.to_string()))?
        }
        (None, Some(name)) => preset(name, a.seed)?,
        (None, None) => return Err(CliError::config("synth needs --spec or --preset")),
    };
    if let Some(f) = a.floaters {
        spec.corruption.floater_fraction = f;
    }
    if let Some(f) = a.ghosts {
        spec.corruption.ghost_fraction = f;
    }
    if let Some(f) = a.needles {
        spec.corruption.needle_fraction = f;
    }
    if let Some(h) = a.spacing {
        spec.surfel_spacing = h;
    }
    spec.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(spec)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = build_spec(a)?;
    let mut out = OutDir::create(&a.out)?;
    let files = materialize(&spec, &a.out).stage("synth")?;
    for f in &files {
        out.track(f);
    }
    let cfg = scene_pipeline_config();
    out.write_json("pipeline.json", &cfg)?;
    let shapes: Vec<&str> = spec
        .primitives
        .iter()
        .map(|p| match p.shape {
            Shape::Box => "box",
            Shape::Sphere => "sphere",
            Shape::Cylinder => "cylinder",
        })
        .collect();
    info!(
        "synth scene with {} primitives ({}) in {}",
        shapes.len(),
        shapes.join(", "),
        a.out.display()
    );
    out.finish("synth", &spec)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = parameters(a.config.as_deref(), &a.overrides.set)?;
    let report_path = a.out.clone().unwrap_or_else(|| a.pred.join("eval.json"));
    let (json, table) = if a.ablation {
        let r = eval::ablation(&a.pred.join("splats.ply"), &a.gt, &cfg.clean, &cfg.eval)?;
        (to_json(&r), eval::render_ablation_table(&r))
    } else if a.sweep {
        let r = eval::sweep_dir(&a.pred, &cfg.vote, cfg.eval.high_confidence)?;
        (to_json(&r), eval::render_sweep_table(&r))
    } else {
        let r = eval::evaluate_dirs(&a.pred, &a.gt, &cfg.eval)?;
        (to_json(&r), eval::render_eval_table(&r))
    };
    std::fs::write(&report_path, json)
        .map_err(|e| CliError::stage("write", format!("{}: {e}", report_path.display())))?;
    print!("{table}");
    Ok(())
}

pub fn cmd_segment(a: &SegmentArgs) -> Result<(), CliError> {
    let cfg = parameters(None, &a.overrides.set)?;
    for f in [&a.splats, &a.cameras] {
        if !f.is_file() {
            return Err(CliError::input(f, "file not found"));
        }
    }
    if !a.masks.is_dir() {
        return Err(CliError::input(&a.masks, "masks directory not found"));
    }
    let inputs = pipeline::load_inputs(&a.splats, &a.cameras, &a.masks)?;
    let mut out = OutDir::create(&a.out)?;
    let body = |out: &mut OutDir| -> Result<(), CliError> {
        let (field, _) = pipeline::segment(&inputs, &cfg.vote)?;
        out.write("labels.json", field.to_json().as_bytes())?;
        let parts = split_partitions(&inputs.cloud, &field).stage("partition")?;
        for p in parts.iter() {
            out.write(&format!("{}.ply", p.label), &encode_ply(&p.cloud).stage("write")?)?;
        }
        Ok(())
    };
    match body(&mut out) {
        Ok(()) => {
            out.finish("segment", cfg.vote)?;
            Ok(())
        }
        Err(e) => {
            out.fail(&e);
            Err(e)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::stage("write", format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))
}

pub fn cmd_clean(a: &CleanArgs) -> Result<(), CliError> {
    let mut overrides = a.overrides.set.clone();
    overrides.push(format!("stages={}", a.stages));
    let cfg = parameters(None, &overrides)?;
    if !a.input.is_file() {
        return Err(CliError::input(&a.input, "file not found"));
    }
    let cloud = load_ply::<f64>(&a.input).stage("load")?;
    let (cleaned, report) = clean_pipeline(&cloud, &cfg.clean, cfg.stage_mask()?).stage("clean")?;
    write_file(&a.output, &encode_ply(&cleaned.cloud).stage("write")?)?;
    write_file(&a.output.with_extension("clean.json"), to_json(&report).as_bytes())?;
    println!(
        "input {} opacity -{} needle -{} sor -{} connectivity -{} kept {}",
        report.input_count,
        report.removed_by_opacity,
        report.removed_by_needle,
        report.removed_by_sor,
        report.removed_by_connectivity,
        report.output_count
    );
    Ok(())
}

pub fn cmd_mesh(a: &MeshArgs) -> Result<(), CliError> {
    let mut overrides = a.overrides.set.clone();
    let alpha = match a.alpha.as_str() {
        "auto" => Value::String("auto".into()),
        s => s
            .parse::<f64>()
            .map(Value::from)
            .map_err(|_| CliError::config(format!("--alpha must be \"auto\" or metres, got '{s}'")))?,
    };
    overrides.push(format!("meshing.alpha={alpha}"));
    if let Some(t) = a.target_faces {
        overrides.push(format!("meshing.target_faces={t}"));
    }
    let ext = a
        .output
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("obj")
        .to_string();
    overrides.push(format!("meshing.format={ext}"));
    let cfg = parameters(None, &overrides)?;
    if !a.input.is_file() {
        return Err(CliError::input(&a.input, "file not found"));
    }
    let cloud = load_ply::<f64>(&a.input).stage("load")?;
    let (mesh, summary) = pipeline::mesh_points(&cloud.positions(), &cfg.meshing)?;
    write_file(&a.output, &pipeline::encode_mesh(&mesh, cfg.meshing.mesh_format()?))?;
    let alpha_used = match cfg.meshing.alpha {
        Alpha::Auto => format!("auto ({:.5})", summary.alpha),
        Alpha::Fixed(x) => format!("{x}"),
    };
    println!(
        "alpha {alpha_used} vertices {} faces {} closed {} components {}",
        summary.vertices, summary.faces, summary.closed, summary.components
    );
    Ok(())
}
