//! End-to-end orchestration: lift, partition, clean, mesh, evaluate.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use splat2twin::clean::{clean_pipeline, CleanReport, StageMask};
use splat2twin::mesh::{
    alpha_shape, decimate, delaunay3d, suggest_alpha_with, write_obj, write_stl, DecimateReport, MeshFormat,
};
use splat2twin::metrics::{field_consistency, geometric_fidelity, ConsistencyResult, GeomFidelity};
use splat2twin::ply::{encode_ply, load_ply};
use splat2twin::projection::load_cameras;
use splat2twin::semantics::{iterative_lift, split_partitions, Partition};
use splat2twin::{Camera, CleanSettings, Cloud, LabelField, MaskSet, Mesh, Point, VoteSettings};

use crate::config::{Alpha, EvalConfig, MeshingConfig, PipelineConfig};
use crate::error::{CliError, StageContext};
use crate::eval::find_cloud;
use crate::output::OutDir;

pub const PIPELINE_REPORT_SCHEMA_VERSION: u32 = 1;

/// Fewest cleaned splats a partition needs before it is meshed.
pub const MIN_MESH_POINTS: usize = 4;

pub struct Inputs {
    pub cloud: Cloud,
    pub views: Vec<Camera>,
    pub masks: MaskSet,
}

pub fn load_inputs(splats: &Path, cameras: &Path, masks_dir: &Path) -> Result<Inputs, CliError> {
    let cloud = load_ply::<f64>(splats).stage("load")?;
    let views = load_cameras::<f64>(cameras).stage("load")?;
    let masks = MaskSet::load_dir(masks_dir, &views).stage("load")?;
    info!(
        "loaded {} splats, {} views, {} masks over {} object labels",
        cloud.len(),
        views.len(),
        masks.len(),
        masks.labels().len() - 1
    );
    Ok(Inputs { cloud, views, masks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSummary {
    pub changes: Vec<usize>,
    pub iterations_run: usize,
    pub underpopulated_gates: usize,
    pub object_splats: usize,
}

pub fn segment(inputs: &Inputs, vote: &VoteSettings) -> Result<(LabelField, LiftSummary), CliError> {
    let lift = iterative_lift(&inputs.cloud, &inputs.views, &inputs.masks, vote).stage("lift")?;
    let summary = LiftSummary {
        changes: lift.changes.clone(),
        iterations_run: lift.iterations_run,
        underpopulated_gates: lift.field.underpopulated_gates,
        object_splats: lift.field.object_count(),
    };
    info!(
        "lift: {} iterations, {} of {} splats labelled as objects",
        summary.iterations_run,
        summary.object_splats,
        inputs.cloud.len()
    );
    Ok((lift.field, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshSummary {
    pub alpha: f64,
    pub vertices: usize,
    pub faces: usize,
    pub closed: bool,
    pub open_edges: usize,
    pub components: usize,
    pub decimation: Option<DecimateReport>,
}

/// Delaunay, alpha shape and optional decimation.
pub fn mesh_points(points: &[Point], cfg: &MeshingConfig) -> Result<(Mesh, MeshSummary), CliError> {
    let alpha = match cfg.alpha {
        Alpha::Auto => suggest_alpha_with(points, cfg.alpha_factor).stage("mesh")?,
        Alpha::Fixed(a) => a,
    };
    let tets = delaunay3d(points).stage("mesh")?;
    let mut mesh = alpha_shape(&tets, alpha).stage("mesh")?.mesh;
    let mut decimation = None;
    if let Some(target) = cfg.target_faces {
        if mesh.faces.len() > target {
            let (m, r) = decimate(&mesh, target).stage("mesh")?;
            mesh = m;
            decimation = Some(r);
        }
    }
    let summary = MeshSummary {
        alpha,
        vertices: mesh.vertices.len(),
        faces: mesh.faces.len(),
        closed: mesh.is_closed(),
        open_edges: mesh.open_edge_count(),
        components: mesh.component_count(),
        decimation,
    };
    Ok((mesh, summary))
}

pub fn encode_mesh(mesh: &Mesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::Stl => write_stl(mesh),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub label: String,
    pub input_count: usize,
    pub clean: CleanReport,
    /// Absent when the cleaned partition was too small to mesh.
    pub mesh: Option<MeshSummary>,
}

struct ProcessedPartition {
    cloud: Cloud,
    mesh: Option<Mesh>,
    summary: PartitionSummary,
}

fn process_partition(
    part: &Partition<f64>,
    clean: &CleanSettings,
    stages: StageMask,
    meshing: &MeshingConfig,
) -> Result<ProcessedPartition, CliError> {
    let (cleaned, report) = clean_pipeline(&part.cloud, clean, stages).stage("clean")?;
    info!(
        "{}: {} -> {} splats after cleaning",
        part.label, report.input_count, report.output_count
    );
    let (mesh, summary) = if cleaned.cloud.len() < MIN_MESH_POINTS {
        warn!(
            "{}: {} splats after cleaning, not meshed",
            part.label,
            cleaned.cloud.len()
        );
        (None, None)
    } else {
        let (m, s) = mesh_points(&cleaned.cloud.positions(), meshing)
            .map_err(|e| CliError::stage("mesh", format!("{}: {}", part.label, e.message)))?;
        info!("{}: mesh with {} faces, alpha {:.5}", part.label, s.faces, s.alpha);
        (Some(m), Some(s))
    };
    Ok(ProcessedPartition {
        summary: PartitionSummary {
            label: part.label.clone(),
            input_count: part.cloud.len(),
            clean: report,
            mesh: summary,
        },
        cloud: cleaned.cloud,
        mesh,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineMetrics {
    pub schema_version: u32,
    pub consistency: ConsistencySummary,
    /// Per label with available ground truth.
    pub geometry: Vec<LabelGeometry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencySummary {
    pub dataset_consistent_fraction: f64,
    pub valid_point_count: usize,
    pub unseen_point_count: usize,
    pub high_confidence: f64,
}

impl From<&ConsistencyResult> for ConsistencySummary {
    fn from(c: &ConsistencyResult) -> Self {
        Self {
            dataset_consistent_fraction: c.dataset_consistent_fraction,
            valid_point_count: c.valid_point_count,
            unseen_point_count: c.unseen_point_count,
            high_confidence: c.high_confidence,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelGeometry {
    pub label: String,
    #[serde(flatten)]
    pub fidelity: GeomFidelity,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub splat_count: usize,
    pub view_count: usize,
    pub labels: Vec<String>,
    pub lift: LiftSummary,
    pub partitions: Vec<PartitionSummary>,
}

/// Parameters recorded in the manifest; paths are left out so identical
/// runs into different directories agree byte for byte.
#[derive(Serialize)]
struct ManifestParameters<'a> {
    vote: &'a VoteSettings,
    clean: &'a CleanSettings,
    stages: &'a str,
    meshing: &'a MeshingConfig,
    eval: &'a EvalConfig,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, CliError> {
    cfg.validate()?;
    cfg.check_inputs()?;
    let mut out = OutDir::create(&cfg.paths.out_dir)?;
    match pipeline_body(cfg, &mut out) {
        Ok(report) => {
            let params = ManifestParameters {
                vote: &cfg.vote,
                clean: &cfg.clean,
                stages: &cfg.stages,
                meshing: &cfg.meshing,
                eval: &cfg.eval,
            };
            let manifest = out.finish("pipeline", params)?;
            info!("wrote {}", manifest.display());
            Ok(report)
        }
        Err(e) => {
            out.fail(&e);
            Err(e)
        }
    }
}

fn pipeline_body(cfg: &PipelineConfig, out: &mut OutDir) -> Result<PipelineReport, CliError> {
    let p = &cfg.paths;
    let inputs = load_inputs(&p.splats, &p.cameras, &p.masks_dir)?;
    let (field, lift) = segment(&inputs, &cfg.vote)?;
    out.write("labels.json", field.to_json().as_bytes())?;

    let parts = split_partitions(&inputs.cloud, &field).stage("partition")?;
    let parts: Vec<&Partition<f64>> = parts.iter().collect();
    let stages = cfg.stage_mask()?;
    let format = cfg.meshing.mesh_format()?;
    let processed: Vec<ProcessedPartition> = parts
        .par_iter()
        .map(|part| process_partition(part, &cfg.clean, stages, &cfg.meshing))
        .collect::<Result<_, _>>()?;

    for pp in &processed {
        let label = &pp.summary.label;
        out.write(&format!("{label}.ply"), &encode_ply(&pp.cloud).stage("write")?)?;
        out.write_json(&format!("{label}.clean.json"), &pp.summary.clean)?;
        if let Some(mesh) = &pp.mesh {
            out.write(&format!("{label}.{}", format.extension()), &encode_mesh(mesh, format))?;
        }
    }

    let report = PipelineReport {
        schema_version: PIPELINE_REPORT_SCHEMA_VERSION,
        splat_count: inputs.cloud.len(),
        view_count: inputs.views.len(),
        labels: field.labels.clone(),
        lift,
        partitions: processed.iter().map(|pp| pp.summary.clone()).collect(),
    };
    out.write_json("pipeline_report.json", &report)?;

    if cfg.eval.enabled {
        let metrics = pipeline_metrics(&cfg.eval, &field, &processed)?;
        out.write_json("metrics.json", &metrics)?;
    }
    Ok(report)
}

fn pipeline_metrics(
    eval: &EvalConfig,
    field: &LabelField,
    processed: &[ProcessedPartition],
) -> Result<PipelineMetrics, CliError> {
    let consistency = field_consistency(field, eval.high_confidence).stage("eval")?;
    let mut geometry = Vec::new();
    if let Some(gt_dir) = &eval.gt_dir {
        for pp in processed {
            let label = &pp.summary.label;
            let Some(path) = find_cloud(gt_dir, label) else {
                warn!("no ground truth for '{label}' under {}", gt_dir.display());
                continue;
            };
            if pp.cloud.is_empty() {
                warn!("'{label}' is empty after cleaning; no geometry metrics");
                continue;
            }
            let gt = load_ply::<f64>(&path).stage("eval")?;
            let fidelity = geometric_fidelity(
                &pp.cloud.positions(),
                &gt.positions(),
                eval.chamfer_resolution,
                eval.match_threshold,
            )
            .stage("eval")?;
            geometry.push(LabelGeometry {
                label: label.clone(),
                fidelity,
            });
        }
    }
    Ok(PipelineMetrics {
        schema_version: 1,
        consistency: (&consistency).into(),
        geometry,
    })
}
