//! Evaluation reports: prediction against ground truth, the cleaning
//! ablation, and the consensus divisor sweep.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use splat2twin::clean::{clean_pipeline, CleanReport, StageMask};
use splat2twin::metrics::{
    field_consistency, foreground_count, geometric_fidelity, ghost_index_from_fields, miou_2d, GeomFidelity,
};
use splat2twin::ply::load_ply;
use splat2twin::projection::{load_cameras, render_depth_maps};
use splat2twin::semantics::vote;
use splat2twin::{CleanSettings, MaskSet, Point, VoteSettings};

use crate::config::EvalConfig;
use crate::error::{CliError, StageContext};
use crate::pipeline::{load_inputs, Inputs};

pub const EVAL_REPORT_SCHEMA_VERSION: u32 = 1;

pub const SWEEP_DIVISORS: [f64; 5] = [2.0, 1.8, 1.5, 1.2, 1.0];

/// `<dir>/<label>.ply`, else `<dir>/gt/<label>.ply`.
pub fn find_cloud(dir: &Path, label: &str) -> Option<PathBuf> {
    [
        dir.join(format!("{label}.ply")),
        dir.join("gt").join(format!("{label}.ply")),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

/// Labels with a point cloud in `dir` or `dir/gt`, skipping raw `splats.ply`.
pub fn cloud_labels(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut labels = BTreeSet::new();
    for d in [dir.to_path_buf(), dir.join("gt")] {
        let Ok(listing) = std::fs::read_dir(&d) else { continue };
        for entry in listing {
            let path = entry.map_err(|e| CliError::input(&d, e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("ply") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if stem != "splats" {
                    labels.insert(stem.to_string());
                }
            }
        }
    }
    Ok(labels.into_iter().collect())
}

fn load_points(path: &Path) -> Result<Vec<Point>, CliError> {
    Ok(load_ply::<f64>(path).stage("eval")?.positions())
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelRow {
    pub label: String,
    pub pred_points: usize,
    pub gt_points: usize,
    #[serde(flatten)]
    pub fidelity: GeomFidelity,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub geometry: Vec<LabelRow>,
    /// Present when both directories hold a `masks/` set.
    pub miou: Option<f64>,
}

/// Compares every labelled cloud in `pred` with its ground truth in `gt`.
pub fn evaluate_dirs(pred: &Path, gt: &Path, cfg: &EvalConfig) -> Result<EvalReport, CliError> {
    for d in [pred, gt] {
        if !d.is_dir() {
            return Err(CliError::input(d, "directory not found"));
        }
    }
    let labels = cloud_labels(pred)?;
    if labels.is_empty() {
        return Err(CliError::input(pred, "no labelled point clouds to evaluate"));
    }
    let mut geometry = Vec::new();
    for label in labels {
        let pred_path = find_cloud(pred, &label).expect("label came from a listing");
        let gt_path = find_cloud(gt, &label)
            .ok_or_else(|| CliError::input(&gt.join("gt").join(format!("{label}.ply")), "ground truth missing"))?;
        let (p, g) = (load_points(&pred_path)?, load_points(&gt_path)?);
        if p.is_empty() || g.is_empty() {
            info!("{label}: empty cloud, skipped");
            continue;
        }
        let fidelity = geometric_fidelity(&p, &g, cfg.chamfer_resolution, cfg.match_threshold).stage("eval")?;
        geometry.push(LabelRow {
            label,
            pred_points: p.len(),
            gt_points: g.len(),
            fidelity,
        });
    }
    let miou = match (pred.join("masks"), gt.join("masks")) {
        (pm, gm) if pm.is_dir() && gm.is_dir() => {
            let cams = [pred.join("cameras.json"), gt.join("cameras.json")]
                .into_iter()
                .find(|p| p.is_file())
                .ok_or_else(|| CliError::input(&gt.join("cameras.json"), "mIoU needs the camera file"))?;
            let views = load_cameras::<f64>(&cams).stage("eval")?;
            let pm = MaskSet::load_dir(&pm, &views).stage("eval")?;
            let gm = MaskSet::load_dir(&gm, &views).stage("eval")?;
            Some(miou_2d(&pm, &gm).stage("eval")?)
        }
        _ => None,
    };
    Ok(EvalReport {
        schema_version: EVAL_REPORT_SCHEMA_VERSION,
        geometry,
        miou,
    })
}

pub fn render_eval_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>10} {:>8} {:>8} {:>8}", "label", "chamfer", "P", "R", "F1");
    for row in &r.geometry {
        let f = &row.fidelity;
        let _ = writeln!(
            s,
            "{:<16} {:>10.6} {:>8.4} {:>8.4} {:>8.4}",
            row.label, f.chamfer, f.precision, f.recall, f.f1
        );
    }
    if let Some(m) = r.miou {
        let _ = writeln!(s, "mIoU {m:.4}");
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub method: String,
    pub stages: StageMask,
    pub kept: usize,
    pub clean: CleanReport,
    #[serde(flatten)]
    pub fidelity: GeomFidelity,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub input_count: usize,
    pub gt_points: usize,
    pub rows: Vec<AblationRow>,
}

/// Union of all ground-truth clouds in `gt`.
pub fn ground_truth_points(gt: &Path) -> Result<Vec<Point>, CliError> {
    let labels = cloud_labels(gt)?;
    if labels.is_empty() {
        return Err(CliError::input(&gt.join("gt"), "no ground-truth point clouds"));
    }
    let mut all = Vec::new();
    for label in labels {
        all.extend(load_points(&find_cloud(gt, &label).expect("listed"))?);
    }
    Ok(all)
}

/// Cleans the raw cloud under each ablation stage mask and scores it
/// against the ground-truth surface.
pub fn ablation(splats: &Path, gt: &Path, clean: &CleanSettings, cfg: &EvalConfig) -> Result<AblationReport, CliError> {
    if !splats.is_file() {
        return Err(CliError::input(splats, "file not found"));
    }
    let cloud = load_ply::<f64>(splats).stage("load")?;
    let gt_points = ground_truth_points(gt)?;
    let mut rows = Vec::new();
    for (name, stages) in StageMask::ABLATION {
        let (cleaned, report) = clean_pipeline(&cloud, clean, stages).stage("clean")?;
        if cleaned.cloud.is_empty() {
            return Err(CliError::stage("clean", format!("{name}: every splat was removed")));
        }
        let fidelity = geometric_fidelity(
            &cleaned.cloud.positions(),
            &gt_points,
            cfg.chamfer_resolution,
            cfg.match_threshold,
        )
        .stage("eval")?;
        info!(
            "ablation {name}: chamfer {:.6}, F1 {:.4}",
            fidelity.chamfer, fidelity.f1
        );
        rows.push(AblationRow {
            method: name.into(),
            stages,
            kept: cleaned.cloud.len(),
            clean: report,
            fidelity,
        });
    }
    Ok(AblationReport {
        schema_version: EVAL_REPORT_SCHEMA_VERSION,
        input_count: cloud.len(),
        gt_points: gt_points.len(),
        rows,
    })
}

pub fn render_ablation_table(r: &AblationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>10} {:>8} {:>8} {:>8}",
        "method", "kept", "chamfer", "P", "R", "F1"
    );
    for row in &r.rows {
        let f = &row.fidelity;
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>10.6} {:>8.4} {:>8.4} {:>8.4}",
            row.method, row.kept, f.chamfer, f.precision, f.recall, f.f1
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub divisor: f64,
    pub foreground_points: usize,
    pub consistent_fraction: f64,
    pub valid_point_count: usize,
    pub ghost_index: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    /// Ghost index baseline: the strictest divisor in the sweep.
    pub reference_divisor: f64,
    pub rows: Vec<SweepRow>,
}

/// Single-pass votes at each divisor over shared depth maps. Consistency is
/// measured over object-labelled splats; the ghost index compares each
/// divisor with the strictest one.
pub fn divisor_sweep(
    inputs: &Inputs,
    vote_cfg: &VoteSettings,
    divisors: &[f64],
    high_conf: f64,
) -> Result<SweepReport, CliError> {
    if divisors.is_empty() {
        return Err(CliError::config("divisor sweep needs at least one divisor"));
    }
    let depth_maps = render_depth_maps(&inputs.views, &inputs.cloud, vote_cfg.render_alpha_min);
    let mut fields = Vec::new();
    for &d in divisors {
        let cfg = VoteSettings {
            threshold_divisor: d,
            ..*vote_cfg
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        fields.push(vote(&inputs.cloud, &inputs.views, &inputs.masks, &cfg, &depth_maps).stage("lift")?);
    }
    let strictest = (0..divisors.len())
        .min_by(|&a, &b| divisors[a].total_cmp(&divisors[b]))
        .expect("non-empty");
    let mut rows = Vec::new();
    for (i, &d) in divisors.iter().enumerate() {
        let c = field_consistency(&fields[i], high_conf).stage("eval")?;
        rows.push(SweepRow {
            divisor: d,
            foreground_points: foreground_count(&fields[i]),
            consistent_fraction: c.dataset_consistent_fraction,
            valid_point_count: c.valid_point_count,
            ghost_index: ghost_index_from_fields(&fields[i], &fields[strictest]),
        });
    }
    Ok(SweepReport {
        schema_version: EVAL_REPORT_SCHEMA_VERSION,
        reference_divisor: divisors[strictest],
        rows,
    })
}

/// Sweep over a scene directory holding `splats.ply`, `cameras.json` and `masks/`.
pub fn sweep_dir(dir: &Path, vote_cfg: &VoteSettings, high_conf: f64) -> Result<SweepReport, CliError> {
    let (s, c, m) = (dir.join("splats.ply"), dir.join("cameras.json"), dir.join("masks"));
    for f in [&s, &c] {
        if !f.is_file() {
            return Err(CliError::input(f, "file not found"));
        }
    }
    if !m.is_dir() {
        return Err(CliError::input(&m, "masks directory not found"));
    }
    let inputs = load_inputs(&s, &c, &m)?;
    divisor_sweep(&inputs, vote_cfg, &SWEEP_DIVISORS, high_conf)
}

pub fn render_sweep_table(r: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>12} {:>14} {:>10}",
        "tau", "foreground", "consistency %", "ghost %"
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>14.2} {:>10.2}",
            format!("N/{}", row.divisor),
            row.foreground_points,
            row.consistent_fraction,
            row.ghost_index
        );
    }
    s
}
