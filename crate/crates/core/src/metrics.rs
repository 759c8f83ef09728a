//! Evaluation metrics: multi-view consistency, ghost index, Chamfer
//! distance, precision/recall/F1 and 2-D mIoU.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::mask::{Mask, MaskSet};
use crate::projection::{visible_projection, CameraView, DepthMap};
use crate::scalar::Real;
use crate::semantics::{vote, LabelField, VoteConfig};
use crate::spatial::KdTree;
use crate::splat::SplatCloud;

pub const DEFAULT_HIGH_CONFIDENCE: f64 = 0.8;
/// Voxel size for Chamfer downsampling, metres.
pub const DEFAULT_CHAMFER_RESOLUTION: f64 = 0.001;
/// Precision/recall match threshold, metres.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    /// `(N_p^fg, N_p)` per point.
    pub counts: Vec<(u32, u32)>,
    /// Percentage of valid points whose consistency reaches the threshold.
    pub dataset_consistent_fraction: f64,
    pub valid_point_count: usize,
    /// Points seen by no view; excluded from the fraction.
    pub unseen_point_count: usize,
    pub high_confidence: f64,
}

impl ConsistencyResult {
    fn from_counts(counts: Vec<(u32, u32)>, high_conf: f64) -> Self {
        let valid: Vec<&(u32, u32)> = counts.iter().filter(|c| c.1 > 0).collect();
        let consistent = valid
            .iter()
            .filter(|(fg, n)| *fg as f64 >= high_conf * *n as f64)
            .count();
        let fraction = if valid.is_empty() {
            0.0
        } else {
            100.0 * consistent as f64 / valid.len() as f64
        };
        Self {
            valid_point_count: valid.len(),
            unseen_point_count: counts.len() - valid.len(),
            counts,
            dataset_consistent_fraction: fraction,
            high_confidence: high_conf,
        }
    }

    /// `N_p^fg / N_p`, or `None` for unseen points.
    pub fn value(&self, i: usize) -> Option<f64> {
        let (fg, n) = self.counts[i];
        (n > 0).then(|| fg as f64 / n as f64)
    }
}

fn check_high_conf(high_conf: f64) -> Result<()> {
    if !(high_conf > 0.0 && high_conf <= 1.0) {
        return Err(Error::Argument(format!(
            "high-confidence threshold must be in (0, 1], got {high_conf}"
        )));
    }
    Ok(())
}

/// Per-point consistency from masks: `N_p` counts views in which the point
/// is visible, `N_p^fg` those where its pixel lies in any object mask.
pub fn consistency_score<T: Real>(
    cloud: &SplatCloud<T>,
    views: &[CameraView<T>],
    masks: &MaskSet,
    depth_maps: &[DepthMap<T>],
    tau_depth: T,
    high_conf: f64,
) -> Result<ConsistencyResult> {
    check_high_conf(high_conf)?;
    if depth_maps.len() != views.len() {
        return Err(Error::Argument(format!(
            "{} depth maps for {} views",
            depth_maps.len(),
            views.len()
        )));
    }
    let mut counts = vec![(0u32, 0u32); cloud.len()];
    for (view, dm) in views.iter().zip(depth_maps) {
        let fg = masks
            .object_labels()
            .filter_map(|(l, _)| masks.get(&view.view_id, l))
            .fold(None::<Mask>, |acc, m| {
                Some(acc.map_or_else(|| m.clone(), |a| a.union(m)))
            });
        for (c, s) in counts.iter_mut().zip(cloud.iter()) {
            if let Some(p) = visible_projection(view, dm, s.position, tau_depth) {
                c.1 += 1;
                let (x, y) = p.pixel();
                if fg.as_ref().is_some_and(|m| m.get(x, y)) {
                    c.0 += 1;
                }
            }
        }
    }
    Ok(ConsistencyResult::from_counts(counts, high_conf))
}

/// Consistency of the object-labelled splats of a voted field, measured
/// against each splat's own label.
pub fn field_consistency(field: &LabelField, high_conf: f64) -> Result<ConsistencyResult> {
    check_high_conf(high_conf)?;
    let counts = field
        .entries
        .iter()
        .filter(|e| e.label != 0)
        .map(|e| (e.foreground_views, e.visible_views))
        .collect();
    Ok(ConsistencyResult::from_counts(counts, high_conf))
}

/// Splats labelled as any object.
pub fn foreground_count(field: &LabelField) -> usize {
    field.entries.iter().filter(|e| e.label != 0).count()
}

/// `100 · (|FG_eval| − |FG_ref|) / n`, clamped below at zero.
pub fn ghost_index_from_fields(eval: &LabelField, reference: &LabelField) -> f64 {
    let n = eval.len();
    if n == 0 {
        return 0.0;
    }
    let diff = foreground_count(eval) as f64 - foreground_count(reference) as f64;
    (100.0 * diff / n as f64).max(0.0)
}

/// Votes at both divisors and compares the foreground sizes.
pub fn ghost_index<T: Real>(
    cloud: &SplatCloud<T>,
    views: &[CameraView<T>],
    masks: &MaskSet,
    cfg: &VoteConfig<T>,
    depth_maps: &[DepthMap<T>],
    divisor_eval: T,
    divisor_ref: T,
) -> Result<f64> {
    for d in [divisor_eval, divisor_ref] {
        if !(d >= T::one()) {
            return Err(Error::Argument(format!("ghost-index divisors must be >= 1, got {d}")));
        }
    }
    let at = |d: T| {
        let mut c = *cfg;
        c.threshold_divisor = d;
        vote(cloud, views, masks, &c, depth_maps)
    };
    Ok(ghost_index_from_fields(&at(divisor_eval)?, &at(divisor_ref)?))
}

/// Replaces the points of each occupied voxel by their centroid. Voxels are
/// emitted in key order; `resolution == 0` returns the input unchanged.
pub fn voxel_downsample<T: Real>(points: &[Vec3<T>], resolution: f64) -> Result<Vec<Vec3<f64>>> {
    if !(resolution >= 0.0) || !resolution.is_finite() {
        return Err(Error::Argument(format!(
            "resolution must be finite and >= 0, got {resolution}"
        )));
    }
    let pts = points.iter().map(|p| p.cast::<f64>());
    if resolution == 0.0 {
        return Ok(pts.collect());
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3<f64>, usize)> = BTreeMap::new();
    for p in pts {
        let key = [p.x, p.y, p.z].map(|c| (c / resolution).floor() as i64);
        let e = cells.entry(key).or_insert((Vec3::zero(), 0));
        e.0 += p;
        e.1 += 1;
    }
    Ok(cells.into_values().map(|(s, n)| s * (1.0 / n as f64)).collect())
}

fn nearest_distances(from: &[Vec3<f64>], to: &KdTree<f64>) -> Vec<f64> {
    from.iter()
        .map(|&p| to.nearest(p).map_or(f64::INFINITY, |n| n.dist_sq.sqrt()))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn non_empty<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument(format!(
            "point sets must be non-empty (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Symmetric Chamfer distance: the average of the two directed mean
/// nearest-neighbour distances, after voxel downsampling both sets.
pub fn chamfer<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>], resolution: f64) -> Result<f64> {
    non_empty(a, b)?;
    let a = voxel_downsample(a, resolution)?;
    let b = voxel_downsample(b, resolution)?;
    let (ta, tb) = (KdTree::new(&a), KdTree::new(&b));
    Ok((mean(&nearest_distances(&a, &tb)) + mean(&nearest_distances(&b, &ta))) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub match_threshold: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Precision: share of `pred` within `threshold` of some `gt` point;
/// recall: the converse.
pub fn precision_recall_f1<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>], threshold: f64) -> Result<PrecisionRecall> {
    non_empty(pred, gt)?;
    if !(threshold > 0.0) {
        return Err(Error::Argument(format!("match threshold must be > 0, got {threshold}")));
    }
    let p: Vec<Vec3<f64>> = pred.iter().map(|v| v.cast()).collect();
    let g: Vec<Vec3<f64>> = gt.iter().map(|v| v.cast()).collect();
    let (tp, tg) = (KdTree::new(&p), KdTree::new(&g));
    let share = |d: Vec<f64>| d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64;
    let precision = share(nearest_distances(&p, &tg));
    let recall = share(nearest_distances(&g, &tp));
    Ok(PrecisionRecall {
        precision,
        recall,
        f1: f1(precision, recall),
        match_threshold: threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomFidelity {
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub match_threshold: f64,
    pub chamfer_resolution: f64,
}

pub fn geometric_fidelity<T: Real>(
    pred: &[Vec3<T>],
    gt: &[Vec3<T>],
    resolution: f64,
    threshold: f64,
) -> Result<GeomFidelity> {
    let pr = precision_recall_f1(pred, gt, threshold)?;
    Ok(GeomFidelity {
        chamfer: chamfer(pred, gt, resolution)?,
        precision: pr.precision,
        recall: pr.recall,
        f1: pr.f1,
        match_threshold: threshold,
        chamfer_resolution: resolution,
    })
}

pub fn iou(a: &Mask, b: &Mask) -> Result<Option<f64>> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Argument(format!(
            "mask size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Mean IoU over every `(view, label)` present in either set; a mask
/// missing on one side counts as empty. Pairs with an empty union are
/// skipped.
pub fn miou_2d(pred: &MaskSet, gt: &MaskSet) -> Result<f64> {
    let keyed = |s: &MaskSet| -> BTreeMap<(String, String), Mask> {
        s.iter()
            .map(|(v, l, m)| ((v.to_string(), s.labels()[l].clone()), m.clone()))
            .collect()
    };
    let (p, g) = (keyed(pred), keyed(gt));
    let keys: BTreeSet<&(String, String)> = p.keys().chain(g.keys()).collect();
    let mut scores = Vec::new();
    for k in keys {
        let score = match (p.get(k), g.get(k)) {
            (Some(a), Some(b)) => iou(a, b)?,
            (Some(m), None) | (None, Some(m)) => (!m.is_empty()).then_some(0.0),
            (None, None) => unreachable!("key comes from one of the sets"),
        };
        scores.extend(score);
    }
    if scores.is_empty() {
        return Err(Error::Argument("no (view, label) pair has a non-empty mask".into()));
    }
    Ok(mean(&scores))
}
