//! Multi-view semantic lifting: per-view depth-cluster gating, consensus
//! voting over visible views, KNN boundary smoothing and the iterative loop
//! that re-renders depth maps between passes.

use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbscan::dbscan_1d;
use crate::error::{Error, Result};
use crate::mask::{Mask, MaskSet};
use crate::projection::{render_depth_subset, visible_projection, CameraView, DepthMap};
use crate::scalar::Real;
use crate::spatial::KdTree;
use crate::splat::SplatCloud;

pub const LABEL_FIELD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig<T> {
    /// τ_consensus = visible views / divisor.
    pub threshold_divisor: T,
    pub tau_depth: T,
    pub gate_eps: T,
    pub gate_min_samples: usize,
    pub max_iter: usize,
    pub knn_k: usize,
    pub knn_flip_fraction: T,
    /// Opacity gate applied when rendering the visibility depth maps.
    pub render_alpha_min: T,
}

impl<T: Real> Default for VoteConfig<T> {
    fn default() -> Self {
        Self {
            threshold_divisor: T::lit(1.5),
            tau_depth: T::lit(0.005),
            gate_eps: T::lit(0.02),
            gate_min_samples: 10,
            max_iter: 3,
            knn_k: 10,
            knn_flip_fraction: T::lit(0.7),
            render_alpha_min: T::lit(0.1),
        }
    }
}

impl<T: Real> VoteConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("vote config: {m}")));
        if !(self.threshold_divisor >= T::one()) {
            return bad(&format!(
                "threshold_divisor must be >= 1, got {}",
                self.threshold_divisor
            ));
        }
        if !(self.tau_depth > T::zero()) {
            return bad("tau_depth must be > 0");
        }
        if !(self.gate_eps > T::zero()) {
            return bad("gate_eps must be > 0");
        }
        if self.gate_min_samples == 0 || self.max_iter == 0 || self.knn_k == 0 {
            return bad("gate_min_samples, max_iter and knn_k must be positive");
        }
        if !(self.knn_flip_fraction > T::lit(0.5) && self.knn_flip_fraction <= T::one()) {
            return bad("knn_flip_fraction must lie in (0.5, 1]");
        }
        if !(self.render_alpha_min >= T::zero() && self.render_alpha_min <= T::one()) {
            return bad("render_alpha_min must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Result of gating one mask in one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    /// Per-splat gate weight (`true` = 1).
    pub weights: Vec<bool>,
    /// Visible splats whose pixel lies inside the mask.
    pub in_mask: usize,
    /// Fewer in-mask splats than `gate_min_samples`; every gate is 0.
    pub underpopulated: bool,
}

/// Gate over a list of depths: `None` when fewer than `min_samples` values,
/// otherwise membership of the largest 1-D DBSCAN cluster. Ties between
/// equally large clusters go to the nearer one (smaller mean depth).
///
/// The result depends only on the multiset of depths, not on their order.
pub fn gate_depths<T: Real>(depths: &[T], eps: T, min_samples: usize) -> Option<Vec<bool>> {
    if depths.len() < min_samples {
        return None;
    }
    let mut order: Vec<usize> = (0..depths.len()).collect();
    order.sort_by(|&a, &b| depths[a].partial_cmp(&depths[b]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<T> = order.iter().map(|&i| depths[i]).collect();
    let c = dbscan_1d(&sorted, eps, min_samples);
    let mut out = vec![false; depths.len()];
    if c.n_clusters == 0 {
        return Some(out);
    }
    let mut size = vec![0usize; c.n_clusters];
    let mut sum = vec![0f64; c.n_clusters];
    for (k, l) in c.labels.iter().enumerate() {
        if let Some(l) = *l {
            size[l] += 1;
            sum[l] += sorted[k].as_f64();
        }
    }
    let best = (0..c.n_clusters)
        .min_by(|&a, &b| {
            size[b].cmp(&size[a]).then(
                (sum[a] / size[a] as f64)
                    .partial_cmp(&(sum[b] / size[b] as f64))
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
        })
        .expect("at least one cluster");
    for (k, l) in c.labels.iter().enumerate() {
        if *l == Some(best) {
            out[order[k]] = true;
        }
    }
    Some(out)
}

/// Depth-cluster gate for one view and one mask. Candidates are the splats
/// that pass the visibility test and land inside the mask.
pub fn depth_cluster_gate<T: Real>(
    view: &CameraView<T>,
    cloud: &SplatCloud<T>,
    mask: &Mask,
    depth_map: &DepthMap<T>,
    cfg: &VoteConfig<T>,
) -> Gate {
    let mut idx = Vec::new();
    let mut depths = Vec::new();
    for (i, s) in cloud.iter().enumerate() {
        if let Some(p) = visible_projection(view, depth_map, s.position, cfg.tau_depth) {
            let (px, py) = p.pixel();
            if mask.get(px, py) {
                idx.push(i);
                depths.push(p.depth);
            }
        }
    }
    gate_candidates(cloud.len(), &idx, &depths, cfg)
}

fn gate_candidates<T: Real>(n: usize, idx: &[usize], depths: &[T], cfg: &VoteConfig<T>) -> Gate {
    let mut weights = vec![false; n];
    match gate_depths(depths, cfg.gate_eps, cfg.gate_min_samples) {
        Some(w) => {
            for (k, &i) in idx.iter().enumerate() {
                weights[i] = w[k];
            }
            Gate {
                weights,
                in_mask: idx.len(),
                underpopulated: false,
            }
        }
        None => Gate {
            weights,
            in_mask: idx.len(),
            underpopulated: !idx.is_empty(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    /// Index into [`LabelField::labels`]; 0 is background.
    pub label: usize,
    /// Gated votes for the assigned object label, or for the best-scoring
    /// object label when the splat is background.
    pub weighted_votes: f64,
    /// N_p: views in which the splat passes the visibility test.
    pub visible_views: u32,
    /// N_p^fg: visible views whose mask (same label as `weighted_votes`)
    /// contains the splat's pixel.
    pub foreground_views: u32,
    /// Label was changed by KNN boundary refinement, so it need not agree
    /// with the vote threshold.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub labels: Vec<String>,
    pub entries: Vec<LabelEntry>,
    /// Per-splat (votes, in-mask views) for every object label, flattened
    /// as `[splat][label - 1]`.
    tallies: Vec<(u32, u32)>,
    /// (view, label) pairs that were too sparse to gate.
    pub underpopulated_gates: usize,
}

impl LabelField {
    /// Every splat background with no evidence.
    pub fn background(n: usize, labels: &[String]) -> Self {
        let n_obj = labels.len().saturating_sub(1);
        Self {
            labels: labels.to_vec(),
            entries: vec![
                LabelEntry {
                    label: 0,
                    weighted_votes: 0.0,
                    visible_views: 0,
                    foreground_views: 0,
                    refined: false,
                };
                n
            ],
            tallies: vec![(0, 0); n * n_obj],
            underpopulated_gates: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn n_obj(&self) -> usize {
        self.labels.len() - 1
    }

    /// (votes, in-mask views) of splat `i` for object label `label`.
    pub fn tally(&self, i: usize, label: usize) -> (u32, u32) {
        assert!(label >= 1 && label < self.labels.len());
        self.tallies[i * self.n_obj() + label - 1]
    }

    pub fn label_name(&self, i: usize) -> &str {
        &self.labels[self.entries[i].label]
    }

    pub fn object_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label != 0).count()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            labels: &'a [String],
            underpopulated_gates: usize,
            entries: Vec<Row<'a>>,
        }
        #[derive(Serialize)]
        struct Row<'a> {
            label: &'a str,
            weighted_votes: f64,
            visible_views: u32,
            foreground_views: u32,
            refined: bool,
        }
        let doc = Doc {
            schema_version: LABEL_FIELD_SCHEMA_VERSION,
            labels: &self.labels,
            underpopulated_gates: self.underpopulated_gates,
            entries: self
                .entries
                .iter()
                .map(|e| Row {
                    label: &self.labels[e.label],
                    weighted_votes: e.weighted_votes,
                    visible_views: e.visible_views,
                    foreground_views: e.foreground_views,
                    refined: e.refined,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("label field serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

struct ViewTally {
    visible: Vec<bool>,
    /// Per object label: (gate weight, in-mask) for each splat.
    per_label: Vec<Option<(Vec<bool>, Vec<bool>)>>,
    underpopulated: usize,
}

fn tally_view<T: Real>(
    view: &CameraView<T>,
    cloud: &SplatCloud<T>,
    masks: &MaskSet,
    depth_map: &DepthMap<T>,
    cfg: &VoteConfig<T>,
) -> ViewTally {
    let n = cloud.len();
    let proj: Vec<Option<(u32, u32, T)>> = cloud
        .iter()
        .map(|s| {
            visible_projection(view, depth_map, s.position, cfg.tau_depth).map(|p| {
                let (px, py) = p.pixel();
                (px, py, p.depth)
            })
        })
        .collect();
    let visible = proj.iter().map(Option::is_some).collect();
    let mut underpopulated = 0;
    let per_label = masks
        .object_labels()
        .map(|(l, _)| {
            let mask = masks.get(&view.view_id, l)?;
            let mut in_mask = vec![false; n];
            let mut idx = Vec::new();
            let mut depths = Vec::new();
            for (i, p) in proj.iter().enumerate() {
                if let Some((px, py, d)) = *p {
                    if mask.get(px, py) {
                        in_mask[i] = true;
                        idx.push(i);
                        depths.push(d);
                    }
                }
            }
            let gate = gate_candidates(n, &idx, &depths, cfg);
            if gate.underpopulated {
                underpopulated += 1;
                debug!(
                    "view {}: only {} splats in mask '{}', gate disabled",
                    view.view_id,
                    gate.in_mask,
                    masks.labels()[l]
                );
            }
            Some((gate.weights, in_mask))
        })
        .collect();
    ViewTally {
        visible,
        per_label,
        underpopulated,
    }
}

/// Consensus vote over all views.
///
/// A splat takes the object label with the highest gated score provided
/// that score reaches `visible_views / threshold_divisor`; ties go to the
/// earlier label. Splats seen by no view are background.
pub fn vote<T: Real>(
    cloud: &SplatCloud<T>,
    views: &[CameraView<T>],
    masks: &MaskSet,
    cfg: &VoteConfig<T>,
    depth_maps: &[DepthMap<T>],
) -> Result<LabelField> {
    cfg.validate()?;
    if depth_maps.len() != views.len() {
        return Err(Error::Argument(format!(
            "{} depth maps for {} views",
            depth_maps.len(),
            views.len()
        )));
    }
    let n = cloud.len();
    let n_obj = masks.labels().len() - 1;
    let tallies: Vec<ViewTally> = views
        .par_iter()
        .zip(depth_maps.par_iter())
        .map(|(v, d)| tally_view(v, cloud, masks, d, cfg))
        .collect();

    let mut field = LabelField::background(n, masks.labels());
    let mut visible = vec![0u32; n];
    for t in &tallies {
        field.underpopulated_gates += t.underpopulated;
        for (i, &vis) in t.visible.iter().enumerate() {
            visible[i] += vis as u32;
        }
        for (l, pl) in t.per_label.iter().enumerate() {
            if let Some((w, m)) = pl {
                for i in 0..n {
                    let cell = &mut field.tallies[i * n_obj + l];
                    cell.0 += w[i] as u32;
                    cell.1 += m[i] as u32;
                }
            }
        }
    }

    let divisor = cfg.threshold_divisor.as_f64();
    for i in 0..n {
        let row = &field.tallies[i * n_obj..(i + 1) * n_obj];
        let best = (0..n_obj).fold(None::<usize>, |acc, l| match acc {
            Some(b) if row[b].0 >= row[l].0 => Some(b),
            _ => Some(l),
        });
        let e = &mut field.entries[i];
        e.visible_views = visible[i];
        if let Some(b) = best {
            let (votes, fg) = row[b];
            e.weighted_votes = votes as f64;
            e.foreground_views = fg;
            let tau = visible[i] as f64 / divisor;
            if visible[i] > 0 && votes as f64 >= tau {
                e.label = b + 1;
            }
        }
    }
    Ok(field)
}

/// One synchronous KNN smoothing pass. A splat adopts the most common
/// differing label among its `knn_k` nearest neighbours (itself excluded)
/// when that label holds at least `knn_flip_fraction` of them.
pub fn knn_boundary_refine<T: Real>(
    cloud: &SplatCloud<T>,
    field: &LabelField,
    cfg: &VoteConfig<T>,
) -> Result<LabelField> {
    if field.len() != cloud.len() {
        return Err(Error::Argument(format!(
            "label field has {} entries for {} splats",
            field.len(),
            cloud.len()
        )));
    }
    let n_labels = field.labels.len();
    let positions = cloud.positions();
    let tree = KdTree::new(&positions);
    let frac = cfg.knn_flip_fraction.as_f64();
    let flips: Vec<Option<usize>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let own = field.entries[i].label;
            let mut counts = vec![0usize; n_labels];
            let mut total = 0usize;
            for nb in tree
                .knn(positions[i], cfg.knn_k + 1)
                .into_iter()
                .filter(|nb| nb.index != i)
                .take(cfg.knn_k)
            {
                counts[field.entries[nb.index].label] += 1;
                total += 1;
            }
            if total == 0 {
                return None;
            }
            let (best, &c) = counts
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != own)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
            (c > 0 && c as f64 >= frac * total as f64).then_some(best)
        })
        .collect();

    let mut out = field.clone();
    let n_obj = n_labels - 1;
    for (i, f) in flips.into_iter().enumerate() {
        if let Some(l) = f {
            let e = &mut out.entries[i];
            e.label = l;
            e.refined = true;
            if l != 0 {
                let (votes, fg) = out.tallies[i * n_obj + l - 1];
                e.weighted_votes = votes as f64;
                e.foreground_views = fg;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    pub field: LabelField,
    /// Labels changed in each iteration; iterations skipped after
    /// convergence report zero.
    pub changes: Vec<usize>,
    pub iterations_run: usize,
}

/// Iterated vote and refinement.
///
/// Iteration 1 renders visibility depth maps from the full cloud. Later
/// iterations render from the object and background partitions of the
/// previous field, leaving out splats that no view saw, so unobserved
/// clutter stops occluding. The consensus threshold is recomputed from the
/// new visibility counts each time.
pub fn iterative_lift<T: Real>(
    cloud: &SplatCloud<T>,
    views: &[CameraView<T>],
    masks: &MaskSet,
    cfg: &VoteConfig<T>,
) -> Result<LiftResult> {
    cfg.validate()?;
    masks.validate(views)?;
    let mut field = LabelField::background(cloud.len(), masks.labels());
    let mut changes = vec![0; cfg.max_iter];
    let mut iterations_run = 0;
    for it in 0..cfg.max_iter {
        let depth_maps: Vec<DepthMap<T>> = views
            .par_iter()
            .map(|v| {
                if it == 0 {
                    render_depth_subset(v, cloud, cfg.render_alpha_min, |_| true)
                } else {
                    render_depth_subset(v, cloud, cfg.render_alpha_min, |i| field.entries[i].visible_views > 0)
                }
            })
            .collect();
        let voted = vote(cloud, views, masks, cfg, &depth_maps)?;
        let next = knn_boundary_refine(cloud, &voted, cfg)?;
        let changed = next
            .entries
            .iter()
            .zip(&field.entries)
            .filter(|(a, b)| a.label != b.label)
            .count();
        changes[it] = changed;
        iterations_run = it + 1;
        field = next;
        debug!("lift iteration {}: {changed} labels changed", it + 1);
        if it > 0 && changed == 0 {
            break;
        }
    }
    if field.underpopulated_gates > 0 {
        warn!(
            "{} view/label masks held too few visible splats to gate",
            field.underpopulated_gates
        );
    }
    Ok(LiftResult {
        field,
        changes,
        iterations_run,
    })
}

#[derive(Debug, Clone)]
pub struct Partition<T> {
    pub label: String,
    pub cloud: SplatCloud<T>,
    /// Index of each splat in the source cloud.
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Partitions<T> {
    /// One per object label, in label order (possibly empty).
    pub objects: Vec<Partition<T>>,
    pub background: Partition<T>,
}

impl<T: Real> Partitions<T> {
    pub fn iter(&self) -> impl Iterator<Item = &Partition<T>> {
        self.objects.iter().chain(std::iter::once(&self.background))
    }
}

/// Splits the cloud by label, keeping source indices as provenance.
pub fn split_partitions<T: Real>(cloud: &SplatCloud<T>, field: &LabelField) -> Result<Partitions<T>> {
    if field.len() != cloud.len() {
        return Err(Error::Argument(format!(
            "label field has {} entries for {} splats",
            field.len(),
            cloud.len()
        )));
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); field.labels.len()];
    for (i, e) in field.entries.iter().enumerate() {
        buckets[e.label].push(i);
    }
    let mut parts: Vec<Partition<T>> = buckets
        .into_iter()
        .enumerate()
        .map(|(l, idx)| Partition {
            label: field.labels[l].clone(),
            cloud: cloud.select(&idx),
            source_indices: idx,
        })
        .collect();
    let background = parts.remove(0);
    Ok(Partitions {
        objects: parts,
        background,
    })
}
