//! Splat cleaning stages: opacity and needle filters, statistical outlier
//! removal and largest-cluster connectivity pruning.
//!
//! Every stage is a pure filter. Survivors keep their relative order and
//! [`Cleaned::kept`] maps them back to indices of the input cloud.

use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbscan::dbscan;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;
use crate::splat::SplatCloud;

pub const CLEAN_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig<T> {
    pub alpha_min: T,
    pub needle_ratio_max: T,
    pub sor_k: usize,
    pub sor_std_ratio: T,
    pub dbscan_eps: T,
    pub dbscan_min_samples: usize,
}

impl<T: Real> Default for CleanConfig<T> {
    fn default() -> Self {
        Self {
            alpha_min: T::lit(0.1),
            needle_ratio_max: T::lit(10.0),
            sor_k: 16,
            sor_std_ratio: T::lit(2.0),
            dbscan_eps: T::lit(0.02),
            dbscan_min_samples: 10,
        }
    }
}

impl<T: Real> CleanConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("clean config: {m}")));
        if !(self.alpha_min >= T::zero() && self.alpha_min <= T::one()) {
            return bad("alpha_min must lie in [0, 1]");
        }
        if !(self.needle_ratio_max > T::one()) {
            return bad("needle_ratio_max must be > 1");
        }
        if self.sor_k == 0 || self.dbscan_min_samples == 0 {
            return bad("sor_k and dbscan_min_samples must be positive");
        }
        if !(self.sor_std_ratio > T::zero()) {
            return bad("sor_std_ratio must be > 0");
        }
        if !(self.dbscan_eps > T::zero()) {
            return bad("dbscan_eps must be > 0");
        }
        Ok(())
    }
}

/// Which stages [`clean_pipeline`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageMask {
    pub opacity: bool,
    pub needle: bool,
    pub sor: bool,
    pub connectivity: bool,
}

impl StageMask {
    pub const NONE: Self = Self {
        opacity: false,
        needle: false,
        sor: false,
        connectivity: false,
    };
    pub const DENOISE_ONLY: Self = Self {
        opacity: true,
        needle: true,
        sor: false,
        connectivity: false,
    };
    pub const CLUSTER_ONLY: Self = Self {
        opacity: false,
        needle: false,
        sor: false,
        connectivity: true,
    };
    pub const FULL: Self = Self {
        opacity: true,
        needle: true,
        sor: true,
        connectivity: true,
    };

    /// The four ablation rows in table order.
    pub const ABLATION: [(&'static str, Self); 4] = [
        ("original", Self::NONE),
        ("denoise-only", Self::DENOISE_ONLY),
        ("cluster-only", Self::CLUSTER_ONLY),
        ("full", Self::FULL),
    ];
}

impl FromStr for StageMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "original" => Ok(Self::NONE),
            "denoise-only" | "denoise" => Ok(Self::DENOISE_ONLY),
            "cluster-only" | "cluster" => Ok(Self::CLUSTER_ONLY),
            "full" => Ok(Self::FULL),
            _ => Err(Error::Argument(format!(
                "unknown stage mask '{s}' (none, denoise-only, cluster-only, full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub schema_version: u32,
    pub input_count: usize,
    pub output_count: usize,
    pub removed_by_opacity: usize,
    pub removed_by_needle: usize,
    pub removed_by_sor: usize,
    pub removed_by_connectivity: usize,
    pub clusters_found: usize,
    pub largest_cluster_size: usize,
    /// Connectivity pruning found no cluster at all and removed everything.
    pub fully_pruned: bool,
    /// SOR was requested but skipped because the cloud was too small.
    pub sor_skipped: bool,
}

impl CleanReport {
    fn new(input_count: usize) -> Self {
        Self {
            schema_version: CLEAN_REPORT_SCHEMA_VERSION,
            input_count,
            output_count: input_count,
            ..Self::default()
        }
    }

    pub fn total_removed(&self) -> usize {
        self.removed_by_opacity + self.removed_by_needle + self.removed_by_sor + self.removed_by_connectivity
    }
}

/// A filtered cloud plus, for each survivor, its index in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Cleaned<T> {
    pub cloud: SplatCloud<T>,
    pub kept: Vec<usize>,
}

impl<T: Real> Cleaned<T> {
    fn identity(cloud: &SplatCloud<T>) -> Self {
        Self {
            cloud: cloud.clone(),
            kept: (0..cloud.len()).collect(),
        }
    }

    fn from_keep(cloud: &SplatCloud<T>, keep: &[bool]) -> (Self, usize) {
        let kept: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
        let removed = cloud.len() - kept.len();
        (
            Self {
                cloud: cloud.select(&kept),
                kept,
            },
            removed,
        )
    }

    /// Composes with a later filter whose indices refer to `self.cloud`.
    fn then(self, next: Cleaned<T>) -> Self {
        Self {
            kept: next.kept.iter().map(|&i| self.kept[i]).collect(),
            cloud: next.cloud,
        }
    }
}

/// Keeps splats with activated opacity `>= alpha_min`.
pub fn opacity_filter<T: Real>(cloud: &SplatCloud<T>, alpha_min: T) -> (Cleaned<T>, usize) {
    let keep: Vec<bool> = cloud.iter().map(|s| s.opacity() >= alpha_min).collect();
    Cleaned::from_keep(cloud, &keep)
}

/// Drops splats whose anisotropy ratio exceeds `ratio_max`.
pub fn needle_filter<T: Real>(cloud: &SplatCloud<T>, ratio_max: T) -> (Cleaned<T>, usize) {
    let keep: Vec<bool> = cloud.iter().map(|s| s.anisotropy_ratio() <= ratio_max).collect();
    Cleaned::from_keep(cloud, &keep)
}

/// Mean distance from each point to its `k` nearest neighbours (self
/// excluded).
pub fn mean_knn_distances<T: Real>(cloud: &SplatCloud<T>, k: usize) -> Vec<T> {
    let pts = cloud.positions();
    let tree = KdTree::new(&pts);
    pts.par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let nb: Vec<T> = tree
                .knn(p, k + 1)
                .into_iter()
                .filter(|n| n.index != i)
                .take(k)
                .map(|n| n.dist_sq.sqrt())
                .collect();
            nb.iter().copied().sum::<T>() / T::from_usize_lossy(nb.len().max(1))
        })
        .collect()
}

/// Statistical outlier removal: drops splats whose mean k-NN distance
/// exceeds the global mean by more than `std_ratio` standard deviations.
/// Clouds with at most `k` splats are returned unchanged.
pub fn sor_filter<T: Real>(cloud: &SplatCloud<T>, k: usize, std_ratio: T) -> (Cleaned<T>, usize) {
    if cloud.len() <= k {
        warn!("SOR skipped: {} splats is not more than k = {k}", cloud.len());
        return (Cleaned::identity(cloud), 0);
    }
    let d = mean_knn_distances(cloud, k);
    let n = d.len() as f64;
    let mean = d.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = d.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let limit = mean + std_ratio.as_f64() * var.sqrt();
    let keep: Vec<bool> = d.iter().map(|v| v.as_f64() <= limit).collect();
    Cleaned::from_keep(cloud, &keep)
}

/// Keeps only the largest 3-D DBSCAN cluster; noise is always dropped.
pub fn connectivity_prune<T: Real>(cloud: &SplatCloud<T>, eps: T, min_samples: usize) -> (Cleaned<T>, CleanReport) {
    let mut report = CleanReport::new(cloud.len());
    let c = dbscan(&cloud.positions(), eps, min_samples);
    report.clusters_found = c.n_clusters;
    let keep: Vec<bool> = match c.largest() {
        Some(big) => c.labels.iter().map(|l| *l == Some(big)).collect(),
        None => {
            if !cloud.is_empty() {
                warn!("connectivity pruning found only noise; eps {eps} may be mis-scaled");
                report.fully_pruned = true;
            }
            vec![false; cloud.len()]
        }
    };
    let (out, removed) = Cleaned::from_keep(cloud, &keep);
    report.removed_by_connectivity = removed;
    report.largest_cluster_size = out.cloud.len();
    report.output_count = out.cloud.len();
    (out, report)
}

/// Runs the enabled stages in the order opacity, needle, SOR, connectivity.
pub fn clean_pipeline<T: Real>(
    cloud: &SplatCloud<T>,
    cfg: &CleanConfig<T>,
    stages: StageMask,
) -> Result<(Cleaned<T>, CleanReport)> {
    cfg.validate()?;
    let mut report = CleanReport::new(cloud.len());
    let mut cur = Cleaned::identity(cloud);
    if stages.opacity {
        let (next, removed) = opacity_filter(&cur.cloud, cfg.alpha_min);
        report.removed_by_opacity = removed;
        cur = cur.then(next);
    }
    if stages.needle {
        let (next, removed) = needle_filter(&cur.cloud, cfg.needle_ratio_max);
        report.removed_by_needle = removed;
        cur = cur.then(next);
    }
    if stages.sor {
        report.sor_skipped = cur.cloud.len() <= cfg.sor_k;
        let (next, removed) = sor_filter(&cur.cloud, cfg.sor_k, cfg.sor_std_ratio);
        report.removed_by_sor = removed;
        cur = cur.then(next);
    }
    if stages.connectivity {
        let (next, r) = connectivity_prune(&cur.cloud, cfg.dbscan_eps, cfg.dbscan_min_samples);
        report.removed_by_connectivity = r.removed_by_connectivity;
        report.clusters_found = r.clusters_found;
        report.largest_cluster_size = r.largest_cluster_size;
        report.fully_pruned = r.fully_pruned;
        cur = cur.then(next);
    }
    report.output_count = cur.cloud.len();
    debug_assert_eq!(report.input_count - report.total_removed(), report.output_count);
    Ok((cur, report))
}
