//! Adaptive density control: error-driven cloning, gradient-driven
//! splitting, opacity pruning, and the budgeted application of all three to
//! a primitive set.
//!
//! Clone candidates are the union of two pools:
//!
//! * every Gaussian whose tracked mean window error exceeds `tau_avg`, and
//! * the top `ceil(peak_fraction * N)` Gaussians by tracked peak error.
//!
//! Splits require both a large accumulated screen-gradient and a footprint
//! above `scale_split_fraction` of the scene extent. Pruning removes
//! near-transparent Gaussians outright and always wins over clone/split
//! selection. When granting clones and splits would exceed `max_gaussians`,
//! clones are granted first in order of descending mean error, then splits
//! in order of descending screen-gradient; the rest are dropped.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fp;
use crate::gaussian::GaussianPrimitive;
use crate::math::Vec3;
use crate::{Error, Result};

/// Clone children are jittered by this fraction of the parent scale.
pub const CLONE_JITTER_FRACTION: f64 = 0.1;
/// Split children shrink by this factor.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Density-control thresholds and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdcConfig {
    /// Mean window-error threshold for cloning (strict).
    pub tau_avg: f64,
    /// Fraction of the population always cloned by peak error.
    pub peak_fraction: f64,
    /// Mean screen-gradient norm threshold for splitting (strict).
    pub tau_pos: f64,
    /// Split scale gate as a fraction of the scene extent.
    pub scale_split_fraction: f64,
    /// Opacity below which a Gaussian is pruned (strict).
    pub prune_opacity: f64,
    /// Iterations between densification events.
    pub densify_interval: u32,
    /// Hard cap on the population size.
    pub max_gaussians: usize,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig {
            tau_avg: 1e-3,
            peak_fraction: 0.03,
            tau_pos: 2e-4,
            scale_split_fraction: 0.01,
            prune_opacity: 0.005,
            densify_interval: 100,
            max_gaussians: 100_000,
        }
    }
}

/// Counts from one densification event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub dropped_clones: usize,
    pub dropped_splits: usize,
    pub total_after: usize,
}

/// Standard normal deviate via Box-Muller. The uniform draw is reflected to
/// (0, 1] so the logarithm is always finite.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    fp::sqrt(-2.0 * fp::ln(u1)) * fp::cos(2.0 * core::f64::consts::PI * u2)
}

/// Indices selected for cloning, ascending. `avg` and `peak` are the
/// tracked per-Gaussian window-error statistics.
pub fn clone_set(avg: &[f64], peak: &[f64], cfg: &AdcConfig) -> Result<Vec<usize>> {
    if avg.len() != peak.len() {
        return Err(Error::DimensionMismatch("clone_set avg vs peak"));
    }
    let n = avg.len();
    let mut selected = alloc::vec![false; n];
    for (i, &a) in avg.iter().enumerate() {
        if a > cfg.tau_avg {
            selected[i] = true;
        }
    }
    let k = fp::ceil(cfg.peak_fraction * n as f64) as usize;
    if k > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        // Descending peak, ties to the lower index (stable sort).
        order.sort_by(|&a, &b| peak[b].partial_cmp(&peak[a]).unwrap());
        for &i in order.iter().take(k.min(n)) {
            selected[i] = true;
        }
    }
    Ok((0..n).filter(|&i| selected[i]).collect())
}

/// Indices selected for splitting, ascending: screen-gradient above
/// `tau_pos` and footprint above the extent-relative scale gate.
pub fn split_set(
    pos_grad_avg: &[f64],
    max_scale: &[f64],
    extent: f64,
    cfg: &AdcConfig,
) -> Result<Vec<usize>> {
    if pos_grad_avg.len() != max_scale.len() {
        return Err(Error::DimensionMismatch("split_set grad vs scale"));
    }
    let gate = cfg.scale_split_fraction * extent;
    Ok((0..pos_grad_avg.len())
        .filter(|&i| pos_grad_avg[i] > cfg.tau_pos && max_scale[i] > gate)
        .collect())
}

/// Indices with opacity strictly below the prune threshold, ascending.
pub fn prune_set(opacities: &[f64], cfg: &AdcConfig) -> Vec<usize> {
    (0..opacities.len())
        .filter(|&i| opacities[i] < cfg.prune_opacity)
        .collect()
}

/// Order clone candidates for budget granting: mean error descending, then
/// peak error descending, then index ascending.
fn clone_priority(candidates: &[usize], avg: &[f64], peak: &[f64]) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        avg[b]
            .partial_cmp(&avg[a])
            .unwrap()
            .then(peak[b].partial_cmp(&peak[a]).unwrap())
            .then(a.cmp(&b))
    });
    order
}

/// Apply one densification event and return the counts.
///
/// Pruned indices are removed even when also selected elsewhere; an index
/// in both the clone and split sets is treated as a split. Children inherit
/// the parent's face binding and UV. Construction order is deterministic:
/// parents in input order, each granted clone directly after its parent,
/// split parents replaced in place by their two children.
#[allow(clippy::too_many_arguments)]
pub fn apply_densification<R: Rng + ?Sized>(
    prims: &mut Vec<GaussianPrimitive>,
    clones: &[usize],
    splits: &[usize],
    prunes: &[usize],
    avg: &[f64],
    peak: &[f64],
    pos_grad_avg: &[f64],
    cfg: &AdcConfig,
    rng: &mut R,
) -> Result<DensifyReport> {
    let n = prims.len();
    for &set in &[clones, splits, prunes] {
        if let Some(&bad) = set.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "densification index",
                index: bad,
                len: n,
            });
        }
    }
    if avg.len() != n || peak.len() != n || pos_grad_avg.len() != n {
        return Err(Error::DimensionMismatch("densification statistics"));
    }

    let mut pruned = alloc::vec![false; n];
    for &i in prunes {
        pruned[i] = true;
    }
    let mut want_split = alloc::vec![false; n];
    for &i in splits {
        if !pruned[i] {
            want_split[i] = true;
        }
    }
    let clone_candidates: Vec<usize> = clones
        .iter()
        .copied()
        .filter(|&i| !pruned[i] && !want_split[i])
        .collect();

    let base_count = n - prunes.len();
    let mut budget = cfg.max_gaussians.saturating_sub(base_count);

    let mut grant_clone = alloc::vec![false; n];
    let mut dropped_clones = 0usize;
    for &i in &clone_priority(&clone_candidates, avg, peak) {
        if budget > 0 {
            grant_clone[i] = true;
            budget -= 1;
        } else {
            dropped_clones += 1;
        }
    }

    let mut split_order: Vec<usize> = (0..n).filter(|&i| want_split[i]).collect();
    split_order.sort_by(|&a, &b| {
        pos_grad_avg[b]
            .partial_cmp(&pos_grad_avg[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut grant_split = alloc::vec![false; n];
    let mut dropped_splits = 0usize;
    for &i in &split_order {
        if budget > 0 {
            grant_split[i] = true;
            budget -= 1;
        } else {
            dropped_splits += 1;
        }
    }

    let old = core::mem::take(prims);
    let mut report = DensifyReport::default();
    for (i, g) in old.into_iter().enumerate() {
        if pruned[i] {
            report.pruned += 1;
            continue;
        }
        if grant_split[i] {
            // Children sit at antithetic samples of the parent density and
            // shrink; the pair's midpoint is the parent mean.
            let eps = Vec3::new(
                standard_normal(rng),
                standard_normal(rng),
                standard_normal(rng),
            );
            let offset = g.rot.rotate(g.scale.hadamard(eps));
            let child_scale = g.scale * (1.0 / SPLIT_SCALE_DIVISOR);
            let mut a = g.clone();
            a.mu = g.mu + offset;
            a.scale = child_scale;
            let mut b = g;
            b.mu = b.mu - offset;
            b.scale = child_scale;
            prims.push(a);
            prims.push(b);
            report.split += 1;
            continue;
        }
        if grant_clone[i] {
            let eps = Vec3::new(
                standard_normal(rng),
                standard_normal(rng),
                standard_normal(rng),
            );
            let jitter = g
                .rot
                .rotate((g.scale * CLONE_JITTER_FRACTION).hadamard(eps));
            let mut twin = g.clone();
            twin.mu += jitter;
            prims.push(g);
            prims.push(twin);
            report.cloned += 1;
            continue;
        }
        prims.push(g);
    }
    report.dropped_clones = dropped_clones;
    report.dropped_splits = dropped_splits;
    report.total_after = prims.len();
    Ok(report)
}
