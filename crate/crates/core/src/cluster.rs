//! Temporal clustering of tracked frames by conditioning similarity, and
//! the phase-ordered training schedule built from it.
//!
//! Frames are embedded as weighted, standardized blocks of expression
//! coefficients, pose parameters and head translation; the embedding is
//! reduced by PCA to the components explaining 95% of variance and grouped
//! with k-means. The cluster count is chosen by silhouette score over a
//! small range. The schedule visits one cluster at a time (ascending id,
//! frames shuffled within the phase) for the densification epochs, then
//! finishes with globally shuffled epochs with densification off.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::fp;
use crate::mesh::FrameDescriptor;
use crate::{Error, Result};

/// Block weight for expression coefficients.
pub const EXPRESSION_WEIGHT: f64 = 0.3;
/// Block weight for pose parameters.
pub const POSE_WEIGHT: f64 = 0.6;
/// Block weight for head translation.
pub const TRANSLATION_WEIGHT: f64 = 0.1;
/// Fraction of variance the PCA reduction must retain.
pub const VARIANCE_KEEP: f64 = 0.95;
/// Columns with population variance below this are dropped as constant.
pub const VARIANCE_EPS: f64 = 1e-12;
/// Smallest cluster count considered.
pub const K_MIN: usize = 5;
/// Largest cluster count considered.
pub const K_MAX: usize = 12;
/// Independent k-means restarts per candidate K.
pub const KMEANS_RESTARTS: u64 = 10;
/// Lloyd iteration cap per restart.
pub const KMEANS_MAX_ITERS: usize = 300;

/// Dense row-major matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Chosen clustering for a frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub chosen_k: usize,
    /// Cluster id per frame, in input order.
    pub assignments: Vec<usize>,
    /// Silhouette score of the chosen clustering.
    pub silhouette: f64,
    /// Silhouette score per candidate K, for inspection.
    pub scores: Vec<KScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub silhouette: f64,
}

/// One contiguous run of iterations over a fixed frame list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    /// Cluster id, or `None` for a globally shuffled phase.
    pub cluster: Option<usize>,
    /// Frame indices in visit order.
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub phases: Vec<PhasePlan>,
    pub adc_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub epochs: Vec<EpochPlan>,
}

impl TrainingSchedule {
    /// Total number of frame visits across all epochs and phases.
    pub fn total_iterations(&self) -> usize {
        self.epochs
            .iter()
            .flat_map(|e| e.phases.iter())
            .map(|p| p.frames.len())
            .sum()
    }
}

/// Embed frames as weighted standardized blocks. Constant columns are
/// dropped; at least one varying column must survive.
pub fn build_features(frames: &[FrameDescriptor]) -> Result<FeatureMatrix> {
    if frames.len() < 2 {
        return Err(Error::TooFew {
            what: "frames for feature embedding",
            needed: 2,
            got: frames.len(),
        });
    }
    let e_dim = frames[0].expression.len();
    let p_dim = frames[0].pose.len();
    for f in frames {
        if f.expression.len() != e_dim || f.pose.len() != p_dim {
            return Err(Error::DimensionMismatch("frame conditioning blocks"));
        }
    }
    let raw_cols = e_dim + p_dim + 3;
    let mut raw = FeatureMatrix::zeros(frames.len(), raw_cols);
    for (r, f) in frames.iter().enumerate() {
        for (c, &v) in f.expression.iter().enumerate() {
            raw.set(r, c, v);
        }
        for (c, &v) in f.pose.iter().enumerate() {
            raw.set(r, e_dim + c, v);
        }
        for (c, &v) in f.translation.iter().enumerate() {
            raw.set(r, e_dim + p_dim + c, v);
        }
    }
    if raw.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("frame conditioning"));
    }

    let n = frames.len() as f64;
    let mut kept: Vec<(usize, f64, f64, f64)> = Vec::new(); // (col, mean, inv_std, weight)
    for c in 0..raw_cols {
        let mean = (0..frames.len()).map(|r| raw.at(r, c)).sum::<f64>() / n;
        let var = (0..frames.len())
            .map(|r| {
                let d = raw.at(r, c) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        if var < VARIANCE_EPS {
            continue;
        }
        let weight = if c < e_dim {
            EXPRESSION_WEIGHT
        } else if c < e_dim + p_dim {
            POSE_WEIGHT
        } else {
            TRANSLATION_WEIGHT
        };
        kept.push((c, mean, 1.0 / fp::sqrt(var), weight));
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "all conditioning columns are constant across frames",
        ));
    }
    let mut out = FeatureMatrix::zeros(frames.len(), kept.len());
    for r in 0..frames.len() {
        for (j, &(c, mean, inv_std, weight)) in kept.iter().enumerate() {
            out.set(r, j, (raw.at(r, c) - mean) * inv_std * weight);
        }
    }
    Ok(out)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major,
/// `d x d`). Returns eigenvalues and matching eigenvectors as columns,
/// unsorted.
fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if fp::abs(apq) < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + fp::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + fp::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / fp::sqrt(t * t + 1.0);
                let s = t * c;
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    if r != p && r != q {
                        let arp = a[r * d + p];
                        let arq = a[r * d + q];
                        a[r * d + p] = c * arp - s * arq;
                        a[p * d + r] = a[r * d + p];
                        a[r * d + q] = s * arp + c * arq;
                        a[q * d + r] = a[r * d + q];
                    }
                }
                for r in 0..d {
                    let vrp = v[r * d + p];
                    let vrq = v[r * d + q];
                    v[r * d + p] = c * vrp - s * vrq;
                    v[r * d + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let eig = (0..d).map(|i| a[i * d + i]).collect();
    (eig, v)
}

/// Project onto the leading principal components that together explain at
/// least `variance_fraction` of total variance (always at least one).
/// Each component's sign is fixed so its largest-magnitude loading is
/// positive.
pub fn pca_reduce(features: &FeatureMatrix, variance_fraction: f64) -> Result<FeatureMatrix> {
    let (n, d) = (features.rows, features.cols);
    if n < 2 || d == 0 {
        return Err(Error::TooFew {
            what: "rows for PCA",
            needed: 2,
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&variance_fraction) {
        return Err(Error::InvalidArgument("variance fraction outside [0,1]"));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += features.at(r, c);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        for i in 0..d {
            let di = features.at(r, i) - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (features.at(r, j) - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= n as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let (eig, vecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig[b].partial_cmp(&eig[a]).unwrap().then(a.cmp(&b)));
    let total: f64 = eig.iter().map(|e| e.max(0.0)).sum();
    let mut keep = Vec::new();
    let mut acc = 0.0;
    for &i in &order {
        keep.push(i);
        acc += eig[i].max(0.0);
        if total <= 0.0 || acc >= variance_fraction * total {
            break;
        }
    }

    let mut out = FeatureMatrix::zeros(n, keep.len());
    for (j, &comp) in keep.iter().enumerate() {
        // Sign convention: largest-magnitude loading positive.
        let mut best = 0usize;
        for r in 1..d {
            if fp::abs(vecs[r * d + comp]) > fp::abs(vecs[best * d + comp]) {
                best = r;
            }
        }
        let sign = if vecs[best * d + comp] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            let mut dot = 0.0;
            for c in 0..d {
                dot += (features.at(r, c) - mean[c]) * vecs[c * d + comp];
            }
            out.set(r, j, sign * dot);
        }
    }
    Ok(out)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One k-means run: k-means++ seeding, Lloyd iterations with empty-cluster
/// repair. Returns (assignments, centers, objective).
fn kmeans_once(
    data: &FeatureMatrix,
    k: usize,
    rng: &mut ChaCha12Rng,
    max_iters: usize,
) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let n = data.rows;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data.row(rng.random_range(0..n)).to_vec());
    let mut d2 = vec![0.0; n];
    while centers.len() < k {
        let mut total = 0.0;
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = centers
                .iter()
                .map(|c| dist2(data.row(i), c))
                .fold(f64::INFINITY, f64::min);
            total += *slot;
        }
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(data.row(pick).to_vec());
    }

    let mut assign = vec![0usize; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(data.row(i), center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        // Repair empty clusters with the globally worst-fit point from any
        // cluster that can spare one.
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut worst = None;
            let mut worst_d = -1.0;
            for i in 0..n {
                if counts[assign[i]] < 2 {
                    continue;
                }
                let d = dist2(data.row(i), &centers[assign[i]]);
                if d > worst_d {
                    worst_d = d;
                    worst = Some(i);
                }
            }
            if let Some(i) = worst {
                counts[assign[i]] -= 1;
                assign[i] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            center.iter_mut().for_each(|v| *v = 0.0);
            for (i, &a) in assign.iter().enumerate() {
                if a == c {
                    for (v, x) in center.iter_mut().zip(data.row(i)) {
                        *v += x;
                    }
                }
            }
            center.iter_mut().for_each(|v| *v /= counts[c] as f64);
        }
        if !changed {
            break;
        }
    }
    let objective = (0..n).map(|i| dist2(data.row(i), &centers[assign[i]])).sum();
    (assign, centers, objective)
}

/// Best-of-`restarts` k-means (restart `r` is seeded with `seed + r`; the
/// lowest objective wins, earlier restart on ties).
pub fn kmeans(
    data: &FeatureMatrix,
    k: usize,
    seed: u64,
    restarts: u64,
    max_iters: usize,
) -> Result<(Vec<usize>, Vec<Vec<f64>>, f64)> {
    if k == 0 || data.rows < k {
        return Err(Error::TooFew {
            what: "rows for k-means",
            needed: k.max(1),
            got: data.rows,
        });
    }
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(r));
        let run = kmeans_once(data, k, &mut rng, max_iters);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Mean silhouette score over all points. Singletons score 0; a point with
/// zero distance to both its own and the nearest other cluster scores 0.
pub fn silhouette(data: &FeatureMatrix, assign: &[usize], k: usize) -> Result<f64> {
    let n = data.rows;
    if assign.len() != n {
        return Err(Error::DimensionMismatch("silhouette assignments"));
    }
    if let Some(&bad) = assign.iter().find(|&&a| a >= k) {
        return Err(Error::IndexOutOfRange {
            what: "cluster id",
            index: bad,
            len: k,
        });
    }
    let mut counts = vec![0usize; k];
    for &a in assign {
        counts[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        if counts[assign[i]] < 2 {
            continue; // singleton contributes 0
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assign[j]] += fp::sqrt(dist2(data.row(i), data.row(j)));
            }
        }
        let a = sums[assign[i]] / (counts[assign[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != assign[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue; // only one non-empty cluster
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Choose K in `[k_min, k_max]` by silhouette (ties to the smaller K) and
/// return the winning clustering.
pub fn select_k(
    data: &FeatureMatrix,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<ClusterPlan> {
    let n = data.rows;
    let lo = k_min.max(2);
    let hi = k_max.min(n.saturating_sub(1));
    if lo > hi {
        return Err(Error::TooFew {
            what: "frames for cluster selection",
            needed: k_min + 1,
            got: n,
        });
    }
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for k in lo..=hi {
        let (assign, _, _) = kmeans(data, k, seed, KMEANS_RESTARTS, KMEANS_MAX_ITERS)?;
        let score = silhouette(data, &assign, k)?;
        scores.push(KScore { k, silhouette: score });
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((k, score, assign));
        }
    }
    let (chosen_k, sil, assignments) = best.unwrap();
    Ok(ClusterPlan {
        chosen_k,
        assignments,
        silhouette: sil,
        scores,
    })
}

/// Full pipeline: embed, reduce, select K.
pub fn plan_clusters(frames: &[FrameDescriptor], seed: u64) -> Result<ClusterPlan> {
    let features = build_features(frames)?;
    let reduced = pca_reduce(&features, VARIANCE_KEEP)?;
    select_k(&reduced, K_MIN, K_MAX, seed)
}

/// Build the phase-ordered schedule: `total_epochs - adc_off_tail` epochs
/// visiting each cluster in ascending id with its frames shuffled, then
/// `adc_off_tail` globally shuffled epochs with densification disabled.
pub fn make_schedule(
    assignments: &[usize],
    k: usize,
    total_epochs: usize,
    adc_off_tail: usize,
    seed: u64,
) -> Result<TrainingSchedule> {
    if assignments.is_empty() {
        return Err(Error::TooFew {
            what: "frames for schedule",
            needed: 1,
            got: 0,
        });
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::IndexOutOfRange {
            what: "cluster id",
            index: bad,
            len: k,
        });
    }
    if adc_off_tail > total_epochs {
        return Err(Error::InvalidArgument(
            "densification-off tail exceeds total epochs",
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (frame, &c) in assignments.iter().enumerate() {
        members[c].push(frame);
    }
    let all: Vec<usize> = (0..assignments.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut epochs = Vec::with_capacity(total_epochs);
    for _ in 0..total_epochs.saturating_sub(adc_off_tail) {
        let mut phases = Vec::new();
        for (c, frames) in members.iter().enumerate() {
            if frames.is_empty() {
                continue;
            }
            let mut order = frames.clone();
            order.shuffle(&mut rng);
            phases.push(PhasePlan {
                cluster: Some(c),
                frames: order,
            });
        }
        epochs.push(EpochPlan {
            phases,
            adc_enabled: true,
        });
    }
    for _ in 0..adc_off_tail {
        let mut order = all.clone();
        order.shuffle(&mut rng);
        epochs.push(EpochPlan {
            phases: vec![PhasePlan {
                cluster: None,
                frames: order,
            }],
            adc_enabled: false,
        });
    }
    Ok(TrainingSchedule { epochs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: usize, expr: Vec<f64>, pose: Vec<f64>, t: [f64; 3]) -> FrameDescriptor {
        FrameDescriptor {
            frame_id: id,
            expression: expr,
            pose,
            translation: t,
            vertex_positions: Vec::new(),
        }
    }

    #[test]
    fn features_standardize_and_weight_blocks() {
        // Expression col 0 takes values {0, 2}: mean 1, population std 1.
        // Expression col 1 is constant and must be dropped. Pose col takes
        // {-1, 1}: mean 0, std 1. Translation z takes {0, 4}: mean 2, std 2.
        let frames = vec![
            frame(0, vec![0.0, 7.0], vec![-1.0], [0.0, 0.0, 0.0]),
            frame(1, vec![2.0, 7.0], vec![1.0], [0.0, 0.0, 4.0]),
        ];
        let f = build_features(&frames).unwrap();
        assert_eq!((f.rows, f.cols), (2, 3));
        assert_eq!(f.row(0), &[-EXPRESSION_WEIGHT, -POSE_WEIGHT, -TRANSLATION_WEIGHT]);
        assert_eq!(f.row(1), &[EXPRESSION_WEIGHT, POSE_WEIGHT, TRANSLATION_WEIGHT]);
    }

    #[test]
    fn features_reject_ragged_blocks() {
        let frames = vec![
            frame(0, vec![0.0], vec![0.0], [0.0; 3]),
            frame(1, vec![0.0, 1.0], vec![0.0], [0.0; 3]),
        ];
        assert!(matches!(
            build_features(&frames),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn features_reject_all_constant() {
        let frames = vec![
            frame(0, vec![1.0], vec![2.0], [3.0, 4.0, 5.0]),
            frame(1, vec![1.0], vec![2.0], [3.0, 4.0, 5.0]),
        ];
        assert!(matches!(
            build_features(&frames),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pca_finds_a_line() {
        // Points on the line t * (3, 4, 0) / 5: one component carries all
        // variance.
        let mut data = FeatureMatrix::zeros(5, 3);
        for (r, t) in [-2.0, -1.0, 0.0, 1.0, 2.0].into_iter().enumerate() {
            data.set(r, 0, 0.6 * t);
            data.set(r, 1, 0.8 * t);
        }
        let red = pca_reduce(&data, 0.95).unwrap();
        assert_eq!(red.cols, 1);
        // Projections are +/- t (sign fixed by the largest-loading rule:
        // loading 0.8 on axis 1 is positive, so the projection of t=1 is +1).
        let got: Vec<f64> = (0..5).map(|r| red.at(r, 0)).collect();
        for (g, want) in got.iter().zip([-2.0, -1.0, 0.0, 1.0, 2.0]) {
            assert!((g - want).abs() < 1e-9, "{got:?}");
        }
    }

    #[test]
    fn pca_keeps_requested_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let (n, d) = (60, 8);
        let mut data = FeatureMatrix::zeros(n, d);
        for r in 0..n {
            // Anisotropic: later columns have much smaller spread.
            for c in 0..d {
                let amp = 1.0 / (1 << c) as f64;
                data.set(r, c, amp * rng.random_range(-1.0..1.0));
            }
        }
        let red = pca_reduce(&data, 0.95).unwrap();
        assert!(red.cols < d, "reduction happened");
        // Total variance of the projection must reach 95% of the original.
        let var = |m: &FeatureMatrix| -> f64 {
            let mut total = 0.0;
            for c in 0..m.cols {
                let mean = (0..m.rows).map(|r| m.at(r, c)).sum::<f64>() / m.rows as f64;
                total += (0..m.rows)
                    .map(|r| {
                        let d = m.at(r, c) - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / m.rows as f64;
            }
            total
        };
        assert!(var(&red) >= 0.95 * var(&data) - 1e-12);
    }

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut data = FeatureMatrix::zeros(centers.len() * per, 2);
        let mut labels = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for j in 0..per {
                let r = ci * per + j;
                let mut jitter = || {
                    if spread > 0.0 {
                        rng.random_range(-spread..spread)
                    } else {
                        0.0
                    }
                };
                data.set(r, 0, c[0] + jitter());
                data.set(r, 1, c[1] + jitter());
                labels.push(r / per);
            }
        }
        (data, labels)
    }

    /// Map predicted labels through the majority label of each cluster and
    /// count agreement.
    fn agreement(pred: &[usize], truth: &[usize], k: usize) -> f64 {
        let mut votes = vec![std::collections::HashMap::new(); k];
        for (&p, &t) in pred.iter().zip(truth) {
            *votes[p].entry(t).or_insert(0usize) += 1;
        }
        let mapped: Vec<usize> = votes
            .iter()
            .map(|v| v.iter().max_by_key(|(_, &c)| c).map(|(&t, _)| t).unwrap_or(0))
            .collect();
        pred.iter()
            .zip(truth)
            .filter(|(&p, &t)| mapped[p] == t)
            .count() as f64
            / pred.len() as f64
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let (data, truth) = blobs(&centers, 12, 0.5, 42);
        let (assign, cs, obj) = kmeans(&data, 3, 7, 10, 300).unwrap();
        assert_eq!(agreement(&assign, &truth, 3), 1.0);
        assert!(obj < 36.0 * 0.5);
        for c in &cs {
            let near = centers
                .iter()
                .map(|t| dist2(c, t))
                .fold(f64::INFINITY, f64::min);
            assert!(near < 0.1, "center {c:?}");
        }
    }

    #[test]
    fn kmeans_repairs_empty_clusters() {
        // Two tight pairs, k = 3: every cluster must end non-empty.
        let (data, _) = blobs(&[[0.0, 0.0], [10.0, 0.0]], 2, 0.01, 43);
        let (assign, _, _) = kmeans(&data, 3, 1, 10, 300).unwrap();
        let mut counts = [0usize; 3];
        for &a in &assign {
            counts[a] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn silhouette_far_blobs_near_one() {
        let (data, truth) = blobs(&[[0.0, 0.0], [100.0, 0.0]], 10, 0.5, 44);
        let s = silhouette(&data, &truth, 2).unwrap();
        assert!(s > 0.95, "silhouette {s}");
    }

    #[test]
    fn silhouette_all_singletons_is_zero() {
        let (data, _) = blobs(&[[0.0, 0.0], [5.0, 0.0], [9.0, 3.0]], 1, 0.0, 45);
        assert_eq!(silhouette(&data, &[0, 1, 2], 3).unwrap(), 0.0);
    }

    #[test]
    fn select_k_finds_planted_count() {
        let centers: Vec<[f64; 2]> = (0..7)
            .map(|i| {
                let a = i as f64 / 7.0 * core::f64::consts::TAU;
                [30.0 * libm::cos(a), 30.0 * libm::sin(a)]
            })
            .collect();
        let (data, _) = blobs(&centers, 8, 0.7, 46);
        let plan = select_k(&data, 5, 12, 9).unwrap();
        assert_eq!(plan.chosen_k, 7);
        assert!(plan.silhouette > 0.8);
        assert_eq!(plan.scores.len(), 8);
        // Deterministic under the same seed.
        let again = select_k(&data, 5, 12, 9).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn select_k_needs_enough_frames() {
        let (data, _) = blobs(&[[0.0, 0.0]], 4, 0.1, 47);
        assert!(matches!(
            select_k(&data, 5, 12, 0),
            Err(Error::TooFew { .. })
        ));
    }

    #[test]
    fn schedule_phases_clusters_then_global_tail() {
        let assignments = vec![0, 1, 2, 0, 1, 2, 0, 0];
        let sched = make_schedule(&assignments, 3, 6, 1, 11).unwrap();
        assert_eq!(sched.epochs.len(), 6);
        for e in &sched.epochs[..5] {
            assert!(e.adc_enabled);
            assert_eq!(e.phases.len(), 3);
            for (pi, p) in e.phases.iter().enumerate() {
                assert_eq!(p.cluster, Some(pi));
                let mut frames = p.frames.clone();
                frames.sort_unstable();
                let want: Vec<usize> = (0..assignments.len())
                    .filter(|&f| assignments[f] == pi)
                    .collect();
                assert_eq!(frames, want);
            }
        }
        let tail = &sched.epochs[5];
        assert!(!tail.adc_enabled);
        assert_eq!(tail.phases.len(), 1);
        assert_eq!(tail.phases[0].cluster, None);
        let mut frames = tail.phases[0].frames.clone();
        frames.sort_unstable();
        assert_eq!(frames, (0..8).collect::<Vec<_>>());
        assert_eq!(sched.total_iterations(), 8 * 6);

        // The within-phase order is genuinely shuffled: across five epochs
        // the cluster-0 phase cannot always come out sorted.
        let sorted_everywhere = sched.epochs[..5]
            .iter()
            .all(|e| e.phases[0].frames.windows(2).all(|w| w[0] < w[1]));
        assert!(!sorted_everywhere);

        // And deterministic for a fixed seed.
        assert_eq!(sched, make_schedule(&assignments, 3, 6, 1, 11).unwrap());
    }

    #[test]
    fn schedule_rejects_bad_arguments() {
        assert!(matches!(
            make_schedule(&[], 3, 5, 1, 0),
            Err(Error::TooFew { .. })
        ));
        assert!(matches!(
            make_schedule(&[0, 3], 3, 5, 1, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            make_schedule(&[0], 1, 2, 3, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cluster_plan_serde_round_trip() {
        let plan = ClusterPlan {
            chosen_k: 5,
            assignments: vec![0, 1, 2, 3, 4, 0],
            silhouette: 0.83,
            scores: vec![KScore { k: 5, silhouette: 0.83 }],
        };
        let json = serde_json::to_string(&plan).unwrap();
        let back: ClusterPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan, back);
    }
}
