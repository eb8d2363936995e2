//! Seeded k-means with deterministic initialization and tie handling.
//!
//! Determinism is the contract here: for a fixed seed the labels, centroids,
//! and inertia are bit-identical across runs and platforms. Initialization
//! is k-means++ (squared-distance weighted sampling from a seeded ChaCha
//! stream), assignment ties go to the smallest centroid index, and clusters
//! that empty out mid-run are re-seeded at the current worst-fit point.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Lloyd-iteration controls; the defaults match the pipeline's.
#[derive(Debug, Clone, Copy)]
pub struct KmeansParams {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams { max_iters: DEFAULT_MAX_ITERS, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// Cluster index per input point, each `< k`.
    pub labels: Vec<usize>,
    /// One centroid per cluster; a non-empty cluster's centroid is exactly
    /// the mean of its members.
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
}

/// k-means with default iteration controls.
///
/// # Errors
///
/// Rejects an empty point set, `k == 0`, `k` larger than the point count,
/// points of unequal dimension, and non-finite coordinates.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusteringResult> {
    kmeans_with(points, k, seed, KmeansParams::default())
}

/// k-means with explicit iteration controls.
pub fn kmeans_with(points: &[Vec<f64>], k: usize, seed: u64, params: KmeansParams) -> Result<ClusteringResult> {
    let (result, _trace) = run(points, k, seed, params)?;
    Ok(result)
}

/// Best of `restarts` independent seeded runs by inertia, first run winning
/// ties. Small point sets land in bad local optima often enough that single
/// runs distort downstream distances; a handful of restarts makes recovery
/// of well-separated groups near-certain while staying deterministic.
pub fn kmeans_best_of(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    if restarts == 0 {
        return Err(Error::input("restart count must be at least 1"));
    }
    let mut best: Option<ClusteringResult> = None;
    for i in 0..restarts {
        let run_seed = crate::rng::derive_seed_indexed(seed, "restart", i as u64);
        let candidate = kmeans(points, k, run_seed)?;
        if best.as_ref().is_none_or(|b| candidate.inertia < b.inertia) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

/// Full Lloyd run; also returns the post-update inertia of every iteration
/// so tests can check monotonicity.
fn run(points: &[Vec<f64>], k: usize, seed: u64, params: KmeansParams) -> Result<(ClusteringResult, Vec<f64>)> {
    validate(points, k)?;
    let n = points.len();
    let mut rng = rng_from_seed(seed);
    let mut centroids = init_plus_plus(points, k, &mut rng);

    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..params.max_iters {
        let new_labels = assign(points, &centroids);
        if repair_empty(points, &new_labels, &mut centroids, k) {
            // A centroid moved onto the worst-fit point; reassign before
            // trusting any membership. Each repair strictly reduces the
            // assignment cost, so this cannot loop forever.
            labels = new_labels;
            trace.push(inertia_of(points, &labels, &centroids));
            continue;
        }
        let stable = new_labels == labels;
        labels = new_labels;
        let new_centroids = means(points, &labels, &centroids, k);
        let movement = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        trace.push(inertia_of(points, &labels, &centroids));
        if stable || movement <= params.tol {
            break;
        }
    }

    let inertia = inertia_of(points, &labels, &centroids);
    Ok((ClusteringResult { labels, centroids, inertia }, trace))
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::input("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(Error::input("k-means needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::input(format!(
            "k-means got k = {k} but only {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::input("k-means points must have at least one dimension"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::input(format!(
                "k-means point {i} has dimension {} but point 0 has {dim}",
                p.len()
            )));
        }
        if let Some(j) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "k-means point {i} coordinate {j} is not finite: {}",
                p[j]
            )));
        }
    }
    Ok(())
}

/// k-means++ seeding: first center uniform, each next drawn with
/// probability proportional to squared distance from the chosen set. Never
/// picks the same index twice; if every remaining point coincides with a
/// center, falls back to the smallest unchosen index.
fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen_flag = vec![false; n];
    let mut chosen = Vec::with_capacity(k);

    let first = rng.gen_range(0..n);
    chosen.push(first);
    chosen_flag[first] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            weighted_pick(&d2, rng.gen::<f64>() * total)
        } else {
            chosen_flag.iter().position(|&c| !c).expect("k <= n leaves an unchosen point")
        };
        chosen.push(idx);
        chosen_flag[idx] = true;
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, &points[idx]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// First index whose cumulative weight exceeds `target`, skipping
/// zero-weight entries; falls back to the last positive-weight index when
/// rounding pushes `target` past the total.
fn weighted_pick(weights: &[f64], target: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last_positive = Some(i);
            if target < cum {
                return i;
            }
        }
    }
    last_positive.expect("weighted_pick called with all-zero weights")
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Move each empty cluster's centroid onto the unclaimed point farthest
/// from its currently assigned centroid. Returns whether anything moved;
/// points already sitting on their centroid cannot seed a repair.
fn repair_empty(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>], k: usize) -> bool {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return false;
    }
    let mut point_d2: Vec<f64> = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centroids[l]))
        .collect();
    let mut repaired = false;
    for e in 0..k {
        if counts[e] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = 0.0;
        for (i, &d) in point_d2.iter().enumerate() {
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        centroids[e] = points[i].clone();
        point_d2[i] = 0.0; // claimed
        repaired = true;
    }
    repaired
}

/// Mean of each cluster's members; an empty cluster keeps its previous
/// centroid.
fn means(points: &[Vec<f64>], labels: &[usize], previous: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            sums[j] = previous[j].clone();
        } else {
            let inv = counts[j] as f64;
            for s in &mut sums[j] {
                *s /= inv;
            }
        }
    }
    sums
}

fn inertia_of(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centroids[l]))
        .sum()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
