//! Clustering evaluation against ground-truth partitions.
//!
//! All scores treat labels as opaque: relabeling either side never changes
//! a result. Degenerate cases (empty denominators, zero entropy) resolve to
//! 0 rather than erroring, so sweeps over thresholds or cluster counts can
//! consume the output without special cases.

use crate::assignment::{solve_assignment, CostMatrix, Sense};
use crate::error::{Error, Result};

/// Contingency table between two label vectors, with labels compacted to
/// dense indices in first-appearance order.
struct Contingency {
    counts: Vec<Vec<u64>>, // [pred][truth]
    pred_sizes: Vec<u64>,
    truth_sizes: Vec<u64>,
    n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let mut dense = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        let id = *map.entry(l).or_insert(next);
        dense.push(id);
    }
    (dense, map.len())
}

impl Contingency {
    fn build(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::input("metrics need at least one labeled point"));
        }
        if pred.len() != truth.len() {
            return Err(Error::input(format!(
                "label vectors differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = vec![vec![0u64; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let pred_sizes: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
        let mut truth_sizes = vec![0u64; kt];
        for row in &counts {
            for (s, &c) in truth_sizes.iter_mut().zip(row) {
                *s += c;
            }
        }
        Ok(Contingency { counts, pred_sizes, truth_sizes, n: pred.len() as u64 })
    }
}

/// Fraction of points correctly labeled under the best one-to-one map from
/// predicted clusters to truth classes. Surplus clusters on either side
/// contribute nothing.
///
/// # Errors
///
/// Empty inputs or mismatched lengths.
pub fn cluster_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::build(pred, truth)?;
    let rows = table.counts.len();
    let cols = table.truth_sizes.len();
    let data: Vec<f64> = table.counts.iter().flatten().map(|&c| c as f64).collect();
    let costs = CostMatrix::new(rows, cols, data)?;
    let matching = solve_assignment(&costs, Sense::Maximize)?;
    Ok(matching.objective / table.n as f64)
}

fn comb2(x: u64) -> f64 {
    (x as f64) * ((x.saturating_sub(1)) as f64) / 2.0
}

/// Adjusted Rand index via pair counting.
///
/// Numerator and denominator are both scaled by C(n, 2) so every
/// intermediate is an exactly representable integer (or half-integer) at any
/// realistic n, making the final division the only rounding step. A zero
/// denominator is defined as 0.
///
/// # Errors
///
/// Empty inputs or mismatched lengths.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::build(pred, truth)?;
    let together_both: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let together_pred: f64 = table.pred_sizes.iter().map(|&c| comb2(c)).sum();
    let together_truth: f64 = table.truth_sizes.iter().map(|&c| comb2(c)).sum();
    let total_pairs = comb2(table.n);

    let numerator = total_pairs * together_both - together_pred * together_truth;
    let denominator =
        total_pairs * (together_pred + together_truth) / 2.0 - together_pred * together_truth;
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok(numerator / denominator)
}

/// Normalized mutual information with natural-log entropies and geometric
/// mean normalization, clamped to [0, 1]. Either partition constant (zero
/// entropy) gives 0.
///
/// # Errors
///
/// Empty inputs or mismatched lengths.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::build(pred, truth)?;
    let n = table.n as f64;
    let entropy = |sizes: &[u64]| -> f64 {
        sizes
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&table.pred_sizes);
    let h_truth = entropy(&table.truth_sizes);
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            let ratio = (c as f64 * n) / (table.pred_sizes[i] as f64 * table.truth_sizes[j] as f64);
            mi += joint * ratio.ln();
        }
    }
    Ok((mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

/// F-measure with precision weight `beta`.
///
/// Evaluated in the harmonic form `(1+b^2) / (b^2/r + 1/p)`, which is
/// algebraically identical to `(1+b^2)pr / (b^2 p + r)` but keeps the
/// identity f(x, x) = x exact in floating point. Zero denominator gives 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    if b2 * precision + recall == 0.0 || precision == 0.0 || recall == 0.0 {
        return 0.0;
    }
    (1.0 + b2) / (b2 / recall + 1.0 / precision)
}

/// Precision / recall / F over all unordered pairs, treating a pair as
/// predicted positive when its distance is strictly below `threshold` and
/// truly positive when both points share a class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseEval {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

/// Evaluate a pairwise distance matrix against class labels.
///
/// `beta` is fixed at 0.5: precision counts double against recall, matching
/// how the matching quality of sequence distances is scored elsewhere.
///
/// # Errors
///
/// Non-square distance matrix, length mismatch with `truth`, non-finite
/// distances or threshold.
pub fn pairwise_matching_eval(
    distances: &[Vec<f64>],
    truth: &[usize],
    threshold: f64,
) -> Result<PairwiseEval> {
    let n = distances.len();
    if n == 0 {
        return Err(Error::input("pairwise evaluation needs at least one point"));
    }
    if n != truth.len() {
        return Err(Error::input(format!(
            "distance matrix is {n}x{n} but truth has {} labels",
            truth.len()
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::input(format!("threshold is not finite: {threshold}")));
    }
    for (i, row) in distances.iter().enumerate() {
        if row.len() != n {
            return Err(Error::input(format!(
                "distance matrix row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "distance ({i}, {j}) is not finite: {}",
                row[j]
            )));
        }
    }

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let predicted = distances[i][j] < threshold;
            let actual = truth[i] == truth[j];
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok(PairwiseEval { precision, recall, f_beta: f_beta(precision, recall, 0.5) })
}
