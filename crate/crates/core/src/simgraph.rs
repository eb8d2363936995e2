//! Sequence-similarity graph and random-walk triplet mining.
//!
//! Two complementary signals score every pair of tracked sequences. The
//! attraction term counts co-clustered frame pairs under one global k-means
//! over all observations: sequences whose frames keep landing in the same
//! clusters are probably the same kind of object. The repulsion term
//! measures appearance distance after aligning viewpoints: each sequence is
//! summarized by a handful of viewpoint centroids and the two centroid sets
//! are matched by optimal assignment, so a pair of objects filmed from
//! different angle distributions still compares like for like.
//!
//! The combined weight `w = max(lambda * w_plus - w_minus, 0)` feeds a
//! row-stochastic transition matrix. Random walks of a fixed horizon choose
//! positive partners for each anchor sequence; the complement distribution
//! chooses negatives; frames sampled from the chosen sequences become
//! training triplets, each weighted by a confidence read off the anchor's
//! row of the graph.

use crate::assignment::{solve_assignment, CostMatrix, Sense};
use crate::clustering::{dist2, kmeans, kmeans_best_of};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tracking::MaskSequence;
use ndarray::Array2;
use rand::distributions::WeightedIndex;
use rand::Rng;

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_K_GLOBAL: usize = 500;
pub const DEFAULT_N_VIEWPOINTS: usize = 5;
pub const DEFAULT_HORIZON: usize = 3;
pub const DEFAULT_FRAMES_PER_PAIR: usize = 4;
/// Restarts for the tiny per-sequence viewpoint clustering; cheap, and a
/// single bad local optimum there can misalign an entire matched distance.
pub const VIEWPOINT_KMEANS_RESTARTS: usize = 8;

/// How the repulsion term compares two sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WMinusMode {
    /// Optimal assignment between viewpoint centroid sets (the default).
    ViewpointCentroids,
    /// Optimal assignment between raw frame features, for ablation.
    RawFrames,
}

/// Pairwise sequence distance methods; `Viewpoint` is the one the graph
/// uses, the others exist to quantify what alignment buys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    /// Assignment-aligned viewpoint centroid distance.
    Viewpoint,
    /// L2 between whole-sequence mean features.
    MeanFeature,
    /// Mean of the ten smallest centroid-pair distances, no alignment.
    TopTenNn,
    /// Sequences cut into ten contiguous parts, corresponding part means
    /// compared positionally.
    CutTen,
}

impl DistanceMethod {
    pub const ALL: [DistanceMethod; 4] = [
        DistanceMethod::Viewpoint,
        DistanceMethod::MeanFeature,
        DistanceMethod::TopTenNn,
        DistanceMethod::CutTen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMethod::Viewpoint => "viewpoint",
            DistanceMethod::MeanFeature => "mean_feature",
            DistanceMethod::TopTenNn => "top_ten_nn",
            DistanceMethod::CutTen => "cut_ten",
        }
    }
}

/// Pairwise similarity structure over a fixed list of sequences.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub sequences: Vec<MaskSequence>,
    pub w_plus: Array2<f64>,
    pub w_minus: Array2<f64>,
    /// Combined weight: `max(lambda * w_plus - w_minus, 0)`, zero diagonal.
    pub w: Array2<f64>,
    pub lambda: f64,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of unordered pairs with positive combined weight.
    pub fn edge_count(&self) -> usize {
        let n = self.len();
        let mut edges = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.w[[i, j]] > 0.0 {
                    edges += 1;
                }
            }
        }
        edges
    }

    /// Same sequences, weights replaced by their 0/1 indicator. The
    /// companion ablation also pins every triplet confidence to 1.
    pub fn binarized(&self) -> SimilarityGraph {
        let w = self.w.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        SimilarityGraph {
            sequences: self.sequences.clone(),
            w_plus: self.w_plus.clone(),
            w_minus: self.w_minus.clone(),
            w,
            lambda: self.lambda,
        }
    }
}

/// Row-stochastic transition structure derived from a graph.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// One-step transitions: rows of `w` normalized, isolated rows uniform
    /// over the other nodes.
    pub t: Array2<f64>,
    /// `t` raised to the walk horizon.
    pub t_h: Array2<f64>,
    pub horizon: usize,
}

/// One training triplet over observation coordinates
/// (sequence index, observation index within that sequence).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub anchor: (usize, usize),
    pub positive: (usize, usize),
    pub negative: (usize, usize),
    pub confidence: f64,
}

/// Outcome of triplet mining: the triplets plus how many distinct anchors
/// had to be skipped for degenerate sampling distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTriplets {
    pub triplets: Vec<Triplet>,
    pub degenerate_anchors: usize,
}

fn features_of(seq: &MaskSequence) -> Vec<Vec<f64>> {
    seq.observations.iter().map(|o| o.feature.clone()).collect()
}

fn check_sequences(sequences: &[MaskSequence]) -> Result<usize> {
    if sequences.is_empty() {
        return Err(Error::input("similarity graph needs at least one sequence"));
    }
    let mut dim = None;
    for s in sequences {
        if s.is_empty() {
            return Err(Error::input(format!("sequence {} has no observations", s.id)));
        }
        for o in &s.observations {
            match dim {
                None => dim = Some(o.feature.len()),
                Some(d) if o.feature.len() != d => {
                    return Err(Error::input(format!(
                        "observation {} has feature dimension {} but expected {d}",
                        o.id,
                        o.feature.len()
                    )));
                }
                _ => {}
            }
        }
    }
    Ok(dim.expect("non-empty sequences carry features"))
}

/// Attraction term: cluster all observations globally with
/// `min(k_global, total_observations)` centers, then count co-clustered
/// frame pairs for every sequence pair. Diagonal is zero.
pub fn compute_w_plus(sequences: &[MaskSequence], k_global: usize, seed: u64) -> Result<Array2<f64>> {
    check_sequences(sequences)?;
    if k_global == 0 {
        return Err(Error::input("k_global must be at least 1"));
    }
    let n = sequences.len();
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    for (i, s) in sequences.iter().enumerate() {
        for o in &s.observations {
            pooled.push(o.feature.clone());
            owner.push(i);
        }
    }
    let k = k_global.min(pooled.len());
    let clustering = kmeans(&pooled, k, seed)?;

    let mut counts = vec![vec![0u64; k]; n];
    for (&seq, &label) in owner.iter().zip(&clustering.labels) {
        counts[seq][label] += 1;
    }
    let mut w_plus = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let shared: f64 = (0..k).map(|c| counts[i][c] as f64 * counts[j][c] as f64).sum();
            w_plus[[i, j]] = shared;
            w_plus[[j, i]] = shared;
        }
    }
    Ok(w_plus)
}

/// Cluster one sequence's frames into `min(n_viewpoints, len)` viewpoint
/// centroids.
pub fn viewpoint_centroids(seq: &MaskSequence, n_viewpoints: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_viewpoints == 0 {
        return Err(Error::input("viewpoint count must be at least 1"));
    }
    if seq.is_empty() {
        return Err(Error::input(format!("sequence {} has no observations", seq.id)));
    }
    let features = features_of(seq);
    let k = n_viewpoints.min(features.len());
    Ok(kmeans_best_of(&features, k, seed, VIEWPOINT_KMEANS_RESTARTS)?.centroids)
}

/// Minimal total L2 distance between the two sequences' summaries under an
/// optimal one-to-one matching: viewpoint centroids by default, raw frames
/// in ablation mode. Both sides cluster with the same seed, so identical
/// inputs summarize identically and the distance is symmetric.
pub fn compute_w_minus(
    a: &MaskSequence,
    b: &MaskSequence,
    n_viewpoints: usize,
    seed: u64,
    mode: WMinusMode,
) -> Result<f64> {
    let (sa, sb) = match mode {
        WMinusMode::ViewpointCentroids => (
            viewpoint_centroids(a, n_viewpoints, seed)?,
            viewpoint_centroids(b, n_viewpoints, seed)?,
        ),
        WMinusMode::RawFrames => (features_of(a), features_of(b)),
    };
    matched_distance(&sa, &sb)
}

/// Assignment objective over pairwise L2 distances between two point sets.
fn matched_distance(sa: &[Vec<f64>], sb: &[Vec<f64>]) -> Result<f64> {
    let data: Vec<f64> = sa
        .iter()
        .flat_map(|p| sb.iter().map(move |q| dist2(p, q).sqrt()))
        .collect();
    let costs = CostMatrix::new(sa.len(), sb.len(), data)?;
    Ok(solve_assignment(&costs, Sense::Minimize)?.objective)
}

/// Everything `build_graph_with` needs beyond the sequences.
#[derive(Debug, Clone, Copy)]
pub struct GraphParams {
    pub lambda: f64,
    pub k_global: usize,
    pub n_viewpoints: usize,
    pub seed: u64,
    /// Dissimilarity the repulsion term uses; `Viewpoint` reproduces the
    /// default graph, the others are ablations.
    pub distance_method: DistanceMethod,
    /// With `distance_method == Viewpoint`, skip centroids and match raw
    /// frames instead.
    pub w_minus_raw: bool,
}

impl GraphParams {
    pub fn new(seed: u64) -> Self {
        GraphParams {
            lambda: DEFAULT_LAMBDA,
            k_global: DEFAULT_K_GLOBAL,
            n_viewpoints: DEFAULT_N_VIEWPOINTS,
            seed,
            distance_method: DistanceMethod::Viewpoint,
            w_minus_raw: false,
        }
    }
}

/// Build the combined similarity graph with default structure parameters.
///
/// # Errors
///
/// Fewer than two sequences, empty sequences, or inconsistent feature
/// dimensions.
pub fn build_graph(
    sequences: Vec<MaskSequence>,
    lambda: f64,
    k_global: usize,
    n_viewpoints: usize,
    seed: u64,
) -> Result<SimilarityGraph> {
    let mut params = GraphParams::new(seed);
    params.lambda = lambda;
    params.k_global = k_global;
    params.n_viewpoints = n_viewpoints;
    build_graph_with(sequences, params)
}

pub fn build_graph_with(sequences: Vec<MaskSequence>, params: GraphParams) -> Result<SimilarityGraph> {
    if sequences.len() < 2 {
        return Err(Error::input(format!(
            "similarity graph needs at least 2 sequences, got {}",
            sequences.len()
        )));
    }
    if !params.lambda.is_finite() || params.lambda < 0.0 {
        return Err(Error::input(format!(
            "lambda must be finite and non-negative, got {}",
            params.lambda
        )));
    }
    check_sequences(&sequences)?;
    let n = sequences.len();

    let w_plus = compute_w_plus(&sequences, params.k_global, derive_seed(params.seed, "w_plus"))?;

    let seed_minus = derive_seed(params.seed, "w_minus");
    let mut w_minus = Array2::zeros((n, n));
    match params.distance_method {
        DistanceMethod::Viewpoint => {
            let mode = if params.w_minus_raw {
                WMinusMode::RawFrames
            } else {
                WMinusMode::ViewpointCentroids
            };
            // Summaries are per-sequence; compute once, match pairwise.
            let summaries: Vec<Vec<Vec<f64>>> = match mode {
                WMinusMode::ViewpointCentroids => sequences
                    .iter()
                    .map(|s| viewpoint_centroids(s, params.n_viewpoints, seed_minus))
                    .collect::<Result<_>>()?,
                WMinusMode::RawFrames => sequences.iter().map(features_of).collect(),
            };
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = matched_distance(&summaries[i], &summaries[j])?;
                    w_minus[[i, j]] = d;
                    w_minus[[j, i]] = d;
                }
            }
        }
        method => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = sequence_distance(
                        &sequences[i],
                        &sequences[j],
                        method,
                        params.n_viewpoints,
                        seed_minus,
                    )?;
                    w_minus[[i, j]] = d;
                    w_minus[[j, i]] = d;
                }
            }
        }
    }

    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[[i, j]] = (params.lambda * w_plus[[i, j]] - w_minus[[i, j]]).max(0.0);
            }
        }
    }
    Ok(SimilarityGraph { sequences, w_plus, w_minus, w, lambda: params.lambda })
}

/// Row-normalize the graph into one-step transition probabilities and raise
/// them to `horizon`. Rows with no outgoing weight become uniform over the
/// other nodes so walks never strand.
///
/// # Errors
///
/// `horizon == 0`.
pub fn transition_matrix(graph: &SimilarityGraph, horizon: usize) -> Result<TransitionMatrix> {
    if horizon == 0 {
        return Err(Error::input("walk horizon must be at least 1"));
    }
    let n = graph.len();
    let mut t = Array2::zeros((n, n));
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| graph.w[[i, j]]).sum();
        if row_sum > 0.0 {
            for j in 0..n {
                t[[i, j]] = graph.w[[i, j]] / row_sum;
            }
        } else if n > 1 {
            let p = 1.0 / (n - 1) as f64;
            for j in 0..n {
                t[[i, j]] = if i == j { 0.0 } else { p };
            }
        }
    }
    let mut t_h = t.clone();
    for _ in 1..horizon {
        t_h = t_h.dot(&t);
    }
    Ok(TransitionMatrix { t, t_h, horizon })
}

/// Walk-endpoint distribution for positives from `anchor`: the anchor's row
/// of `t_h` with its own entry removed, renormalized. `None` when no mass
/// remains.
pub fn positive_distribution(tm: &TransitionMatrix, anchor: usize) -> Option<Vec<f64>> {
    let row = tm.t_h.row(anchor);
    let mut dist: Vec<f64> = row.iter().map(|&p| p.max(0.0)).collect();
    dist[anchor] = 0.0;
    normalize_in_place(dist)
}

/// Complement distribution for negatives from `anchor`: `1 - t_h[anchor]`
/// entrywise, anchor entry removed, renormalized. `None` when no mass
/// remains.
pub fn negative_distribution(tm: &TransitionMatrix, anchor: usize) -> Option<Vec<f64>> {
    let row = tm.t_h.row(anchor);
    let mut dist: Vec<f64> = row.iter().map(|&p| (1.0 - p).max(0.0)).collect();
    dist[anchor] = 0.0;
    normalize_in_place(dist)
}

fn normalize_in_place(mut dist: Vec<f64>) -> Option<Vec<f64>> {
    let sum: f64 = dist.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return None;
    }
    for p in &mut dist {
        *p /= sum;
    }
    Some(dist)
}

/// Confidence of a mined (anchor, positive, negative) sequence triple, read
/// off the anchor's row of the combined graph. High when the positive is
/// near the row maximum and the negative near the row minimum; a flat row
/// gives 1.
pub fn conf(graph: &SimilarityGraph, anchor: usize, positive: usize, negative: usize) -> f64 {
    let n = graph.len();
    let mut row_min = f64::INFINITY;
    let mut row_max = f64::NEG_INFINITY;
    for j in 0..n {
        if j == anchor {
            continue;
        }
        let v = graph.w[[anchor, j]];
        row_min = row_min.min(v);
        row_max = row_max.max(v);
    }
    let span = row_max - row_min;
    if !(span > 0.0) {
        return 1.0;
    }
    let up = (graph.w[[anchor, positive]] - row_min) / span;
    let down = 1.0 - (graph.w[[anchor, negative]] - row_min) / span;
    up.min(down).clamp(0.0, 1.0)
}

/// Mine `n_triplets` training triplets by cycling anchors over all
/// sequences. Each anchor visit draws one positive sequence from the walk
/// distribution, one negative from its complement, and `frames_per_pair`
/// uniform frame picks from each of the three sequences. Anchors whose
/// distributions carry no mass are skipped and counted.
///
/// # Errors
///
/// Fewer than 3 sequences, zero `n_triplets` or `frames_per_pair`, or a
/// graph so degenerate that no anchor can be sampled.
pub fn sample_triplets(
    tm: &TransitionMatrix,
    graph: &SimilarityGraph,
    n_triplets: usize,
    frames_per_pair: usize,
    seed: u64,
) -> Result<SampledTriplets> {
    let n = graph.len();
    if n < 3 {
        return Err(Error::input(format!(
            "triplet sampling needs at least 3 sequences, got {n}"
        )));
    }
    if tm.t_h.nrows() != n {
        return Err(Error::input(format!(
            "transition matrix covers {} nodes but the graph has {n}",
            tm.t_h.nrows()
        )));
    }
    if n_triplets == 0 {
        return Err(Error::input("n_triplets must be at least 1"));
    }
    if frames_per_pair == 0 {
        return Err(Error::input("frames_per_pair must be at least 1"));
    }

    let mut rng = rng_from_seed(seed);
    let mut triplets = Vec::with_capacity(n_triplets);
    let mut degenerate = vec![false; n];

    // Per-anchor samplers, built on first use.
    let mut samplers: Vec<Option<(WeightedIndex<f64>, WeightedIndex<f64>)>> = vec![None; n];
    let mut known_bad = vec![false; n];

    'outer: loop {
        let before = triplets.len();
        for anchor in 0..n {
            if triplets.len() >= n_triplets {
                break 'outer;
            }
            if known_bad[anchor] {
                continue;
            }
            if samplers[anchor].is_none() {
                let pos = positive_distribution(tm, anchor);
                let neg = negative_distribution(tm, anchor);
                match (pos, neg) {
                    (Some(p), Some(q)) => {
                        let wp = WeightedIndex::new(p)
                            .expect("normalized distribution has positive total");
                        let wq = WeightedIndex::new(q)
                            .expect("normalized distribution has positive total");
                        samplers[anchor] = Some((wp, wq));
                    }
                    _ => {
                        known_bad[anchor] = true;
                        degenerate[anchor] = true;
                        continue;
                    }
                }
            }
            let (wp, wq) = samplers[anchor].as_ref().expect("just built");
            let positive = rng.sample(wp);
            let negative = rng.sample(wq);
            debug_assert!(positive != anchor && negative != anchor);
            let confidence = conf(graph, anchor, positive, negative);

            for _ in 0..frames_per_pair {
                if triplets.len() >= n_triplets {
                    break 'outer;
                }
                let a = rng.gen_range(0..graph.sequences[anchor].len());
                let p = rng.gen_range(0..graph.sequences[positive].len());
                let q = rng.gen_range(0..graph.sequences[negative].len());
                triplets.push(Triplet {
                    anchor: (anchor, a),
                    positive: (positive, p),
                    negative: (negative, q),
                    confidence,
                });
            }
        }
        if triplets.len() == before {
            return Err(Error::input(
                "triplet sampling made no progress: every anchor has a degenerate distribution",
            ));
        }
    }

    Ok(SampledTriplets {
        triplets,
        degenerate_anchors: degenerate.iter().filter(|&&b| b).count(),
    })
}

/// Distance between two sequences under the chosen method. `Viewpoint`
/// matches `compute_w_minus` in centroid mode; the others trade alignment
/// away in different ways.
pub fn sequence_distance(
    a: &MaskSequence,
    b: &MaskSequence,
    method: DistanceMethod,
    n_viewpoints: usize,
    seed: u64,
) -> Result<f64> {
    match method {
        DistanceMethod::Viewpoint => {
            compute_w_minus(a, b, n_viewpoints, seed, WMinusMode::ViewpointCentroids)
        }
        DistanceMethod::MeanFeature => {
            let ma = mean_feature(a);
            let mb = mean_feature(b);
            Ok(dist2(&ma, &mb).sqrt())
        }
        DistanceMethod::TopTenNn => {
            let ca = viewpoint_centroids(a, n_viewpoints, seed)?;
            let cb = viewpoint_centroids(b, n_viewpoints, seed)?;
            let mut dists: Vec<f64> = ca
                .iter()
                .flat_map(|p| cb.iter().map(move |q| dist2(p, q).sqrt()))
                .collect();
            dists.sort_by(|x, y| x.partial_cmp(y).expect("distances are finite"));
            let take = dists.len().min(10);
            Ok(dists[..take].iter().sum::<f64>() / take as f64)
        }
        DistanceMethod::CutTen => {
            let parts = 10.min(a.len()).min(b.len());
            let pa = part_means(a, parts);
            let pb = part_means(b, parts);
            let total: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(p, q)| dist2(p, q).sqrt())
                .sum();
            Ok(total / parts as f64)
        }
    }
}

fn mean_feature(seq: &MaskSequence) -> Vec<f64> {
    let dim = seq.observations[0].feature.len();
    let mut mean = vec![0.0; dim];
    for o in &seq.observations {
        for (m, v) in mean.iter_mut().zip(&o.feature) {
            *m += v;
        }
    }
    let inv = seq.len() as f64;
    for m in &mut mean {
        *m /= inv;
    }
    mean
}

/// Mean feature of each of `parts` contiguous, nearly equal spans.
fn part_means(seq: &MaskSequence, parts: usize) -> Vec<Vec<f64>> {
    let len = seq.len();
    let dim = seq.observations[0].feature.len();
    let mut out = Vec::with_capacity(parts);
    for p in 0..parts {
        let start = p * len / parts;
        let end = (p + 1) * len / parts;
        debug_assert!(end > start);
        let mut mean = vec![0.0; dim];
        for o in &seq.observations[start..end] {
            for (m, v) in mean.iter_mut().zip(&o.feature) {
                *m += v;
            }
        }
        let inv = (end - start) as f64;
        for m in &mut mean {
            *m /= inv;
        }
        out.push(mean);
    }
    out
}

/// Serialize the graph's weights: one row per unordered pair with positive
/// combined weight, preceded by a size comment. Floats print in shortest
/// round-trip form, so import reproduces them bit-exactly.
pub fn graph_to_csv(graph: &SimilarityGraph) -> String {
    let n = graph.len();
    let mut out = String::new();
    out.push_str(&format!("# nodes={} lambda={}\n", n, graph.lambda));
    out.push_str("i,j,w_plus,w_minus,w\n");
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.w[[i, j]] > 0.0 {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    i,
                    j,
                    graph.w_plus[[i, j]],
                    graph.w_minus[[i, j]],
                    graph.w[[i, j]]
                ));
            }
        }
    }
    out
}

/// Parse a graph CSV back into matrices and reattach the sequences the
/// node indices refer to.
///
/// # Errors
///
/// Malformed header or rows (reported with line numbers), node count
/// disagreeing with `sequences`, out-of-range or duplicate pairs.
pub fn graph_from_csv(text: &str, sequences: Vec<MaskSequence>) -> Result<SimilarityGraph> {
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::input("graph csv is empty"))?;
    let rest = first
        .strip_prefix("# nodes=")
        .ok_or_else(|| Error::input("graph csv line 1: expected '# nodes=<n> lambda=<l>'"))?;
    let (nodes_str, lambda_str) = rest
        .split_once(" lambda=")
        .ok_or_else(|| Error::input("graph csv line 1: expected '# nodes=<n> lambda=<l>'"))?;
    let n: usize = nodes_str
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("graph csv line 1: bad node count '{nodes_str}'")))?;
    let lambda: f64 = lambda_str
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("graph csv line 1: bad lambda '{lambda_str}'")))?;

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::input("graph csv: missing column header"))?;
    if header.trim() != "i,j,w_plus,w_minus,w" {
        return Err(Error::input(format!(
            "graph csv line 2: expected header 'i,j,w_plus,w_minus,w', got '{header}'"
        )));
    }
    if sequences.len() != n {
        return Err(Error::input(format!(
            "graph csv declares {n} nodes but {} sequences were provided",
            sequences.len()
        )));
    }

    let mut w_plus = Array2::zeros((n, n));
    let mut w_minus = Array2::zeros((n, n));
    let mut w = Array2::zeros((n, n));
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::input(format!(
                "graph csv line {lineno}: expected 5 fields, got {}",
                fields.len()
            )));
        }
        let i: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("graph csv line {lineno}: bad index '{}'", fields[0])))?;
        let j: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("graph csv line {lineno}: bad index '{}'", fields[1])))?;
        if i >= n || j >= n || i == j {
            return Err(Error::input(format!(
                "graph csv line {lineno}: pair ({i}, {j}) out of range for {n} nodes"
            )));
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(Error::input(format!(
                "graph csv line {lineno}: duplicate pair ({i}, {j})"
            )));
        }
        let mut values = [0.0f64; 3];
        for (slot, field) in values.iter_mut().zip(&fields[2..]) {
            *slot = field.trim().parse().map_err(|_| {
                Error::input(format!("graph csv line {lineno}: bad weight '{field}'"))
            })?;
            if !slot.is_finite() {
                return Err(Error::input(format!(
                    "graph csv line {lineno}: weight is not finite"
                )));
            }
        }
        let [wp, wm, wv] = values;
        if wv <= 0.0 {
            return Err(Error::input(format!(
                "graph csv line {lineno}: stored pairs must have positive combined weight"
            )));
        }
        for (m, v) in [(&mut w_plus, wp), (&mut w_minus, wm), (&mut w, wv)] {
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Ok(SimilarityGraph { sequences, w_plus, w_minus, w, lambda })
}
