//! End-to-end orchestration: dataset to tracked sequences to similarity
//! graph to mined triplets to trained projection to clusters to scores.
//!
//! Every stage draws its randomness from a seed derived off the one
//! configured seed and a stage tag, so running the whole pipeline in one
//! call and running it stage by stage from persisted artifacts produce
//! byte-identical outputs. All artifact formats round-trip floats in
//! shortest round-trip form for the same reason.

mod dataset;
mod synth;

pub use dataset::{
    load_dataset, sequences_to_dataset, write_dataset, Dataset, Manifest, ManifestVideo,
    VideoContent, VideoData, BOXES_HEADER, SEQUENCES_HEADER, TRUTH_HEADER,
};
pub use synth::{generate_synthetic, SynthConfig};

use crate::clustering::kmeans_best_of;
use crate::error::{Error, Result};
use crate::metrics::{adjusted_rand_index, cluster_accuracy, nmi, pairwise_matching_eval};
use crate::projection::{l2_normalize_rows, ProjectionNetwork, TrainParams, TrainingTriplets};
use crate::rng::derive_seed;
use crate::simgraph::{
    build_graph_with, sample_triplets, sequence_distance, transition_matrix, DistanceMethod,
    GraphParams, SampledTriplets, SimilarityGraph, Triplet,
};
use crate::tracking::MaskSequence;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

/// Everything the pipeline needs beyond the data itself.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Attraction weight in the combined graph.
    pub lambda: f64,
    /// Random-walk horizon for positive mining.
    pub horizon: usize,
    /// Global cluster count for the attraction term.
    pub k_global: usize,
    /// Viewpoint centroids per sequence for the repulsion term.
    pub n_viewpoints: usize,
    /// IoU threshold for frame-to-frame tracking.
    pub iou_min: f64,
    /// Number of triplets to mine.
    pub n_triplets: usize,
    /// Frame triples drawn per sampled sequence pair.
    pub frames_per_pair: usize,
    pub learning_rate: f64,
    pub margin_alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Final cluster count; defaults to the truth class count when labels
    /// are present.
    pub k_final: Option<usize>,
    pub seed: u64,
    /// Ablation: threshold the graph to 0/1 weights.
    pub binary_graph: bool,
    /// Ablation: ignore mined confidences, use a constant full margin.
    pub constant_margin: bool,
    /// Dissimilarity used for the graph's repulsion term.
    pub distance_method: DistanceMethod,
    /// Ablation: match raw frames instead of viewpoint centroids.
    pub w_minus_raw: bool,
    /// L2-normalize projected features before pooling and clustering.
    pub normalize_projection: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda: crate::simgraph::DEFAULT_LAMBDA,
            horizon: crate::simgraph::DEFAULT_HORIZON,
            k_global: crate::simgraph::DEFAULT_K_GLOBAL,
            n_viewpoints: crate::simgraph::DEFAULT_N_VIEWPOINTS,
            iou_min: crate::tracking::DEFAULT_IOU_MIN,
            n_triplets: 2000,
            frames_per_pair: crate::simgraph::DEFAULT_FRAMES_PER_PAIR,
            learning_rate: crate::projection::DEFAULT_LEARNING_RATE,
            margin_alpha: crate::projection::DEFAULT_MARGIN_ALPHA,
            epochs: crate::projection::DEFAULT_EPOCHS,
            batch_size: crate::projection::DEFAULT_BATCH_SIZE,
            hidden_dim: crate::projection::DEFAULT_HIDDEN_DIM,
            output_dim: crate::projection::DEFAULT_OUTPUT_DIM,
            k_final: None,
            seed: 0,
            binary_graph: false,
            constant_margin: false,
            distance_method: DistanceMethod::Viewpoint,
            w_minus_raw: false,
            normalize_projection: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ReadInput {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("config serialization cannot fail");
        dataset::write_file(path, &json)
    }
}

/// Final cluster assignment for one sequence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SequenceLabel {
    pub sequence_id: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ClusteringScores {
    pub accuracy: f64,
    pub adjusted_rand_index: f64,
    pub normalized_mutual_information: f64,
}

/// One row of the distance-method comparison table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceRow {
    pub method: String,
    pub precision: f64,
    pub recall: f64,
    pub f_half: f64,
}

/// Everything a full run reports. Serialized as `report.json`; two runs
/// with the same config and data agree byte-for-byte except `timings_ms`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub sequence_count: usize,
    pub graph_edges: usize,
    pub triplet_count: usize,
    pub degenerate_anchors: usize,
    pub loss_history: Vec<f64>,
    pub labels: Vec<SequenceLabel>,
    pub metrics: Option<ClusteringScores>,
    pub distance_table: Option<Vec<DistanceRow>>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl RunReport {
    /// The report minus wall-clock noise, for determinism comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport { timings_ms: BTreeMap::new(), ..self.clone() }
    }
}

/// In-memory results of a full pipeline run.
#[derive(Debug)]
pub struct PipelineArtifacts {
    pub graph: SimilarityGraph,
    pub sampled: SampledTriplets,
    pub network: ProjectionNetwork,
    pub labels: Vec<usize>,
    pub report: RunReport,
}

/// Track every video into sequences (pass-through for pre-tracked ones).
pub fn track_stage(dataset: Dataset, config: &PipelineConfig) -> Result<Vec<MaskSequence>> {
    dataset.into_sequences(config.iou_min)
}

/// Build the similarity graph, honoring the binary-graph ablation.
pub fn graph_stage(sequences: Vec<MaskSequence>, config: &PipelineConfig) -> Result<SimilarityGraph> {
    let params = GraphParams {
        lambda: config.lambda,
        k_global: config.k_global,
        n_viewpoints: config.n_viewpoints,
        seed: derive_seed(config.seed, "graph"),
        distance_method: config.distance_method,
        w_minus_raw: config.w_minus_raw,
    };
    let graph = build_graph_with(sequences, params)?;
    Ok(if config.binary_graph { graph.binarized() } else { graph })
}

/// Mine triplets from the graph, honoring the constant-margin ablation.
pub fn sample_stage(graph: &SimilarityGraph, config: &PipelineConfig) -> Result<SampledTriplets> {
    let tm = transition_matrix(graph, config.horizon)?;
    let mut sampled = sample_triplets(
        &tm,
        graph,
        config.n_triplets,
        config.frames_per_pair,
        derive_seed(config.seed, "sample"),
    )?;
    if config.constant_margin {
        for t in &mut sampled.triplets {
            t.confidence = 1.0;
        }
    }
    Ok(sampled)
}

/// Gather observation features for mined triplets into training matrices.
fn training_matrices(
    sequences: &[MaskSequence],
    triplets: &[Triplet],
    feature_dim: usize,
) -> Result<TrainingTriplets> {
    let n = triplets.len();
    let mut anchors = Array2::zeros((n, feature_dim));
    let mut positives = Array2::zeros((n, feature_dim));
    let mut negatives = Array2::zeros((n, feature_dim));
    let mut conf = Array1::zeros(n);
    for (i, t) in triplets.iter().enumerate() {
        for (slot, (seq, obs)) in [
            (&mut anchors, t.anchor),
            (&mut positives, t.positive),
            (&mut negatives, t.negative),
        ] {
            let feature = &sequences
                .get(seq)
                .ok_or_else(|| Error::input(format!("triplet {i} references sequence {seq}")))?
                .observations
                .get(obs)
                .ok_or_else(|| {
                    Error::input(format!("triplet {i} references observation {obs} of sequence {seq}"))
                })?
                .feature;
            for (j, v) in feature.iter().enumerate() {
                slot[[i, j]] = *v;
            }
        }
        conf[i] = t.confidence;
    }
    TrainingTriplets::new(anchors, positives, negatives, conf)
}

/// Initialize and train the projection network on mined triplets.
/// Returns the network and its per-epoch loss history.
pub fn train_stage(
    sequences: &[MaskSequence],
    sampled: &SampledTriplets,
    feature_dim: usize,
    config: &PipelineConfig,
) -> Result<(ProjectionNetwork, Vec<f64>)> {
    let data = training_matrices(sequences, &sampled.triplets, feature_dim)?;
    let mut net = ProjectionNetwork::new(
        feature_dim,
        config.hidden_dim,
        config.output_dim,
        derive_seed(config.seed, "init"),
    )?;
    let history = net.train(
        &data,
        TrainParams {
            learning_rate: config.learning_rate,
            margin_alpha: config.margin_alpha,
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: derive_seed(config.seed, "train"),
        },
    )?;
    Ok((net, history))
}

/// Restarts for the final sequence clustering; the pooled point set is
/// small, where single k-means runs get stuck visibly often.
pub const FINAL_KMEANS_RESTARTS: usize = 8;

/// Project every observation, pool per sequence, and cluster the pooled
/// embeddings into `k` groups. Returns one cluster label per sequence.
pub fn cluster_stage(
    sequences: &[MaskSequence],
    net: &ProjectionNetwork,
    k: usize,
    config: &PipelineConfig,
) -> Result<Vec<usize>> {
    let pooled = pooled_embeddings(sequences, net, config.normalize_projection)?;
    let result = kmeans_best_of(&pooled, k, derive_seed(config.seed, "cluster"), FINAL_KMEANS_RESTARTS)?;
    Ok(result.labels)
}

/// Per-sequence embedding: project each observation, optionally normalize,
/// then average.
fn pooled_embeddings(
    sequences: &[MaskSequence],
    net: &ProjectionNetwork,
    normalize: bool,
) -> Result<Vec<Vec<f64>>> {
    let mut pooled = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let features: Vec<Vec<f64>> = seq.observations.iter().map(|o| o.feature.clone()).collect();
        let mut z = net.embed(&features)?;
        if normalize {
            l2_normalize_rows(&mut z);
        }
        let mean = z.mean_axis(ndarray::Axis(0)).expect("sequences are non-empty");
        pooled.push(mean.to_vec());
    }
    Ok(pooled)
}

/// Truth class per sequence by majority vote over its observations, ties
/// to the smallest class id. `None` if any observation lacks a label.
pub fn sequence_classes(sequences: &[MaskSequence]) -> Option<Vec<usize>> {
    let mut classes = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for obs in &seq.observations {
            let t = obs.truth?;
            *counts.entry(t.class_id).or_insert(0) += 1;
        }
        let best = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("sequences are non-empty");
        classes.push(best.0);
    }
    Some(classes)
}

/// Choose the final cluster count: explicit config wins, otherwise the
/// number of distinct truth classes.
pub fn resolve_k_final(config: &PipelineConfig, truth_classes: Option<&[usize]>) -> Result<usize> {
    if let Some(k) = config.k_final {
        if k == 0 {
            return Err(Error::input("k_final must be at least 1"));
        }
        return Ok(k);
    }
    match truth_classes {
        Some(classes) => {
            let distinct: std::collections::HashSet<_> = classes.iter().collect();
            Ok(distinct.len())
        }
        None => Err(Error::input(
            "k_final must be set when the dataset has no ground truth",
        )),
    }
}

/// Clustering scores of predicted labels against sequence truth classes.
pub fn score_labels(labels: &[usize], truth: &[usize]) -> Result<ClusteringScores> {
    Ok(ClusteringScores {
        accuracy: cluster_accuracy(labels, truth)?,
        adjusted_rand_index: adjusted_rand_index(labels, truth)?,
        normalized_mutual_information: nmi(labels, truth)?,
    })
}

/// Pairwise same-class retrieval scores for every distance method, each
/// thresholded at its own median off-diagonal distance.
pub fn distance_method_table(
    sequences: &[MaskSequence],
    truth: &[usize],
    config: &PipelineConfig,
) -> Result<Vec<DistanceRow>> {
    let n = sequences.len();
    let seed = derive_seed(config.seed, "distance_table");
    let mut rows = Vec::new();
    for method in DistanceMethod::ALL {
        let mut distances = vec![vec![0.0; n]; n];
        let mut off_diag = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = sequence_distance(&sequences[i], &sequences[j], method, config.n_viewpoints, seed)?;
                distances[i][j] = d;
                distances[j][i] = d;
                off_diag.push(d);
            }
        }
        off_diag.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        let threshold = off_diag[off_diag.len() / 2];
        let eval = pairwise_matching_eval(&distances, truth, threshold)?;
        rows.push(DistanceRow {
            method: method.name().to_string(),
            precision: eval.precision,
            recall: eval.recall,
            f_half: eval.f_beta,
        });
    }
    Ok(rows)
}

/// Stage outputs handed to [`run_pipeline_with`]'s callback as soon as each
/// stage finishes, so callers can persist partial progress before a later
/// stage gets a chance to fail.
pub enum StageOutput<'a> {
    Tracked(&'a [MaskSequence]),
    Graph(&'a SimilarityGraph),
    Sampled(&'a SampledTriplets, &'a [MaskSequence]),
    Trained(&'a ProjectionNetwork, &'a [f64]),
    Clustered(&'a [SequenceLabel]),
}

/// Run every stage in order and assemble the report.
pub fn run_pipeline(dataset: Dataset, config: &PipelineConfig) -> Result<PipelineArtifacts> {
    run_pipeline_with(dataset, config, &mut |_| Ok(()))
}

/// [`run_pipeline`] with a per-stage callback. The callback runs outside
/// the stage timings.
pub fn run_pipeline_with(
    dataset: Dataset,
    config: &PipelineConfig,
    on_stage: &mut dyn FnMut(StageOutput) -> Result<()>,
) -> Result<PipelineArtifacts> {
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let sequences = track_stage(dataset, config)?;
    timings.insert("track".to_string(), clock.elapsed().as_millis() as u64);
    on_stage(StageOutput::Tracked(&sequences))?;

    let clock = Instant::now();
    let graph = graph_stage(sequences, config)?;
    timings.insert("graph".to_string(), clock.elapsed().as_millis() as u64);
    on_stage(StageOutput::Graph(&graph))?;

    let clock = Instant::now();
    let sampled = sample_stage(&graph, config)?;
    timings.insert("sample".to_string(), clock.elapsed().as_millis() as u64);
    on_stage(StageOutput::Sampled(&sampled, &graph.sequences))?;

    let feature_dim = graph.sequences[0].observations[0].feature.len();
    let clock = Instant::now();
    let (network, loss_history) = train_stage(&graph.sequences, &sampled, feature_dim, config)?;
    timings.insert("train".to_string(), clock.elapsed().as_millis() as u64);
    on_stage(StageOutput::Trained(&network, &loss_history))?;

    let truth_classes = sequence_classes(&graph.sequences);
    let k = resolve_k_final(config, truth_classes.as_deref())?;
    let clock = Instant::now();
    let labels = cluster_stage(&graph.sequences, &network, k, config)?;
    timings.insert("cluster".to_string(), clock.elapsed().as_millis() as u64);

    let sequence_labels: Vec<SequenceLabel> = graph
        .sequences
        .iter()
        .zip(&labels)
        .map(|(s, &c)| SequenceLabel { sequence_id: s.id.clone(), cluster: c })
        .collect();
    on_stage(StageOutput::Clustered(&sequence_labels))?;

    let clock = Instant::now();
    let (metrics, distance_table) = match &truth_classes {
        Some(truth) => (
            Some(score_labels(&labels, truth)?),
            Some(distance_method_table(&graph.sequences, truth, config)?),
        ),
        None => (None, None),
    };
    timings.insert("eval".to_string(), clock.elapsed().as_millis() as u64);

    let report = RunReport {
        config: config.clone(),
        sequence_count: graph.len(),
        graph_edges: graph.edge_count(),
        triplet_count: sampled.triplets.len(),
        degenerate_anchors: sampled.degenerate_anchors,
        loss_history,
        labels: sequence_labels,
        metrics,
        distance_table,
        timings_ms: timings,
    };
    Ok(PipelineArtifacts { graph, sampled, network, labels, report })
}

pub const TRIPLETS_HEADER: &str = "anchor_obs,positive_obs,negative_obs,confidence";
pub const LABELS_HEADER: &str = "sequence_id,cluster";
pub const LOSS_HEADER: &str = "epoch,loss";

/// Serialize mined triplets by observation id, with the degenerate-anchor
/// count in a leading comment.
pub fn triplets_to_csv(sampled: &SampledTriplets, sequences: &[MaskSequence]) -> String {
    let mut out = format!("# degenerate_anchors={}\n{TRIPLETS_HEADER}\n", sampled.degenerate_anchors);
    for t in &sampled.triplets {
        let id = |(seq, obs): (usize, usize)| -> &str { &sequences[seq].observations[obs].id };
        out.push_str(&format!(
            "{},{},{},{}\n",
            id(t.anchor),
            id(t.positive),
            id(t.negative),
            t.confidence
        ));
    }
    out
}

/// Parse triplets back, resolving observation ids against the sequences.
pub fn triplets_from_csv(text: &str, sequences: &[MaskSequence]) -> Result<SampledTriplets> {
    let mut by_id: HashMap<&str, (usize, usize)> = HashMap::new();
    for (si, seq) in sequences.iter().enumerate() {
        for (oi, obs) in seq.observations.iter().enumerate() {
            if by_id.insert(&obs.id, (si, oi)).is_some() {
                return Err(Error::input(format!("duplicate observation id '{}'", obs.id)));
            }
        }
    }
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::input("triplets csv is empty"))?;
    let degenerate_anchors: usize = first
        .strip_prefix("# degenerate_anchors=")
        .ok_or_else(|| Error::input("triplets csv line 1: expected '# degenerate_anchors=<n>'"))?
        .trim()
        .parse()
        .map_err(|_| Error::input("triplets csv line 1: bad degenerate anchor count"))?;
    match lines.next() {
        Some((_, h)) if h.trim() == TRIPLETS_HEADER => {}
        other => {
            return Err(Error::input(format!(
                "triplets csv line 2: expected header '{TRIPLETS_HEADER}', got {other:?}"
            )));
        }
    }
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::input(format!(
                "triplets csv line {lineno}: expected 4 fields, got {}",
                fields.len()
            )));
        }
        let resolve = |id: &str| -> Result<(usize, usize)> {
            by_id.get(id).copied().ok_or_else(|| {
                Error::input(format!("triplets csv line {lineno}: unknown observation '{id}'"))
            })
        };
        let confidence: f64 = fields[3].parse().map_err(|_| {
            Error::input(format!("triplets csv line {lineno}: bad confidence '{}'", fields[3]))
        })?;
        triplets.push(Triplet {
            anchor: resolve(fields[0])?,
            positive: resolve(fields[1])?,
            negative: resolve(fields[2])?,
            confidence,
        });
    }
    Ok(SampledTriplets { triplets, degenerate_anchors })
}

pub fn labels_to_csv(labels: &[SequenceLabel]) -> String {
    let mut out = format!("{LABELS_HEADER}\n");
    for l in labels {
        out.push_str(&format!("{},{}\n", l.sequence_id, l.cluster));
    }
    out
}

pub fn labels_from_csv(text: &str) -> Result<Vec<SequenceLabel>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        other => {
            return Err(Error::input(format!(
                "labels csv: expected header '{LABELS_HEADER}', got {other:?}"
            )));
        }
    }
    let mut labels = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (id, cluster) = line.split_once(',').ok_or_else(|| {
            Error::input(format!("labels csv line {}: expected 2 fields", idx + 1))
        })?;
        let cluster: usize = cluster.trim().parse().map_err(|_| {
            Error::input(format!("labels csv line {}: bad cluster '{cluster}'", idx + 1))
        })?;
        labels.push(SequenceLabel { sequence_id: id.trim().to_string(), cluster });
    }
    Ok(labels)
}

pub fn loss_history_to_csv(history: &[f64]) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for (epoch, loss) in history.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}

pub fn loss_history_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOSS_HEADER => {}
        other => {
            return Err(Error::input(format!(
                "loss csv: expected header '{LOSS_HEADER}', got {other:?}"
            )));
        }
    }
    let mut history = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (epoch, loss) = line
            .split_once(',')
            .ok_or_else(|| Error::input(format!("loss csv line {lineno}: expected 2 fields")))?;
        let epoch: usize = epoch
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("loss csv line {lineno}: bad epoch '{epoch}'")))?;
        if epoch != history.len() {
            return Err(Error::input(format!(
                "loss csv line {lineno}: epoch {epoch} out of order"
            )));
        }
        let loss: f64 = loss
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("loss csv line {lineno}: bad loss '{loss}'")))?;
        history.push(loss);
    }
    Ok(history)
}

pub fn report_to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

pub fn report_from_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::input(format!("report json: {e}")))
}
