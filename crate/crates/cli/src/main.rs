//! Command-line front end. Every subcommand is a thin wrapper over the
//! library stages, so `run` and the equivalent chain of single-stage
//! invocations produce byte-identical artifacts.

use clap::{Args, Parser, Subcommand};
use seqgraph_core::pipeline::{
    distance_method_table, generate_synthetic, graph_stage, labels_from_csv, labels_to_csv,
    load_dataset, loss_history_to_csv, report_to_json, resolve_k_final, run_pipeline_with,
    sample_stage, score_labels, sequence_classes, sequences_to_dataset, track_stage, train_stage,
    triplets_from_csv, triplets_to_csv, write_dataset, ClusteringScores, DistanceRow,
    PipelineConfig, SequenceLabel, StageOutput, SynthConfig,
};
use seqgraph_core::projection::ProjectionNetwork;
use seqgraph_core::simgraph::{graph_from_csv, graph_to_csv, SimilarityGraph};
use seqgraph_core::tracking::MaskSequence;
use seqgraph_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seqgraph", version, about = "Unsupervised object discovery from mask sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every stage that reads a dataset.
#[derive(Args)]
struct CommonArgs {
    /// Dataset manifest (manifest.json).
    #[arg(long)]
    data: PathBuf,
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Synth {
        /// Output directory for the dataset.
        #[arg(long)]
        out: PathBuf,
        /// Generator config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track frame detections into sequences and write them as a dataset.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for the tracked dataset.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the pairwise similarity graph.
    Graph {
        #[command(flatten)]
        common: CommonArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine training triplets by random walks on a saved graph.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// Graph CSV from `seqgraph graph`.
        #[arg(long)]
        graph: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the projection network on mined triplets.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Triplets CSV from `seqgraph sample`.
        #[arg(long)]
        triplets: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the per-epoch loss CSV, if wanted.
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Project, pool, and cluster sequences with a trained network.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        /// Network checkpoint from `seqgraph train`.
        #[arg(long)]
        network: PathBuf,
        /// Output labels CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Cluster count; overrides the config.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score saved labels against ground truth.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Labels CSV from `seqgraph cluster`.
        #[arg(long)]
        labels: PathBuf,
        /// Where to write the evaluation JSON; stdout gets a summary either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline, persisting artifacts stage by stage.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline under each ablation flag and tabulate the scores.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Where to write the comparison JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::ReadInput {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::WriteOutput {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|source| Error::WriteOutput {
        path: path.to_path_buf(),
        source,
    })
}

fn pipeline_config(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn synth_config(path: Option<&Path>, seed: Option<u64>) -> Result<SynthConfig> {
    let mut config = match path {
        Some(path) => {
            let text = read(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::input(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_sequences(common: &CommonArgs, config: &PipelineConfig) -> Result<Vec<MaskSequence>> {
    let dataset = load_dataset(&common.data)?;
    track_stage(dataset, config)
}

fn load_graph(common: &CommonArgs, config: &PipelineConfig, path: &Path) -> Result<SimilarityGraph> {
    let sequences = load_sequences(common, config)?;
    graph_from_csv(&read(path)?, sequences)
}

#[derive(Serialize)]
struct EvalSummary {
    metrics: ClusteringScores,
    distance_table: Vec<DistanceRow>,
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    accuracy: f64,
    adjusted_rand_index: f64,
    normalized_mutual_information: f64,
    graph_edges: usize,
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { out, config, seed } => {
            let config = synth_config(config.as_deref(), seed)?;
            let dataset = generate_synthetic(&config)?;
            let manifest = write_dataset(&dataset, &out)?;
            println!(
                "wrote {} observations across {} videos to {}",
                dataset.observation_count(),
                dataset.videos.len(),
                manifest.display()
            );
            Ok(())
        }
        Command::Track { common, out } => {
            let config = pipeline_config(&common)?;
            let sequences = load_sequences(&common, &config)?;
            let tracked = sequences_to_dataset(&sequences)?;
            let manifest = write_dataset(&tracked, &out)?;
            println!("wrote {} sequences to {}", sequences.len(), manifest.display());
            Ok(())
        }
        Command::Graph { common, out } => {
            let config = pipeline_config(&common)?;
            let sequences = load_sequences(&common, &config)?;
            let graph = graph_stage(sequences, &config)?;
            write(&out, &graph_to_csv(&graph))?;
            println!(
                "graph over {} sequences, {} positive edges, written to {}",
                graph.len(),
                graph.edge_count(),
                out.display()
            );
            Ok(())
        }
        Command::Sample { common, graph, out } => {
            let config = pipeline_config(&common)?;
            let graph = load_graph(&common, &config, &graph)?;
            let sampled = sample_stage(&graph, &config)?;
            write(&out, &triplets_to_csv(&sampled, &graph.sequences))?;
            println!(
                "mined {} triplets ({} degenerate anchors skipped), written to {}",
                sampled.triplets.len(),
                sampled.degenerate_anchors,
                out.display()
            );
            Ok(())
        }
        Command::Train { common, triplets, out, loss_out } => {
            let config = pipeline_config(&common)?;
            let sequences = load_sequences(&common, &config)?;
            let sampled = triplets_from_csv(&read(&triplets)?, &sequences)?;
            let dim = sequences[0].observations[0].feature.len();
            let (net, history) = train_stage(&sequences, &sampled, dim, &config)?;
            write(&out, &net.to_checkpoint())?;
            if let Some(path) = &loss_out {
                write(path, &loss_history_to_csv(&history))?;
            }
            let last = history.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs, final loss {last:.6}, checkpoint written to {}",
                history.len(),
                out.display()
            );
            Ok(())
        }
        Command::Cluster { common, network, out, k } => {
            let mut config = pipeline_config(&common)?;
            if k.is_some() {
                config.k_final = k;
            }
            let sequences = load_sequences(&common, &config)?;
            let net = ProjectionNetwork::from_checkpoint(&read(&network)?)?;
            let truth = sequence_classes(&sequences);
            let k = resolve_k_final(&config, truth.as_deref())?;
            let labels = seqgraph_core::pipeline::cluster_stage(&sequences, &net, k, &config)?;
            let rows: Vec<SequenceLabel> = sequences
                .iter()
                .zip(&labels)
                .map(|(s, &c)| SequenceLabel { sequence_id: s.id.clone(), cluster: c })
                .collect();
            write(&out, &labels_to_csv(&rows))?;
            println!("clustered {} sequences into {k} groups, written to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Eval { common, labels, out } => {
            let config = pipeline_config(&common)?;
            let sequences = load_sequences(&common, &config)?;
            let rows = labels_from_csv(&read(&labels)?)?;
            let labels = align_labels(&rows, &sequences)?;
            let truth = sequence_classes(&sequences)
                .ok_or_else(|| Error::input("dataset has no ground truth to evaluate against"))?;
            let summary = EvalSummary {
                metrics: score_labels(&labels, &truth)?,
                distance_table: distance_method_table(&sequences, &truth, &config)?,
            };
            let json = serde_json::to_string_pretty(&summary).expect("eval serialization cannot fail");
            if let Some(path) = &out {
                write(path, &json)?;
            }
            let m = &summary.metrics;
            println!(
                "accuracy {:.4}  ARI {:.4}  NMI {:.4}",
                m.accuracy, m.adjusted_rand_index, m.normalized_mutual_information
            );
            for row in &summary.distance_table {
                println!(
                    "  {:<14} precision {:.4}  recall {:.4}  f0.5 {:.4}",
                    row.method, row.precision, row.recall, row.f_half
                );
            }
            Ok(())
        }
        Command::Run { common, out } => {
            let config = pipeline_config(&common)?;
            let dataset = load_dataset(&common.data)?;
            config.save(&out.join("config.json"))?;
            let artifacts = run_pipeline_with(dataset, &config, &mut |stage| match stage {
                StageOutput::Tracked(_) => Ok(()),
                StageOutput::Graph(graph) => write(&out.join("graph.csv"), &graph_to_csv(graph)),
                StageOutput::Sampled(sampled, sequences) => {
                    write(&out.join("triplets.csv"), &triplets_to_csv(sampled, sequences))
                }
                StageOutput::Trained(net, history) => {
                    write(&out.join("net.txt"), &net.to_checkpoint())?;
                    write(&out.join("loss_history.csv"), &loss_history_to_csv(history))
                }
                StageOutput::Clustered(labels) => {
                    write(&out.join("labels.csv"), &labels_to_csv(labels))
                }
            })?;
            let report = &artifacts.report;
            write(&out.join("report.json"), &report_to_json(report))?;
            println!(
                "{} sequences, {} graph edges, {} triplets",
                report.sequence_count, report.graph_edges, report.triplet_count
            );
            if let Some(m) = &report.metrics {
                println!(
                    "accuracy {:.4}  ARI {:.4}  NMI {:.4}",
                    m.accuracy, m.adjusted_rand_index, m.normalized_mutual_information
                );
            }
            println!("artifacts in {}", out.display());
            Ok(())
        }
        Command::Ablate { common, out } => {
            let base = pipeline_config(&common)?;
            let variants: Vec<(&str, PipelineConfig)> = vec![
                ("full", base.clone()),
                ("binary_graph", PipelineConfig { binary_graph: true, ..base.clone() }),
                ("constant_margin", PipelineConfig { constant_margin: true, ..base.clone() }),
                ("w_minus_raw", PipelineConfig { w_minus_raw: true, ..base.clone() }),
            ];
            let mut rows = Vec::new();
            for (name, config) in variants {
                let dataset = load_dataset(&common.data)?;
                let artifacts = seqgraph_core::pipeline::run_pipeline(dataset, &config)?;
                let report = artifacts.report;
                let m = report.metrics.ok_or_else(|| {
                    Error::input("ablation comparison needs ground truth in the dataset")
                })?;
                println!(
                    "{name:<16} accuracy {:.4}  ARI {:.4}  NMI {:.4}  edges {}",
                    m.accuracy,
                    m.adjusted_rand_index,
                    m.normalized_mutual_information,
                    report.graph_edges
                );
                rows.push(AblationRow {
                    variant: name.to_string(),
                    accuracy: m.accuracy,
                    adjusted_rand_index: m.adjusted_rand_index,
                    normalized_mutual_information: m.normalized_mutual_information,
                    graph_edges: report.graph_edges,
                });
            }
            if let Some(path) = &out {
                let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
                write(path, &json)?;
            }
            Ok(())
        }
    }
}

/// Reorder saved labels to sequence order, insisting on an exact id match.
fn align_labels(rows: &[SequenceLabel], sequences: &[MaskSequence]) -> Result<Vec<usize>> {
    if rows.len() != sequences.len() {
        return Err(Error::input(format!(
            "labels cover {} sequences, dataset has {}",
            rows.len(),
            sequences.len()
        )));
    }
    let by_id: std::collections::HashMap<&str, usize> =
        rows.iter().map(|r| (r.sequence_id.as_str(), r.cluster)).collect();
    if by_id.len() != rows.len() {
        return Err(Error::input("labels csv repeats a sequence id"));
    }
    sequences
        .iter()
        .map(|s| {
            by_id
                .get(s.id.as_str())
                .copied()
                .ok_or_else(|| Error::input(format!("labels csv is missing sequence '{}'", s.id)))
        })
        .collect()
}
