//! Self-supervised object discovery from tracked mask sequences.
//!
//! The crate turns per-frame object masks (bounding boxes plus feature
//! vectors) into category labels without any ground-truth supervision:
//!
//! 1. [`tracking`] links masks across frames into sequences by maximizing
//!    bounding-box overlap between consecutive frames.
//! 2. [`simgraph`] scores every pair of sequences by combining a global
//!    co-clustering signal with a viewpoint-aligned distance, then mines
//!    training triplets by random walks on the resulting graph.
//! 3. [`projection`] trains a small two-layer network with a
//!    confidence-weighted soft triplet loss so that sequences the graph
//!    considers similar project to nearby points.
//! 4. [`clustering`] groups the projected features with seeded k-means and
//!    [`metrics`] scores the result against ground truth when available.
//!
//! [`pipeline`] wires the stages together behind a single config, with
//! file-based ingestion, synthetic data generation, and full determinism:
//! every stage derives its randomness from `config.seed`, so a run is a pure
//! function of the input bytes and the config.

pub mod assignment;
pub mod clustering;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod simgraph;
pub mod tracking;

pub use error::{Error, Result};
