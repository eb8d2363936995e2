//! Learned projection of frame features into a space where mined triplets
//! hold: anchors sit closer to positives than to negatives by a margin the
//! triplet's confidence scales.
//!
//! The network is a two-layer perceptron, ReLU after the first layer only.
//! The loss on one triplet is `max(d_pos - d_neg + alpha * conf, 0)` with
//! unsquared L2 distances between embeddings, so a doubtful triplet (low
//! confidence) asks for a thinner margin instead of shouting as loudly as a
//! certain one. Training is plain minibatch SGD; all gradients here are
//! derived and applied by hand, which keeps the update rule inspectable and
//! the whole run reproducible from one seed.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use std::fmt::Write as _;

pub const DEFAULT_HIDDEN_DIM: usize = 512;
pub const DEFAULT_OUTPUT_DIM: usize = 128;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_MARGIN_ALPHA: f64 = 10.0;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 32;

const CHECKPOINT_VERSION: &str = "seqgraph-net v1";

/// Two-layer projection network: `relu(x * w1 + b1) * w2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionNetwork {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Hyperparameters for `train`.
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub margin_alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: DEFAULT_LEARNING_RATE,
            margin_alpha: DEFAULT_MARGIN_ALPHA,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

/// Mined triplets in matrix form: row i of each matrix is the feature of
/// that triplet's anchor, positive, and negative frame.
#[derive(Debug, Clone)]
pub struct TrainingTriplets {
    pub anchors: Array2<f64>,
    pub positives: Array2<f64>,
    pub negatives: Array2<f64>,
    pub confidences: Array1<f64>,
}

impl TrainingTriplets {
    pub fn new(
        anchors: Array2<f64>,
        positives: Array2<f64>,
        negatives: Array2<f64>,
        confidences: Array1<f64>,
    ) -> Result<Self> {
        let n = anchors.nrows();
        let d = anchors.ncols();
        if positives.dim() != (n, d) || negatives.dim() != (n, d) {
            return Err(Error::input(format!(
                "triplet matrices disagree: anchors {:?}, positives {:?}, negatives {:?}",
                anchors.dim(),
                positives.dim(),
                negatives.dim()
            )));
        }
        if confidences.len() != n {
            return Err(Error::input(format!(
                "{} confidences for {n} triplets",
                confidences.len()
            )));
        }
        if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::input("confidences must lie in [0, 1]"));
        }
        if n == 0 {
            return Err(Error::input("no triplets to train on"));
        }
        Ok(TrainingTriplets { anchors, positives, negatives, confidences })
    }

    pub fn len(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.anchors.ncols()
    }
}

/// Loss gradients with respect to every parameter, summed over a batch.
pub struct Grads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

struct ForwardCache {
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    out: Array2<f64>,
}

impl ProjectionNetwork {
    /// Glorot-uniform initialization for the given layer sizes.
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::input("network dimensions must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| -> Array2<f64> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit))
        };
        Ok(ProjectionNetwork {
            w1: glorot(input_dim, hidden_dim),
            b1: Array1::zeros(hidden_dim),
            w2: glorot(hidden_dim, output_dim),
            b2: Array1::zeros(output_dim),
        })
    }

    pub fn with_default_dims(input_dim: usize, seed: u64) -> Result<Self> {
        Self::new(input_dim, DEFAULT_HIDDEN_DIM, DEFAULT_OUTPUT_DIM, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Project a batch of row features.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.out)
    }

    fn forward_cached(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::input(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let hidden_pre = x.dot(&self.w1) + &self.b1;
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let out = hidden.dot(&self.w2) + &self.b2;
        Ok(ForwardCache { hidden_pre, hidden, out })
    }

    /// Project a list of feature vectors.
    pub fn embed(&self, features: &[Vec<f64>]) -> Result<Array2<f64>> {
        let d = self.input_dim();
        let mut x = Array2::zeros((features.len(), d));
        for (i, f) in features.iter().enumerate() {
            if f.len() != d {
                return Err(Error::input(format!(
                    "feature {i} has dimension {}, network expects {d}",
                    f.len()
                )));
            }
            for (j, v) in f.iter().enumerate() {
                x[[i, j]] = *v;
            }
        }
        self.forward(&x)
    }

    /// Mean soft triplet loss of the current parameters over all triplets.
    pub fn soft_triplet_loss(&self, data: &TrainingTriplets, alpha: f64) -> Result<f64> {
        let za = self.forward(&data.anchors)?;
        let zp = self.forward(&data.positives)?;
        let zn = self.forward(&data.negatives)?;
        let losses = triplet_losses(&za, &zp, &zn, &data.confidences, alpha);
        let mean = losses.sum() / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("mean triplet loss is {mean}")));
        }
        Ok(mean)
    }

    /// Per-triplet losses and the analytic gradients of the mean loss over
    /// all triplets, for callers that want to inspect or verify them.
    pub fn gradients(&self, data: &TrainingTriplets, alpha: f64) -> Result<(Vec<f64>, Grads)> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.batch_gradients(data, &rows, alpha)
    }

    /// Per-row losses and mean parameter gradients over the given triplet
    /// rows.
    fn batch_gradients(
        &self,
        data: &TrainingTriplets,
        rows: &[usize],
        alpha: f64,
    ) -> Result<(Vec<f64>, Grads)> {
        let take = |m: &Array2<f64>| m.select(Axis(0), rows);
        let xa = take(&data.anchors);
        let xp = take(&data.positives);
        let xn = take(&data.negatives);
        let conf: Array1<f64> = rows.iter().map(|&i| data.confidences[i]).collect();

        let ca = self.forward_cached(&xa)?;
        let cp = self.forward_cached(&xp)?;
        let cn = self.forward_cached(&xn)?;

        let b = rows.len();
        let out_dim = self.output_dim();
        let mut grad_za = Array2::zeros((b, out_dim));
        let mut grad_zp = Array2::zeros((b, out_dim));
        let mut grad_zn = Array2::zeros((b, out_dim));
        let mut losses = Vec::with_capacity(b);
        let scale = 1.0 / b as f64;

        for i in 0..b {
            let za = ca.out.row(i);
            let zp = cp.out.row(i);
            let zn = cn.out.row(i);
            let diff_p = &za - &zp;
            let diff_n = &za - &zn;
            let d_pos = diff_p.dot(&diff_p).sqrt();
            let d_neg = diff_n.dot(&diff_n).sqrt();
            let raw = d_pos - d_neg + alpha * conf[i];
            if !raw.is_finite() {
                return Err(Error::Diverged(format!(
                    "triplet margin is {raw}; the parameters have blown up"
                )));
            }
            let loss = raw.max(0.0);
            losses.push(loss);
            if loss <= 0.0 {
                continue;
            }
            // Subgradient conventions: zero at a coincident pair (d = 0)
            // and zero where the hinge clamps.
            if d_pos > 0.0 {
                let u = diff_p.mapv(|v| v / d_pos * scale);
                grad_za.row_mut(i).zip_mut_with(&u, |g, v| *g += v);
                grad_zp.row_mut(i).zip_mut_with(&u, |g, v| *g -= v);
            }
            if d_neg > 0.0 {
                let u = diff_n.mapv(|v| v / d_neg * scale);
                grad_za.row_mut(i).zip_mut_with(&u, |g, v| *g -= v);
                grad_zn.row_mut(i).zip_mut_with(&u, |g, v| *g += v);
            }
        }

        let mut grads = Grads {
            w1: Array2::zeros(self.w1.dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.dim()),
            b2: Array1::zeros(self.b2.len()),
        };
        for (x, cache, grad_z) in [(&xa, &ca, &grad_za), (&xp, &cp, &grad_zp), (&xn, &cn, &grad_zn)]
        {
            grads.w2 += &cache.hidden.t().dot(grad_z);
            grads.b2 += &grad_z.sum_axis(Axis(0));
            let mut grad_h = grad_z.dot(&self.w2.t());
            grad_h.zip_mut_with(&cache.hidden_pre, |g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            });
            grads.w1 += &x.t().dot(&grad_h);
            grads.b1 += &grad_h.sum_axis(Axis(0));
        }
        Ok((losses, grads))
    }

    fn apply(&mut self, grads: &Grads, lr: f64) {
        self.w1.zip_mut_with(&grads.w1, |w, g| *w -= lr * g);
        self.b1.zip_mut_with(&grads.b1, |w, g| *w -= lr * g);
        self.w2.zip_mut_with(&grads.w2, |w, g| *w -= lr * g);
        self.b2.zip_mut_with(&grads.b2, |w, g| *w -= lr * g);
    }

    /// Minibatch SGD over the triplets. Returns the per-epoch mean loss
    /// (each triplet's loss as of the step that visited it).
    ///
    /// # Errors
    ///
    /// Dimension mismatches, non-positive hyperparameters, or a non-finite
    /// epoch loss (divergence).
    pub fn train(&mut self, data: &TrainingTriplets, params: TrainParams) -> Result<Vec<f64>> {
        if data.feature_dim() != self.input_dim() {
            return Err(Error::input(format!(
                "triplets have dimension {}, network expects {}",
                data.feature_dim(),
                self.input_dim()
            )));
        }
        if params.batch_size == 0 {
            return Err(Error::input("batch_size must be at least 1"));
        }
        if !params.learning_rate.is_finite() || params.learning_rate < 0.0 {
            return Err(Error::input("learning_rate must be finite and non-negative"));
        }
        if !params.margin_alpha.is_finite() || params.margin_alpha < 0.0 {
            return Err(Error::input("margin_alpha must be finite and non-negative"));
        }
        let n = data.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_from_seed(params.seed);
        let mut history = Vec::with_capacity(params.epochs);
        // Summed in triplet order, not visit order, so the recorded epoch
        // loss does not depend on how the shuffle partitioned batches.
        let mut epoch_losses = vec![0.0; n];
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let (losses, grads) = self.batch_gradients(data, batch, params.margin_alpha)?;
                for (&row, loss) in batch.iter().zip(losses) {
                    epoch_losses[row] = loss;
                }
                self.apply(&grads, params.learning_rate);
            }
            let epoch_loss = epoch_losses.iter().sum::<f64>() / n as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch} mean loss is {epoch_loss}; lower the learning rate"
                )));
            }
            history.push(epoch_loss);
        }
        Ok(history)
    }

    /// Serialize all parameters. Floats print in shortest round-trip form,
    /// so `from_checkpoint` reproduces the network bit-exactly.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{CHECKPOINT_VERSION}, d_in={}, dims={},{}",
            self.input_dim(),
            self.hidden_dim(),
            self.output_dim()
        );
        let write_matrix = |out: &mut String, name: &str, m: &Array2<f64>| {
            let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
            for row in m.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        };
        let write_vector = |out: &mut String, name: &str, v: &Array1<f64>| {
            let _ = writeln!(out, "{name} 1 {}", v.len());
            let line: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        };
        write_matrix(&mut out, "w1", &self.w1);
        write_vector(&mut out, "b1", &self.b1);
        write_matrix(&mut out, "w2", &self.w2);
        write_vector(&mut out, "b2", &self.b2);
        out
    }

    /// Parse a checkpoint produced by `to_checkpoint`.
    ///
    /// # Errors
    ///
    /// Unknown version line, malformed sections (reported with line
    /// numbers), or shapes inconsistent with the header.
    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::input("checkpoint is empty"))?;
        let rest = header.strip_prefix(CHECKPOINT_VERSION).ok_or_else(|| {
            Error::input(format!(
                "checkpoint version line '{header}' is not '{CHECKPOINT_VERSION}, ...'"
            ))
        })?;
        let rest = rest
            .strip_prefix(", d_in=")
            .ok_or_else(|| Error::input("checkpoint header missing d_in"))?;
        let (d_in_str, dims_str) = rest
            .split_once(", dims=")
            .ok_or_else(|| Error::input("checkpoint header missing dims"))?;
        let d_in: usize = d_in_str
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad d_in '{d_in_str}' in checkpoint header")))?;
        let (h_str, o_str) = dims_str
            .split_once(',')
            .ok_or_else(|| Error::input("checkpoint dims must be '<hidden>,<output>'"))?;
        let hidden: usize = h_str
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad hidden dim '{h_str}' in checkpoint header")))?;
        let output: usize = o_str
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad output dim '{o_str}' in checkpoint header")))?;

        let read_floats = |expected: usize, lineno: usize, line: &str| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::input(format!("checkpoint line {lineno}: bad float '{t}'"))
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != expected {
                return Err(Error::input(format!(
                    "checkpoint line {lineno}: expected {expected} values, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };

        let mut expect_matrix = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
            let tag = format!("{name} {rows} {cols}");
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::input(format!("checkpoint ends before '{tag}'")))?;
            if line.trim() != tag {
                return Err(Error::input(format!(
                    "checkpoint line {}: expected '{tag}', got '{line}'",
                    idx + 1
                )));
            }
            let mut m = Array2::zeros((rows, cols));
            for r in 0..rows {
                let (ridx, row_line) = lines.next().ok_or_else(|| {
                    Error::input(format!("checkpoint ends inside section {name}"))
                })?;
                for (c, v) in read_floats(cols, ridx + 1, row_line)?.into_iter().enumerate() {
                    m[[r, c]] = v;
                }
            }
            Ok(m)
        };

        let w1 = expect_matrix("w1", d_in, hidden)?;
        let b1 = Array1::from(expect_matrix("b1", 1, hidden)?.row(0).to_vec());
        let w2 = expect_matrix("w2", hidden, output)?;
        let b2 = Array1::from(expect_matrix("b2", 1, output)?.row(0).to_vec());
        Ok(ProjectionNetwork { w1, b1, w2, b2 })
    }
}

/// Per-triplet soft losses for already-projected rows.
fn triplet_losses(
    za: &Array2<f64>,
    zp: &Array2<f64>,
    zn: &Array2<f64>,
    conf: &Array1<f64>,
    alpha: f64,
) -> Array1<f64> {
    let n = za.nrows();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let a = za.row(i);
        let dp = (&a - &zp.row(i)).mapv(|v| v * v).sum().sqrt();
        let dn = (&a - &zn.row(i)).mapv(|v| v * v).sum().sqrt();
        let raw = dp - dn + alpha * conf[i];
        // max would quietly turn a NaN margin into 0; keep it visible.
        out[i] = if raw.is_finite() { raw.max(0.0) } else { f64::NAN };
    }
    out
}

/// L2-normalize each row in place; zero rows stay zero.
pub fn l2_normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
}
