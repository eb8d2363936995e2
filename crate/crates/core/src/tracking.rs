//! Linking per-frame object masks into sequences.
//!
//! Matching is overlap-greedy in the aggregate: consecutive frames are
//! paired by solving a maximum-total-IoU assignment, then pairs whose IoU
//! falls below a threshold are dropped. A mask that fails to match ends its
//! sequence; an unmatched mask in the next frame starts a new one. There is
//! no re-identification: an object that leaves and returns becomes a new
//! sequence.

use crate::assignment::{solve_assignment, CostMatrix, Sense};
use crate::error::{Error, Result};

/// Default minimum IoU for two masks in consecutive frames to stay linked.
pub const DEFAULT_IOU_MIN: f64 = 0.1;

/// Axis-aligned box with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// # Errors
    ///
    /// Non-finite coordinates or non-positive width/height.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(Error::input(format!("bounding box {name} is not finite: {v}")));
            }
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::input(format!(
                "bounding box must have positive extent, got w={w} h={h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Ground-truth annotation carried through from ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthLabel {
    pub class_id: usize,
    pub instance_id: usize,
}

/// One detected mask: where it is, when, and what it looks like.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskObservation {
    pub id: String,
    pub video_id: String,
    pub frame_idx: usize,
    pub bbox: BoundingBox,
    pub feature: Vec<f64>,
    pub truth: Option<TruthLabel>,
}

/// A tracked object: observations from consecutive frames of one video,
/// each linked to the next by IoU at or above the tracking threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    pub id: String,
    pub video_id: String,
    pub observations: Vec<MaskObservation>,
}

impl MaskSequence {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Intersection over union of two boxes; 0 when they are disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// Pair boxes of one frame with boxes of the next so the total IoU is
/// maximal, then discard pairs with IoU below `iou_min`. Returned pairs are
/// (index in `curr`, index in `next`), sorted by the first component.
pub fn match_frames(curr: &[BoundingBox], next: &[BoundingBox], iou_min: f64) -> Vec<(usize, usize)> {
    if curr.is_empty() || next.is_empty() {
        return Vec::new();
    }
    let data: Vec<f64> = curr
        .iter()
        .flat_map(|a| next.iter().map(move |b| iou(a, b)))
        .collect();
    let costs = CostMatrix::new(curr.len(), next.len(), data)
        .expect("IoU values are finite and shapes are non-empty");
    let matching = solve_assignment(&costs, Sense::Maximize)
        .expect("assignment on a valid matrix cannot fail");
    matching
        .pairs
        .into_iter()
        .filter(|&(r, c)| iou(&curr[r], &next[c]) >= iou_min)
        .collect()
}

/// Chain the frames of one video into sequences.
///
/// `frames[t]` holds the observations of frame `t`. Sequences are returned
/// in creation order (frame, then position within frame) and together they
/// partition the input observations exactly.
///
/// # Errors
///
/// An observation whose `video_id` or `frame_idx` disagrees with its
/// position in `frames`.
pub fn build_sequences(
    video_id: &str,
    frames: &[Vec<MaskObservation>],
    iou_min: f64,
) -> Result<Vec<MaskSequence>> {
    for (t, frame) in frames.iter().enumerate() {
        for obs in frame {
            if obs.video_id != video_id {
                return Err(Error::input(format!(
                    "observation {} belongs to video {} but was grouped under {}",
                    obs.id, obs.video_id, video_id
                )));
            }
            if obs.frame_idx != t {
                return Err(Error::input(format!(
                    "observation {} carries frame index {} but sits in frame {}",
                    obs.id, obs.frame_idx, t
                )));
            }
        }
    }

    let mut sequences: Vec<MaskSequence> = Vec::new();
    // seq_of[j] = sequence index owning observation j of the current frame.
    let mut seq_of: Vec<usize> = Vec::new();

    for (t, frame) in frames.iter().enumerate() {
        if t == 0 {
            for obs in frame {
                seq_of.push(start_sequence(&mut sequences, video_id, obs));
            }
            continue;
        }
        let prev_boxes: Vec<BoundingBox> = frames[t - 1].iter().map(|o| o.bbox).collect();
        let curr_boxes: Vec<BoundingBox> = frame.iter().map(|o| o.bbox).collect();
        let pairs = match_frames(&prev_boxes, &curr_boxes, iou_min);

        let mut next_seq_of = vec![usize::MAX; frame.len()];
        for (p, c) in pairs {
            next_seq_of[c] = seq_of[p];
            sequences[seq_of[p]].observations.push(frame[c].clone());
        }
        for (c, obs) in frame.iter().enumerate() {
            if next_seq_of[c] == usize::MAX {
                next_seq_of[c] = start_sequence(&mut sequences, video_id, obs);
            }
        }
        seq_of = next_seq_of;
    }
    Ok(sequences)
}

fn start_sequence(sequences: &mut Vec<MaskSequence>, video_id: &str, obs: &MaskObservation) -> usize {
    let idx = sequences.len();
    sequences.push(MaskSequence {
        id: format!("{video_id}-{idx}"),
        video_id: video_id.to_string(),
        observations: vec![obs.clone()],
    });
    idx
}
