//! On-disk dataset layout: a JSON manifest naming per-video CSV files.
//!
//! A video arrives either as raw detections (`boxes`) that still need
//! tracking or as finished `sequences`; both carry their frame features in
//! a separate file keyed by observation id, so several videos may share
//! one feature file. Ground truth is optional but all-or-nothing: if the
//! manifest names a truth file, every observation must be labeled.
//!
//! All parsers are hand-rolled line splitters. The schemas are small and
//! fixed, and owning the parse keeps error messages in terms of the file
//! and line that actually broke.

use crate::error::{Error, Result};
use crate::tracking::{build_sequences, BoundingBox, MaskObservation, MaskSequence, TruthLabel};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

/// Manifest file: the entry point of a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub videos: Vec<ManifestVideo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub id: String,
    /// Raw detections CSV, to be tracked into sequences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<String>,
    /// Pre-tracked sequences CSV; mutually exclusive with `boxes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequences: Option<String>,
    pub features: String,
}

/// One video's observations, either frame-grouped (untracked) or already
/// chained into sequences.
#[derive(Debug, Clone)]
pub enum VideoContent {
    Frames(Vec<Vec<MaskObservation>>),
    Sequences(Vec<MaskSequence>),
}

#[derive(Debug, Clone)]
pub struct VideoData {
    pub id: String,
    pub content: VideoContent,
}

/// A loaded dataset: all videos plus what we know about labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub videos: Vec<VideoData>,
    pub feature_dim: usize,
    pub has_truth: bool,
}

impl Dataset {
    /// Total observation count across videos.
    pub fn observation_count(&self) -> usize {
        self.videos
            .iter()
            .map(|v| match &v.content {
                VideoContent::Frames(frames) => frames.iter().map(Vec::len).sum::<usize>(),
                VideoContent::Sequences(seqs) => seqs.iter().map(MaskSequence::len).sum(),
            })
            .sum()
    }

    /// Number of distinct truth classes, if labels are attached.
    pub fn class_count(&self) -> Option<usize> {
        if !self.has_truth {
            return None;
        }
        let mut classes = HashSet::new();
        self.for_each_observation(|o| {
            if let Some(t) = &o.truth {
                classes.insert(t.class_id);
            }
        });
        Some(classes.len())
    }

    fn for_each_observation(&self, mut f: impl FnMut(&MaskObservation)) {
        for v in &self.videos {
            match &v.content {
                VideoContent::Frames(frames) => {
                    frames.iter().flatten().for_each(&mut f);
                }
                VideoContent::Sequences(seqs) => {
                    seqs.iter().flat_map(|s| &s.observations).for_each(&mut f);
                }
            }
        }
    }

    /// Chain every video into sequences: tracked videos pass through,
    /// frame-grouped ones run the IoU tracker. Order is manifest order.
    pub fn into_sequences(self, iou_min: f64) -> Result<Vec<MaskSequence>> {
        let mut all = Vec::new();
        for video in self.videos {
            match video.content {
                VideoContent::Sequences(mut seqs) => all.append(&mut seqs),
                VideoContent::Frames(frames) => {
                    let mut seqs = build_sequences(&video.id, &frames, iou_min)?;
                    all.append(&mut seqs);
                }
            }
        }
        Ok(all)
    }
}

/// Repackage tracked sequences as a dataset so they can be written back to
/// disk. Videos keep their order of first appearance.
pub fn sequences_to_dataset(sequences: &[MaskSequence]) -> Result<Dataset> {
    let first = sequences
        .first()
        .and_then(|s| s.observations.first())
        .ok_or_else(|| Error::input("no sequences to repackage"))?;
    let feature_dim = first.feature.len();
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<&str, Vec<MaskSequence>> = HashMap::new();
    let mut has_truth = true;
    for seq in sequences {
        if !grouped.contains_key(seq.video_id.as_str()) {
            order.push(seq.video_id.clone());
        }
        has_truth &= seq.observations.iter().all(|o| o.truth.is_some());
        grouped.entry(seq.video_id.as_str()).or_default().push(seq.clone());
    }
    Ok(Dataset {
        videos: order
            .iter()
            .map(|id| VideoData {
                id: id.clone(),
                content: VideoContent::Sequences(grouped.remove(id.as_str()).unwrap()),
            })
            .collect(),
        feature_dim,
        has_truth,
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::ReadInput {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<()> {
    let as_write_err = |source| Error::WriteOutput { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(as_write_err)?;
        }
    }
    std::fs::write(path, content).map_err(as_write_err)
}

fn parse_err(path: &Path, lineno: usize, msg: impl std::fmt::Display) -> Error {
    Error::input(format!("{}:{lineno}: {msg}", path.display()))
}

/// Split a CSV with an exact expected header; yields (lineno, fields).
fn read_csv(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => {
            return Err(parse_err(path, 1, format!("expected header '{header}', got '{first}'")));
        }
        None => return Err(parse_err(path, 1, "file is empty")),
    }
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != cols {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {cols} fields, got {}", fields.len()),
            ));
        }
        rows.push((idx + 1, fields));
    }
    Ok(rows)
}

fn parse_num<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    what: &str,
    field: &str,
) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, lineno, format!("bad {what} '{field}'")))
}

pub const BOXES_HEADER: &str = "video_id,frame_idx,obs_id,x,y,w,h";
pub const SEQUENCES_HEADER: &str = "video_id,frame_idx,obs_id,seq_id,x,y,w,h";
pub const TRUTH_HEADER: &str = "obs_id,class_id,instance_id";

struct FeatureTable {
    dim: usize,
    by_obs: HashMap<String, Vec<f64>>,
}

/// Features are keyed by observation id; the header fixes the dimension.
/// A file may hold features for more observations than one video uses.
fn load_features(path: &Path) -> Result<FeatureTable> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "file is empty"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "obs_id" {
        return Err(parse_err(path, 1, "expected header 'obs_id,f0,f1,...'"));
    }
    for (i, c) in cols[1..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(parse_err(path, 1, format!("feature column {} should be 'f{i}'", i + 1)));
        }
    }
    let dim = cols.len() - 1;
    let mut by_obs = HashMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        let mut feature = Vec::with_capacity(dim);
        for f in &fields[1..] {
            let v: f64 = parse_num(path, lineno, "feature value", f)?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, "feature value is not finite"));
            }
            feature.push(v);
        }
        if by_obs.insert(fields[0].to_string(), feature).is_some() {
            return Err(parse_err(path, lineno, format!("duplicate feature for '{}'", fields[0])));
        }
    }
    Ok(FeatureTable { dim, by_obs })
}

fn load_truth(path: &Path) -> Result<HashMap<String, TruthLabel>> {
    let mut map = HashMap::new();
    for (lineno, fields) in read_csv(path, TRUTH_HEADER)? {
        let label = TruthLabel {
            class_id: parse_num(path, lineno, "class_id", &fields[1])?,
            instance_id: parse_num(path, lineno, "instance_id", &fields[2])?,
        };
        if map.insert(fields[0].clone(), label).is_some() {
            return Err(parse_err(path, lineno, format!("duplicate truth for '{}'", fields[0])));
        }
    }
    Ok(map)
}

fn parse_bbox(path: &Path, lineno: usize, fields: &[String]) -> Result<BoundingBox> {
    let x = parse_num(path, lineno, "x", &fields[0])?;
    let y = parse_num(path, lineno, "y", &fields[1])?;
    let w = parse_num(path, lineno, "w", &fields[2])?;
    let h = parse_num(path, lineno, "h", &fields[3])?;
    BoundingBox::new(x, y, w, h).map_err(|e| parse_err(path, lineno, e))
}

/// Load a dataset from its manifest. Relative paths inside the manifest
/// resolve against the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&read_to_string(manifest_path)?)
        .map_err(|e| Error::input(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    if manifest.videos.is_empty() {
        return Err(Error::input(format!("{}: manifest lists no videos", manifest_path.display())));
    }
    {
        let mut ids = HashSet::new();
        for v in &manifest.videos {
            if !ids.insert(&v.id) {
                return Err(Error::input(format!("duplicate video id '{}' in manifest", v.id)));
            }
        }
    }

    let truth = manifest
        .truth
        .as_ref()
        .map(|t| load_truth(&base.join(t)))
        .transpose()?;

    let mut videos = Vec::new();
    let mut feature_dim = None;
    let mut seen_obs: HashSet<String> = HashSet::new();
    for video in &manifest.videos {
        let features = load_features(&base.join(&video.features))?;
        match feature_dim {
            None => feature_dim = Some(features.dim),
            Some(d) if d != features.dim => {
                return Err(Error::input(format!(
                    "video '{}' has feature dimension {} but earlier videos have {d}",
                    video.id, features.dim
                )));
            }
            _ => {}
        }

        let attach = |path: &Path,
                      lineno: usize,
                      obs_id: &str,
                      video_id: &str,
                      frame_idx: usize,
                      bbox: BoundingBox,
                      seen: &mut HashSet<String>|
         -> Result<MaskObservation> {
            if video_id != video.id {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("row belongs to video '{video_id}', expected '{}'", video.id),
                ));
            }
            if !seen.insert(obs_id.to_string()) {
                return Err(parse_err(path, lineno, format!("duplicate observation id '{obs_id}'")));
            }
            let feature = features.by_obs.get(obs_id).cloned().ok_or_else(|| {
                parse_err(path, lineno, format!("no feature for observation '{obs_id}'"))
            })?;
            let truth_label = match &truth {
                None => None,
                Some(map) => Some(*map.get(obs_id).ok_or_else(|| {
                    Error::input(format!(
                        "truth file covers some observations but not '{obs_id}'"
                    ))
                })?),
            };
            Ok(MaskObservation {
                id: obs_id.to_string(),
                video_id: video_id.to_string(),
                frame_idx,
                bbox,
                feature,
                truth: truth_label,
            })
        };

        let content = match (&video.boxes, &video.sequences) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::input(format!(
                    "video '{}' must name exactly one of 'boxes' or 'sequences'",
                    video.id
                )));
            }
            (Some(boxes_rel), None) => {
                let path = base.join(boxes_rel);
                let mut frames: Vec<Vec<MaskObservation>> = Vec::new();
                for (lineno, fields) in read_csv(&path, BOXES_HEADER)? {
                    let frame_idx: usize = parse_num(&path, lineno, "frame_idx", &fields[1])?;
                    let bbox = parse_bbox(&path, lineno, &fields[3..7])?;
                    let obs =
                        attach(&path, lineno, &fields[2], &fields[0], frame_idx, bbox, &mut seen_obs)?;
                    if frames.len() <= frame_idx {
                        frames.resize_with(frame_idx + 1, Vec::new);
                    }
                    frames[frame_idx].push(obs);
                }
                if frames.is_empty() {
                    return Err(Error::input(format!("video '{}' has no observations", video.id)));
                }
                VideoContent::Frames(frames)
            }
            (None, Some(seq_rel)) => {
                let path = base.join(seq_rel);
                let mut order: Vec<String> = Vec::new();
                let mut grouped: HashMap<String, Vec<MaskObservation>> = HashMap::new();
                for (lineno, fields) in read_csv(&path, SEQUENCES_HEADER)? {
                    let frame_idx: usize = parse_num(&path, lineno, "frame_idx", &fields[1])?;
                    let bbox = parse_bbox(&path, lineno, &fields[4..8])?;
                    let obs =
                        attach(&path, lineno, &fields[2], &fields[0], frame_idx, bbox, &mut seen_obs)?;
                    let seq_id = fields[3].clone();
                    grouped
                        .entry(seq_id.clone())
                        .or_insert_with(|| {
                            order.push(seq_id.clone());
                            Vec::new()
                        })
                        .push(obs);
                }
                if order.is_empty() {
                    return Err(Error::input(format!("video '{}' has no observations", video.id)));
                }
                let mut seqs = Vec::with_capacity(order.len());
                for seq_id in order {
                    let observations = grouped.remove(&seq_id).expect("grouped by construction");
                    // Sequences must occupy consecutive frames in order;
                    // anything else is a broken tracker export.
                    for pair in observations.windows(2) {
                        if pair[1].frame_idx != pair[0].frame_idx + 1 {
                            return Err(Error::input(format!(
                                "sequence '{seq_id}' jumps from frame {} to {}; frames must be consecutive",
                                pair[0].frame_idx, pair[1].frame_idx
                            )));
                        }
                    }
                    seqs.push(MaskSequence {
                        id: seq_id,
                        video_id: video.id.clone(),
                        observations,
                    });
                }
                VideoContent::Sequences(seqs)
            }
        };
        videos.push(VideoData { id: video.id.clone(), content });
    }

    // Truth rows that reference unknown observations are almost always a
    // key mismatch; refuse them instead of evaluating against thin air.
    if let Some(map) = &truth {
        for obs_id in map.keys() {
            if !seen_obs.contains(obs_id) {
                return Err(Error::input(format!(
                    "truth file labels unknown observation '{obs_id}'"
                )));
            }
        }
    }

    Ok(Dataset {
        videos,
        feature_dim: feature_dim.expect("at least one video"),
        has_truth: truth.is_some(),
    })
}

fn push_float(out: &mut String, v: f64) {
    // Shortest round-trip formatting: the value reparses bit-exactly.
    out.push_str(&format!("{v}"));
}

/// Write a dataset directory: per-video CSVs, a shared feature file, truth
/// when present, and the manifest tying them together. Returns the
/// manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::WriteOutput {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut features_csv = String::from("obs_id");
    for i in 0..dataset.feature_dim {
        features_csv.push_str(&format!(",f{i}"));
    }
    features_csv.push('\n');
    let mut truth_csv = format!("{TRUTH_HEADER}\n");
    let mut any_truth = false;

    let mut manifest = Manifest { videos: Vec::new(), truth: None };
    for video in &dataset.videos {
        let mut emit_obs = |obs: &MaskObservation, features_csv: &mut String, truth_csv: &mut String| {
            features_csv.push_str(&obs.id);
            for v in &obs.feature {
                features_csv.push(',');
                push_float(features_csv, *v);
            }
            features_csv.push('\n');
            if let Some(t) = &obs.truth {
                truth_csv.push_str(&format!("{},{},{}\n", obs.id, t.class_id, t.instance_id));
                any_truth = true;
            }
        };
        let entry = match &video.content {
            VideoContent::Frames(frames) => {
                let mut csv = String::from(BOXES_HEADER);
                csv.push('\n');
                for obs in frames.iter().flatten() {
                    csv.push_str(&format!("{},{},{},", obs.video_id, obs.frame_idx, obs.id));
                    push_float(&mut csv, obs.bbox.x);
                    csv.push(',');
                    push_float(&mut csv, obs.bbox.y);
                    csv.push(',');
                    push_float(&mut csv, obs.bbox.w);
                    csv.push(',');
                    push_float(&mut csv, obs.bbox.h);
                    csv.push('\n');
                    emit_obs(obs, &mut features_csv, &mut truth_csv);
                }
                let name = format!("boxes_{}.csv", video.id);
                write_file(&dir.join(&name), &csv)?;
                ManifestVideo {
                    id: video.id.clone(),
                    boxes: Some(name),
                    sequences: None,
                    features: "features.csv".to_string(),
                }
            }
            VideoContent::Sequences(seqs) => {
                let mut csv = String::from(SEQUENCES_HEADER);
                csv.push('\n');
                for seq in seqs {
                    for obs in &seq.observations {
                        csv.push_str(&format!(
                            "{},{},{},{},",
                            obs.video_id, obs.frame_idx, obs.id, seq.id
                        ));
                        push_float(&mut csv, obs.bbox.x);
                        csv.push(',');
                        push_float(&mut csv, obs.bbox.y);
                        csv.push(',');
                        push_float(&mut csv, obs.bbox.w);
                        csv.push(',');
                        push_float(&mut csv, obs.bbox.h);
                        csv.push('\n');
                        emit_obs(obs, &mut features_csv, &mut truth_csv);
                    }
                }
                let name = format!("sequences_{}.csv", video.id);
                write_file(&dir.join(&name), &csv)?;
                ManifestVideo {
                    id: video.id.clone(),
                    boxes: None,
                    sequences: Some(name),
                    features: "features.csv".to_string(),
                }
            }
        };
        manifest.videos.push(entry);
    }

    write_file(&dir.join("features.csv"), &features_csv)?;
    if any_truth {
        write_file(&dir.join("truth.csv"), &truth_csv)?;
        manifest.truth = Some("truth.csv".to_string());
    }
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .expect("manifest serialization cannot fail");
    write_file(&manifest_path, &json)?;
    Ok(manifest_path)
}
