//! From tracked trajectories to per-clip and per-frame summarization
//! scores: clip building, region sampling, still sequences for offline
//! training, chunked online scoring, normalization and frame projection.

use std::ops::Range;

use ndarray::Array1;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::segment::{self, SegmentConfig};
use crate::stack::{self, StackedModel};
use crate::Sequence;

/// Boxes sampled per offline frame when building still sequences.
pub const STILL_BOXES_PER_FRAME: usize = 30;
/// Length of a still sequence and of every sampled clip.
pub const CLIP_STEPS: usize = 3;
pub const DEFAULT_CHUNK_SIZE: usize = 1000;

/// Axis-aligned box: top-left corner, width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Inclusive frame interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }

    pub fn shift(&self, by: usize) -> Self {
        Self::new(self.start + by, self.end + by)
    }
}

/// One tracked object: a box and a feature vector for every frame from
/// `start_frame` on. Features are the appearance block followed by the
/// context block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub object_id: u64,
    pub start_frame: usize,
    pub boxes: Vec<BoundingBox>,
    pub features: Vec<Vec<f64>>,
    /// Generator label, never read by the summarizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

impl Trajectory {
    pub fn frames(&self) -> Option<FrameRange> {
        if self.boxes.is_empty() {
            None
        } else {
            Some(FrameRange::new(
                self.start_frame,
                self.start_frame + self.boxes.len() - 1,
            ))
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        check_dim("trajectory features", self.boxes.len(), self.features.len())?;
        for f in &self.features {
            check_dim("feature_dim", feature_dim, f.len())?;
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.is_valid()) {
            return Err(Error::InvalidConfig(format!(
                "object {} has an invalid box {b:?}",
                self.object_id
            )));
        }
        Ok(())
    }
}

/// A segment of one trajectory, sampled at its start, middle and end frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub object_id: u64,
    pub frames: FrameRange,
    pub b_start: BoundingBox,
    pub b_end: BoundingBox,
    pub sampled_features: Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipScore {
    /// Index of the clip in the input slice.
    pub clip: usize,
    pub raw_error: f64,
    pub score: f64,
}

/// `(f_s, floor((f_s + f_e) / 2), f_e)`
pub fn sample_regions(frames: FrameRange) -> [usize; 3] {
    [frames.start, frames.midpoint(), frames.end]
}

pub fn build_clip(trajectory: &Trajectory, segment: FrameRange) -> Result<MotionClip> {
    let span = trajectory
        .frames()
        .ok_or(Error::Empty("trajectory without frames"))?;
    if segment.start < span.start || segment.end > span.end || segment.start > segment.end {
        return Err(Error::OutOfRange(format!(
            "segment [{}, {}] outside trajectory [{}, {}] of object {}",
            segment.start, segment.end, span.start, span.end, trajectory.object_id
        )));
    }
    let at = |frame: usize| frame - trajectory.start_frame;
    let sampled_features = sample_regions(segment)
        .iter()
        .map(|&f| Array1::from(trajectory.features[at(f)].clone()))
        .collect();
    Ok(MotionClip {
        object_id: trajectory.object_id,
        frames: segment,
        b_start: trajectory.boxes[at(segment.start)],
        b_end: trajectory.boxes[at(segment.end)],
        sampled_features,
    })
}

/// Segments every trajectory and builds its clips, in trajectory order.
pub fn extract_clips(
    trajectories: &[Trajectory],
    config: &SegmentConfig,
) -> Result<Vec<MotionClip>> {
    config.validate()?;
    let mut clips = Vec::new();
    for traj in trajectories {
        let Some(span) = traj.frames() else { continue };
        let profile = segment::motion_profile(&traj.boxes, config.smooth_window);
        for local in segment::segment_trajectory(&profile, config) {
            clips.push(build_clip(traj, local.shift(span.start))?);
        }
    }
    Ok(clips)
}

/// One constant length-3 sequence per box feature.
pub fn make_still_sequences(box_features: &[Array1<f64>]) -> Result<Vec<Sequence>> {
    if box_features.is_empty() {
        return Err(Error::Empty("still sequence boxes"));
    }
    Ok(box_features
        .iter()
        .map(|f| vec![f.clone(); CLIP_STEPS])
        .collect())
}

/// Still sequences for offline training: per frame, up to
/// [`STILL_BOXES_PER_FRAME`] boxes drawn at random without replacement
/// (all of them when fewer are present).
pub fn still_sequences_from_frames<R: Rng + ?Sized>(
    trajectories: &[Trajectory],
    total_frames: usize,
    rng: &mut R,
) -> Result<Vec<Sequence>> {
    let mut per_frame: Vec<Vec<(usize, usize)>> = vec![Vec::new(); total_frames];
    for (ti, traj) in trajectories.iter().enumerate() {
        for k in 0..traj.boxes.len() {
            let frame = traj.start_frame + k;
            if frame < total_frames {
                per_frame[frame].push((ti, k));
            }
        }
    }
    let mut out = Vec::new();
    for present in per_frame.iter().filter(|p| !p.is_empty()) {
        let take = present.len().min(STILL_BOXES_PER_FRAME);
        let mut picked: Vec<usize> = index::sample(rng, present.len(), take).into_vec();
        picked.sort_unstable();
        let feats: Vec<Array1<f64>> = picked
            .iter()
            .map(|&i| {
                let (ti, k) = present[i];
                Array1::from(trajectories[ti].features[k].clone())
            })
            .collect();
        out.extend(make_still_sequences(&feats)?);
    }
    if out.is_empty() {
        return Err(Error::Empty("no boxes in any frame"));
    }
    Ok(out)
}

/// Half-open chunks `[0, size), [size, 2 size), ...`, the last one partial.
pub fn chunk_stream(total_frames: usize, chunk_size: usize) -> Result<Vec<Range<usize>>> {
    if total_frames == 0 {
        return Err(Error::Empty("stream without frames"));
    }
    if chunk_size == 0 {
        return Err(Error::InvalidConfig("chunk_size must be >= 1".into()));
    }
    Ok((0..total_frames)
        .step_by(chunk_size)
        .map(|s| s..(s + chunk_size).min(total_frames))
        .collect())
}

/// Output of [`summarize_stream`].
#[derive(Debug, Clone)]
pub struct StreamSummary {
    /// One entry per input clip, in input order.
    pub scores: Vec<ClipScore>,
    /// Chunk index each clip was scored in.
    pub chunk_of: Vec<usize>,
    pub model: StackedModel,
}

/// Online summarization. Chunks are visited in order; the clips whose
/// midpoint falls in a chunk are all scored with the current model, then
/// the model is updated on them. Raw errors are min-max normalized over the
/// whole video at the end.
pub fn summarize_stream(
    model: &StackedModel,
    clips: &[MotionClip],
    total_frames: usize,
    chunk_size: usize,
) -> Result<StreamSummary> {
    let chunks = chunk_stream(total_frames, chunk_size)?;
    let mut chunk_of = Vec::with_capacity(clips.len());
    for clip in clips {
        let mid = clip.frames.midpoint();
        if clip.frames.end >= total_frames {
            return Err(Error::OutOfRange(format!(
                "clip of object {} ends at frame {} beyond total_frames {total_frames}",
                clip.object_id, clip.frames.end
            )));
        }
        chunk_of.push(mid / chunk_size);
    }

    let mut model = model.clone();
    let mut raw = vec![0.0; clips.len()];
    for (ci, _) in chunks.iter().enumerate() {
        let members: Vec<usize> = (0..clips.len()).filter(|&i| chunk_of[i] == ci).collect();
        if members.is_empty() {
            continue;
        }
        for &i in &members {
            raw[i] = stack::stack_score(&model, &clips[i].sampled_features)?;
        }
        let batch: Vec<Sequence> = members
            .iter()
            .map(|&i| clips[i].sampled_features.clone())
            .collect();
        model = stack::online_update(&model, &batch)?;
    }

    let scores = if raw.is_empty() {
        Vec::new()
    } else {
        normalize_scores(&raw)?
            .into_iter()
            .zip(&raw)
            .enumerate()
            .map(|(clip, (score, &raw_error))| ClipScore {
                clip,
                raw_error,
                score,
            })
            .collect()
    };
    Ok(StreamSummary {
        scores,
        chunk_of,
        model,
    })
}

/// Min-max normalization to `[0, 1]`; a constant list maps to zeros.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Empty("scores to normalize"));
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Each frame gets the mean score of the clips covering it, or 0.
pub fn frame_level_scores(scores: &[f64], ranges: &[FrameRange], total_frames: usize) -> Vec<f64> {
    let mut sum = vec![0.0; total_frames];
    let mut count = vec![0usize; total_frames];
    for (&s, r) in scores.iter().zip(ranges) {
        for f in r.start..=r.end.min(total_frames.saturating_sub(1)) {
            sum[f] += s;
            count[f] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}
