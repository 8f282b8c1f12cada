//! Primitive-action segmentation of the part streams.
//!
//! Each end joint's thresholded synthetic speed is split at standstills into
//! active runs, the runs of a part's two end joints are united, and when a
//! stream has more runs than the PA budget the ones with the largest
//! accumulated displacement (speed × time) are kept.
//!
//! Intervals produced by [`active_intervals`] and consumed by
//! [`attention_select`] are indices into a speed series. Speed entry `i` is
//! the step between frames `i` and `i + 1`, so a run `[a, b]` spans frames
//! `a..=b + 1`; that frame interval is what a [`PrimitiveAction`] carries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{threshold_speed, SceneViews, SpeedFrame, ThresholdPolicy};
use crate::scalar::Scalar;
use crate::skeleton::{Stream, STREAM_COUNT};

/// Closed interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "interval start {start} after end {end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn shifted(&self, k: usize) -> Self {
        Self { start: self.start + k, end: self.end + k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveAction<T> {
    pub stream: Stream,
    /// Frames covered by the motion.
    pub interval: FrameInterval,
    /// Accumulated displacement in meters.
    pub score: T,
    /// Chronological position within the stream.
    pub ordinal: usize,
}

/// Maximal runs of nonzero entries; runs separated by at most `gap` zeros are joined.
pub fn active_intervals<T: Scalar>(values: &[T], gap: usize) -> Vec<FrameInterval> {
    let mut out: Vec<FrameInterval> = Vec::new();
    let mut run_start = None;
    for (i, v) in values.iter().enumerate() {
        match (*v != T::zero(), run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                push_bridged(&mut out, FrameInterval::new(s, i - 1), gap);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        push_bridged(&mut out, FrameInterval::new(s, values.len() - 1), gap);
    }
    out
}

fn push_bridged(out: &mut Vec<FrameInterval>, run: FrameInterval, gap: usize) {
    match out.last_mut() {
        Some(prev) if run.start - prev.end - 1 <= gap => prev.end = run.end,
        _ => out.push(run),
    }
}

/// Union of two sorted disjoint interval lists as maximal sorted intervals.
pub fn merge_part_intervals(a: &[FrameInterval], b: &[FrameInterval]) -> Vec<FrameInterval> {
    let mut all: Vec<FrameInterval> = a.iter().chain(b).copied().collect();
    all.sort_unstable();
    let mut out: Vec<FrameInterval> = Vec::with_capacity(all.len());
    for iv in all {
        match out.last_mut() {
            // Touching intervals cover a contiguous block and are joined.
            Some(prev) if iv.start <= prev.end + 1 => prev.end = prev.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Scores intervals by accumulated `speed × dt`, keeps the `max_pa` best
/// (earlier interval wins ties) and returns them in chronological order.
///
/// `speeds` is the per-step stream speed (the larger of the two end joints);
/// the returned intervals stay in speed-index space.
pub fn attention_select<T: Scalar>(
    stream: Stream,
    intervals: &[FrameInterval],
    speeds: &[T],
    dt: T,
    max_pa: usize,
) -> Result<Vec<PrimitiveAction<T>>> {
    if max_pa == 0 {
        return Err(Error::InvalidConfig("max_pa must be at least 1".into()));
    }
    let mut scored: Vec<(FrameInterval, T)> = intervals
        .iter()
        .map(|iv| {
            let seg = speeds.get(iv.start..=iv.end).ok_or(Error::LengthMismatch {
                left: iv.end + 1,
                right: speeds.len(),
            })?;
            Ok((*iv, seg.iter().map(|&v| v * dt).sum::<T>()))
        })
        .collect::<Result<_>>()?;
    if scored.len() > max_pa {
        // Stable sort keeps chronological order among equal scores.
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(max_pa);
        scored.sort_by_key(|(iv, _)| iv.start);
    }
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(ordinal, (interval, score))| PrimitiveAction { stream, interval, score, ordinal })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    /// Zero-speed steps bridged inside one primitive action.
    pub gap: usize,
    /// Minimum run length in speed steps.
    pub min_len: usize,
    pub max_pa: usize,
    pub threshold: ThresholdPolicy,
    pub speed_frame: SpeedFrame,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            gap: 3,
            min_len: 2,
            max_pa: 30,
            threshold: ThresholdPolicy::default(),
            speed_frame: SpeedFrame::Mixed,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_pa == 0 {
            return Err(Error::InvalidConfig("max_pa must be at least 1".into()));
        }
        if self.min_len == 0 {
            return Err(Error::InvalidConfig("min_len must be at least 1".into()));
        }
        self.threshold.validate()
    }
}

/// Primitive actions of every stream of one scene, indexed by stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePartition<T> {
    pub streams: [Vec<PrimitiveAction<T>>; STREAM_COUNT],
}

impl<T> ScenePartition<T> {
    pub fn stream(&self, s: Stream) -> &[PrimitiveAction<T>] {
        &self.streams[s.index()]
    }

    pub fn total(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrimitiveAction<T>> {
        self.streams.iter().flatten()
    }
}

/// Segments one stream of a scene.
pub fn segment_stream<T: Scalar>(
    views: &SceneViews<T>,
    stream: Stream,
    config: &PartitionConfig,
) -> Result<Vec<PrimitiveAction<T>>> {
    let part = stream.body_part();
    let mut thresholded = Vec::with_capacity(2);
    let mut runs = Vec::new();
    for joint in part.ends {
        let speed = views.speed(joint, config.speed_frame)?;
        let tau = config.threshold.threshold(&speed);
        let bar = threshold_speed(&speed, tau);
        runs = merge_part_intervals(&runs, &active_intervals(&bar.values, config.gap));
        thresholded.push(bar.values);
    }
    runs.retain(|iv| iv.len() >= config.min_len);
    let combined: Vec<T> =
        thresholded[0].iter().zip(&thresholded[1]).map(|(&a, &b)| a.max(b)).collect();
    let mut pas = attention_select(stream, &runs, &combined, views.global.dt(), config.max_pa)?;
    for pa in &mut pas {
        pa.interval = FrameInterval::new(pa.interval.start, pa.interval.end + 1);
    }
    Ok(pas)
}

/// Segments all eight streams.
pub fn segment_scene<T: Scalar>(
    views: &SceneViews<T>,
    config: &PartitionConfig,
) -> Result<ScenePartition<T>> {
    let mut streams: [Vec<PrimitiveAction<T>>; STREAM_COUNT] = Default::default();
    for s in Stream::ALL {
        streams[s.index()] = segment_stream(views, s, config)?;
    }
    Ok(ScenePartition { streams })
}
