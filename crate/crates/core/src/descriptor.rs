//! Trajectory descriptors and the fixed-shape scene feature matrix.
//!
//! A descriptor summarises one joint over one primitive action by seven
//! displacement vectors (start, five evenly spaced intermediates, end) taken
//! relative to a reference. Global descriptors use lhip/rhip in the camera
//! frame relative to its origin. Local descriptors use each part's end
//! joints in the body frame, chained to the pivot, plus one extra descriptor
//! per end joint relative to the root. Every 3-vector is then scaled to unit
//! length and the per-PA blocks are stacked stream-major into
//! `8 × max_pa` rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kinematics::SceneViews;
use crate::partition::{segment_scene, FrameInterval, PartitionConfig, PrimitiveAction, ScenePartition};
use crate::scalar::Scalar;
use crate::skeleton::{BodyPart, JointId, SkeletonSequence, Stream, STREAM_COUNT};

pub const INTERMEDIATE_POINTS: usize = 5;
pub const POINTS_PER_DESCRIPTOR: usize = INTERMEDIATE_POINTS + 2;
pub const DESCRIPTOR_WIDTH: usize = POINTS_PER_DESCRIPTOR * 3;
pub const GLOBAL_BLOCK_WIDTH: usize = 2 * DESCRIPTOR_WIDTH;
pub const LOCAL_BLOCK_WIDTH: usize = 4 * DESCRIPTOR_WIDTH;
pub const DEFAULT_WIDTH: usize = 126;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Origin of the coordinate frame the sequence is expressed in.
    Origin,
    Joint(JointId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDescriptor<T> {
    pub joint: JointId,
    pub reference: Reference,
    /// Start, five intermediates, end.
    pub points: [Vec3<T>; POINTS_PER_DESCRIPTOR],
}

impl<T: Scalar> TrajectoryDescriptor<T> {
    pub fn start(&self) -> Vec3<T> {
        self.points[0]
    }

    pub fn end(&self) -> Vec3<T> {
        self.points[POINTS_PER_DESCRIPTOR - 1]
    }

    pub fn intermediates(&self) -> &[Vec3<T>] {
        &self.points[1..=INTERMEDIATE_POINTS]
    }

    pub fn flatten_into(&self, out: &mut Vec<T>) {
        for p in &self.points {
            out.extend_from_slice(&p.to_array());
        }
    }
}

/// Frame offsets of the seven sample points of an interval of `len` frames.
pub fn sample_offsets(len: usize) -> [usize; POINTS_PER_DESCRIPTOR] {
    let mut out = [0; POINTS_PER_DESCRIPTOR];
    let span = len - 1;
    for (k, o) in out.iter_mut().enumerate() {
        // round(k * span / 6), halves rounded up
        *o = (2 * k * span + 6) / 12;
    }
    out
}

pub fn sample_trajectory<T: Scalar>(
    seq: &SkeletonSequence<T>,
    joint: JointId,
    interval: FrameInterval,
    reference: Reference,
) -> Result<TrajectoryDescriptor<T>> {
    if interval.len() < 2 {
        return Err(Error::IntervalTooShort { start: interval.start, end: interval.end });
    }
    if interval.end >= seq.len() {
        return Err(Error::LengthMismatch { left: interval.end + 1, right: seq.len() });
    }
    let offsets = sample_offsets(interval.len());
    let points = offsets.map(|o| {
        let f = interval.start + o;
        let p = seq.position(f, joint);
        match reference {
            Reference::Origin => p,
            Reference::Joint(r) => p - seq.position(f, r),
        }
    });
    Ok(TrajectoryDescriptor { joint, reference, points })
}

/// lhip and rhip relative to the global origin.
pub fn global_descriptor<T: Scalar>(
    global: &SkeletonSequence<T>,
    pa: &PrimitiveAction<T>,
) -> Result<[TrajectoryDescriptor<T>; 2]> {
    if pa.stream != Stream::Global {
        return Err(Error::InvalidConfig(format!("{} action passed to global descriptor", pa.stream)));
    }
    Ok([
        sample_trajectory(global, JointId::LHip, pa.interval, Reference::Origin)?,
        sample_trajectory(global, JointId::RHip, pa.interval, Reference::Origin)?,
    ])
}

/// First end joint relative to the pivot, second relative to the first.
pub fn local_descriptor<T: Scalar>(
    local: &SkeletonSequence<T>,
    part: &BodyPart,
    pa: &PrimitiveAction<T>,
) -> Result<[TrajectoryDescriptor<T>; 2]> {
    if pa.stream != Stream::Part(part.number) {
        return Err(Error::InvalidConfig(format!(
            "{} action passed to part {} descriptor",
            pa.stream, part.number
        )));
    }
    let [first, second] = part.ends;
    Ok([
        sample_trajectory(local, first, pa.interval, Reference::Joint(part.pivot))?,
        sample_trajectory(local, second, pa.interval, Reference::Joint(first))?,
    ])
}

/// Chain descriptors followed by each end joint relative to the root.
pub fn extend_local_features<T: Scalar>(
    chain: [TrajectoryDescriptor<T>; 2],
    local: &SkeletonSequence<T>,
    pa: &PrimitiveAction<T>,
) -> Result<[TrajectoryDescriptor<T>; 4]> {
    let root_ref = |d: &TrajectoryDescriptor<T>| {
        sample_trajectory(local, d.joint, pa.interval, Reference::Joint(JointId::Root))
    };
    let a = root_ref(&chain[0])?;
    let b = root_ref(&chain[1])?;
    let [c0, c1] = chain;
    Ok([c0, c1, a, b])
}

/// Scales every consecutive 3-vector to unit length; zero vectors stay zero.
/// A trailing partial group is left untouched.
pub fn normalize_features<T: Scalar>(values: &mut [T]) {
    for chunk in values.chunks_exact_mut(3) {
        let n = (chunk[0] * chunk[0] + chunk[1] * chunk[1] + chunk[2] * chunk[2]).sqrt();
        if n != T::zero() {
            for c in chunk.iter_mut() {
                *c = *c / n;
            }
        }
    }
}

pub fn flatten<T: Scalar>(descriptors: &[TrajectoryDescriptor<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(descriptors.len() * DESCRIPTOR_WIDTH);
    for d in descriptors {
        d.flatten_into(&mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub stream: usize,
    pub ordinal: usize,
    pub occupied: bool,
    /// Frame interval of the occupying PA.
    pub interval: Option<FrameInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatureMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    pub meta: Vec<RowMeta>,
    pub label: Option<usize>,
}

impl<T: Scalar> SceneFeatureMatrix<T> {
    pub fn zeros(max_pa: usize, cols: usize) -> Self {
        let rows = STREAM_COUNT * max_pa;
        let meta = (0..rows)
            .map(|r| RowMeta { stream: r / max_pa, ordinal: r % max_pa, occupied: false, interval: None })
            .collect();
        Self { rows, cols, data: vec![T::zero(); rows * cols], meta, label: None }
    }

    /// Matrix from raw row-major values; occupancy is taken from nonzero rows.
    pub fn from_raw(rows: usize, cols: usize, data: Vec<T>, label: Option<usize>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols}"),
                found: format!("{} values", data.len()),
            });
        }
        let per_stream = (rows / STREAM_COUNT).max(1);
        let meta = (0..rows)
            .map(|r| RowMeta {
                stream: r / per_stream,
                ordinal: r % per_stream,
                occupied: data[r * cols..(r + 1) * cols].iter().any(|v| *v != T::zero()),
                interval: None,
            })
            .collect();
        Ok(Self { rows, cols, data, meta, label })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn occupied_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.meta.iter().enumerate().filter(|(_, m)| m.occupied).map(|(r, _)| r)
    }

    pub fn cast<U: Scalar>(&self) -> SceneFeatureMatrix<U> {
        SceneFeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            meta: self.meta.clone(),
            label: self.label,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_sfm(&self, path: &Path) -> Result<()> {
        let label = self.label.map(|l| l as u32).unwrap_or(u32::MAX);
        let mut buf = Vec::with_capacity(16 + 4 * self.data.len());
        buf.extend_from_slice(SFM_MAGIC);
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        buf.extend_from_slice(&label.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        write_atomic(path, &buf)?;
        write_atomic(&sidecar_path(path), self.meta_csv().as_bytes())
    }

    pub fn meta_csv(&self) -> String {
        let mut s = String::from("row,stream,ordinal,occupied,start,end\n");
        for (r, m) in self.meta.iter().enumerate() {
            let (start, end) = match m.interval {
                Some(iv) => (iv.start.to_string(), iv.end.to_string()),
                None => (String::new(), String::new()),
            };
            s.push_str(&format!("{r},{},{},{},{start},{end}\n", m.stream, m.ordinal, m.occupied as u8));
        }
        s
    }

    pub fn read_sfm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::decode_sfm(&bytes).map_err(|e| e.at_entry(path))?;
        let side = sidecar_path(path);
        if side.exists() {
            let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            m.meta = parse_meta_csv(&text, m.rows).map_err(|e| e.at_entry(&side))?;
        }
        Ok(m)
    }

    pub fn decode_sfm(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != SFM_MAGIC {
            return Err(Error::Format("missing SFM1 header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let (rows, cols, label) = (word(4) as usize, word(8) as usize, word(12));
        let payload = &bytes[16..];
        if payload.len() != rows * cols * 4 {
            return Err(Error::Format(format!(
                "payload of {} bytes does not hold {rows}x{cols} f32 values",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        let label = (label != u32::MAX).then_some(label as usize);
        Self::from_raw(rows, cols, data, label)
    }
}

pub const SFM_MAGIC: &[u8; 4] = b"SFM1";

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".rows.csv");
    path.with_file_name(name)
}

fn parse_meta_csv(text: &str, rows: usize) -> Result<Vec<RowMeta>> {
    let mut out = Vec::with_capacity(rows);
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |column: usize, reason: &str| Error::Parse { line: n + 1, column, reason: reason.into() };
        if fields.len() != 6 {
            return Err(bad(1, "expected 6 fields"));
        }
        let num = |i: usize| fields[i].parse::<usize>().map_err(|_| bad(i + 1, "not an integer"));
        let interval = if fields[4].is_empty() { None } else { Some(FrameInterval::new(num(4)?, num(5)?)) };
        out.push(RowMeta { stream: num(1)?, ordinal: num(2)?, occupied: num(3)? == 1, interval });
    }
    if out.len() != rows {
        return Err(Error::Format(format!("row metadata has {} rows, matrix has {rows}", out.len())));
    }
    Ok(out)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One descriptor block (already normalized) per primitive action.
pub type StreamBlocks<T> = Vec<(PrimitiveAction<T>, Vec<T>)>;

/// Places each stream's blocks at `stream × max_pa + ordinal`, zero-padded to `width`.
pub fn assemble_scene_matrix<T: Scalar>(
    streams: &[StreamBlocks<T>; STREAM_COUNT],
    max_pa: usize,
    width: usize,
) -> Result<SceneFeatureMatrix<T>> {
    let mut m = SceneFeatureMatrix::zeros(max_pa, width);
    for (s, blocks) in streams.iter().enumerate() {
        for (pa, block) in blocks {
            if block.len() > width {
                return Err(Error::WidthOverflow { block: block.len(), width });
            }
            if pa.ordinal >= max_pa {
                return Err(Error::InvalidConfig(format!(
                    "PA ordinal {} exceeds the budget of {max_pa}",
                    pa.ordinal
                )));
            }
            let r = s * max_pa + pa.ordinal;
            m.row_mut(r)[..block.len()].copy_from_slice(block);
            m.meta[r].occupied = true;
            m.meta[r].interval = Some(pa.interval);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    #[serde(flatten)]
    pub partition: PartitionConfig,
    /// Matrix column count.
    pub width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { partition: PartitionConfig::default(), width: DEFAULT_WIDTH }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        if self.width < LOCAL_BLOCK_WIDTH {
            return Err(Error::InvalidConfig(format!(
                "descriptor width {} below the {LOCAL_BLOCK_WIDTH}-column local block",
                self.width
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        STREAM_COUNT * self.partition.max_pa
    }
}

/// Normalized descriptor blocks for every PA of a partitioned scene.
pub fn describe_scene<T: Scalar>(
    views: &SceneViews<T>,
    partition: &ScenePartition<T>,
) -> Result<[StreamBlocks<T>; STREAM_COUNT]> {
    let mut out: [StreamBlocks<T>; STREAM_COUNT] = Default::default();
    for s in Stream::ALL {
        for pa in partition.stream(s) {
            let mut block = match s {
                Stream::Global => flatten(&global_descriptor(&views.global, pa)?),
                Stream::Part(_) => {
                    let part = s.body_part();
                    let chain = local_descriptor(&views.local, part, pa)?;
                    flatten(&extend_local_features(chain, &views.local, pa)?)
                }
            };
            normalize_features(&mut block);
            out[s.index()].push((pa.clone(), block));
        }
    }
    Ok(out)
}

/// Segments and describes one global-frame scene.
pub fn featurize<T: Scalar>(
    scene: &SkeletonSequence<T>,
    config: &FeatureConfig,
) -> Result<(ScenePartition<T>, SceneFeatureMatrix<T>)> {
    config.validate()?;
    let views = SceneViews::new(scene.clone())?;
    let partition = segment_scene(&views, &config.partition)?;
    let blocks = describe_scene(&views, &partition)?;
    let matrix = assemble_scene_matrix(&blocks, config.partition.max_pa, config.width)?;
    Ok((partition, matrix))
}
