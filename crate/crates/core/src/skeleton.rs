//! Skeleton data model: canonical joints, frames, sequences, the body-anchored
//! local coordinate system and the seven-part body division.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;

/// Minimum hip separation and spine-to-hip-line distance, in meters.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

pub const JOINT_COUNT: usize = 15;

/// Canonical joint set. The discriminant is the stable joint index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointId {
    Root = 0,
    LHip,
    RHip,
    LFemur,
    LTibia,
    RFemur,
    RTibia,
    Spine,
    Throat,
    LClavicle,
    LHumerus,
    LHand,
    RClavicle,
    RHumerus,
    RHand,
}

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::Root,
        JointId::LHip,
        JointId::RHip,
        JointId::LFemur,
        JointId::LTibia,
        JointId::RFemur,
        JointId::RTibia,
        JointId::Spine,
        JointId::Throat,
        JointId::LClavicle,
        JointId::LHumerus,
        JointId::LHand,
        JointId::RClavicle,
        JointId::RHumerus,
        JointId::RHand,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Root => "root",
            JointId::LHip => "lhip",
            JointId::RHip => "rhip",
            JointId::LFemur => "lfemur",
            JointId::LTibia => "ltibia",
            JointId::RFemur => "rfemur",
            JointId::RTibia => "rtibia",
            JointId::Spine => "spine",
            JointId::Throat => "throat",
            JointId::LClavicle => "lclavicle",
            JointId::LHumerus => "lhumerus",
            JointId::LHand => "lhand",
            JointId::RClavicle => "rclavicle",
            JointId::RHumerus => "rhumerus",
            JointId::RHand => "rhand",
        }
    }

    /// Left/right counterpart; midline joints map to themselves.
    pub fn mirror(self) -> Self {
        match self {
            JointId::LHip => JointId::RHip,
            JointId::RHip => JointId::LHip,
            JointId::LFemur => JointId::RFemur,
            JointId::RFemur => JointId::LFemur,
            JointId::LTibia => JointId::RTibia,
            JointId::RTibia => JointId::LTibia,
            JointId::LClavicle => JointId::RClavicle,
            JointId::RClavicle => JointId::LClavicle,
            JointId::LHumerus => JointId::RHumerus,
            JointId::RHumerus => JointId::LHumerus,
            JointId::LHand => JointId::RHand,
            JointId::RHand => JointId::LHand,
            midline => midline,
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown joint `{s}`")))
    }
}

/// Coordinate frame a position is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameTag {
    /// Camera-anchored global frame.
    Global,
    /// Per-frame body-anchored local frame.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame<T> {
    pub index: usize,
    pub tag: FrameTag,
    positions: [Vec3<T>; JOINT_COUNT],
}

impl<T: Scalar> SkeletonFrame<T> {
    pub fn new(index: usize, tag: FrameTag, positions: [Vec3<T>; JOINT_COUNT]) -> Result<Self> {
        if let Some(j) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidSequence(format!(
                "frame {index}: non-finite position for joint {}",
                JointId::ALL[j]
            )));
        }
        Ok(Self { index, tag, positions })
    }

    #[inline]
    pub fn get(&self, joint: JointId) -> Vec3<T> {
        self.positions[joint.index()]
    }

    pub fn positions(&self) -> &[Vec3<T>; JOINT_COUNT] {
        &self.positions
    }

    /// Applies `f` to every joint position, keeping index and tag.
    pub fn map(&self, tag: FrameTag, mut f: impl FnMut(JointId, Vec3<T>) -> Vec3<T>) -> Self {
        let mut positions = self.positions;
        for j in JointId::ALL {
            positions[j.index()] = f(j, self.positions[j.index()]);
        }
        Self { index: self.index, tag, positions }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence<T> {
    frames: Vec<SkeletonFrame<T>>,
    dt: T,
    pub subject: String,
    pub label: Option<String>,
}

impl<T: Scalar> SkeletonSequence<T> {
    pub fn new(
        frames: Vec<SkeletonFrame<T>>,
        dt: T,
        subject: impl Into<String>,
        label: Option<String>,
    ) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidSequence(format!("sampling interval must be positive, got {dt}")));
        }
        if frames.len() < 2 {
            return Err(Error::SequenceTooShort { len: frames.len(), required: 2 });
        }
        for pair in frames.windows(2) {
            if pair[1].index != pair[0].index + 1 {
                return Err(Error::InvalidSequence(format!(
                    "frame indices must increase by 1: {} followed by {}",
                    pair[0].index, pair[1].index
                )));
            }
            if pair[1].tag != pair[0].tag {
                return Err(Error::InvalidSequence("mixed coordinate frames in one sequence".into()));
            }
        }
        Ok(Self { frames, dt, subject: subject.into(), label })
    }

    pub fn frames(&self) -> &[SkeletonFrame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn tag(&self) -> FrameTag {
        self.frames[0].tag
    }

    #[inline]
    pub fn position(&self, frame: usize, joint: JointId) -> Vec3<T> {
        self.frames[frame].get(joint)
    }

    /// Trajectory of one joint over the whole sequence.
    pub fn track(&self, joint: JointId) -> Vec<Vec3<T>> {
        self.frames.iter().map(|f| f.get(joint)).collect()
    }

    /// New sequence with every frame rewritten by `f` (frame position, frame).
    pub fn map_frames(
        &self,
        mut f: impl FnMut(usize, &SkeletonFrame<T>) -> Result<SkeletonFrame<T>>,
    ) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, fr)| f(i, fr))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames, self.dt, self.subject.clone(), self.label.clone())
    }

    /// Every position multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let frames =
            self.frames.iter().map(|fr| fr.map(fr.tag, |_, p| p * factor)).collect::<Vec<_>>();
        Self { frames, dt: self.dt, subject: self.subject.clone(), label: self.label.clone() }
    }
}

/// Body-anchored orthonormal right-handed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame<T> {
    pub origin: Vec3<T>,
    pub x: Vec3<T>,
    pub y: Vec3<T>,
    pub z: Vec3<T>,
}

impl<T: Scalar> LocalFrame<T> {
    /// Global point to local coordinates.
    #[inline]
    pub fn to_local(&self, p: Vec3<T>) -> Vec3<T> {
        let d = p - self.origin;
        Vec3::new(d.dot(self.x), d.dot(self.y), d.dot(self.z))
    }

    /// Local coordinates back to a global point.
    #[inline]
    pub fn to_global(&self, q: Vec3<T>) -> Vec3<T> {
        self.origin + self.x * q.x + self.y * q.y + self.z * q.z
    }
}

/// Builds the local frame of one global-frame skeleton.
///
/// The origin is the foot of the perpendicular from the spine joint onto the
/// lhip–rhip line, `x` points toward lhip, `y` from the origin toward the
/// spine, and `z = x × y`.
pub fn build_local_frame<T: Scalar>(frame: &SkeletonFrame<T>) -> Result<LocalFrame<T>> {
    let tol = T::of(DEGENERACY_TOLERANCE);
    let lhip = frame.get(JointId::LHip);
    let rhip = frame.get(JointId::RHip);
    let spine = frame.get(JointId::Spine);

    let hip_axis = lhip - rhip;
    let hip_len = hip_axis.norm();
    if hip_len <= tol {
        return Err(Error::DegenerateFrame { frame: Some(frame.index), reason: "hip joints coincide" });
    }
    let x = hip_axis / hip_len;
    let origin = rhip + x * (spine - rhip).dot(x);
    let up = spine - origin;
    // `up` is orthogonal to x by construction; strip the residual rounding.
    let up = up - x * up.dot(x);
    let up_len = up.norm();
    if up_len <= tol {
        return Err(Error::DegenerateFrame {
            frame: Some(frame.index),
            reason: "spine lies on the hip line",
        });
    }
    let y = up / up_len;
    let z = x.cross(y);
    Ok(LocalFrame { origin, x, y, z })
}

/// Local frames of every frame of a global-frame sequence.
pub fn local_frames<T: Scalar>(seq: &SkeletonSequence<T>) -> Result<Vec<LocalFrame<T>>> {
    seq.frames().iter().map(build_local_frame).collect()
}

/// Expresses each frame in its own local frame.
pub fn to_local<T: Scalar>(seq: &SkeletonSequence<T>) -> Result<SkeletonSequence<T>> {
    if seq.tag() == FrameTag::Local {
        return Ok(seq.clone());
    }
    seq.map_frames(|_, fr| {
        let lf = build_local_frame(fr)?;
        Ok(fr.map(FrameTag::Local, |_, p| lf.to_local(p)))
    })
}

/// Inverse of [`to_local`] given the frames it used.
pub fn to_global<T: Scalar>(
    seq: &SkeletonSequence<T>,
    frames: &[LocalFrame<T>],
) -> Result<SkeletonSequence<T>> {
    if frames.len() != seq.len() {
        return Err(Error::LengthMismatch { left: seq.len(), right: frames.len() });
    }
    seq.map_frames(|i, fr| Ok(fr.map(FrameTag::Global, |_, q| frames[i].to_global(q))))
}

/// One of the seven body parts: a pivot (rotation centre) and two end joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyPart {
    /// 1-based sequence number.
    pub number: usize,
    pub name: &'static str,
    pub pivot: JointId,
    pub ends: [JointId; 2],
}

const PARTS: [BodyPart; 7] = [
    BodyPart { number: 1, name: "lower torso", pivot: JointId::Root, ends: [JointId::LHip, JointId::RHip] },
    BodyPart { number: 2, name: "spine", pivot: JointId::Root, ends: [JointId::Spine, JointId::Throat] },
    BodyPart {
        number: 3,
        name: "upper torso",
        pivot: JointId::Throat,
        ends: [JointId::LClavicle, JointId::RClavicle],
    },
    BodyPart {
        number: 4,
        name: "left arm",
        pivot: JointId::LClavicle,
        ends: [JointId::LHumerus, JointId::LHand],
    },
    BodyPart {
        number: 5,
        name: "right arm",
        pivot: JointId::RClavicle,
        ends: [JointId::RHumerus, JointId::RHand],
    },
    BodyPart { number: 6, name: "left leg", pivot: JointId::LHip, ends: [JointId::LFemur, JointId::LTibia] },
    BodyPart { number: 7, name: "right leg", pivot: JointId::RHip, ends: [JointId::RFemur, JointId::RTibia] },
];

/// The seven-part division, ordered by sequence number.
pub fn part_table() -> &'static [BodyPart; 7] {
    &PARTS
}

pub const STREAM_COUNT: usize = 8;

/// A segmentation stream: the global (whole-body) stream or one body part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Global,
    Part(usize),
}

impl Stream {
    pub const ALL: [Stream; STREAM_COUNT] = [
        Stream::Global,
        Stream::Part(1),
        Stream::Part(2),
        Stream::Part(3),
        Stream::Part(4),
        Stream::Part(5),
        Stream::Part(6),
        Stream::Part(7),
    ];

    /// Row-block index: global is 0, part `p` is `p`.
    pub fn index(self) -> usize {
        match self {
            Stream::Global => 0,
            Stream::Part(p) => p,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Lower torso end joints drive the global stream.
    pub fn body_part(self) -> &'static BodyPart {
        match self {
            Stream::Global => &PARTS[0],
            Stream::Part(p) => &PARTS[p - 1],
        }
    }

    pub fn name(self) -> String {
        match self {
            Stream::Global => "global".to_string(),
            Stream::Part(p) => format!("part{p}"),
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
