//! Joint speed, synthetic speed/acceleration, motion similarity and
//! negligible-motion suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;
use crate::skeleton::{FrameTag, JointId, SkeletonSequence};

/// Synthetic speed of one joint; `values[i]` is the speed at frame `i + 1`
/// (difference of frames `i` and `i + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSeries<T> {
    pub joint: JointId,
    pub values: Vec<T>,
}

/// Synthetic acceleration of one joint; `values[i]` is at frame `i + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelSeries<T> {
    pub joint: JointId,
    pub values: Vec<T>,
}

/// Per-axis velocity between consecutive frames.
pub fn joint_speed_components<T: Scalar>(
    seq: &SkeletonSequence<T>,
    joint: JointId,
) -> Result<Vec<Vec3<T>>> {
    velocity(&seq.track(joint), seq.dt())
}

fn velocity<T: Scalar>(track: &[Vec3<T>], dt: T) -> Result<Vec<Vec3<T>>> {
    if track.len() < 2 {
        return Err(Error::SequenceTooShort { len: track.len(), required: 2 });
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidSequence(format!("sampling interval must be positive, got {dt}")));
    }
    Ok(track.windows(2).map(|w| (w[1] - w[0]) / dt).collect())
}

/// Magnitude of each velocity vector.
pub fn synthetic_speed<T: Scalar>(joint: JointId, components: &[Vec3<T>]) -> SpeedSeries<T> {
    SpeedSeries { joint, values: components.iter().map(|v| v.norm()).collect() }
}

/// Difference quotient of consecutive synthetic speeds.
pub fn synthetic_acceleration<T: Scalar>(speeds: &SpeedSeries<T>, dt: T) -> Result<AccelSeries<T>> {
    if speeds.values.len() < 2 {
        return Err(Error::SequenceTooShort { len: speeds.values.len(), required: 2 });
    }
    Ok(AccelSeries {
        joint: speeds.joint,
        values: speeds.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect(),
    })
}

/// Euclidean distance between two acceleration sequences.
pub fn motion_similarity<T: Scalar>(a: &AccelSeries<T>, b: &AccelSeries<T>) -> Result<T> {
    if a.values.len() != b.values.len() {
        return Err(Error::LengthMismatch { left: a.values.len(), right: b.values.len() });
    }
    Ok(a.values.iter().zip(&b.values).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt())
}

/// Zeroes every entry strictly below `threshold`; entries at the threshold are kept.
pub fn threshold_speed<T: Scalar>(speeds: &SpeedSeries<T>, threshold: T) -> SpeedSeries<T> {
    SpeedSeries {
        joint: speeds.joint,
        values: speeds
            .values
            .iter()
            .map(|&v| if v >= threshold { v } else { T::zero() })
            .collect(),
    }
}

/// Linear-interpolated percentile (`q` in [0, 1]) of unsorted data; 0 for empty input.
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite speeds"));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-joint speed threshold: `max(relative × p95(speed), floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdPolicy {
    pub relative: f64,
    /// Absolute lower bound in m/s.
    pub floor: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self { relative: 0.1, floor: 0.05 }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative >= 0.0 && self.relative.is_finite()) || !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold policy out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn threshold<T: Scalar>(&self, speeds: &SpeedSeries<T>) -> T {
        (T::of(self.relative) * percentile(&speeds.values, 0.95)).max(T::of(self.floor))
    }

    /// Policy for positions scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { relative: self.relative, floor: self.floor * factor }
    }
}

/// Which coordinate frame speeds are measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedFrame {
    /// Lower-torso joints in the global frame, every other joint in the local frame.
    #[default]
    Mixed,
    AllGlobal,
    AllLocal,
}

impl SpeedFrame {
    pub fn frame_for(self, joint: JointId) -> FrameTag {
        match (self, joint) {
            (SpeedFrame::AllGlobal, _) => FrameTag::Global,
            (SpeedFrame::AllLocal, _) => FrameTag::Local,
            (SpeedFrame::Mixed, JointId::Root | JointId::LHip | JointId::RHip) => FrameTag::Global,
            (SpeedFrame::Mixed, _) => FrameTag::Local,
        }
    }
}

/// Global- and local-frame views of one scene, computed once.
#[derive(Debug, Clone)]
pub struct SceneViews<T> {
    pub global: SkeletonSequence<T>,
    pub local: SkeletonSequence<T>,
}

impl<T: Scalar> SceneViews<T> {
    pub fn new(global: SkeletonSequence<T>) -> Result<Self> {
        if global.tag() != FrameTag::Global {
            return Err(Error::InvalidSequence("scene must be given in the global frame".into()));
        }
        let local = crate::skeleton::to_local(&global)?;
        Ok(Self { global, local })
    }

    pub fn view(&self, tag: FrameTag) -> &SkeletonSequence<T> {
        match tag {
            FrameTag::Global => &self.global,
            FrameTag::Local => &self.local,
        }
    }

    pub fn speed(&self, joint: JointId, frame: SpeedFrame) -> Result<SpeedSeries<T>> {
        let seq = self.view(frame.frame_for(joint));
        Ok(synthetic_speed(joint, &joint_speed_components(seq, joint)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{SkeletonFrame, JOINT_COUNT};
    use proptest::prelude::*;

    fn seq_from_track(track: &[[f64; 3]], dt: f64) -> SkeletonSequence<f64> {
        let frames = track
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut pos = [Vec3::zero(); JOINT_COUNT];
                pos[JointId::LHand.index()] = Vec3::from_f64(*p);
                SkeletonFrame::new(i, FrameTag::Global, pos).unwrap()
            })
            .collect();
        SkeletonSequence::new(frames, dt, "s", None).unwrap()
    }

    fn series(v: &[f64]) -> SpeedSeries<f64> {
        SpeedSeries { joint: JointId::LHand, values: v.to_vec() }
    }

    fn accel(v: &[f64]) -> AccelSeries<f64> {
        AccelSeries { joint: JointId::LHand, values: v.to_vec() }
    }

    #[test]
    fn stationary_joint_has_zero_velocity() {
        let seq = seq_from_track(&[[0.3, 0.2, 0.1]; 4], 0.02);
        let v = joint_speed_components(&seq, JointId::LHand).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|c| *c == Vec3::zero()));
    }

    #[test]
    fn velocity_is_difference_quotient() {
        let seq = seq_from_track(&[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]], 0.02);
        let v = joint_speed_components(&seq, JointId::LHand).unwrap();
        assert!((v[0].x - 5.0).abs() <= 1e-12);
        assert_eq!((v[0].y, v[0].z), (0.0, 0.0));
    }

    #[test]
    fn velocity_needs_two_samples() {
        let err = velocity::<f64>(&[Vec3::zero()], 0.02).unwrap_err();
        assert!(matches!(err, Error::SequenceTooShort { len: 1, .. }));
    }

    #[test]
    fn synthetic_speed_is_magnitude() {
        let s = synthetic_speed(
            JointId::LHand,
            &[Vec3::new(3.0, 4.0, 0.0), Vec3::zero(), Vec3::new(0.0, 0.0, -2.0)],
        );
        assert_eq!(s.values, vec![5.0, 0.0, 2.0]);
    }

    #[test]
    fn acceleration_examples() {
        let a = synthetic_acceleration(&series(&[5.0, 5.0, 5.0]), 0.02).unwrap();
        assert_eq!(a.values, vec![0.0, 0.0]);
        let a = synthetic_acceleration(&series(&[0.0, 5.0]), 0.02).unwrap();
        assert!((a.values[0] - 250.0).abs() <= 1e-12);
        assert!(matches!(
            synthetic_acceleration(&series(&[1.0]), 0.02),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn similarity_examples() {
        let a = accel(&[1.0, 2.0, 2.0]);
        assert_eq!(motion_similarity(&a, &a).unwrap(), 0.0);
        assert!((motion_similarity(&a, &accel(&[0.0; 3])).unwrap() - 3.0).abs() <= 1e-12);
        assert!(matches!(motion_similarity(&a, &accel(&[0.0])), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn threshold_examples() {
        let t = threshold_speed(&series(&[0.5, 1.2, 1.0]), 1.0);
        assert_eq!(t.values, vec![0.0, 1.2, 1.0]);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert!((percentile(&(0..=100).map(f64::from).collect::<Vec<_>>(), 0.95) - 95.0).abs() < 1e-12);
        assert_eq!(percentile::<f64>(&[], 0.95), 0.0);
        let p = ThresholdPolicy::default();
        assert_eq!(p.threshold(&series(&[0.0, 0.0])), 0.05);
        assert!((p.threshold(&series(&[10.0; 5])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_frame_assignment() {
        assert_eq!(SpeedFrame::Mixed.frame_for(JointId::LHip), FrameTag::Global);
        assert_eq!(SpeedFrame::Mixed.frame_for(JointId::LHand), FrameTag::Local);
        assert_eq!(SpeedFrame::AllGlobal.frame_for(JointId::LHand), FrameTag::Global);
    }

    proptest! {
        #[test]
        fn threshold_is_idempotent(v in prop::collection::vec(0.0f64..5.0, 0..200), tau in 0.0f64..5.0) {
            let once = threshold_speed(&series(&v), tau);
            prop_assert_eq!(threshold_speed(&once, tau), once);
        }

        #[test]
        fn similarity_is_a_metric(
            a in prop::collection::vec(-100.0f64..100.0, 16),
            b in prop::collection::vec(-100.0f64..100.0, 16),
            c in prop::collection::vec(-100.0f64..100.0, 16),
        ) {
            let (a, b, c) = (accel(&a), accel(&b), accel(&c));
            let ab = motion_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, motion_similarity(&b, &a).unwrap());
            let ac = motion_similarity(&a, &c).unwrap();
            let cb = motion_similarity(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn speeds_scale_with_positions(
            track in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 3..40),
            c in 0.1f64..10.0,
        ) {
            let seq = seq_from_track(&track, 0.02);
            let scaled = seq.scaled(c);
            let v = synthetic_speed(JointId::LHand, &joint_speed_components(&seq, JointId::LHand).unwrap());
            let w = synthetic_speed(JointId::LHand, &joint_speed_components(&scaled, JointId::LHand).unwrap());
            for (x, y) in v.values.iter().zip(&w.values) {
                prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
            let a = synthetic_acceleration(&v, 0.02).unwrap();
            let b = synthetic_acceleration(&w, 0.02).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x * c - y).abs() <= 1e-7 * (1.0 + y.abs()));
            }
        }
    }
}
