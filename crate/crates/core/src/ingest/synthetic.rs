//! Scripted synthetic scenes with known primitive actions.
//!
//! A class is a set of per-part scripts. Each script is a list of motion
//! segments: the part's end joints travel along a fixed body-frame direction
//! with a half-sine speed profile for `duration` frames, then hold still for
//! `rest` frames. Scripting the lower torso translates the whole body.
//! Noise is a slow per-coordinate drift bounded by the class noise amplitude,
//! so resting joints stay below the default speed floor.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::ingest::csv::serialize_sequence_csv;
use crate::ingest::manifest::{DatasetManifest, ManifestEntry, DEFAULT_DT};
use crate::scalar::Scalar;
use crate::skeleton::{part_table, FrameTag, JointId, SkeletonFrame, SkeletonSequence, JOINT_COUNT};

fn up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    /// Moving frames.
    pub duration: usize,
    /// Peak end-joint speed in m/s.
    pub amplitude: f64,
    /// Still frames after the movement.
    #[serde(default)]
    pub rest: usize,
    /// Body-frame direction (x toward the left hip, y up, z forward).
    #[serde(default = "up")]
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartScript {
    /// Body part number, 1–7.
    pub part: usize,
    /// Still frames before the first segment.
    #[serde(default)]
    pub delay: usize,
    pub segments: Vec<MotionSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassSpec {
    pub name: String,
    pub parts: Vec<PartScript>,
    /// Drift amplitude per coordinate, meters.
    #[serde(default)]
    pub noise: f64,
}

impl SyntheticClassSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("class `{}`: {m}", self.name)));
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise amplitude {} must be nonnegative", self.noise));
        }
        let mut seen = [false; 8];
        for script in &self.parts {
            if !(1..=7).contains(&script.part) {
                return bad(format!("part {} out of range", script.part));
            }
            if std::mem::replace(&mut seen[script.part], true) {
                return bad(format!("part {} scripted twice", script.part));
            }
            if script.segments.is_empty() {
                return bad(format!("part {} has no moving segment", script.part));
            }
            for s in &script.segments {
                if s.duration == 0 {
                    return bad("segment duration must be at least 1 frame".into());
                }
                if !(s.amplitude > 0.0 && s.amplitude.is_finite()) {
                    return bad(format!("segment amplitude {} must be positive", s.amplitude));
                }
                if Vec3::<f64>::from_f64(s.direction).norm() == 0.0 {
                    return bad("segment direction must be nonzero".into());
                }
            }
        }
        Ok(())
    }

    /// Number of scripted segments for `part` (1–7).
    pub fn segment_count(&self, part: usize) -> usize {
        self.parts.iter().filter(|s| s.part == part).map(|s| s.segments.len()).sum()
    }
}

/// Body size, placement and tempo of one performer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub scale: f64,
    /// Rotation about the vertical axis, radians.
    pub heading: f64,
    /// Position of the root in the camera frame, meters.
    pub offset: [f64; 3],
    /// Multiplier on segment and rest durations.
    pub tempo: f64,
    /// Multiplier on segment amplitudes.
    pub vigor: f64,
    /// Still frames before every script starts.
    pub lead_in: usize,
}

impl Default for SubjectProfile {
    fn default() -> Self {
        Self { scale: 1.0, heading: 0.0, offset: [0.0, 0.0, 4.0], tempo: 1.0, vigor: 1.0, lead_in: 0 }
    }
}

/// Standing pose in the body frame, root at the origin, meters.
pub fn rest_pose() -> [Vec3<f64>; JOINT_COUNT] {
    let mut p = [Vec3::zero(); JOINT_COUNT];
    let mut set = |j: JointId, v: [f64; 3]| p[j.index()] = Vec3::from_f64(v);
    set(JointId::Root, [0.0, 0.0, 0.0]);
    set(JointId::LHip, [0.12, 0.0, 0.0]);
    set(JointId::RHip, [-0.12, 0.0, 0.0]);
    set(JointId::LFemur, [0.12, -0.45, 0.02]);
    set(JointId::LTibia, [0.12, -0.88, 0.0]);
    set(JointId::RFemur, [-0.12, -0.45, 0.02]);
    set(JointId::RTibia, [-0.12, -0.88, 0.0]);
    set(JointId::Spine, [0.0, 0.25, 0.0]);
    set(JointId::Throat, [0.0, 0.52, 0.02]);
    set(JointId::LClavicle, [0.17, 0.49, 0.0]);
    set(JointId::LHumerus, [0.2, 0.21, -0.02]);
    set(JointId::LHand, [0.22, -0.05, 0.05]);
    set(JointId::RClavicle, [-0.17, 0.49, 0.0]);
    set(JointId::RHumerus, [-0.2, 0.21, -0.02]);
    set(JointId::RHand, [-0.22, -0.05, 0.05]);
    p
}

/// Joints moved by a part script and their displacement gains.
fn driven_joints(part: usize) -> Vec<(JointId, f64)> {
    match part {
        1 => JointId::ALL.iter().map(|j| (*j, 1.0)).collect(),
        // The spine joint anchors the body frame; only the throat follows the script.
        2 => vec![(JointId::Throat, 1.0)],
        3 => vec![(JointId::LClavicle, 1.0), (JointId::RClavicle, 1.0)],
        p => {
            let [a, b] = part_table()[p - 1].ends;
            vec![(a, 0.5), (b, 1.0)]
        }
    }
}

fn stretch(frames: usize, tempo: f64) -> usize {
    (frames as f64 * tempo).round() as usize
}

/// Per-step speeds and unit directions of one script: `(step, speed, direction)`.
fn script_steps(script: &PartScript, profile: &SubjectProfile) -> (Vec<(usize, f64, Vec3<f64>)>, usize) {
    let mut t = profile.lead_in + stretch(script.delay, profile.tempo);
    let mut steps = Vec::new();
    for seg in &script.segments {
        let d = stretch(seg.duration, profile.tempo).max(1);
        let dir = Vec3::from_f64(seg.direction).normalized_or_zero();
        for k in 0..d {
            let v = seg.amplitude * profile.vigor * (PI * (k as f64 + 0.5) / d as f64).sin();
            steps.push((t + k, v, dir));
        }
        t += d + stretch(seg.rest, profile.tempo);
    }
    (steps, t)
}

/// Slow bounded drift: two low-frequency sinusoids with weights summing to one.
struct Drift {
    terms: Vec<[(f64, f64, f64); 2]>,
}

const DRIFT_MIN_HZ: f64 = 0.02;
const DRIFT_MAX_HZ: f64 = 0.08;

impl Drift {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..JOINT_COUNT * 3)
            .map(|_| {
                let w: f64 = rng.gen_range(0.0..1.0);
                let mut term = |weight: f64| {
                    (weight, rng.gen_range(DRIFT_MIN_HZ..DRIFT_MAX_HZ), rng.gen_range(0.0..2.0 * PI))
                };
                [term(w), term(1.0 - w)]
            })
            .collect();
        Self { terms }
    }

    fn at(&self, coord: usize, time: f64) -> f64 {
        self.terms[coord].iter().map(|(w, f, ph)| w * (2.0 * PI * f * time + ph).sin()).sum()
    }
}

/// Generates one scene for a performer.
pub fn generate_scene<T: Scalar>(
    spec: &SyntheticClassSpec,
    profile: &SubjectProfile,
    dt: f64,
    seed: u64,
    subject: &str,
) -> Result<SkeletonSequence<T>> {
    spec.validate()?;
    let scripted: Vec<_> = spec.parts.iter().map(|s| (s.part, script_steps(s, profile))).collect();
    let end = scripted.iter().map(|(_, (_, t))| *t).max().unwrap_or(0);
    let total = (end + 1).max(2);
    let mut displacements: Vec<(usize, Vec<Vec3<f64>>)> = Vec::new();
    for (part, (steps, _)) in scripted {
        // Cumulative displacement at each frame.
        let mut disp = vec![Vec3::zero(); total];
        let mut step_vel = vec![Vec3::zero(); total];
        for (s, v, dir) in steps {
            step_vel[s] = dir * (v * dt);
        }
        for f in 1..total {
            disp[f] = disp[f - 1] + step_vel[f - 1];
        }
        displacements.push((part, disp));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = Drift::new(&mut rng);
    let place = RigidTransform::from_axis_angle(
        Vec3::new(0.0, 1.0, 0.0),
        profile.heading,
        Vec3::from_f64(profile.offset),
    );
    let base = rest_pose().map(|p| p * profile.scale);
    let driven: Vec<_> = displacements.iter().map(|(part, d)| (driven_joints(*part), d)).collect();

    let mut frames = Vec::with_capacity(total);
    for f in 0..total {
        let mut pos = base;
        for (joints, disp) in &driven {
            for (j, gain) in joints {
                pos[j.index()] += disp[f] * *gain;
            }
        }
        let time = f as f64 * dt;
        let mut out = [Vec3::<T>::zero(); JOINT_COUNT];
        for (j, p) in pos.iter().enumerate() {
            let g = place.apply(*p);
            let n = Vec3::new(drift.at(3 * j, time), drift.at(3 * j + 1, time), drift.at(3 * j + 2, time))
                * spec.noise;
            out[j] = (g + n).cast();
        }
        frames.push(SkeletonFrame::new(f, FrameTag::Global, out)?);
    }
    SkeletonSequence::new(frames, T::of(dt), subject, Some(spec.name.clone()))
}

/// Default performer at 50 fps; `seed` drives the noise only.
pub fn generate_synthetic_scene<T: Scalar>(
    spec: &SyntheticClassSpec,
    seed: u64,
) -> Result<(SkeletonSequence<T>, String)> {
    let seq = generate_scene(spec, &SubjectProfile::default(), DEFAULT_DT, seed, "synthetic")?;
    Ok((seq, spec.name.clone()))
}

/// Labeled corpus description: classes × subjects × scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub subjects: usize,
    pub scenes_per_class: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides every class's noise amplitude when set.
    #[serde(default)]
    pub noise: Option<f64>,
    pub classes: Vec<SyntheticClassSpec>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn subject_name(index: usize) -> String {
    format!("S{}", index + 1)
}

impl CorpusSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidConfig("a corpus needs at least two classes".into()));
        }
        if self.subjects == 0 || self.scenes_per_class == 0 {
            return Err(Error::InvalidConfig("subjects and scenes_per_class must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn class(&self, index: usize) -> SyntheticClassSpec {
        let mut c = self.classes[index].clone();
        if let Some(n) = self.noise {
            c.noise = n;
        }
        c
    }

    /// Body size, placement and tempo of subject `index`.
    pub fn subject_profile(&self, index: usize) -> SubjectProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0x5EED_0000 + index as u64));
        SubjectProfile {
            scale: rng.gen_range(0.85..1.15),
            heading: rng.gen_range(-0.6..0.6),
            offset: [rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2), rng.gen_range(3.0..5.0)],
            tempo: rng.gen_range(0.85..1.15),
            vigor: rng.gen_range(0.85..1.15),
            lead_in: 0,
        }
    }

    /// Per-scene variation on top of the subject profile.
    pub fn scene_profile(&self, subject: &SubjectProfile, scene_seed: u64) -> SubjectProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(scene_seed, 0xC0FFEE));
        SubjectProfile {
            heading: subject.heading + rng.gen_range(-0.2..0.2),
            tempo: subject.tempo * rng.gen_range(0.95..1.05),
            vigor: subject.vigor * rng.gen_range(0.9..1.1),
            lead_in: rng.gen_range(0..20),
            ..*subject
        }
    }

    pub fn scene_seed(&self, class: usize, subject: usize, scene: usize) -> u64 {
        mix_seed(mix_seed(mix_seed(self.seed, class as u64), subject as u64), scene as u64)
    }

    pub fn scene_count(&self) -> usize {
        self.classes.len() * self.subjects * self.scenes_per_class
    }

    /// Scene `n` in manifest order (subject-major, then class, then repetition).
    pub fn scene_key(&self, n: usize) -> (usize, usize, usize) {
        let per_subject = self.classes.len() * self.scenes_per_class;
        (n % per_subject / self.scenes_per_class, n / per_subject, n % self.scenes_per_class)
    }

    pub fn file_name(&self, class: usize, subject: usize, scene: usize) -> String {
        format!("{}/{}_{:02}.csv", subject_name(subject), self.classes[class].name, scene)
    }

    pub fn generate<T: Scalar>(&self, class: usize, subject: usize, scene: usize) -> Result<SkeletonSequence<T>> {
        let seed = self.scene_seed(class, subject, scene);
        let profile = self.scene_profile(&self.subject_profile(subject), seed);
        generate_scene(&self.class(class), &profile, self.dt, seed, &subject_name(subject))
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::new(self.dt, self.labels());
        for n in 0..self.scene_count() {
            let (c, s, k) = self.scene_key(n);
            m.entries.push(ManifestEntry {
                path: self.file_name(c, s, k).into(),
                subject: subject_name(s),
                label: self.classes[c].name.clone(),
                dt: None,
            });
        }
        m
    }

    /// Writes every scene CSV plus `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        let manifest = self.manifest();
        for n in 0..self.scene_count() {
            self.write_scene(dir, n)?;
        }
        manifest.save(&dir.join("manifest.json"))?;
        Ok(manifest)
    }

    pub fn write_scene(&self, dir: &Path, n: usize) -> Result<()> {
        let (c, s, k) = self.scene_key(n);
        let seq = self.generate::<f64>(c, s, k)?;
        crate::descriptor::write_atomic(&dir.join(self.file_name(c, s, k)), serialize_sequence_csv(&seq).as_bytes())
    }
}

/// The committed 15-class benchmark corpus.
pub fn benchmark_corpus() -> CorpusSpec {
    CorpusSpec::from_json(include_str!("../../fixtures/benchmark_classes.json")).expect("bundled corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{joint_speed_components, synthetic_speed};

    fn one_arm(noise: f64) -> SyntheticClassSpec {
        SyntheticClassSpec {
            name: "raise".into(),
            parts: vec![PartScript {
                part: 4,
                delay: 0,
                segments: vec![MotionSegment { duration: 30, amplitude: 1.0, rest: 30, direction: [0.0, 1.0, 0.0] }],
            }],
            noise,
        }
    }

    #[test]
    fn noise_free_speed_is_zero_outside_window() {
        let (seq, label) = generate_synthetic_scene::<f64>(&one_arm(0.0), 1).unwrap();
        assert_eq!(label, "raise");
        assert_eq!(seq.len(), 61);
        let v = synthetic_speed(JointId::LHand, &joint_speed_components(&seq, JointId::LHand).unwrap());
        for (i, s) in v.values.iter().enumerate() {
            if i < 30 {
                assert!(*s > 0.0);
            } else {
                assert!(s.abs() < 1e-12, "step {i}: {s}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic_scene::<f64>(&one_arm(0.01), 9).unwrap().0;
        let b = generate_synthetic_scene::<f64>(&one_arm(0.01), 9).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_differ_within_noise() {
        let a = generate_synthetic_scene::<f64>(&one_arm(0.01), 1).unwrap().0;
        let b = generate_synthetic_scene::<f64>(&one_arm(0.01), 2).unwrap().0;
        let clean = generate_synthetic_scene::<f64>(&one_arm(0.0), 2).unwrap().0;
        let mut max = 0.0f64;
        for f in 0..a.len() {
            for j in JointId::ALL {
                max = max.max(a.position(f, j).max_abs_diff(b.position(f, j)));
                assert!(a.position(f, j).max_abs_diff(clean.position(f, j)) <= 0.01 + 1e-12);
            }
        }
        assert!(max > 0.0 && max <= 0.02 + 1e-12, "{max}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = one_arm(0.0);
        s.parts[0].segments.clear();
        assert!(s.validate().is_err());
        let mut s = one_arm(0.0);
        s.parts[0].segments[0].duration = 0;
        assert!(s.validate().is_err());
        let mut s = one_arm(-1.0);
        assert!(s.validate().is_err());
        s.noise = 0.0;
        s.parts[0].part = 9;
        assert!(s.validate().is_err());
    }

    #[test]
    fn benchmark_corpus_shape() {
        let c = benchmark_corpus();
        assert_eq!(c.classes.len(), 15);
        assert_eq!(c.subjects, 7);
        assert_eq!(c.scenes_per_class, 8);
        assert_eq!(c.scene_count(), 840);
        assert!(c.classes.iter().all(|k| (k.noise - 0.01).abs() < 1e-15));
        let m = c.manifest();
        assert_eq!(m.entries.len(), 840);
        m.validate().unwrap();
        let (cl, s, k) = c.scene_key(130);
        assert_eq!(m.entries[130].subject, subject_name(s));
        assert_eq!(m.entries[130].label, c.classes[cl].name);
        assert_eq!(m.entries[130].path, Path::new(&c.file_name(cl, s, k)));
    }
}
