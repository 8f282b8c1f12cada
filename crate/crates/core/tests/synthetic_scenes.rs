use std::time::Instant;

use skelscene::classifier::{train, ClassifierConfig};
use skelscene::descriptor::{featurize, FeatureConfig};
use skelscene::ingest::{benchmark_corpus, generate_scene, CorpusSpec, MotionSegment, PartScript, SubjectProfile, SyntheticClassSpec};
use skelscene::kinematics::{motion_similarity, synthetic_acceleration, SceneViews, SpeedFrame};
use skelscene::skeleton::{JointId, Stream};

#[test]
fn noise_free_pa_count_matches_script() {
    let corpus = benchmark_corpus();
    let config = FeatureConfig::default();
    for (c, class) in corpus.classes.iter().enumerate() {
        let mut quiet = class.clone();
        quiet.noise = 0.0;
        for subject in 0..corpus.subjects {
            let profile = corpus.scene_profile(&corpus.subject_profile(subject), corpus.scene_seed(c, subject, 0));
            let seq = generate_scene::<f64>(&quiet, &profile, corpus.dt, 1, "s").unwrap();
            let (partition, _) = featurize(&seq, &config).unwrap();
            assert_eq!(partition.stream(Stream::Global).len(), quiet.segment_count(1), "{} global", class.name);
            for p in 1..=7 {
                assert_eq!(
                    partition.stream(Stream::from_index(p).unwrap()).len(),
                    quiet.segment_count(p),
                    "{} part {p} subject {subject}",
                    class.name
                );
            }
        }
    }
}

#[test]
fn joints_of_one_part_move_alike() {
    // Clavicles shrug together (one part) while the left arm moves on its own
    // schedule: the clavicle pair is closer than clavicle vs humerus.
    let seg = |amp: f64, dir: [f64; 3]| MotionSegment { duration: 25, amplitude: amp, rest: 15, direction: dir };
    let spec = SyntheticClassSpec {
        name: "shrug_and_reach".into(),
        parts: vec![
            PartScript { part: 3, delay: 5, segments: vec![seg(0.4, [0.0, 1.0, 0.0]), seg(0.4, [0.0, -1.0, 0.0])] },
            PartScript { part: 4, delay: 30, segments: vec![seg(1.0, [0.0, 0.2, 1.0]), seg(1.0, [0.0, -0.2, -1.0])] },
        ],
        noise: 0.01,
    };
    for seed in 0..5 {
        let seq = generate_scene::<f64>(&spec, &SubjectProfile::default(), 0.02, seed, "s").unwrap();
        let dt = seq.dt();
        let views = SceneViews::new(seq).unwrap();
        let acc = |j| synthetic_acceleration(&views.speed(j, SpeedFrame::AllGlobal).unwrap(), dt).unwrap();
        let (lc, rc, lh) = (acc(JointId::LClavicle), acc(JointId::RClavicle), acc(JointId::LHumerus));
        let within = motion_similarity(&lc, &rc).unwrap();
        let across = motion_similarity(&lc, &lh).unwrap();
        assert!(within < across, "seed {seed}: {within} vs {across}");
    }
}

#[test]
fn three_class_synthetic_set_is_learned_quickly() {
    let mut corpus: CorpusSpec = benchmark_corpus();
    let keep = ["raise_arm", "walk_forward", "squat"];
    corpus.classes.retain(|c| keep.contains(&c.name.as_str()));
    corpus.subjects = 5;
    corpus.scenes_per_class = 4;
    assert_eq!(corpus.scene_count(), 60);
    let labels = corpus.labels();
    let (mut train_set, mut val_set) = (Vec::new(), Vec::new());
    for n in 0..corpus.scene_count() {
        let (c, s, k) = corpus.scene_key(n);
        let seq = corpus.generate::<f64>(c, s, k).unwrap();
        let (_, mut m) = featurize(&seq, &FeatureConfig::default()).unwrap();
        m.label = labels.iter().position(|l| Some(l) == seq.label.as_ref());
        if s < 4 { train_set.push(m.cast::<f32>()) } else { val_set.push(m.cast::<f32>()) }
    }
    let config = ClassifierConfig { classes: 3, epochs: 50, seed: 5, ..ClassifierConfig::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let out = pool.install(|| train(&config, &train_set, &val_set)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let best = out.history.best().unwrap().val_acc.unwrap();
    assert!(best >= 0.95, "validation accuracy {best}");
    assert!(elapsed < 60.0, "{elapsed} s");
}
