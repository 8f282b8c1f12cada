use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use skelscene::descriptor::SceneFeatureMatrix;
use skelscene::ingest::DatasetManifest;
use skelscene_cli::stages::{self, FeatureIndex};
use skelscene_cli::{run, PipelineConfig};

fn fixture_copy() -> (tempfile::TempDir, PathBuf) {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_scenes");
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&src, tmp.path());
    let cfg = tmp.path().join("pipeline.toml");
    (tmp, cfg)
}

fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for e in fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        let to = dst.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to);
        } else {
            fs::copy(e.path(), to).unwrap();
        }
    }
}

fn args(v: &[&str]) -> Vec<String> {
    std::iter::once("skelscene").chain(v.iter().copied()).map(String::from).collect()
}

#[test]
fn featurize_fixture_writes_three_full_size_matrices() {
    let (tmp, cfg) = fixture_copy();
    run(args(&["featurize", "-c", cfg.to_str().unwrap(), "--dump-pas"])).unwrap();
    let feat = tmp.path().join("out/features");
    let index = FeatureIndex::load(&feat.join("index.json")).unwrap();
    assert_eq!(index.entries.len(), 3);
    assert_eq!((index.rows, index.cols), (240, 126));
    for e in &index.entries {
        let m = SceneFeatureMatrix::<f32>::read_sfm(&feat.join(&e.file)).unwrap();
        assert_eq!(m.shape(), (240, 126));
        assert_eq!(m.label, Some(e.label_index));
        assert!(e.primitive_actions > 0);
        assert_eq!(m.occupied_rows().count(), e.primitive_actions);
        let pas = fs::read_to_string(feat.join(&e.file).with_extension("pas.csv")).unwrap();
        assert!(pas.starts_with("stream,q,start,end,score\n"));
        assert_eq!(pas.lines().count(), e.primitive_actions + 1);
    }
    let cfg = PipelineConfig::load(&cfg).unwrap();
    assert_eq!(index.feature_hash, cfg.feature_hash());
}

#[test]
fn featurize_is_reproducible() {
    let (tmp, cfg) = fixture_copy();
    let c = cfg.to_str().unwrap();
    let read_all = |dir: &Path| -> Vec<Vec<u8>> {
        let mut files: Vec<PathBuf> = walk(dir);
        files.sort();
        files.iter().map(|f| fs::read(f).unwrap()).collect()
    };
    run(args(&["featurize", "-c", c])).unwrap();
    let first = read_all(&tmp.path().join("out/features"));
    run(args(&["featurize", "-c", c])).unwrap();
    assert_eq!(first, read_all(&tmp.path().join("out/features")));
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn augment_doubles_manifest_and_writes_twins() {
    let (tmp, cfg) = fixture_copy();
    run(args(&["augment", "-c", cfg.to_str().unwrap()])).unwrap();
    let doubled = DatasetManifest::load(&tmp.path().join("manifest_augmented.json")).unwrap();
    assert_eq!(doubled.entries.len(), 6);
    for e in &doubled.entries {
        assert!(tmp.path().join(&e.path).exists(), "{}", e.path.display());
    }
    assert_eq!(doubled.entries[1].path, PathBuf::from("S1/reach_forward_00_mirror.csv"));
}

#[test]
fn augment_flag_featurizes_twins() {
    let (tmp, cfg) = fixture_copy();
    run(args(&["featurize", "-c", cfg.to_str().unwrap(), "--augment"])).unwrap();
    let index = FeatureIndex::load(&tmp.path().join("out/features/index.json")).unwrap();
    assert_eq!(index.entries.len(), 6);
    assert!(index.entries.iter().filter(|e| e.mirrored).count() == 3);
    assert!(index.augment);
}

#[test]
fn malformed_scene_is_reported_with_stage_and_file() {
    let (tmp, cfg) = fixture_copy();
    let victim = tmp.path().join("S1/squat_00.csv");
    let text = fs::read_to_string(&victim).unwrap();
    let broken: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 5 { l.replacen(',', ",oops,", 1) } else { l.to_string() })
        .collect();
    fs::write(&victim, broken.join("\n")).unwrap();
    let err = run(args(&["featurize", "-c", cfg.to_str().unwrap()])).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("featurize"), "{msg}");
    assert!(msg.contains("squat_00.csv"), "{msg}");
    assert!(msg.contains("line 6"), "{msg}");
}

#[test]
fn binary_exit_status() {
    let bin = env!("CARGO_BIN_EXE_skelscene");
    let (tmp, cfg) = fixture_copy();
    let ok = Command::new(bin).args(["featurize", "-c", cfg.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let missing = Command::new(bin).args(["featurize", "-c", tmp.path().join("nope.toml").to_str().unwrap()]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.toml"));
    let bad = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn small_pipeline_trains_evaluates_and_guards_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().to_str().unwrap();
    run(args(&["synth", "--out", &format!("{c}/data"), "--subjects", "3", "--scenes-per-class", "1"])).unwrap();
    let cfg_text = r#"
        manifest = "data/manifest.json"
        output = "out"
        seed = 3
        [split]
        train = ["S1"]
        val = ["S2"]
        test = ["S3"]
        [classifier]
        filters = 64
        dense_units = 32
        epochs = 2
    "#;
    let cfg_path = tmp.path().join("pipeline.toml");
    fs::write(&cfg_path, cfg_text).unwrap();
    let cp = cfg_path.to_str().unwrap();
    run(args(&["featurize", "-c", cp])).unwrap();
    run(args(&["train", "-c", cp, "--quiet"])).unwrap();
    run(args(&["eval", "-c", cp])).unwrap();

    let out = tmp.path().join("out");
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
    assert_eq!(history.lines().count(), 3);
    let csv = fs::read_to_string(out.join("confusion.csv")).unwrap();
    let manifest = DatasetManifest::load(&tmp.path().join("data/manifest.json")).unwrap();
    for line in csv.lines().skip(1) {
        let mut cells = line.split(',');
        let label = cells.next().unwrap();
        let row_sum: usize = cells.map(|v| v.parse::<usize>().unwrap()).sum();
        let expected = manifest.entries.iter().filter(|e| e.subject == "S3" && e.label == label).count();
        assert_eq!(row_sum, expected, "{label}");
    }
    assert!(fs::read_to_string(out.join("confusion.pgm")).unwrap().starts_with("P2\n"));
    let run_json = fs::read_to_string(out.join("run.json")).unwrap();
    let index = FeatureIndex::load(&out.join("features/index.json")).unwrap();
    assert!(run_json.contains(&index.feature_hash));

    // Refeaturize with different settings into the same output: the old
    // checkpoint no longer matches and eval must refuse it.
    run(args(&["featurize", "-c", cp, "--max-pa", "20"])).unwrap();
    let err = run(args(&["eval", "-c", cp, "--max-pa", "20"])).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("eval") && msg.contains("model.skm"), "{msg}");

    // Training against a stale index is refused as well.
    let err = run(args(&["train", "-c", cp, "--quiet"])).unwrap_err();
    assert!(format!("{err:#}").contains("rerun featurize"));
}

#[test]
fn default_split_uses_last_subjects_for_val_and_test() {
    let mut m = DatasetManifest::new(0.02, vec!["a".into()]);
    for s in ["S1", "S2", "S3", "S4"] {
        m.entries.push(skelscene::ingest::ManifestEntry {
            path: format!("{s}.csv").into(),
            subject: s.into(),
            label: "a".into(),
            dt: None,
        });
    }
    let split = stages::default_split(&m).unwrap();
    assert_eq!(split.train, vec!["S1", "S2"]);
    assert_eq!(split.val, vec!["S3"]);
    assert_eq!(split.test, vec!["S4"]);
    m.entries.truncate(2);
    assert!(stages::default_split(&m).is_err());
}

#[test]
fn kinematics_dump_has_one_row_per_step() {
    let (tmp, _) = fixture_copy();
    let input = tmp.path().join("S1/squat_00.csv");
    let out = tmp.path().join("speeds.csv");
    run(args(&["kinematics", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--frame", "local"]))
        .unwrap();
    let frames = fs::read_to_string(&input).unwrap().lines().count() - 1;
    let speeds = fs::read_to_string(&out).unwrap();
    assert!(speeds.starts_with("step,root,lhip,rhip,"));
    assert_eq!(speeds.lines().count(), frames);
    let accels = fs::read_to_string(tmp.path().join("speeds.accel.csv")).unwrap();
    assert_eq!(accels.lines().count(), frames - 1);
}

#[test]
fn mirrored_twins_stay_in_training() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().to_str().unwrap();
    run(args(&["synth", "--out", &format!("{c}/data"), "--subjects", "3", "--scenes-per-class", "1"])).unwrap();
    let cfg_text = r#"
        manifest = "data/manifest.json"
        augment = true
        [split]
        train = ["S1"]
        val = ["S2"]
        test = ["S3"]
        [classifier]
        filters = 32
        dense_units = 16
        epochs = 1
    "#;
    let cfg_path = tmp.path().join("pipeline.toml");
    fs::write(&cfg_path, cfg_text).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let index = stages::run_featurize(&cfg, false).unwrap();
    let dir = cfg.features_dir();
    let s3 = vec!["S3".to_string()];
    assert_eq!(index.load_subjects(&dir, &s3, true).unwrap().len(), 30);
    assert_eq!(index.load_subjects(&dir, &s3, false).unwrap().len(), 15);
    stages::run_train(&cfg, true).unwrap();
    let (cm, _) = stages::run_eval(&cfg, None).unwrap();
    assert_eq!(cm.total(), 15);

    // Twins produced by `augment` and listed in a manifest are recognized too.
    run(args(&["augment", "-c", cfg_path.to_str().unwrap()])).unwrap();
    let mut plain = cfg.clone();
    plain.augment = false;
    plain.manifest = "data/manifest_augmented.json".into();
    let index = stages::run_featurize(&plain, false).unwrap();
    assert_eq!(index.entries.iter().filter(|e| e.mirrored).count(), index.entries.len() / 2);
}
