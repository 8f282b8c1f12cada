use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skelscene::augment::{augment_dataset, mirror_sequence, mirrored_path};
use skelscene::classifier::{evaluate, load_checkpoint, save_checkpoint, train_with, ConfusionMatrix, TrainingHistory};
use skelscene::descriptor::{featurize, write_atomic, FeatureConfig, SceneFeatureMatrix};
use skelscene::ingest::{split_dataset, CorpusSpec, DatasetManifest, SplitSpec};
use skelscene::partition::ScenePartition;
use skelscene::kinematics::{synthetic_acceleration, SceneViews, SpeedFrame};
use skelscene::skeleton::{JointId, SkeletonSequence};

use crate::config::{classifier_hash, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Matrix file, relative to the index directory.
    pub file: PathBuf,
    /// Source sequence, relative to the manifest directory.
    pub source: PathBuf,
    pub subject: String,
    pub label: String,
    pub label_index: usize,
    #[serde(default)]
    pub mirrored: bool,
    pub primitive_actions: usize,
}

/// Written next to the feature matrices; ties them to the settings used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub feature_hash: String,
    pub features: FeatureConfig,
    pub augment: bool,
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<String>,
    pub entries: Vec<IndexEntry>,
}

impl FeatureIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading feature index {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing feature index {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        Ok(write_atomic(path, text.as_bytes())?)
    }

    /// Matrices of the given subjects, in index order, cast to `f32`.
    /// Matrices of `subjects` in index order; mirrored twins only with `with_twins`.
    pub fn load_subjects(
        &self,
        dir: &Path,
        subjects: &[String],
        with_twins: bool,
    ) -> Result<Vec<SceneFeatureMatrix<f32>>> {
        let picked: Vec<&IndexEntry> =
            self.entries.iter().filter(|e| subjects.contains(&e.subject) && (with_twins || !e.mirrored)).collect();
        picked
            .par_iter()
            .map(|e| {
                let path = dir.join(&e.file);
                let mut m = SceneFeatureMatrix::<f32>::read_sfm(&path)?;
                if m.shape() != (self.rows, self.cols) {
                    bail!("{}: matrix is {}x{}, index declares {}x{}", path.display(), m.rows(), m.cols(), self.rows, self.cols);
                }
                m.label = Some(e.label_index);
                Ok(m)
            })
            .collect()
    }
}

/// Twins written by `augment` keep their flag when an augmented manifest is featurized.
fn is_twin(path: &Path) -> bool {
    path.file_stem().is_some_and(|s| s.to_string_lossy().ends_with("_mirror"))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.with_context(|| format!("stage `{name}` failed"))
}

/// Primitive actions as `stream,q,start,end,score` rows.
pub fn pa_csv(partition: &ScenePartition<f64>) -> String {
    let mut s = String::from("stream,q,start,end,score\n");
    for pa in partition.iter() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            pa.stream.index(),
            pa.ordinal,
            pa.interval.start,
            pa.interval.end,
            pa.score
        );
    }
    s
}

/// Per-joint synthetic speeds (`step,<joint>...`) and accelerations of one scene.
pub fn kinematics_csv(seq: &SkeletonSequence<f64>, frame: SpeedFrame) -> Result<(String, String)> {
    let dt = seq.dt();
    let views = SceneViews::new(seq.clone())?;
    let mut speeds = Vec::new();
    let mut accels = Vec::new();
    for j in JointId::ALL {
        let v = views.speed(j, frame)?;
        accels.push(synthetic_acceleration(&v, dt)?.values);
        speeds.push(v.values);
    }
    let table = |cols: &[Vec<f64>]| {
        let mut s = String::from("step");
        for j in JointId::ALL {
            s.push(',');
            s.push_str(j.name());
        }
        s.push('\n');
        for i in 0..cols[0].len() {
            s.push_str(&i.to_string());
            for c in cols {
                let _ = write!(s, ",{}", c[i]);
            }
            s.push('\n');
        }
        s
    };
    Ok((table(&speeds), table(&accels)))
}

fn sfm_name(source: &Path) -> PathBuf {
    source.with_extension("sfm")
}

fn featurize_one(
    seq: &SkeletonSequence<f64>,
    cfg: &FeatureConfig,
    out_dir: &Path,
    mut entry: IndexEntry,
    dump_pas: bool,
) -> Result<IndexEntry> {
    let (partition, mut matrix) = featurize(seq, cfg)?;
    matrix.label = Some(entry.label_index);
    let path = out_dir.join(&entry.file);
    matrix.write_sfm(&path)?;
    if dump_pas {
        write_atomic(&path.with_extension("pas.csv"), pa_csv(&partition).as_bytes())?;
    }
    entry.primitive_actions = partition.total();
    Ok(entry)
}

/// Featurizes every manifest entry into `<output>/features`, writing one
/// matrix file per scene and `index.json`.
pub fn run_featurize(cfg: &PipelineConfig, dump_pas: bool) -> Result<FeatureIndex> {
    stage("featurize", featurize_inner(cfg, dump_pas))
}

fn featurize_inner(cfg: &PipelineConfig, dump_pas: bool) -> Result<FeatureIndex> {
    let manifest_path = cfg.manifest_path();
    let manifest = DatasetManifest::load(&manifest_path)?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = cfg.features_dir();
    let results: Vec<Result<Vec<IndexEntry>>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let source = manifest.resolve(&base, e);
            let label_index = manifest.label_index(&e.label).expect("manifest validated");
            let seq: SkeletonSequence<f64> = manifest.load_sequence(&base, e)?;
            let entry = IndexEntry {
                file: sfm_name(&e.path),
                source: e.path.clone(),
                subject: e.subject.clone(),
                label: e.label.clone(),
                label_index,
                mirrored: is_twin(&e.path),
                primitive_actions: 0,
            };
            let mut done = vec![featurize_one(&seq, &cfg.features, &out_dir, entry.clone(), dump_pas)
                .with_context(|| format!("scene {}", source.display()))?];
            if cfg.augment {
                let twin = mirror_sequence(&seq).with_context(|| format!("mirroring {}", source.display()))?;
                let mirrored = IndexEntry {
                    file: sfm_name(&mirrored_path(&e.path)),
                    source: mirrored_path(&e.path),
                    mirrored: true,
                    ..entry
                };
                done.push(
                    featurize_one(&twin, &cfg.features, &out_dir, mirrored, dump_pas)
                        .with_context(|| format!("mirrored scene {}", source.display()))?,
                );
            }
            Ok(done)
        })
        .collect();
    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    let index = FeatureIndex {
        feature_hash: cfg.feature_hash(),
        features: cfg.features,
        augment: cfg.augment,
        rows: cfg.features.rows(),
        cols: cfg.features.width,
        labels: manifest.labels.clone(),
        entries,
    };
    index.save(&cfg.index_path())?;
    Ok(index)
}

/// Writes mirrored CSVs next to the originals and `<stem>_augmented.json`
/// beside the manifest.
pub fn run_augment(cfg: &PipelineConfig) -> Result<PathBuf> {
    stage("augment", {
        let path = cfg.manifest_path();
        (|| {
            let manifest = DatasetManifest::load(&path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let doubled = augment_dataset(&manifest, &base)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let out = path.with_file_name(format!("{stem}_augmented.json"));
            doubled.save(&out)?;
            Ok(out)
        })()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub feature_hash: String,
    pub classifier_hash: String,
    pub best_epoch: usize,
    pub train_scenes: usize,
    pub val_scenes: usize,
}

fn require_subjects(split: &SplitSpec, index: &FeatureIndex) -> Result<()> {
    let known: std::collections::BTreeSet<&str> = index.entries.iter().map(|e| e.subject.as_str()).collect();
    for s in split.train.iter().chain(&split.val).chain(&split.test) {
        if !known.contains(s.as_str()) {
            bail!("split names subject `{s}` which has no featurized scenes");
        }
    }
    Ok(())
}

/// Trains on the split's train subjects, selecting on its val subjects.
pub fn run_train(cfg: &PipelineConfig, quiet: bool) -> Result<TrainingHistory> {
    stage("train", train_inner(cfg, quiet))
}

fn train_inner(cfg: &PipelineConfig, quiet: bool) -> Result<TrainingHistory> {
    let index_path = cfg.index_path();
    let index = FeatureIndex::load(&index_path)?;
    if index.feature_hash != cfg.feature_hash() {
        bail!(
            "{} was produced with feature hash {}, config has {}; rerun featurize",
            index_path.display(),
            index.feature_hash,
            cfg.feature_hash()
        );
    }
    if cfg.split.train.is_empty() {
        bail!("split has no training subjects");
    }
    require_subjects(&cfg.split, &index)?;
    let dir = cfg.features_dir();
    let train = index.load_subjects(&dir, &cfg.split.train, true)?;
    let val = index.load_subjects(&dir, &cfg.split.val, false)?;
    let config = cfg.classifier_for(index.labels.len());
    let outcome = train_with(&config, &train, &val, |r| {
        if !quiet {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            eprintln!(
                "epoch {:>3}  train loss {:.4} acc {:.4}  val loss {} acc {}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc)
            );
        }
    })?;
    let mut model = outcome.model;
    model.labels = index.labels.clone();
    model.feature_hash = index.feature_hash.clone();
    let out = cfg.output_dir();
    save_checkpoint(&model, &cfg.checkpoint_path())?;
    write_atomic(&out.join("history.csv"), outcome.history.to_csv().as_bytes())?;
    let summary = RunSummary {
        feature_hash: index.feature_hash,
        classifier_hash: classifier_hash(&config),
        best_epoch: outcome.history.best_epoch,
        train_scenes: train.len(),
        val_scenes: val.len(),
    };
    write_atomic(&out.join("run.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    Ok(outcome.history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub support: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_hash: String,
    pub accuracy: f64,
    pub scenes: usize,
    pub classes: Vec<ClassMetrics>,
}

/// Evaluates the checkpoint on the split's test subjects.
pub fn run_eval(cfg: &PipelineConfig, checkpoint: Option<&Path>) -> Result<(ConfusionMatrix, EvalReport)> {
    stage("eval", eval_inner(cfg, checkpoint))
}

fn eval_inner(cfg: &PipelineConfig, checkpoint: Option<&Path>) -> Result<(ConfusionMatrix, EvalReport)> {
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.checkpoint_path());
    let model = load_checkpoint::<f32>(&ckpt)?;
    let index_path = cfg.index_path();
    let index = FeatureIndex::load(&index_path)?;
    if model.feature_hash != index.feature_hash {
        bail!(
            "{} was trained on features {} but {} holds features {}",
            ckpt.display(),
            model.feature_hash,
            index_path.display(),
            index.feature_hash
        );
    }
    if cfg.split.test.is_empty() {
        bail!("split has no test subjects");
    }
    require_subjects(&cfg.split, &index)?;
    let test = index.load_subjects(&cfg.features_dir(), &cfg.split.test, false)?;
    let cm = evaluate(&model, &test)?;
    let labels = &index.labels;
    let report = EvalReport {
        feature_hash: index.feature_hash.clone(),
        accuracy: cm.accuracy(),
        scenes: cm.total(),
        classes: (0..cm.classes())
            .map(|c| ClassMetrics {
                label: labels[c].clone(),
                support: (0..cm.classes()).map(|p| cm.get(c, p)).sum(),
                precision: cm.precision(c),
                recall: cm.recall(c),
            })
            .collect(),
    };
    let out = cfg.output_dir();
    write_atomic(&out.join("confusion.csv"), cm.to_csv(labels).as_bytes())?;
    write_atomic(&out.join("confusion.pgm"), cm.to_pgm(16).as_bytes())?;
    write_atomic(&out.join("metrics.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    Ok((cm, report))
}

/// Writes a synthetic corpus (scene CSVs plus `manifest.json`) into `dir`.
pub fn run_synth(spec: &CorpusSpec, dir: &Path) -> Result<DatasetManifest> {
    stage("synth", {
        (|| {
            spec.validate()?;
            (0..spec.scene_count())
                .into_par_iter()
                .map(|n| spec.write_scene(dir, n))
                .collect::<skelscene::Result<Vec<()>>>()?;
            let manifest = spec.manifest();
            manifest.save(&dir.join("manifest.json"))?;
            Ok(manifest)
        })()
    })
}

pub fn load_corpus_spec(path: &Path) -> Result<CorpusSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading corpus spec {}", path.display()))?;
    CorpusSpec::from_json(&text).with_context(|| format!("corpus spec {}", path.display()))
}

/// Train on all but the last two subjects, validate on the second to last,
/// test on the last.
pub fn default_split(manifest: &DatasetManifest) -> Result<SplitSpec> {
    let mut subjects: Vec<String> = Vec::new();
    for e in &manifest.entries {
        if !subjects.contains(&e.subject) {
            subjects.push(e.subject.clone());
        }
    }
    if subjects.len() < 3 {
        return Err(anyhow!("need at least three subjects for a train/val/test split, found {}", subjects.len()));
    }
    let n = subjects.len();
    let spec = SplitSpec { train: subjects[..n - 2].to_vec(), val: vec![subjects[n - 2].clone()], test: vec![subjects[n - 1].clone()] };
    split_dataset(manifest, &spec)?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub config_path: PathBuf,
    pub history: TrainingHistory,
    pub confusion: ConfusionMatrix,
    pub report: EvalReport,
}

/// synth → featurize → train → eval under `dir`, leaving `pipeline.toml`
/// there for reruns.
pub fn run_demo(mut corpus: CorpusSpec, mut cfg: PipelineConfig, dir: &Path, quiet: bool) -> Result<DemoOutcome> {
    corpus.seed = cfg.seed;
    let data = dir.join("data");
    let manifest = run_synth(&corpus, &data)?;
    cfg.manifest = PathBuf::from("data/manifest.json");
    cfg.output = PathBuf::from(".");
    cfg.split = default_split(&manifest)?;
    cfg.base_dir = dir.to_path_buf();
    let config_path = dir.join("pipeline.toml");
    write_atomic(&config_path, cfg.to_toml().as_bytes())?;
    run_featurize(&cfg, false)?;
    let history = run_train(&cfg, quiet)?;
    let (confusion, report) = run_eval(&cfg, None)?;
    Ok(DemoOutcome { config_path, history, confusion, report })
}
