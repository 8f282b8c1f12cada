use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skelscene::classifier::ClassifierConfig;
use skelscene::descriptor::FeatureConfig;
use skelscene::ingest::SplitSpec;

/// One experiment: where the data is, how to featurize, how to train.
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output: PathBuf,
    /// Run seed; replaces `classifier.seed`.
    pub seed: u64,
    /// Featurize a mirrored twin of every scene as well.
    pub augment: bool,
    pub split: SplitSpec,
    pub features: FeatureConfig,
    pub classifier: ClassifierConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: "manifest.json".into(),
            output: "out".into(),
            seed: 0,
            augment: false,
            split: SplitSpec::default(),
            features: FeatureConfig::default(),
            classifier: ClassifierConfig { epochs: 20, ..ClassifierConfig::default() },
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).context("parsing pipeline config")?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.classifier.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).with_context(|| format!("config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.split.validate()?;
        let mut c = self.classifier.clone();
        c.classes = c.classes.max(2);
        c.validate()?;
        if c.max_width() > self.features.rows() {
            bail!("filter width {} exceeds the {} matrix rows", c.max_width(), self.features.rows());
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.manifest)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.output_dir().join("features")
    }

    pub fn index_path(&self) -> PathBuf {
        self.features_dir().join("index.json")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir().join("model.skm")
    }

    /// Classifier settings with the run seed and class count applied.
    pub fn classifier_for(&self, classes: usize) -> ClassifierConfig {
        ClassifierConfig { seed: self.seed, classes, ..self.classifier.clone() }
    }

    pub fn feature_hash(&self) -> String {
        feature_hash(&self.features, self.augment)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifies the featurization settings a matrix set was produced with.
pub fn feature_hash(features: &FeatureConfig, augment: bool) -> String {
    let canonical = serde_json::json!({ "features": features, "augment": augment });
    sha256_hex(canonical.to_string().as_bytes())
}

pub fn classifier_hash(config: &ClassifierConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}
