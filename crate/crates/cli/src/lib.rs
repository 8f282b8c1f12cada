//! Pipeline driver behind the `skelscene` binary.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use skelscene::descriptor::write_atomic;
use skelscene::ingest::{benchmark_corpus, parse_sequence_csv};
use skelscene::kinematics::SpeedFrame;

pub use config::PipelineConfig;
pub use stages::{FeatureIndex, IndexEntry};

/// Skeleton activity scene recognition pipeline.
#[derive(Debug, Parser)]
#[command(name = "skelscene", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment and describe every scene of the manifest.
    Featurize {
        #[command(flatten)]
        common: Common,
        /// Also write `stream,q,start,end,score` tables of primitive actions.
        #[arg(long)]
        dump_pas: bool,
    },
    /// Write mirrored twins of every scene and a doubled manifest.
    Augment {
        #[command(flatten)]
        common: Common,
    },
    /// Train on the featurized train subjects.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on the featurized test subjects.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate a labeled synthetic corpus.
    Synth {
        /// Corpus JSON; the bundled 15-class benchmark when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        scenes_per_class: Option<usize>,
    },
    /// Dump per-joint synthetic speeds and accelerations of one scene as CSV.
    Kinematics {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = skelscene::ingest::DEFAULT_DT)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = FrameArg::Mixed)]
        frame: FrameArg,
        /// Speed table path; accelerations go to the same name with `.accel.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the benchmark corpus, then featurize, train and evaluate.
    Demo {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        scenes_per_class: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FrameArg {
    Mixed,
    Global,
    Local,
}

impl From<FrameArg> for SpeedFrame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Mixed => SpeedFrame::Mixed,
            FrameArg::Global => SpeedFrame::AllGlobal,
            FrameArg::Local => SpeedFrame::AllLocal,
        }
    }
}

/// Config file plus the flags that override it.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline TOML; relative paths inside resolve against its directory.
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_pa: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub augment: bool,
}

impl Common {
    /// Loads the config and applies flag overrides. Override paths are taken
    /// relative to the current directory.
    pub fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        let cwd = std::env::current_dir().context("reading current directory")?;
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { cwd.join(p) };
        if let Some(m) = &self.manifest {
            cfg.manifest = abs(m);
        }
        if let Some(o) = &self.output {
            cfg.output = abs(o);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.classifier.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.classifier.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.classifier.learning_rate = lr;
        }
        if let Some(q) = self.max_pa {
            cfg.features.partition.max_pa = q;
        }
        if let Some(w) = self.width {
            cfg.features.width = w;
        }
        cfg.augment |= self.augment;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Caps the worker pool at `SKELSCENE_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SKELSCENE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SKELSCENE_THREADS={v} is not a count"))?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}

pub fn run<I, A>(args: I) -> Result<()>
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    init_threads()?;
    match cli.command {
        Command::Featurize { common, dump_pas } => {
            let cfg = common.load()?;
            let index = stages::run_featurize(&cfg, dump_pas)?;
            println!("featurized {} scenes into {}", index.entries.len(), cfg.features_dir().display());
        }
        Command::Augment { common } => {
            let cfg = common.load()?;
            let out = stages::run_augment(&cfg)?;
            println!("wrote {}", out.display());
        }
        Command::Train { common, quiet } => {
            let cfg = common.load()?;
            let history = stages::run_train(&cfg, quiet)?;
            let best = history.best().map_or(String::new(), |r| format!(", val acc {:?}", r.val_acc.unwrap_or(r.train_acc)));
            println!("best epoch {}{best}; checkpoint {}", history.best_epoch, cfg.checkpoint_path().display());
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let (cm, _) = stages::run_eval(&cfg, checkpoint.as_deref())?;
            println!("test accuracy {:.4} over {} scenes", cm.accuracy(), cm.total());
        }
        Command::Synth { spec, out, seed, subjects, scenes_per_class } => {
            let mut corpus = match spec {
                Some(p) => stages::load_corpus_spec(&p)?,
                None => benchmark_corpus(),
            };
            corpus.seed = seed.unwrap_or(corpus.seed);
            corpus.subjects = subjects.unwrap_or(corpus.subjects);
            corpus.scenes_per_class = scenes_per_class.unwrap_or(corpus.scenes_per_class);
            let m = stages::run_synth(&corpus, &out)?;
            println!("wrote {} scenes to {}", m.entries.len(), out.display());
        }
        Command::Kinematics { input, dt, frame, out } => {
            let file = std::fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let seq = parse_sequence_csv::<f64, _>(std::io::BufReader::new(file), dt, "scene", None)
                .with_context(|| format!("stage `kinematics` failed: {}", input.display()))?;
            let (speeds, accels) = stages::kinematics_csv(&seq, frame.into())?;
            write_atomic(&out, speeds.as_bytes())?;
            write_atomic(&out.with_extension("accel.csv"), accels.as_bytes())?;
            println!("wrote {} speed steps to {}", seq.len() - 1, out.display());
        }
        Command::Demo { seed, out, epochs, scenes_per_class, quiet } => {
            let mut corpus = benchmark_corpus();
            corpus.scenes_per_class = scenes_per_class.unwrap_or(corpus.scenes_per_class);
            let mut cfg = PipelineConfig { seed, ..PipelineConfig::default() };
            cfg.classifier.seed = seed;
            cfg.classifier.epochs = epochs.unwrap_or(cfg.classifier.epochs);
            let done = stages::run_demo(corpus, cfg, &out, quiet)?;
            println!(
                "test accuracy {:.4} over {} scenes (best epoch {}); config {}",
                done.report.accuracy,
                done.report.scenes,
                done.history.best_epoch,
                done.config_path.display()
            );
        }
    }
    Ok(())
}
