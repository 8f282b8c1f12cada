//! Sequence files, dataset manifests, splits and synthetic scene generation.

pub mod csv;
pub mod manifest;
pub mod synthetic;

pub use self::csv::{canonical_header, parse_sequence_csv, serialize_sequence_csv};
pub use manifest::{split_dataset, DatasetManifest, DatasetSplit, ManifestEntry, SplitSpec, DEFAULT_DT};
pub use synthetic::{
    benchmark_corpus, generate_scene, generate_synthetic_scene, CorpusSpec, MotionSegment, PartScript,
    SubjectProfile, SyntheticClassSpec,
};
