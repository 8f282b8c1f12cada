//! Left/right mirror augmentation across the body's sagittal (yoz) plane.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::ingest::csv::serialize_sequence_csv;
use crate::ingest::manifest::{DatasetManifest, ManifestEntry};
use crate::scalar::Scalar;
use crate::skeleton::{build_local_frame, FrameTag, JointId, SkeletonSequence};

/// Mirrors every frame in its own local frame: negate local x, swap left and
/// right joints, map back to the global frame.
pub fn mirror_sequence<T: Scalar>(seq: &SkeletonSequence<T>) -> Result<SkeletonSequence<T>> {
    seq.map_frames(|_, fr| {
        let lf = match fr.tag {
            FrameTag::Global => Some(build_local_frame(fr)?),
            FrameTag::Local => None,
        };
        let to_local = |p| lf.map_or(p, |lf| lf.to_local(p));
        Ok(fr.map(fr.tag, |j, _| {
            let mut q = to_local(fr.get(j.mirror()));
            q.x = -q.x;
            lf.map_or(q, |lf| lf.to_global(q))
        }))
    })
}

/// `dir/name.csv` -> `dir/name_mirror.csv`.
pub fn mirrored_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_mirror.{}", ext.to_string_lossy()),
        None => format!("{stem}_mirror"),
    };
    path.with_file_name(name)
}

/// Doubles a manifest: each entry followed by its mirrored twin.
pub fn augment_manifest(manifest: &DatasetManifest) -> DatasetManifest {
    let mut out = DatasetManifest::new(manifest.dt, manifest.labels.clone());
    for e in &manifest.entries {
        out.entries.push(e.clone());
        out.entries.push(ManifestEntry { path: mirrored_path(&e.path), ..e.clone() });
    }
    out
}

/// Loads one entry, mirrors it and writes the twin next to the original.
pub fn mirror_entry(manifest: &DatasetManifest, base: &Path, entry: &ManifestEntry) -> Result<()> {
    let seq: SkeletonSequence<f64> = manifest.load_sequence(base, entry)?;
    let path = manifest.resolve(base, entry);
    let twin = mirror_sequence(&seq).map_err(|e| e.at_entry(&path))?;
    crate::descriptor::write_atomic(&mirrored_path(&path), serialize_sequence_csv(&twin).as_bytes())
}

/// Writes a mirrored CSV for every entry and returns the doubled manifest.
/// `base` is the directory entry paths are relative to.
pub fn augment_dataset(manifest: &DatasetManifest, base: &Path) -> Result<DatasetManifest> {
    for e in &manifest.entries {
        mirror_entry(manifest, base, e)?;
    }
    Ok(augment_manifest(manifest))
}

/// True when the pairing is an involution (used by tests and diagnostics).
pub fn mirror_map_is_involution() -> bool {
    JointId::ALL.iter().all(|j| j.mirror().mirror() == *j)
}
