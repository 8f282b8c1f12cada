//! Sequence CSV: `frame,<joint>_x,<joint>_y,<joint>_z,...` for the 15 canonical joints.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;
use crate::skeleton::{FrameTag, JointId, SkeletonFrame, SkeletonSequence, JOINT_COUNT};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Canonical header line (no trailing newline).
pub fn canonical_header() -> String {
    let mut h = String::from("frame");
    for j in JointId::ALL {
        for a in AXES {
            h.push_str(&format!(",{}_{a}", j.name()));
        }
    }
    h
}

/// Maps each CSV column (after `frame`) to `(joint index, axis)`.
fn parse_header(line: &str) -> Result<Vec<(usize, usize)>> {
    let mut cols = line.trim_end_matches('\r').split(',');
    match cols.next() {
        Some("frame") => {}
        other => {
            return Err(Error::Schema(format!("first column must be `frame`, found {:?}", other.unwrap_or(""))))
        }
    }
    let mut seen = [[false; 3]; JOINT_COUNT];
    let mut layout = Vec::with_capacity(3 * JOINT_COUNT);
    for name in cols {
        let (joint, axis) = name
            .rsplit_once('_')
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
        let j: JointId = joint.parse().map_err(|_| Error::Schema(format!("unknown joint column `{name}`")))?;
        let a = AXES
            .iter()
            .position(|x| *x == axis)
            .ok_or_else(|| Error::Schema(format!("unknown axis in column `{name}`")))?;
        if seen[j.index()][a] {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        seen[j.index()][a] = true;
        layout.push((j.index(), a));
    }
    for j in JointId::ALL {
        for (a, axis) in AXES.iter().enumerate() {
            if !seen[j.index()][a] {
                return Err(Error::Schema(format!("missing column `{}_{axis}`", j.name())));
            }
        }
    }
    Ok(layout)
}

/// Parses a global-frame sequence.
pub fn parse_sequence_csv<T: Scalar, R: BufRead>(
    reader: R,
    dt: f64,
    subject: &str,
    label: Option<&str>,
) -> Result<SkeletonSequence<T>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::Parse { line: 1, column: 1, reason: e.to_string() })?,
        None => return Err(Error::Schema("empty file".into())),
    };
    let layout = parse_header(&header)?;
    let mut frames = Vec::new();
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| Error::Parse { line: line_no, column: 1, reason: e.to_string() })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != layout.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                column: fields.len().min(layout.len() + 1),
                reason: format!("expected {} fields, found {}", layout.len() + 1, fields.len()),
            });
        }
        let index: usize = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            column: 1,
            reason: format!("frame `{}` is not a nonnegative integer", fields[0]),
        })?;
        if index != frames.len() {
            return Err(Error::Parse {
                line: line_no,
                column: 1,
                reason: format!("frame {index} out of order, expected {}", frames.len()),
            });
        }
        let mut pos = [[0.0f64; 3]; JOINT_COUNT];
        for (c, (field, &(j, a))) in fields[1..].iter().zip(&layout).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                column: c + 2,
                reason: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    column: c + 2,
                    reason: format!("non-finite value `{field}` in column {}_{}", JointId::ALL[j], AXES[a]),
                });
            }
            pos[j][a] = v;
        }
        frames.push(SkeletonFrame::new(index, FrameTag::Global, pos.map(Vec3::from_f64))?);
    }
    SkeletonSequence::new(frames, T::of(dt), subject, label.map(str::to_string))
}

/// Canonical CSV text of a sequence; values use the shortest round-trip decimal form.
pub fn serialize_sequence_csv<T: Scalar>(seq: &SkeletonSequence<T>) -> String {
    let mut out = canonical_header();
    out.push('\n');
    for fr in seq.frames() {
        out.push_str(&fr.index.to_string());
        for p in fr.positions() {
            for v in p.to_array() {
                out.push(',');
                out.push_str(&format_value(v.as_f64()));
            }
        }
        out.push('\n');
    }
    out
}

fn format_value(v: f64) -> String {
    // Avoid a negative zero sign.
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}
