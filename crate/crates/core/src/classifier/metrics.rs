use rayon::prelude::*;

use super::model::ClassifierModel;
use crate::descriptor::SceneFeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::new(classes);
        for (t, p) in pairs {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let classes = self.classes();
        for label in [truth, predicted] {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: usize = (0..self.classes()).map(|c| self.counts[c][c]).sum();
        hits as f64 / self.total().max(1) as f64
    }

    /// `None` when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> Option<f64> {
        let col: usize = self.counts.iter().map(|r| r[class]).sum();
        (col > 0).then(|| self.counts[class][class] as f64 / col as f64)
    }

    /// `None` when `class` has no samples.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row: usize = self.counts[class].iter().sum();
        (row > 0).then(|| self.counts[class][class] as f64 / row as f64)
    }

    /// Header row of predicted labels, one row per true label.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let name = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut s = String::from("true\\predicted");
        for c in 0..self.classes() {
            s.push(',');
            s.push_str(&name(c));
        }
        s.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            s.push_str(&name(t));
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// Plain (P2) PGM heatmap of row-normalized counts, `cell` pixels per entry.
    pub fn to_pgm(&self, cell: usize) -> String {
        let n = self.classes();
        let side = n * cell.max(1);
        let mut s = format!("P2\n{side} {side}\n255\n");
        for y in 0..side {
            let t = y / cell.max(1);
            let row_sum: usize = self.counts[t].iter().sum();
            let line: Vec<String> = (0..side)
                .map(|x| {
                    let p = x / cell.max(1);
                    let v = (255 * self.counts[t][p] + row_sum / 2).checked_div(row_sum).unwrap_or(0);
                    v.to_string()
                })
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

pub fn predict_all<T: Scalar>(model: &ClassifierModel<T>, samples: &[SceneFeatureMatrix<T>]) -> Result<Vec<usize>> {
    samples.par_iter().map(|x| model.predict(x)).collect()
}

pub fn evaluate<T: Scalar>(model: &ClassifierModel<T>, samples: &[SceneFeatureMatrix<T>]) -> Result<ConfusionMatrix> {
    let truth = samples.iter().map(|x| model.check_label(x)).collect::<Result<Vec<_>>>()?;
    let predicted = predict_all(model, samples)?;
    ConfusionMatrix::from_pairs(model.config.classes, truth.into_iter().zip(predicted))
}
