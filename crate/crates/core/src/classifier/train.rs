use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ClassifierConfig, Optimizer};
use super::model::{accumulate, dropout_mask, BatchStats, ClassifierModel, ParamSet};
use crate::descriptor::SceneFeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the number of threads.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc)
            ));
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ClassifierModel<T>,
    pub history: TrainingHistory,
}

enum OptimizerState<T> {
    Sgd,
    Adam { m: Vec<T>, v: Vec<T>, t: i32, beta1: f64, beta2: f64, epsilon: f64 },
}

impl<T: Scalar> OptimizerState<T> {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Sgd => Self::Sgd,
            Optimizer::Adam { beta1, beta2, epsilon } => {
                Self::Adam { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0, beta1, beta2, epsilon }
            }
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        match self {
            Self::Sgd => {
                let lr = T::of(lr);
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p - lr * *g;
                }
            }
            Self::Adam { m, v, t, beta1, beta2, epsilon } => {
                *t += 1;
                let (b1, b2) = (T::of(*beta1), T::of(*beta2));
                let c1 = T::one() - T::of(beta1.powi(*t));
                let c2 = T::one() - T::of(beta2.powi(*t));
                let (lr, eps) = (T::of(lr), T::of(*epsilon));
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (T::one() - b1) * g;
                    v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    params[i] = params[i] - lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Mean gradient over a batch, reduced in a fixed chunk order.
fn parallel_batch_gradient<T: Scalar>(
    model: &ClassifierModel<T>,
    batch: &[&SceneFeatureMatrix<T>],
    masks: &[Vec<T>],
) -> Result<(ParamSet<T>, BatchStats)> {
    let scale = T::one() / T::of(batch.len() as f64);
    let parts: Vec<Result<(ParamSet<T>, BatchStats)>> = batch
        .par_chunks(CHUNK)
        .zip(masks.par_chunks(CHUNK))
        .map(|(xs, ms)| {
            let mut g = model.zero_grad();
            let s = accumulate(model, xs, Some(ms), scale, &mut g)?;
            Ok((g, s))
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut grad, mut stats) = iter.next().expect("nonempty batch")?;
    for part in iter {
        let (g, s) = part?;
        grad.add_assign(&g);
        stats.merge(s);
    }
    Ok((grad, stats))
}

/// Inference-mode loss and accuracy, evaluated in parallel, summed in order.
pub fn evaluate_loss<T: Scalar>(model: &ClassifierModel<T>, samples: &[SceneFeatureMatrix<T>]) -> Result<BatchStats> {
    let per: Vec<Result<(f64, bool)>> = samples
        .par_iter()
        .map(|x| {
            let y = model.check_label(x)?;
            let a = model.forward(x, None)?;
            Ok((a.loss(y).as_f64(), a.predicted() == y))
        })
        .collect();
    let mut stats = BatchStats::default();
    for r in per {
        let (l, ok) = r?;
        stats.merge(BatchStats { loss_sum: l, correct: usize::from(ok), count: 1 });
    }
    Ok(stats)
}

fn check_samples<T: Scalar>(model: &ClassifierModel<T>, samples: &[SceneFeatureMatrix<T>]) -> Result<()> {
    for x in samples {
        model.check_input(x)?;
        model.check_label(x)?;
    }
    Ok(())
}

pub fn train<T: Scalar>(
    config: &ClassifierConfig,
    train_set: &[SceneFeatureMatrix<T>],
    val_set: &[SceneFeatureMatrix<T>],
) -> Result<TrainOutcome<T>> {
    train_with(config, train_set, val_set, |_| {})
}

/// Minibatch training; keeps the parameters of the epoch with the best
/// validation accuracy (the final epoch when there is no validation set).
pub fn train_with<T: Scalar>(
    config: &ClassifierConfig,
    train_set: &[SceneFeatureMatrix<T>],
    val_set: &[SceneFeatureMatrix<T>],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let first = train_set.first().ok_or(Error::EmptyClass { class: 0 })?;
    let (rows, cols) = first.shape();
    let mut model = ClassifierModel::<T>::init(config, rows, cols)?;
    check_samples(&model, train_set)?;
    check_samples(&model, val_set)?;
    let mut counts = vec![0usize; config.classes];
    for x in train_set {
        counts[x.label.expect("checked")] += 1;
    }
    if let Some(class) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyClass { class });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = OptimizerState::new(config.optimizer, model.params().len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, ParamSet<T>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut stats = BatchStats::default();
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&SceneFeatureMatrix<T>> = idx.iter().map(|&i| &train_set[i]).collect();
            let masks: Vec<Vec<T>> =
                (0..batch.len()).map(|_| dropout_mask(&mut rng, config.filters, config.keep_prob)).collect();
            let (grad, s) = parallel_batch_gradient(&model, &batch, &masks)?;
            let batch_loss = s.loss_sum / s.count as f64;
            if !batch_loss.is_finite() || batch_loss > config.max_loss || !grad.is_finite() {
                return Err(Error::DivergedLoss { epoch, loss: batch_loss });
            }
            stats.merge(s);
            opt.step(model.params_mut().values_mut(), grad.values(), config.learning_rate);
            if !model.params().is_finite() {
                return Err(Error::DivergedLoss { epoch, loss: f64::NAN });
            }
        }
        let n = stats.count as f64;
        let (val_loss, val_acc) = if val_set.is_empty() {
            (None, None)
        } else {
            let v = evaluate_loss(&model, val_set)?;
            (Some(v.loss_sum / v.count as f64), Some(v.correct as f64 / v.count as f64))
        };
        let record =
            EpochRecord { epoch, train_loss: stats.loss_sum / n, train_acc: stats.correct as f64 / n, val_loss, val_acc };
        if !record.train_loss.is_finite() || val_loss.is_some_and(|l| !l.is_finite()) {
            return Err(Error::DivergedLoss { epoch, loss: val_loss.unwrap_or(record.train_loss) });
        }
        on_epoch(&record);
        history.epochs.push(record);
        let score = val_acc.unwrap_or(f64::INFINITY);
        if val_acc.is_none() || best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params().clone()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(TrainOutcome { model, history })
}
