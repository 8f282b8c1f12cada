use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use crate::descriptor::SceneFeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter (or gradient) storage with named tensor views.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    layout: Vec<TensorSpec>,
    values: Vec<T>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(layout: Vec<TensorSpec>) -> Self {
        let n = layout.last().map_or(0, |t| t.offset + t.len());
        Self { layout, values: vec![T::zero(); n] }
    }

    pub fn from_values(layout: Vec<TensorSpec>, values: Vec<T>) -> Result<Self> {
        let n = layout.last().map_or(0, |t| t.offset + t.len());
        if values.len() != n {
            return Err(Error::ShapeMismatch { expected: format!("{n} parameters"), found: values.len().to_string() });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn tensor(&self, i: usize) -> &[T] {
        &self.values[self.layout[i].range()]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [T] {
        let r = self.layout[i].range();
        &mut self.values[r]
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&TensorSpec, &[T])> {
        self.layout.iter().map(move |t| (t, &self.values[t.range()]))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Build the tensor layout: per width a kernel `[filters, width, cols]` and bias,
/// then dense `[filters, units]` + bias, then output `[units, classes]` + bias.
pub fn param_layout(config: &ClassifierConfig, cols: usize) -> Vec<TensorSpec> {
    let fpw = config.filters_per_width();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    for &w in &config.filter_widths {
        shapes.push((format!("conv{w}.kernel"), vec![fpw, w, cols]));
        shapes.push((format!("conv{w}.bias"), vec![fpw]));
    }
    shapes.push(("dense.weight".into(), vec![config.filters, config.dense_units]));
    shapes.push(("dense.bias".into(), vec![config.dense_units]));
    shapes.push(("output.weight".into(), vec![config.dense_units, config.classes]));
    shapes.push(("output.bias".into(), vec![config.classes]));
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, shape)| {
            let t = TensorSpec { name, shape, offset };
            offset += t.len();
            t
        })
        .collect()
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations<T> {
    /// Max-pooled convolution pre-activation per filter.
    pub conv_max: Vec<T>,
    /// Window position attaining the maximum, per filter.
    pub argmax: Vec<usize>,
    /// Per-filter dropout scale (all ones at inference).
    pub mask: Vec<T>,
    /// `relu(conv_max) * mask`.
    pub pooled: Vec<T>,
    pub hidden_pre: Vec<T>,
    pub hidden: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> Activations<T> {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }

    /// Cross-entropy for `label`, computed from the logits for stability.
    pub fn loss(&self, label: usize) -> T {
        log_sum_exp(&self.logits) - self.logits[label]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<T> {
    pub config: ClassifierConfig,
    rows: usize,
    cols: usize,
    /// Class names in label-index order, when known.
    pub labels: Vec<String>,
    /// Hash of the feature configuration the model was trained on.
    pub feature_hash: String,
    params: ParamSet<T>,
}

impl<T: Scalar> ClassifierModel<T> {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn init(config: &ClassifierConfig, rows: usize, cols: usize) -> Result<Self> {
        config.validate()?;
        if rows < config.max_width() || cols == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("at least {} rows and 1 column", config.max_width()),
                found: format!("{rows}x{cols}"),
            });
        }
        let mut params = ParamSet::zeros(param_layout(config, cols));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for i in 0..params.layout.len() {
            let spec = &params.layout[i];
            if spec.shape.len() < 2 {
                continue;
            }
            let fan_in: usize = if spec.shape.len() == 3 { spec.shape[1] * spec.shape[2] } else { spec.shape[0] };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for v in params.tensor_mut(i) {
                *v = T::of(dist.sample(&mut rng));
            }
        }
        Ok(Self { config: config.clone(), rows, cols, labels: Vec::new(), feature_hash: String::new(), params })
    }

    pub fn from_params(config: ClassifierConfig, rows: usize, cols: usize, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        if params.layout() != param_layout(&config, cols).as_slice() {
            return Err(Error::ShapeMismatch {
                expected: "parameter layout matching the configuration".into(),
                found: "different tensor shapes".into(),
            });
        }
        Ok(Self { config, rows, cols, labels: Vec::new(), feature_hash: String::new(), params })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn zero_grad(&self) -> ParamSet<T> {
        ParamSet::zeros(self.params.layout.clone())
    }

    pub fn check_input(&self, x: &SceneFeatureMatrix<T>) -> Result<()> {
        if x.shape() != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", x.rows(), x.cols()),
            });
        }
        Ok(())
    }

    pub fn check_label(&self, x: &SceneFeatureMatrix<T>) -> Result<usize> {
        let label = x.label.ok_or_else(|| Error::InvalidConfig("training sample without a label".into()))?;
        if label >= self.config.classes {
            return Err(Error::LabelOutOfRange { label, classes: self.config.classes });
        }
        Ok(label)
    }

    fn groups(&self) -> usize {
        self.config.filter_widths.len()
    }

    /// Forward pass. Rows that are entirely zero contribute nothing to any
    /// window, so only windows touching a nonzero row are evaluated; the rest
    /// equal the bias.
    pub fn forward(&self, x: &SceneFeatureMatrix<T>, mask: Option<&[T]>) -> Result<Activations<T>> {
        self.check_input(x)?;
        let total = self.config.filters;
        let occupied = nonzero_rows(x);
        let mut conv_max = vec![T::zero(); total];
        let mut arg = vec![0usize; total];
        let fpw = self.config.filters_per_width();
        for (g, &w) in self.config.filter_widths.iter().enumerate() {
            let range = g * fpw..(g + 1) * fpw;
            self.conv_group(g, w, x, &occupied, &mut conv_max[range.clone()], &mut arg[range]);
        }
        let mask = match mask {
            Some(m) if m.len() != total => {
                return Err(Error::ShapeMismatch { expected: format!("{total} mask entries"), found: m.len().to_string() })
            }
            Some(m) => m.to_vec(),
            None => vec![T::one(); total],
        };
        let pooled: Vec<T> = conv_max.iter().zip(&mask).map(|(c, m)| relu(*c) * *m).collect();

        let h = self.config.dense_units;
        let g = self.groups();
        let w1 = self.params.tensor(2 * g);
        let mut hidden_pre = self.params.tensor(2 * g + 1).to_vec();
        for (f, p) in pooled.iter().enumerate() {
            if *p != T::zero() {
                axpy(*p, &w1[f * h..(f + 1) * h], &mut hidden_pre);
            }
        }
        let hidden: Vec<T> = hidden_pre.iter().map(|v| relu(*v)).collect();

        let c = self.config.classes;
        let w2 = self.params.tensor(2 * g + 2);
        let mut logits = self.params.tensor(2 * g + 3).to_vec();
        for (j, v) in hidden.iter().enumerate() {
            if *v != T::zero() {
                axpy(*v, &w2[j * c..(j + 1) * c], &mut logits);
            }
        }
        let probs = softmax(&logits);
        Ok(Activations { conv_max, argmax: arg, mask, pooled, hidden_pre, hidden, logits, probs })
    }

    fn conv_group(
        &self,
        g: usize,
        w: usize,
        x: &SceneFeatureMatrix<T>,
        occupied: &[(usize, usize)],
        best: &mut [T],
        arg: &mut [usize],
    ) {
        let (rows, cols) = (self.rows, self.cols);
        let positions = rows + 1 - w;
        let fpw = best.len();
        let kernel = self.params.tensor(2 * g);
        let bias = self.params.tensor(2 * g + 1);

        // contrib[(i * w + k) * fpw + f]: occupied row i placed at offset k of filter f.
        let mut contrib = vec![T::zero(); occupied.len() * w * fpw];
        for f in 0..fpw {
            let kf = &kernel[f * w * cols..(f + 1) * w * cols];
            for (i, &(r, len)) in occupied.iter().enumerate() {
                let row = &x.row(r)[..len];
                for k in 0..w {
                    if r >= k && r - k < positions {
                        contrib[(i * w + k) * fpw + f] = dot(row, &kf[k * cols..k * cols + len]);
                    }
                }
            }
        }

        let mut slot = vec![usize::MAX; rows];
        for (i, &(r, _)) in occupied.iter().enumerate() {
            slot[r] = i;
        }
        let mut touched: Vec<usize> = occupied
            .iter()
            .flat_map(|&(r, _)| (0..w).filter(move |&k| r >= k && r - k < positions).map(move |k| r - k))
            .collect();
        touched.sort_unstable();
        touched.dedup();

        best.fill(T::neg_infinity());
        arg.fill(usize::MAX);
        let mut acc = vec![T::zero(); fpw];
        for &p in &touched {
            acc.copy_from_slice(bias);
            for k in 0..w {
                let i = slot[p + k];
                if i != usize::MAX {
                    let c = &contrib[(i * w + k) * fpw..(i * w + k + 1) * fpw];
                    for (a, v) in acc.iter_mut().zip(c) {
                        *a = *a + *v;
                    }
                }
            }
            for f in 0..fpw {
                if acc[f] > best[f] {
                    best[f] = acc[f];
                    arg[f] = p;
                }
            }
        }
        if touched.len() < positions {
            let first_free = touched.iter().enumerate().find(|(i, p)| *i != **p).map_or(touched.len(), |(i, _)| i);
            for f in 0..fpw {
                if bias[f] > best[f] || (bias[f] == best[f] && first_free < arg[f]) {
                    best[f] = bias[f];
                    arg[f] = first_free;
                }
            }
        }
    }

    /// Accumulates `scale * d(loss)/d(params)` for one sample into `grad`.
    pub fn backward(
        &self,
        x: &SceneFeatureMatrix<T>,
        label: usize,
        act: &Activations<T>,
        scale: T,
        grad: &mut ParamSet<T>,
    ) {
        let g = self.groups();
        let (h, c) = (self.config.dense_units, self.config.classes);
        let dlogits: Vec<T> =
            act.probs.iter().enumerate().map(|(k, p)| (*p - if k == label { T::one() } else { T::zero() }) * scale).collect();

        let w2 = self.params.tensor(2 * g + 2);
        {
            let gw2 = grad.tensor_mut(2 * g + 2);
            for (j, v) in act.hidden.iter().enumerate() {
                if *v != T::zero() {
                    axpy(*v, &dlogits, &mut gw2[j * c..(j + 1) * c]);
                }
            }
        }
        axpy(T::one(), &dlogits, grad.tensor_mut(2 * g + 3));

        let dh: Vec<T> = (0..h)
            .map(|j| if act.hidden_pre[j] > T::zero() { dot(&w2[j * c..(j + 1) * c], &dlogits) } else { T::zero() })
            .collect();

        let w1 = self.params.tensor(2 * g);
        {
            let gw1 = grad.tensor_mut(2 * g);
            for (f, p) in act.pooled.iter().enumerate() {
                if *p != T::zero() {
                    axpy(*p, &dh, &mut gw1[f * h..(f + 1) * h]);
                }
            }
        }
        axpy(T::one(), &dh, grad.tensor_mut(2 * g + 1));

        let cols = self.cols;
        let fpw = self.config.filters_per_width();
        for (gi, &w) in self.config.filter_widths.iter().enumerate() {
            for f in 0..fpw {
                let idx = gi * fpw + f;
                if act.mask[idx] == T::zero() || !(act.conv_max[idx] > T::zero()) {
                    continue;
                }
                let d = act.mask[idx] * dot(&w1[idx * h..(idx + 1) * h], &dh);
                if d == T::zero() {
                    continue;
                }
                let p = act.argmax[idx];
                let gk = grad.tensor_mut(2 * gi);
                for k in 0..w {
                    let row = x.row(p + k);
                    axpy(d, row, &mut gk[(f * w + k) * cols..(f * w + k + 1) * cols]);
                }
                let gb = grad.tensor_mut(2 * gi + 1);
                gb[f] = gb[f] + d;
            }
        }
    }

    pub fn predict(&self, x: &SceneFeatureMatrix<T>) -> Result<usize> {
        Ok(self.forward(x, None)?.predicted())
    }
}

/// Per-filter inverted-dropout scales: `1/keep` with probability `keep`, else 0.
pub fn dropout_mask<T: Scalar, R: Rng>(rng: &mut R, len: usize, keep: f64) -> Vec<T> {
    let on = T::of(1.0 / keep);
    (0..len).map(|_| if rng.gen::<f64>() < keep { on } else { T::zero() }).collect()
}

/// Mean loss and gradient over `batch`, with optional per-sample dropout masks.
pub fn batch_gradients<T: Scalar>(
    model: &ClassifierModel<T>,
    batch: &[&SceneFeatureMatrix<T>],
    masks: Option<&[Vec<T>]>,
) -> Result<(ParamSet<T>, BatchStats)> {
    let mut grad = model.zero_grad();
    let stats = accumulate(model, batch, masks, T::one() / T::of(batch.len().max(1) as f64), &mut grad)?;
    Ok((grad, stats))
}

/// Gradient of the mean cross-entropy over `batch` (no dropout).
pub fn gradients<T: Scalar>(model: &ClassifierModel<T>, batch: &[&SceneFeatureMatrix<T>]) -> Result<ParamSet<T>> {
    batch_gradients(model, batch, None).map(|(g, _)| g)
}

/// Mean cross-entropy over `batch` (no dropout).
pub fn loss<T: Scalar>(model: &ClassifierModel<T>, batch: &[&SceneFeatureMatrix<T>]) -> Result<f64> {
    let mut total = 0.0;
    for x in batch {
        let y = model.check_label(x)?;
        total += model.forward(x, None)?.loss(y).as_f64();
    }
    Ok(total / batch.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

impl BatchStats {
    pub fn merge(&mut self, other: BatchStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.count += other.count;
    }
}

pub(crate) fn accumulate<T: Scalar>(
    model: &ClassifierModel<T>,
    batch: &[&SceneFeatureMatrix<T>],
    masks: Option<&[Vec<T>]>,
    scale: T,
    grad: &mut ParamSet<T>,
) -> Result<BatchStats> {
    let mut stats = BatchStats::default();
    for (i, x) in batch.iter().enumerate() {
        let y = model.check_label(x)?;
        let act = model.forward(x, masks.map(|m| m[i].as_slice()))?;
        stats.loss_sum += act.loss(y).as_f64();
        stats.correct += usize::from(act.predicted() == y);
        stats.count += 1;
        model.backward(x, y, &act, scale, grad);
    }
    Ok(stats)
}

/// `(row, nonzero prefix length)` for every row holding a nonzero value.
fn nonzero_rows<T: Scalar>(x: &SceneFeatureMatrix<T>) -> Vec<(usize, usize)> {
    (0..x.rows())
        .filter_map(|r| x.row(r).iter().rposition(|v| *v != T::zero()).map(|last| (r, last + 1)))
        .collect()
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| *x * *y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    m + v.iter().map(|x| (*x - m).exp()).sum::<T>().ln()
}

pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|x| (*x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
