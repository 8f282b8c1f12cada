//! Row-convolution network over scene feature matrices.
//!
//! Each filter spans the full matrix width and slides down the rows; one
//! max-pooled value per filter feeds a dropout layer, a ReLU dense layer and
//! a softmax output.

mod checkpoint;
mod config;
mod metrics;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{ClassifierConfig, Optimizer};
pub use metrics::{evaluate, predict_all, ConfusionMatrix};
pub use model::{
    batch_gradients, dropout_mask, gradients, log_sum_exp, loss, param_layout, softmax, Activations, BatchStats,
    ClassifierModel, ParamSet, TensorSpec,
};
pub use train::{evaluate_loss, train, train_with, EpochRecord, TrainOutcome, TrainingHistory};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::SceneFeatureMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config(classes: usize) -> ClassifierConfig {
        ClassifierConfig {
            filter_widths: vec![1, 2, 3],
            filters: 6,
            dense_units: 5,
            classes,
            learning_rate: 0.05,
            epochs: 3,
            batch_size: 4,
            seed: 11,
            keep_prob: 0.5,
            optimizer: Optimizer::Sgd,
            max_loss: 1e4,
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64, label: usize) -> SceneFeatureMatrix<f64> {
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            if rng.gen::<f64>() < density {
                for c in 0..cols {
                    data[r * cols + c] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        SceneFeatureMatrix::from_raw(rows, cols, data, Some(label)).unwrap()
    }

    /// Dense reference: every window position evaluated explicitly.
    fn dense_conv(model: &ClassifierModel<f64>, x: &SceneFeatureMatrix<f64>) -> Vec<(f64, usize)> {
        let cfg = &model.config;
        let fpw = cfg.filters_per_width();
        let (rows, cols) = x.shape();
        let mut out = Vec::new();
        for (g, &w) in cfg.filter_widths.iter().enumerate() {
            let k = model.params().tensor(2 * g);
            let b = model.params().tensor(2 * g + 1);
            for f in 0..fpw {
                let mut best = (f64::NEG_INFINITY, 0);
                for p in 0..=rows - w {
                    let mut s = b[f];
                    for dk in 0..w {
                        for c in 0..cols {
                            s += k[(f * w + dk) * cols + c] * x.get(p + dk, c);
                        }
                    }
                    if s > best.0 {
                        best = (s, p);
                    }
                }
                out.push(best);
            }
        }
        out
    }

    #[test]
    fn sparse_conv_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let mut cfg = small_config(3);
            cfg.seed = trial;
            let mut model = ClassifierModel::<f64>::init(&cfg, 12, 7).unwrap();
            for g in 0..3 {
                for b in model.params_mut().tensor_mut(2 * g + 1) {
                    *b = rng.gen_range(-0.5..0.5);
                }
            }
            let density = [0.0, 0.1, 0.4, 1.0][trial as usize % 4];
            let x = random_matrix(&mut rng, 12, 7, density, 0);
            let act = model.forward(&x, None).unwrap();
            for (i, (v, p)) in dense_conv(&model, &x).into_iter().enumerate() {
                assert!((act.conv_max[i] - v).abs() < 1e-12, "trial {trial} filter {i}");
                assert_eq!(act.argmax[i], p, "trial {trial} filter {i}");
            }
        }
    }

    #[test]
    fn zero_input_gives_uniform_probabilities() {
        let model = ClassifierModel::<f64>::init(&small_config(4), 10, 6).unwrap();
        let x = SceneFeatureMatrix::from_raw(10, 6, vec![0.0; 60], Some(0)).unwrap();
        let act = model.forward(&x, None).unwrap();
        for p in &act.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = ClassifierModel::<f64>::init(&small_config(5), 10, 6).unwrap();
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 10, 6, 0.5, 0);
            let p = model.forward(&x, None).unwrap().probs;
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn shape_and_label_errors() {
        let model = ClassifierModel::<f64>::init(&small_config(2), 10, 6).unwrap();
        let wrong = SceneFeatureMatrix::from_raw(10, 5, vec![0.0; 50], Some(0)).unwrap();
        assert!(matches!(model.forward(&wrong, None), Err(crate::Error::ShapeMismatch { .. })));
        let bad = SceneFeatureMatrix::from_raw(10, 6, vec![0.0; 60], Some(2)).unwrap();
        assert!(matches!(loss(&model, &[&bad]), Err(crate::Error::LabelOutOfRange { label: 2, classes: 2 })));
        assert!(ClassifierModel::<f64>::init(&small_config(2), 2, 6).is_err());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let cfg = small_config(3);
        let model = ClassifierModel::<f64>::init(&cfg, 10, 6).unwrap();
        for (spec, values) in model.params().tensors() {
            if spec.shape.len() == 1 {
                assert!(values.iter().all(|v| *v == 0.0), "{}", spec.name);
            } else {
                let fan_in = if spec.shape.len() == 3 { spec.shape[1] * spec.shape[2] } else { spec.shape[0] };
                let bound = 1.0 / (fan_in as f64).sqrt();
                assert!(values.iter().all(|v| v.abs() <= bound), "{}", spec.name);
            }
        }
        let names: Vec<&str> = model.params().layout().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "conv1.kernel",
                "conv1.bias",
                "conv2.kernel",
                "conv2.bias",
                "conv3.kernel",
                "conv3.bias",
                "dense.weight",
                "dense.bias",
                "output.weight",
                "output.bias"
            ]
        );
        assert_eq!(model.params().layout()[2].shape, vec![2, 2, 6]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = small_config(3);
        let mut model = ClassifierModel::<f64>::init(&cfg, 9, 5).unwrap();
        for v in model.params_mut().values_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let xs: Vec<_> = (0..4).map(|i| random_matrix(&mut rng, 9, 5, 0.5, i % 3)).collect();
        let batch: Vec<&SceneFeatureMatrix<f64>> = xs.iter().collect();
        let grad = gradients(&model, &batch).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..model.params().len() {
            let orig = model.params().values()[i];
            model.params_mut().values_mut()[i] = orig + h;
            let up = loss(&model, &batch).unwrap();
            model.params_mut().values_mut()[i] = orig - h;
            let down = loss(&model, &batch).unwrap();
            model.params_mut().values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.values()[i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<_> = (0..12).map(|i| random_matrix(&mut rng, 9, 5, 0.4, i % 3)).collect();
        for opt in [Optimizer::Sgd, Optimizer::adam()] {
            let cfg = ClassifierConfig { learning_rate: 0.0, optimizer: opt, ..small_config(3) };
            let out = train(&cfg, &xs, &xs[..3]).unwrap();
            let fresh = ClassifierModel::<f64>::init(&cfg, 9, 5).unwrap();
            assert_eq!(out.model.params(), fresh.params());
        }
    }

    #[test]
    fn training_is_deterministic_and_learns_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut xs = Vec::new();
        for i in 0..30 {
            let label = i % 2;
            let mut data = vec![0.0; 8 * 4];
            let r = if label == 0 { 1 } else { 5 };
            for c in 0..4 {
                data[r * 4 + c] = if c % 2 == label { 1.0 } else { 0.0 } + rng.gen_range(-0.1..0.1);
            }
            xs.push(SceneFeatureMatrix::from_raw(8, 4, data, Some(label)).unwrap());
        }
        let cfg = ClassifierConfig { epochs: 30, optimizer: Optimizer::adam(), learning_rate: 0.01, ..small_config(2) };
        let a = train(&cfg, &xs, &xs).unwrap();
        let b = train(&cfg, &xs, &xs).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.history, b.history);
        assert_eq!(evaluate(&a.model, &xs).unwrap().accuracy(), 1.0);
    }

    #[test]
    fn empty_class_and_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<_> = (0..6).map(|_| random_matrix(&mut rng, 9, 5, 0.5, 0)).collect();
        let cfg = small_config(2);
        assert!(matches!(train(&cfg, &xs, &[]), Err(crate::Error::EmptyClass { class: 1 })));

        let ys: Vec<_> = (0..8).map(|i| random_matrix(&mut rng, 9, 5, 0.8, i % 2)).collect();
        let hot = ClassifierConfig { learning_rate: 1e3, epochs: 20, ..small_config(2) };
        assert!(matches!(train(&hot, &ys, &[]), Err(crate::Error::DivergedLoss { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = ClassifierModel::<f64>::init(&small_config(3), 9, 5).unwrap();
        model.labels = vec!["a".into(), "b".into(), "c".into()];
        model.feature_hash = "abc123".into();
        let bytes = encode_checkpoint(&model);
        assert_eq!(&bytes[..4], b"SKM1");
        let back: ClassifierModel<f64> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, model);
        let as_f32: ClassifierModel<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(as_f32.params().len(), model.params().len());
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(decode_checkpoint::<f64>(&wrong).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainingHistory {
            epochs: vec![EpochRecord { epoch: 1, train_loss: 0.5, train_acc: 0.25, val_loss: None, val_acc: None }],
            best_epoch: 1,
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.25,,\n");
    }

    #[test]
    fn uniform_predictor_loss_is_log_classes() {
        let cfg = ClassifierConfig { classes: 15, ..small_config(15) };
        let model = ClassifierModel::<f64>::init(&cfg, 10, 6).unwrap();
        let xs: Vec<_> = (0..15).map(|c| SceneFeatureMatrix::from_raw(10, 6, vec![0.0; 60], Some(c)).unwrap()).collect();
        let batch: Vec<_> = xs.iter().collect();
        assert!((loss(&model, &batch).unwrap() - 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unused_class_bias_gradient_is_its_mean_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = ClassifierModel::<f64>::init(&small_config(3), 9, 5).unwrap();
        let xs: Vec<_> = (0..4).map(|i| random_matrix(&mut rng, 9, 5, 0.5, i % 2)).collect();
        let batch: Vec<_> = xs.iter().collect();
        let grad = gradients(&model, &batch).unwrap();
        let mass: f64 = xs.iter().map(|x| model.forward(x, None).unwrap().probs[2]).sum::<f64>() / 4.0;
        let out_bias = grad.tensor(grad.layout().len() - 1);
        assert!(mass > 0.0);
        assert!((out_bias[2] - mass).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_kernel_gradients() {
        let model = ClassifierModel::<f64>::init(&small_config(3), 9, 5).unwrap();
        let x = SceneFeatureMatrix::from_raw(9, 5, vec![0.0; 45], Some(1)).unwrap();
        let grad = gradients(&model, &[&x]).unwrap();
        for g in 0..3 {
            assert!(grad.tensor(2 * g).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn doubling_a_kernel_changes_only_its_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut model = ClassifierModel::<f64>::init(&small_config(3), 9, 5).unwrap();
        let x = random_matrix(&mut rng, 9, 5, 1.0, 0);
        let before = model.forward(&x, None).unwrap();
        // second filter of the width-2 group is filter index 3 overall
        let (w, cols) = (2, 5);
        for v in &mut model.params_mut().tensor_mut(2)[w * cols..2 * w * cols] {
            *v *= 2.0;
        }
        let after = model.forward(&x, None).unwrap();
        for f in 0..6 {
            if f == 3 {
                assert!((after.conv_max[f] - 2.0 * before.conv_max[f]).abs() < 1e-12);
            } else {
                assert_eq!(after.conv_max[f], before.conv_max[f]);
            }
        }
    }

    #[test]
    fn trailing_zero_rows_do_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = ClassifierModel::<f64>::init(&small_config(3), 12, 5).unwrap();
        let mut data = vec![0.0; 60];
        for v in &mut data[..4 * 5] {
            *v = rng.gen_range(-1.0..1.0);
        }
        let x = SceneFeatureMatrix::from_raw(12, 5, data.clone(), Some(0)).unwrap();
        let mut rows: Vec<usize> = (4..12).collect();
        rows.reverse();
        let mut permuted = data[..20].to_vec();
        for r in rows {
            permuted.extend_from_slice(&data[r * 5..(r + 1) * 5]);
        }
        let y = SceneFeatureMatrix::from_raw(12, 5, permuted, Some(0)).unwrap();
        assert_eq!(model.forward(&x, None).unwrap().pooled, model.forward(&y, None).unwrap().pooled);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let xs: Vec<_> = (0..24)
            .map(|i| {
                let label = i % 3;
                let mut data = vec![0.0; 8 * 4];
                data[label * 2 * 4 + label] = 1.0 + rng.gen_range(-0.1..0.1);
                SceneFeatureMatrix::from_raw(8, 4, data, Some(label)).unwrap()
            })
            .collect();
        let cfg = ClassifierConfig { epochs: 5, learning_rate: 0.01, optimizer: Optimizer::adam(), ..small_config(3) };
        let out = train(&cfg, &xs, &xs).unwrap();
        let losses: Vec<f64> = out.history.epochs.iter().map(|r| r.val_loss.unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let perfect = ConfusionMatrix::from_pairs(2, (0..10).map(|i| (i % 2, i % 2))).unwrap();
        assert_eq!((perfect.get(0, 0), perfect.get(1, 1)), (5, 5));
        assert_eq!(perfect.accuracy(), 1.0);
        let constant = ConfusionMatrix::from_pairs(3, [(0, 1), (1, 1), (1, 1), (2, 1)]).unwrap();
        for t in 0..3 {
            assert_eq!(constant.get(t, 0) + constant.get(t, 2), 0);
        }
        assert_eq!(constant.accuracy(), 0.5);
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let pairs: Vec<(usize, usize)> = (0..500).map(|_| (rng.gen_range(0..7), rng.gen_range(0..7))).collect();
        let m = ConfusionMatrix::from_pairs(7, pairs.iter().copied()).unwrap();
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        assert_eq!(m.accuracy(), hits as f64 / 500.0);
        for t in 0..7 {
            let row: usize = (0..7).map(|p| m.get(t, p)).sum();
            assert_eq!(row, pairs.iter().filter(|(x, _)| *x == t).count());
        }
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(v in proptest::collection::vec(-30.0f64..30.0, 2..10), shift in -50.0f64..50.0) {
            let a = softmax(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
