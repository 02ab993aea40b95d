//! Verification instruments: central-difference gradient oracle, gradient
//! alignment between strategies, and feedback-storage accounting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feedback::{dense_size_bytes, Feedback};
use crate::layers::{Layer, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::{softmax_cross_entropy, Network};

/// Central difference of a scalar function.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

fn mean_loss<S: Scalar>(net: &mut Network<S>, images: &Tensor<S>, labels: &[u32]) -> Result<f64> {
    // Train mode so batch-norm matches the backward pass being checked;
    // forward draws nothing (dropout is rejected upfront).
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits = net.forward(images, Mode::Train, &mut rng)?;
    let (loss, _) = softmax_cross_entropy(&logits, labels)?;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss in finite differences".into()));
    }
    Ok(loss)
}

fn check_fd_preconditions<S: Scalar>(net: &Network<S>, epsilon: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Config(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if net.layers().iter().any(|l| matches!(l, Layer::Dropout(_))) {
        return Err(Error::Config(
            "finite differences need a deterministic forward; remove dropout layers".into(),
        ));
    }
    Ok(())
}

/// Central-difference gradient of the mean batch loss for one selected
/// trainable tensor (layer order). Intended for 64-bit networks.
pub fn finite_diff_gradient<S: Scalar>(
    net: &mut Network<S>,
    images: &Tensor<S>,
    labels: &[u32],
    tensor_idx: usize,
    epsilon: f64,
) -> Result<Tensor<S>> {
    check_fd_preconditions(net, epsilon)?;
    let shape = net
        .trainable_shapes()
        .get(tensor_idx)
        .cloned()
        .ok_or_else(|| Error::Config(format!("no trainable tensor {tensor_idx}")))?;
    let mut grad = Tensor::zeros(&shape);
    let count: usize = shape.iter().product();
    for i in 0..count {
        let orig = {
            let t = net.trainable_tensor_mut(tensor_idx).unwrap();
            let v = t.data()[i];
            t.data_mut()[i] = v + S::from_f64(epsilon);
            v
        };
        let loss_plus = mean_loss(net, images, labels)?;
        net.trainable_tensor_mut(tensor_idx).unwrap().data_mut()[i] =
            orig - S::from_f64(epsilon);
        let loss_minus = mean_loss(net, images, labels)?;
        net.trainable_tensor_mut(tensor_idx).unwrap().data_mut()[i] = orig;
        grad.data_mut()[i] = S::from_f64((loss_plus - loss_minus) / (2.0 * epsilon));
    }
    Ok(grad)
}

/// Central-difference gradients for every trainable tensor.
pub fn finite_diff_gradients<S: Scalar>(
    net: &mut Network<S>,
    images: &Tensor<S>,
    labels: &[u32],
    epsilon: f64,
) -> Result<Vec<Tensor<S>>> {
    check_fd_preconditions(net, epsilon)?;
    (0..net.trainable_count())
        .map(|i| finite_diff_gradient(net, images, labels, i, epsilon))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentEntry {
    pub layer: String,
    pub cosine: f64,
    /// Set when either gradient had zero norm (cosine reported as 0).
    pub zero_norm: bool,
}

/// Per-layer cosine between two gradient snapshots (see
/// [`Network::grad_snapshot`]); the snapshots must cover the same layers.
pub fn alignment(
    reference: &[(String, Vec<f64>)],
    candidate: &[(String, Vec<f64>)],
) -> Result<Vec<AlignmentEntry>> {
    if reference.len() != candidate.len() {
        return Err(Error::Dimension {
            op: "alignment",
            lhs: vec![reference.len()],
            rhs: vec![candidate.len()],
        });
    }
    let mut out = Vec::with_capacity(reference.len());
    for ((name_a, a), (name_b, b)) in reference.iter().zip(candidate) {
        if name_a != name_b || a.len() != b.len() {
            return Err(Error::Dimension {
                op: "alignment",
                lhs: vec![a.len()],
                rhs: vec![b.len()],
            });
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            out.push(AlignmentEntry {
                layer: name_a.clone(),
                cosine: 0.0,
                zero_norm: true,
            });
        } else {
            out.push(AlignmentEntry {
                layer: name_a.clone(),
                cosine: dot / (na * nb),
                zero_norm: false,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MemoryRow {
    pub layer: String,
    pub rows: usize,
    pub cols: usize,
    /// Bytes actually held by the network for this matrix.
    pub stored_bytes: usize,
    pub dense_bytes: usize,
    pub packed_bytes: usize,
    /// `1 - packed/dense`.
    pub reduction: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MemoryReport {
    pub rows: Vec<MemoryRow>,
    pub total_stored: usize,
    pub total_dense: usize,
    pub total_packed: usize,
}

/// Feedback storage per fed layer: dense bytes at the network precision vs
/// bit-packed bytes, with the achieved-or-achievable reduction.
pub fn memory_report<S: Scalar>(net: &Network<S>) -> MemoryReport {
    let mut report = MemoryReport::default();
    let names = net.feedback_layer_names();
    for (fb, name) in net.feedback().iter().zip(names) {
        let rows = fb.rows();
        let cols = fb.cols();
        let dense = dense_size_bytes(rows, cols, S::PRECISION);
        let packed = (rows * cols + 7) / 8;
        let stored = match fb {
            Feedback::Dense(_) => dense,
            Feedback::Binary(_) => packed,
        };
        report.rows.push(MemoryRow {
            layer: name.to_string(),
            rows,
            cols,
            stored_bytes: stored,
            dense_bytes: dense,
            packed_bytes: packed,
            reduction: 1.0 - packed as f64 / dense as f64,
        });
        report.total_stored += stored;
        report.total_dense += dense;
        report.total_packed += packed;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{FeedbackInit, FeedbackScheme};
    use crate::layers::ActKind;
    use crate::trainer::{FcStrategy, LayerSpec, NetworkSpec};

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| 0.5 * x * x, 3.0, 1e-5);
        assert!((g - 3.0).abs() < 1e-8);
    }

    fn two_fc_net(strategy: FcStrategy) -> Network<f64> {
        let spec = NetworkSpec {
            name: "fd".into(),
            input: vec![3],
            layers: vec![
                LayerSpec::Fc { out_features: 5 },
                LayerSpec::Activation(ActKind::Tanh),
                LayerSpec::Fc { out_features: 4 },
            ],
            class_count: 4,
            fc_strategy: strategy,
            feedback_init: FeedbackInit {
                scheme: FeedbackScheme::RandomHe,
                seed: 2,
            },
        };
        Network::build(&spec, 2).unwrap()
    }

    #[test]
    fn finite_diff_matches_backprop_on_two_fc_net() {
        use rand::Rng;
        let mut net = two_fc_net(FcStrategy::Bp);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let images = Tensor::<f64>::from_vec(
            &[6, 3],
            (0..18).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let labels = [0u32, 1, 2, 3, 0, 1];

        let logits = net
            .forward(&images, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let (_, e) = softmax_cross_entropy(&logits, &labels).unwrap();
        net.backward(&e).unwrap();
        let analytic: Vec<Vec<f64>> = net
            .grad_snapshot()
            .into_iter()
            .map(|(_, g)| g)
            .collect();

        let fd = finite_diff_gradients(&mut net, &images, &labels, 1e-5).unwrap();
        // grad_snapshot concatenates per layer; flatten fd pairs (w, b).
        let mut fd_flat = Vec::new();
        for pair in fd.chunks(2) {
            let mut v: Vec<f64> = pair[0].data().iter().map(|x| x.as_f64()).collect();
            v.extend(pair[1].data().iter().map(|x| x.as_f64()));
            fd_flat.push(v);
        }
        assert_eq!(analytic.len(), fd_flat.len());
        for (a, f) in analytic.iter().zip(&fd_flat) {
            for (x, y) in a.iter().zip(f) {
                assert!(
                    (x - y).abs() <= 1e-8 + 1e-5 * x.abs().max(y.abs()),
                    "{x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn epsilon_sweep_stays_on_plateau() {
        use rand::Rng;
        let mut net = two_fc_net(FcStrategy::Bp);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let images = Tensor::<f64>::from_vec(
            &[4, 3],
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let labels = [0u32, 3, 2, 1];
        let logits = net
            .forward(&images, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let (_, e) = softmax_cross_entropy(&logits, &labels).unwrap();
        net.backward(&e).unwrap();
        let analytic = net.grad_snapshot()[0].1.clone();

        for eps in [1e-4, 1e-5, 1e-6] {
            let fd = finite_diff_gradient(&mut net, &images, &labels, 0, eps).unwrap();
            for (a, f) in analytic.iter().zip(fd.data()) {
                assert!(
                    (a - f).abs() <= 1e-7 + 1e-5 * a.abs().max(f.abs()),
                    "eps {eps}: {a} vs {f}"
                );
            }
        }
    }

    #[test]
    fn epsilon_domain_is_enforced() {
        let mut net = two_fc_net(FcStrategy::Bp);
        let images = Tensor::<f64>::zeros(&[1, 3]);
        assert!(matches!(
            finite_diff_gradient(&mut net, &images, &[0], 0, 1e-2).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn alignment_basic_cases() {
        let a = vec![("l1".to_string(), vec![1.0, 2.0, 3.0])];
        let same = alignment(&a, &a).unwrap();
        assert!((same[0].cosine - 1.0).abs() < 1e-12);

        let neg = vec![("l1".to_string(), vec![-1.0, -2.0, -3.0])];
        assert!((alignment(&a, &neg).unwrap()[0].cosine + 1.0).abs() < 1e-12);

        let orth = vec![("l1".to_string(), vec![-2.0, 1.0, 0.0])];
        assert!(alignment(&a, &orth).unwrap()[0].cosine.abs() < 1e-12);

        let zero = vec![("l1".to_string(), vec![0.0, 0.0, 0.0])];
        let z = alignment(&a, &zero).unwrap();
        assert!(z[0].zero_norm && z[0].cosine == 0.0);
    }

    #[test]
    fn alignment_is_scale_invariant() {
        let a = vec![("l1".to_string(), vec![0.3, -0.7, 2.0])];
        let b = vec![("l1".to_string(), vec![1.1, 0.2, -0.4])];
        let base = alignment(&a, &b).unwrap()[0].cosine;
        let a2 = vec![("l1".to_string(), a[0].1.iter().map(|v| v * 7.5).collect())];
        let b2 = vec![("l1".to_string(), b[0].1.iter().map(|v| v * 0.01).collect())];
        let scaled = alignment(&a2, &b2).unwrap()[0].cosine;
        assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn memory_report_reduction_arithmetic() {
        let spec = NetworkSpec {
            name: "mem".into(),
            input: vec![64],
            layers: vec![
                LayerSpec::Fc { out_features: 64 },
                LayerSpec::Activation(ActKind::Relu),
                LayerSpec::Fc { out_features: 10 },
            ],
            class_count: 10,
            fc_strategy: FcStrategy::Bdfa,
            feedback_init: FeedbackInit {
                scheme: FeedbackScheme::RandomHe,
                seed: 4,
            },
        };
        let net = Network::<f32>::build(&spec, 4).unwrap();
        let report = memory_report(&net);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!((row.rows, row.cols), (64, 10));
        assert_eq!(row.dense_bytes, 2560);
        assert_eq!(row.packed_bytes, 80);
        assert_eq!(row.stored_bytes, 80);
        assert_eq!(row.reduction, 0.96875);
        assert_eq!(format!("{:.1}", row.reduction * 100.0), "96.9");
    }

    #[test]
    fn bp_network_has_zero_feedback_bytes() {
        let net = {
            let spec = NetworkSpec {
                name: "bp".into(),
                input: vec![4],
                layers: vec![LayerSpec::Fc { out_features: 3 }],
                class_count: 3,
                fc_strategy: FcStrategy::Bp,
                feedback_init: FeedbackInit {
                    scheme: FeedbackScheme::RandomHe,
                    seed: 0,
                },
            };
            Network::<f32>::build(&spec, 0).unwrap()
        };
        let report = memory_report(&net);
        assert!(report.rows.is_empty());
        assert_eq!(report.total_stored, 0);
    }
}
