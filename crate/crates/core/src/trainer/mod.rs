//! Network training: hyperparameters, mini-batch momentum SGD with weight
//! decay and step learning-rate decay, the per-epoch loop, and evaluation.

mod checkpoint;
mod loss;
mod network;
mod presets;

pub use checkpoint::{checkpoint_bytes, feedback_bytes, load_checkpoint, save_checkpoint};
pub use loss::{softmax_cross_entropy, topk_hits};
pub use network::{BackwardPass, FcStrategy, LayerSpec, Network, NetworkSpec};
pub use presets::{preset, preset_names, with_fc_batchnorm, with_fc_dropout, Preset};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, batches, AugmentPolicy, Dataset};
use crate::error::{Error, Result};
use crate::layers::{Mode, ParamKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Step decay multiplies the rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrDecay {
    None,
    Step { factor: f64, every: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: LrDecay,
    pub epochs: u32,
    pub seed: u64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if let LrDecay::Step { factor, every } = self.lr_decay {
            if factor <= 0.0 || every == 0 {
                return Err(Error::Config(
                    "step decay needs factor > 0 and interval >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Learning rate used during the given 0-based epoch.
    pub fn lr_at(&self, epoch: u32) -> f64 {
        match self.lr_decay {
            LrDecay::None => self.lr,
            LrDecay::Step { factor, every } => self.lr * factor.powi((epoch / every) as i32),
        }
    }
}

/// Mutable training state: one velocity buffer per trainable tensor, loop
/// counters, and the rng that feeds dropout masks and augmentation draws.
pub struct TrainState<S: Scalar> {
    pub velocities: Vec<Tensor<S>>,
    pub epoch: u32,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl<S: Scalar> TrainState<S> {
    pub fn new(net: &Network<S>, seed: u64) -> Self {
        let velocities = net
            .trainable_shapes()
            .into_iter()
            .map(|s| Tensor::zeros(&s))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        TrainState {
            velocities,
            epoch: 0,
            step: 0,
            rng,
        }
    }
}

/// One momentum step over every trainable tensor:
/// `v <- mu*v + g (+ lambda*w for weights); w <- w - lr*v`.
/// Bias-like parameters are excluded from weight decay.
pub fn sgd_momentum_step<S: Scalar>(
    net: &mut Network<S>,
    state: &mut TrainState<S>,
    lr: f64,
    hyper: &Hyperparams,
) -> Result<()> {
    let mu = S::from_f64(hyper.momentum);
    let lambda = S::from_f64(hyper.weight_decay);
    let eta = S::from_f64(lr);
    let velocities = &mut state.velocities;
    let mut idx = 0;
    let mut status = Ok(());
    net.visit_params_grads_mut(&mut |kind, param, grad| {
        if status.is_err() {
            return;
        }
        let v = &mut velocities[idx];
        idx += 1;
        if v.shape() != param.shape() || grad.shape() != param.shape() {
            status = Err(Error::dim("sgd_momentum_step", param.shape(), v.shape()));
            return;
        }
        let decay = kind == ParamKind::Weight && hyper.weight_decay > 0.0;
        let vd = v.data_mut();
        let pd = param.data_mut();
        let gd = grad.data();
        for i in 0..pd.len() {
            let mut g = gd[i];
            if decay {
                g += lambda * pd[i];
            }
            vd[i] = mu * vd[i] + g;
            pd[i] -= eta * vd[i];
        }
    });
    status?;
    if idx != velocities.len() {
        return Err(Error::State(format!(
            "velocity count {} does not match trainable tensors {idx}",
            velocities.len()
        )));
    }
    Ok(())
}

/// Loss and top-k accuracies (percent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
}

/// Runs one seeded-shuffle pass over the dataset: forward, strategy backward,
/// momentum update per batch. Returns running training metrics (computed on
/// the pre-update logits of each batch).
pub fn train_epoch<S: Scalar>(
    net: &mut Network<S>,
    data: &Dataset<S>,
    hyper: &Hyperparams,
    state: &mut TrainState<S>,
    augment_policy: Option<&AugmentPolicy>,
) -> Result<Metrics> {
    train_epoch_hooked(net, data, hyper, state, augment_policy, |_, _, _| Ok(()))
}

/// [`train_epoch`] with a diagnostic hook called after each batch's forward
/// and loss, before the strategy backward and update. The hook may itself run
/// backward passes; the loop recomputes the strategy gradients afterwards.
pub fn train_epoch_hooked<S: Scalar, F>(
    net: &mut Network<S>,
    data: &Dataset<S>,
    hyper: &Hyperparams,
    state: &mut TrainState<S>,
    augment_policy: Option<&AugmentPolicy>,
    mut hook: F,
) -> Result<Metrics>
where
    F: FnMut(&mut Network<S>, u64, &Tensor<S>) -> Result<()>,
{
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    hyper.validate()?;
    let lr = hyper.lr_at(state.epoch);
    let mut loss_sum = 0.0f64;
    let mut hits1 = 0usize;
    let mut hits5 = 0usize;
    for batch_indices in batches(data.len(), hyper.batch, hyper.seed, state.epoch)? {
        let (mut images, labels) = data.gather(&batch_indices)?;
        if let Some(policy) = augment_policy {
            if policy.enabled {
                images = augment(&images, policy, &mut state.rng)?;
            }
        }
        let logits = net.forward(&images, Mode::Train, &mut state.rng)?;
        let (loss, e_last) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * batch_indices.len() as f64;
        hits1 += topk_hits(&logits, &labels, 1)?;
        hits5 += topk_hits(&logits, &labels, 5)?;
        hook(net, state.step, &e_last)?;
        net.backward(&e_last)?;
        sgd_momentum_step(net, state, lr, hyper)?;
        state.step += 1;
    }
    state.epoch += 1;
    let n = data.len() as f64;
    Ok(Metrics {
        loss: loss_sum / n,
        top1: 100.0 * hits1 as f64 / n,
        top5: 100.0 * hits5 as f64 / n,
    })
}

/// Loss and accuracies in eval mode (running batch-norm statistics, identity
/// dropout), batched in dataset order.
pub fn evaluate<S: Scalar>(
    net: &mut Network<S>,
    data: &Dataset<S>,
    batch: usize,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let batch = batch.max(1).min(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0f64;
    let mut hits1 = 0usize;
    let mut hits5 = 0usize;
    for chunk in indices.chunks(batch) {
        let (images, labels) = data.gather(chunk)?;
        let logits = net.forward(&images, Mode::Eval, &mut rng)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        hits1 += topk_hits(&logits, &labels, 1)?;
        hits5 += topk_hits(&logits, &labels, 5)?;
    }
    let n = data.len() as f64;
    Ok(Metrics {
        loss: loss_sum / n,
        top1: 100.0 * hits1 as f64 / n,
        top5: 100.0 * hits5 as f64 / n,
    })
}
