//! Batch normalization over the channel axis: per-feature for `[B, F]`
//! inputs, per-channel over `(N, H, W)` for `[N, C, H, W]` inputs.
//!
//! Training mode normalizes with biased batch statistics and updates the
//! running estimates by exponential moving average; eval mode normalizes with
//! the running estimates. Backward is the exact gradient of the train-mode
//! normalization, so it requires a cached train-mode forward.

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct BnCache<S: Scalar> {
    x_hat: Tensor<S>,
    inv_std: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub epsilon: f64,
    /// EMA coefficient on the previous running estimate.
    pub momentum: f64,
    pub dgamma: Tensor<S>,
    pub dbeta: Tensor<S>,
    cache: Option<BnCache<S>>,
}

/// Iteration layout for one channel of a (possibly spatial) batch.
struct ChannelView {
    channels: usize,
    spatial: usize,
    batch: usize,
}

impl ChannelView {
    fn of<S: Scalar>(x: &Tensor<S>) -> Result<Self> {
        match x.shape() {
            [b, f] => Ok(ChannelView {
                channels: *f,
                spatial: 1,
                batch: *b,
            }),
            [n, c, h, w] => Ok(ChannelView {
                channels: *c,
                spatial: h * w,
                batch: *n,
            }),
            other => Err(Error::Rank {
                op: "batchnorm",
                expected: 2,
                shape: other.to_vec(),
            }),
        }
    }

    fn reduce_count(&self) -> usize {
        self.batch * self.spatial
    }

    /// Flat index of (sample, channel, spatial offset).
    fn index(&self, n: usize, c: usize, s: usize) -> usize {
        if self.spatial == 1 {
            n * self.channels + c
        } else {
            (n * self.channels + c) * self.spatial + s
        }
    }
}

impl<S: Scalar> BatchNormLayer<S> {
    pub fn new(channels: usize, epsilon: f64, momentum: f64) -> Self {
        BatchNormLayer {
            gamma: Tensor::filled(&[channels], S::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], S::one()),
            epsilon,
            momentum,
            dgamma: Tensor::zeros(&[channels]),
            dbeta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let view = ChannelView::of(x)?;
        if view.channels != self.channels() {
            return Err(Error::dim("batchnorm_forward", x.shape(), self.gamma.shape()));
        }
        match mode {
            Mode::Train => self.forward_train(x, &view),
            Mode::Eval => self.forward_eval(x, &view),
        }
    }

    fn forward_train(&mut self, x: &Tensor<S>, view: &ChannelView) -> Result<Tensor<S>> {
        if view.batch < 2 {
            return Err(Error::State(
                "batchnorm train mode needs batch size >= 2".into(),
            ));
        }
        let m = view.reduce_count();
        let inv_m = S::from_f64(1.0 / m as f64);
        let eps = S::from_f64(self.epsilon);
        let mom = S::from_f64(self.momentum);
        let one_minus = S::one() - mom;

        let mut x_hat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_stds = vec![S::zero(); view.channels];
        for c in 0..view.channels {
            let mut mean = S::zero();
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    mean += x.data()[view.index(n, c, s)];
                }
            }
            mean *= inv_m;
            let mut var = S::zero();
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    let d = x.data()[view.index(n, c, s)] - mean;
                    var += d * d;
                }
            }
            var *= inv_m;
            let inv_std = S::one() / (var + eps).sqrt();
            inv_stds[c] = inv_std;

            let g = self.gamma.data()[c];
            let b = self.beta.data()[c];
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    let idx = view.index(n, c, s);
                    let xh = (x.data()[idx] - mean) * inv_std;
                    x_hat.data_mut()[idx] = xh;
                    out.data_mut()[idx] = g * xh + b;
                }
            }

            self.running_mean.data_mut()[c] = mom * self.running_mean.data()[c] + one_minus * mean;
            self.running_var.data_mut()[c] = mom * self.running_var.data()[c] + one_minus * var;
        }
        out.ensure_finite("batchnorm_forward")?;
        self.cache = Some(BnCache {
            x_hat,
            inv_std: inv_stds,
        });
        Ok(out)
    }

    fn forward_eval(&mut self, x: &Tensor<S>, view: &ChannelView) -> Result<Tensor<S>> {
        let eps = S::from_f64(self.epsilon);
        let mut out = Tensor::zeros(x.shape());
        for c in 0..view.channels {
            let mean = self.running_mean.data()[c];
            let inv_std = S::one() / (self.running_var.data()[c] + eps).sqrt();
            let g = self.gamma.data()[c];
            let b = self.beta.data()[c];
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    let idx = view.index(n, c, s);
                    out.data_mut()[idx] = g * (x.data()[idx] - mean) * inv_std + b;
                }
            }
        }
        out.ensure_finite("batchnorm_forward")?;
        self.cache = None;
        Ok(out)
    }

    /// Exact gradient of the train-mode normalization. Fills `dgamma`/`dbeta`
    /// (mean-loss convention: totals divided by batch size) and returns the
    /// error at the layer input.
    pub fn backward(&mut self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batchnorm backward without cached train forward".into()))?;
        if e.shape() != cache.x_hat.shape() {
            return Err(Error::dim("batchnorm_backward", e.shape(), cache.x_hat.shape()));
        }
        let view = ChannelView::of(e)?;
        let m = view.reduce_count();
        let inv_m = S::from_f64(1.0 / m as f64);
        let inv_b = S::from_f64(1.0 / view.batch as f64);

        let mut out = Tensor::zeros(e.shape());
        let mut dgamma = vec![S::zero(); view.channels];
        let mut dbeta = vec![S::zero(); view.channels];
        for c in 0..view.channels {
            let mut sum_e = S::zero();
            let mut sum_exh = S::zero();
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    let idx = view.index(n, c, s);
                    sum_e += e.data()[idx];
                    sum_exh += e.data()[idx] * cache.x_hat.data()[idx];
                }
            }
            dgamma[c] = sum_exh * inv_b;
            dbeta[c] = sum_e * inv_b;

            let scale = self.gamma.data()[c] * cache.inv_std[c];
            let mean_e = sum_e * inv_m;
            let mean_exh = sum_exh * inv_m;
            for n in 0..view.batch {
                for s in 0..view.spatial {
                    let idx = view.index(n, c, s);
                    out.data_mut()[idx] = scale
                        * (e.data()[idx] - mean_e - cache.x_hat.data()[idx] * mean_exh);
                }
            }
        }
        out.ensure_finite("batchnorm_backward")?;
        self.dgamma = Tensor::from_vec(&[view.channels], dgamma)?;
        self.dbeta = Tensor::from_vec(&[view.channels], dbeta)?;
        Ok(out)
    }
}
