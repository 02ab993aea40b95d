//! Parameterized layers with explicit forward/backward contracts. Each layer
//! caches whatever forward state its backward needs (inputs, pre-activations,
//! masks, argmax positions); calling backward without that state is an error.
//!
//! Gradient convention: error tensors carry the derivative of the summed
//! per-sample loss, and parameter gradients are divided by the batch size, so
//! a gradient is always the derivative of the mean batch loss.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod fc;
mod flatten;
mod maxpool;

pub use activation::{activation_derivative, activation_forward, ActKind, ActivationLayer};
pub use batchnorm::BatchNormLayer;
pub use conv::ConvLayer;
pub use dropout::DropoutLayer;
pub use fc::FcLayer;
pub use flatten::FlattenLayer;
pub use maxpool::MaxPoolLayer;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Whether a trainable tensor takes L2 weight decay (multiplicative weights
/// do, additive shifts do not).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone)]
pub enum Layer<S: Scalar> {
    Fc(FcLayer<S>),
    Conv(ConvLayer<S>),
    BatchNorm(BatchNormLayer<S>),
    Activation(ActivationLayer<S>),
    Dropout(DropoutLayer<S>),
    MaxPool(MaxPoolLayer),
    Flatten(FlattenLayer),
}

impl<S: Scalar> Layer<S> {
    pub fn forward(
        &mut self,
        x: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        match self {
            Layer::Fc(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Activation(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    /// Full backward step: records parameter gradients (where the layer has
    /// parameters) and returns the error at the layer input.
    pub fn backward(&mut self, e: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Fc(l) => {
                l.gradient(e)?;
                l.backward_error(e)
            }
            Layer::Conv(l) => {
                l.gradient(e)?;
                l.backward_error(e)
            }
            Layer::BatchNorm(l) => l.backward(e),
            Layer::Activation(l) => l.backward(e),
            Layer::Dropout(l) => l.backward(e),
            Layer::MaxPool(l) => l.backward(e),
            Layer::Flatten(l) => l.backward(e),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Layer::Fc(_) => "fc",
            Layer::Conv(_) => "conv",
            Layer::BatchNorm(_) => "bn",
            Layer::Activation(l) => l.kind.name(),
            Layer::Dropout(_) => "dropout",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten(_) => "flatten",
        }
    }

    /// Checkpoint tag for this layer type.
    pub fn tag(&self) -> u8 {
        match self {
            Layer::Fc(_) => 1,
            Layer::Conv(_) => 2,
            Layer::BatchNorm(_) => 3,
            Layer::Activation(_) => 4,
            Layer::Dropout(_) => 5,
            Layer::MaxPool(_) => 6,
            Layer::Flatten(_) => 7,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Fc(_) | Layer::Conv(_) | Layer::BatchNorm(_))
    }

    /// Visits trainable parameters paired with their gradients, in a fixed
    /// per-layer order.
    pub fn visit_params_grads_mut(
        &mut self,
        f: &mut impl FnMut(ParamKind, &mut Tensor<S>, &Tensor<S>),
    ) {
        match self {
            Layer::Fc(l) => {
                f(ParamKind::Weight, &mut l.weight, &l.dweight);
                f(ParamKind::Bias, &mut l.bias, &l.dbias);
            }
            Layer::Conv(l) => {
                f(ParamKind::Weight, &mut l.kernel, &l.dkernel);
                f(ParamKind::Bias, &mut l.bias, &l.dbias);
            }
            Layer::BatchNorm(l) => {
                f(ParamKind::Weight, &mut l.gamma, &l.dgamma);
                f(ParamKind::Bias, &mut l.beta, &l.dbeta);
            }
            _ => {}
        }
    }

    /// Visits trainable parameters read-only, same order as the `_mut` visitor.
    pub fn visit_params(&self, f: &mut impl FnMut(ParamKind, &Tensor<S>)) {
        match self {
            Layer::Fc(l) => {
                f(ParamKind::Weight, &l.weight);
                f(ParamKind::Bias, &l.bias);
            }
            Layer::Conv(l) => {
                f(ParamKind::Weight, &l.kernel);
                f(ParamKind::Bias, &l.bias);
            }
            Layer::BatchNorm(l) => {
                f(ParamKind::Weight, &l.gamma);
                f(ParamKind::Bias, &l.beta);
            }
            _ => {}
        }
    }

    /// Visits gradients read-only, aligned with [`Self::visit_params`].
    pub fn visit_grads(&self, f: &mut impl FnMut(ParamKind, &Tensor<S>)) {
        match self {
            Layer::Fc(l) => {
                f(ParamKind::Weight, &l.dweight);
                f(ParamKind::Bias, &l.dbias);
            }
            Layer::Conv(l) => {
                f(ParamKind::Weight, &l.dkernel);
                f(ParamKind::Bias, &l.dbias);
            }
            Layer::BatchNorm(l) => {
                f(ParamKind::Weight, &l.dgamma);
                f(ParamKind::Bias, &l.dbeta);
            }
            _ => {}
        }
    }

    /// Tensors persisted in checkpoints: trainable parameters plus running
    /// statistics, in a fixed per-layer order.
    pub fn persistent_tensors(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::Fc(l) => vec![&l.weight, &l.bias],
            Layer::Conv(l) => vec![&l.kernel, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta, &l.running_mean, &l.running_var],
            _ => vec![],
        }
    }

    pub fn persistent_tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::Fc(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv(l) => vec![&mut l.kernel, &mut l.bias],
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            _ => vec![],
        }
    }
}
