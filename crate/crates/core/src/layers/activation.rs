//! Elementwise nonlinearities and their derivatives, evaluated at the cached
//! pre-activation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActKind {
    Relu,
    Sigmoid,
    Tanh,
}

impl ActKind {
    pub fn name(self) -> &'static str {
        match self {
            ActKind::Relu => "relu",
            ActKind::Sigmoid => "sigmoid",
            ActKind::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(ActKind::Relu),
            "sigmoid" => Some(ActKind::Sigmoid),
            "tanh" => Some(ActKind::Tanh),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ActKind::Relu => 0,
            ActKind::Sigmoid => 1,
            ActKind::Tanh => 2,
        }
    }
}

pub fn activation_forward<S: Scalar>(kind: ActKind, x: &Tensor<S>) -> Result<Tensor<S>> {
    match kind {
        ActKind::Relu => x.map(|v| if v > S::zero() { v } else { S::zero() }),
        ActKind::Sigmoid => x.map(|v| S::one() / (S::one() + (-v).exp())),
        ActKind::Tanh => x.map(|v| v.tanh()),
    }
}

/// Derivative at the pre-activation `x`. The ReLU derivative at exactly 0 is 0.
pub fn activation_derivative<S: Scalar>(kind: ActKind, x: &Tensor<S>) -> Result<Tensor<S>> {
    match kind {
        ActKind::Relu => x.map(|v| if v > S::zero() { S::one() } else { S::zero() }),
        ActKind::Sigmoid => x.map(|v| {
            let y = S::one() / (S::one() + (-v).exp());
            y * (S::one() - y)
        }),
        ActKind::Tanh => x.map(|v| {
            let y = v.tanh();
            S::one() - y * y
        }),
    }
}

#[derive(Debug, Clone)]
pub struct ActivationLayer<S: Scalar> {
    pub kind: ActKind,
    cached_preact: Option<Tensor<S>>,
}

impl<S: Scalar> ActivationLayer<S> {
    pub fn new(kind: ActKind) -> Self {
        ActivationLayer {
            kind,
            cached_preact: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = activation_forward(self.kind, x)?;
        self.cached_preact = Some(x.clone());
        Ok(y)
    }

    /// `e ⊙ f'(cached pre-activation)`.
    pub fn backward(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self
            .cached_preact
            .as_ref()
            .ok_or_else(|| Error::State("activation backward without cached forward".into()))?;
        if e.shape() != x.shape() {
            return Err(Error::dim("activation_backward", e.shape(), x.shape()));
        }
        e.hadamard(&activation_derivative(self.kind, x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values_and_derivative() {
        let x = Tensor::<f64>::from_f64_slice(&[3], &[-1.0, 0.0, 2.0]).unwrap();
        let y = activation_forward(ActKind::Relu, &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let d = activation_derivative(ActKind::Relu, &x).unwrap();
        assert_eq!(d.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_derivative_is_idempotent_mask() {
        let x = Tensor::<f64>::from_f64_slice(&[4], &[-2.0, -0.1, 0.0, 5.0]).unwrap();
        let d = activation_derivative(ActKind::Relu, &x).unwrap();
        let dd = d.hadamard(&d).unwrap();
        assert_eq!(d.data(), dd.data());
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Tensor::<f64>::from_f64_slice(&[1], &[0.0]).unwrap();
        let y = activation_forward(ActKind::Sigmoid, &x).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-15);
        let d = activation_derivative(ActKind::Sigmoid, &x).unwrap();
        assert!((d.data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tanh_derivative_matches_finite_difference() {
        let points = [-1.7, -0.3, 0.0, 0.4, 2.1];
        let x = Tensor::<f64>::from_f64_slice(&[5], &points).unwrap();
        let d = activation_derivative(ActKind::Tanh, &x).unwrap();
        let eps = 1e-6;
        for (i, &p) in points.iter().enumerate() {
            let fd = ((p + eps).tanh() - (p - eps).tanh()) / (2.0 * eps);
            assert!((d.data()[i] - fd).abs() < 1e-8, "at {p}");
        }
    }

    #[test]
    fn backward_needs_cached_forward() {
        let layer = ActivationLayer::<f64>::new(ActKind::Tanh);
        assert!(matches!(
            layer.backward(&Tensor::zeros(&[2])).unwrap_err(),
            Error::State(_)
        ));
    }
}
