//! Reshapes `[N, C, H, W]` feature maps to `[N, C*H*W]` rows for the FC tail.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct FlattenLayer {
    cached_shape: Option<Vec<usize>>,
}

impl FlattenLayer {
    pub fn new() -> Self {
        FlattenLayer { cached_shape: None }
    }

    pub fn forward<S: Scalar>(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, c, h, w) = x.dims4("flatten_forward")?;
        self.cached_shape = Some(x.shape().to_vec());
        x.clone().into_shape(&[n, c * h * w])
    }

    pub fn backward<S: Scalar>(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = self
            .cached_shape
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward without cached forward".into()))?;
        e.clone().into_shape(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_shape() {
        let mut layer = FlattenLayer::new();
        let x = Tensor::<f32>::from_vec(&[2, 3, 2, 2], (0..24).map(|i| i as f32).collect())
            .unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 12]);
        assert_eq!(y.data(), x.data());
        let back = layer.backward(&y).unwrap();
        assert_eq!(back.shape(), x.shape());
    }
}
