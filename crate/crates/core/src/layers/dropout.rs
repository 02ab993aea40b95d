//! Inverted dropout: kept units are scaled by `1/(1-p)` during training so
//! eval mode is the identity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DropoutLayer<S: Scalar> {
    pub rate: f64,
    mask: Option<Tensor<S>>,
}

impl<S: Scalar> DropoutLayer<S> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutLayer { rate, mask: None })
    }

    /// Mask entries are drawn in flat index order from `rng`.
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep_scale = S::from_f64(1.0 / (1.0 - self.rate));
        let mut mask = Tensor::zeros(x.shape());
        for v in mask.data_mut() {
            if rng.random::<f64>() >= self.rate {
                *v = keep_scale;
            }
        }
        let y = x.hadamard(&mask)?;
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        match &self.mask {
            Some(mask) => e.hadamard(mask),
            None if self.rate == 0.0 => Ok(e.clone()),
            None => Err(Error::State("dropout backward without cached mask".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_rate_is_identity_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = DropoutLayer::<f32>::new(0.0).unwrap();
        let x = Tensor::from_f64_slice(&[4], &[1.0, -2.0, 3.0, 0.5]).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let y = layer.forward(&x, mode, &mut rng).unwrap();
            assert_eq!(y.data(), x.data());
        }
        let e = Tensor::from_f64_slice(&[4], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(layer.backward(&e).unwrap().data(), e.data());
    }

    #[test]
    fn eval_mode_is_bit_exact_identity_regardless_of_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = DropoutLayer::<f32>::new(0.7).unwrap();
        let x = Tensor::from_f64_slice(&[3], &[0.1, -0.9, 7.5]).unwrap();
        let y = layer.forward(&x, Mode::Eval, &mut rng).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn train_mask_entries_are_zero_or_inverted_keep() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = DropoutLayer::<f64>::new(0.4).unwrap();
        let x = Tensor::filled(&[100], 1.0);
        let y = layer.forward(&x, Mode::Train, &mut rng).unwrap();
        let scale = 1.0 / 0.6;
        for &v in y.data() {
            assert!(v == 0.0 || (v - scale).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_value_preserved_over_many_trials() {
        // 1e5 seeded draws: mean of y should match x within 2%.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = DropoutLayer::<f64>::new(0.3).unwrap();
        let x = Tensor::filled(&[100_000], 1.0);
        let y = layer.forward(&x, Mode::Train, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn backward_without_mask_is_state_error() {
        let layer = DropoutLayer::<f64>::new(0.5).unwrap();
        assert!(matches!(
            layer.backward(&Tensor::zeros(&[2])).unwrap_err(),
            Error::State(_)
        ));
    }

    #[test]
    fn invalid_rate_rejected() {
        assert!(DropoutLayer::<f32>::new(1.0).is_err());
        assert!(DropoutLayer::<f32>::new(-0.1).is_err());
    }
}
