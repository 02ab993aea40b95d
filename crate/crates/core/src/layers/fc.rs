//! Fully-connected layer: `y = x W^T + b` over a batch of row vectors.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct FcLayer<S: Scalar> {
    /// `[out, in]`, row per output neuron.
    pub weight: Tensor<S>,
    /// `[out]`.
    pub bias: Tensor<S>,
    pub dweight: Tensor<S>,
    pub dbias: Tensor<S>,
    cached_input: Option<Tensor<S>>,
    cached_preact: Option<Tensor<S>>,
}

impl<S: Scalar> FcLayer<S> {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        FcLayer {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            dweight: Tensor::zeros(&[out_dim, in_dim]),
            dbias: Tensor::zeros(&[out_dim]),
            cached_input: None,
            cached_preact: None,
        }
    }

    /// Zero-mean Gaussian weights with std `sqrt(2 / fan_in)`, zero bias.
    pub fn init_he(&mut self, rng: &mut ChaCha8Rng) {
        let std = (2.0 / self.in_dim() as f64).sqrt();
        for v in self.weight.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = S::from_f64(z * std);
        }
        for v in self.bias.data_mut() {
            *v = S::zero();
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn cached_input(&self) -> Option<&Tensor<S>> {
        self.cached_input.as_ref()
    }

    pub fn cached_preact(&self) -> Option<&Tensor<S>> {
        self.cached_preact.as_ref()
    }

    /// Emits the pre-activation `x W^T + b`, caching input and result.
    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (_, n_in) = x.dims2("fc_forward")?;
        if n_in != self.in_dim() {
            return Err(Error::dim("fc_forward", x.shape(), self.weight.shape()));
        }
        let mut out = x.matmul_nt(&self.weight)?;
        let n_out = self.out_dim();
        let bias = self.bias.data();
        for row in out.data_mut().chunks_mut(n_out) {
            for (o, &b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        out.ensure_finite("fc_forward")?;
        self.cached_input = Some(x.clone());
        self.cached_preact = Some(out.clone());
        Ok(out)
    }

    /// Error at the layer input: `e W` (the transposed-weight product).
    pub fn backward_error(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let cached = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("fc backward_error without cached forward".into()))?;
        let (batch, n_out) = e.dims2("fc_backward_error")?;
        if n_out != self.out_dim() || batch != cached.shape()[0] {
            return Err(Error::dim("fc_backward_error", e.shape(), self.weight.shape()));
        }
        e.matmul(&self.weight)
    }

    /// Mean-over-batch gradients: `dW = e^T x / B`, `db = column means of e`.
    pub fn gradient(&mut self, e: &Tensor<S>) -> Result<()> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("fc gradient without cached forward".into()))?;
        let (batch, n_out) = e.dims2("fc_gradient")?;
        if n_out != self.out_dim() {
            return Err(Error::dim("fc_gradient", e.shape(), self.weight.shape()));
        }
        if batch != x.shape()[0] {
            return Err(Error::State(format!(
                "fc gradient batch {} does not match cached forward batch {}",
                batch,
                x.shape()[0]
            )));
        }
        let inv_b = S::from_f64(1.0 / batch as f64);
        self.dweight = e.matmul_tn(x)?.scale(inv_b)?;
        let mut dbias = vec![S::zero(); n_out];
        for row in e.data().chunks(n_out) {
            for (acc, &v) in dbias.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut dbias {
            *v *= inv_b;
        }
        self.dbias = Tensor::from_vec(&[n_out], dbias)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_weight_passes_input_through() {
        let mut fc = FcLayer::<f64>::new(3, 3);
        fc.weight = Tensor::identity(3);
        let x = Tensor::from_f64_slice(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = fc.forward(&x).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn hand_example_with_bias() {
        let mut fc = FcLayer::<f64>::new(2, 1);
        fc.weight = Tensor::from_f64_slice(&[1, 2], &[1.0, 1.0]).unwrap();
        fc.bias = Tensor::from_f64_slice(&[1], &[1.0]).unwrap();
        let x = Tensor::from_f64_slice(&[1, 2], &[2.0, 3.0]).unwrap();
        assert_eq!(fc.forward(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn forward_matches_matmul_broadcast_oracle() {
        let mut r = rng(2);
        let mut fc = FcLayer::<f64>::new(4, 5);
        fc.init_he(&mut r);
        fc.bias = random_tensor(&mut r, &[5]);
        let x = random_tensor(&mut r, &[3, 4]);
        let out = fc.forward(&x).unwrap();

        let oracle = x.matmul(&fc.weight.transpose().unwrap()).unwrap();
        for b in 0..3 {
            for j in 0..5 {
                let expect = oracle.data()[b * 5 + j] + fc.bias.data()[j];
                assert!((out.data()[b * 5 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let mut fc = FcLayer::<f64>::new(4, 2);
        let x = Tensor::zeros(&[1, 3]);
        assert!(matches!(
            fc.forward(&x).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn backward_error_identity_and_row_selection() {
        let mut fc = FcLayer::<f64>::new(2, 2);
        fc.weight = Tensor::identity(2);
        let x = Tensor::from_f64_slice(&[1, 2], &[0.5, -0.5]).unwrap();
        fc.forward(&x).unwrap();
        let e = Tensor::from_f64_slice(&[1, 2], &[3.0, 4.0]).unwrap();
        assert_eq!(fc.backward_error(&e).unwrap().data(), &[3.0, 4.0]);

        let mut fc2 = FcLayer::<f64>::new(2, 2);
        fc2.weight = Tensor::from_f64_slice(&[2, 2], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        fc2.forward(&x).unwrap();
        let e = Tensor::from_f64_slice(&[1, 2], &[1.0, 0.0]).unwrap();
        assert_eq!(fc2.backward_error(&e).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn backward_error_without_forward_is_state_error() {
        let fc = FcLayer::<f64>::new(2, 2);
        let e = Tensor::zeros(&[1, 2]);
        assert!(matches!(fc.backward_error(&e).unwrap_err(), Error::State(_)));
    }

    #[test]
    fn backward_error_matches_finite_difference() {
        // L = dot(q, fc(x)); dL/dx compared against central differences.
        let mut r = rng(5);
        let mut fc = FcLayer::<f64>::new(6, 4);
        fc.init_he(&mut r);
        fc.bias = random_tensor(&mut r, &[4]);
        let x = random_tensor(&mut r, &[2, 6]);
        let q = random_tensor(&mut r, &[2, 4]);
        fc.forward(&x).unwrap();
        let grad = fc.backward_error(&q).unwrap();

        let eps = 1e-6;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += eps;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= eps;
            let lp: f64 = fc
                .forward(&xp)
                .unwrap()
                .data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| a * b)
                .sum();
            let lm: f64 = fc
                .forward(&xm)
                .unwrap()
                .data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| a * b)
                .sum();
            let fd = (lp - lm) / (2.0 * eps);
            let got = grad.data()[idx];
            assert!(
                (fd - got).abs() <= 1e-6 * fd.abs().max(got.abs()).max(1.0),
                "input grad mismatch at {idx}: {got} vs {fd}"
            );
        }
    }

    #[test]
    fn gradient_single_sample_outer_product() {
        let mut fc = FcLayer::<f64>::new(2, 1);
        let x = Tensor::from_f64_slice(&[1, 2], &[3.0, 4.0]).unwrap();
        fc.forward(&x).unwrap();
        let e = Tensor::from_f64_slice(&[1, 1], &[2.0]).unwrap();
        fc.gradient(&e).unwrap();
        assert_eq!(fc.dweight.data(), &[6.0, 8.0]);
        assert_eq!(fc.dbias.data(), &[2.0]);
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let mut r = rng(7);
        let mut fc = FcLayer::<f64>::new(3, 2);
        fc.init_he(&mut r);
        let x = random_tensor(&mut r, &[4, 3]);
        fc.forward(&x).unwrap();
        fc.gradient(&Tensor::zeros(&[4, 2])).unwrap();
        assert!(fc.dweight.data().iter().all(|&v| v == 0.0));
        assert!(fc.dbias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_is_mean_of_per_sample_outer_products() {
        let mut r = rng(9);
        let mut fc = FcLayer::<f64>::new(3, 2);
        fc.init_he(&mut r);
        let x = random_tensor(&mut r, &[3, 3]);
        let e = random_tensor(&mut r, &[3, 2]);
        fc.forward(&x).unwrap();
        fc.gradient(&e).unwrap();

        // Per-sample loop oracle.
        let mut expect = vec![0.0f64; 6];
        for b in 0..3 {
            for o in 0..2 {
                for i in 0..3 {
                    expect[o * 3 + i] += e.data()[b * 2 + o] * x.data()[b * 3 + i];
                }
            }
        }
        for v in &mut expect {
            *v /= 3.0;
        }
        for (got, want) in fc.dweight.data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
