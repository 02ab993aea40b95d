//! Convolution layer wrapping the tensor-level kernels, with a per-output-
//! channel bias.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv2d_backward_data, conv2d_backward_kernel, conv2d_forward, Tensor};

#[derive(Debug, Clone)]
pub struct ConvLayer<S: Scalar> {
    /// `[out_channels, in_channels, kh, kw]`.
    pub kernel: Tensor<S>,
    /// `[out_channels]`.
    pub bias: Tensor<S>,
    pub stride: usize,
    pub pad: usize,
    pub dkernel: Tensor<S>,
    pub dbias: Tensor<S>,
    cached_input: Option<Tensor<S>>,
    cached_preact: Option<Tensor<S>>,
}

impl<S: Scalar> ConvLayer<S> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let kshape = [out_channels, in_channels, kernel, kernel];
        ConvLayer {
            kernel: Tensor::zeros(&kshape),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            pad,
            dkernel: Tensor::zeros(&kshape),
            dbias: Tensor::zeros(&[out_channels]),
            cached_input: None,
            cached_preact: None,
        }
    }

    pub fn init_he(&mut self, rng: &mut ChaCha8Rng) {
        let fan_in = self.kernel.shape()[1] * self.kernel.shape()[2] * self.kernel.shape()[3];
        let std = (2.0 / fan_in as f64).sqrt();
        for v in self.kernel.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = S::from_f64(z * std);
        }
        for v in self.bias.data_mut() {
            *v = S::zero();
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn cached_input(&self) -> Option<&Tensor<S>> {
        self.cached_input.as_ref()
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut out = conv2d_forward(x, &self.kernel, self.stride, self.pad)?;
        let (n, o, oh, ow) = out.dims4("conv_forward")?;
        let spatial = oh * ow;
        let bias = self.bias.data();
        let data = out.data_mut();
        for ni in 0..n {
            for oi in 0..o {
                let b = bias[oi];
                let base = (ni * o + oi) * spatial;
                for v in &mut data[base..base + spatial] {
                    *v += b;
                }
            }
        }
        out.ensure_finite("conv_forward")?;
        self.cached_input = Some(x.clone());
        self.cached_preact = Some(out.clone());
        Ok(out)
    }

    pub fn backward_error(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("conv backward_error without cached forward".into()))?;
        let (_, _, h, w) = x.dims4("conv_backward_error")?;
        conv2d_backward_data(e, &self.kernel, self.stride, self.pad, h, w)
    }

    pub fn gradient(&mut self, e: &Tensor<S>) -> Result<()> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("conv gradient without cached forward".into()))?;
        let (batch, _, _, _) = x.dims4("conv_gradient")?;
        let (eb, o, eh, ew) = e.dims4("conv_gradient")?;
        if eb != batch {
            return Err(Error::State(format!(
                "conv gradient batch {eb} does not match cached forward batch {batch}"
            )));
        }
        let kh = self.kernel.shape()[2];
        let kw = self.kernel.shape()[3];
        let inv_b = S::from_f64(1.0 / batch as f64);
        self.dkernel =
            conv2d_backward_kernel(x, e, kh, kw, self.stride, self.pad)?.scale(inv_b)?;

        let mut dbias = vec![S::zero(); o];
        let spatial = eh * ew;
        for ni in 0..batch {
            for (oi, acc) in dbias.iter_mut().enumerate() {
                let base = (ni * o + oi) * spatial;
                for &v in &e.data()[base..base + spatial] {
                    *acc += v;
                }
            }
        }
        for v in &mut dbias {
            *v *= inv_b;
        }
        self.dbias = Tensor::from_vec(&[o], dbias)?;
        Ok(())
    }
}
