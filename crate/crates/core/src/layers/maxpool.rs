//! Max pooling with cached argmax positions; ties break to the lowest flat
//! index so backward is deterministic.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv_output_dim, Tensor};

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: Vec<usize>,
    /// Flat input index of the maximum for each output element.
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MaxPoolLayer {
    pub window: (usize, usize),
    pub stride: usize,
    cache: Option<PoolCache>,
}

impl MaxPoolLayer {
    pub fn new(window: (usize, usize), stride: usize) -> Self {
        MaxPoolLayer {
            window,
            stride,
            cache: None,
        }
    }

    pub fn forward<S: Scalar>(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, c, h, w) = x.dims4("maxpool_forward")?;
        let (kh, kw) = self.window;
        let oh = conv_output_dim(h, kh, self.stride, 0)?;
        let ow = conv_output_dim(w, kw, self.stride, 0)?;

        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let data = x.data();
        let mut o_idx = 0;
        for ni in 0..n {
            for ci in 0..c {
                let plane = (ni * c + ci) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best_idx = plane + (oy * self.stride) * w + ox * self.stride;
                        let mut best = data[best_idx];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let idx =
                                    plane + (oy * self.stride + ky) * w + ox * self.stride + kx;
                                if data[idx] > best {
                                    best = data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.data_mut()[o_idx] = best;
                        argmax[o_idx] = best_idx;
                        o_idx += 1;
                    }
                }
            }
        }
        self.cache = Some(PoolCache {
            in_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    /// Routes each output error to its cached argmax position.
    pub fn backward<S: Scalar>(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("maxpool backward without cached forward".into()))?;
        if e.len() != cache.argmax.len() {
            return Err(Error::Geometry(format!(
                "maxpool backward error shape {:?} does not match cached forward",
                e.shape()
            )));
        }
        let mut out = Tensor::zeros(&cache.in_shape);
        for (&idx, &v) in cache.argmax.iter().zip(e.data()) {
            out.data_mut()[idx] += v;
        }
        Ok(out)
    }
}
