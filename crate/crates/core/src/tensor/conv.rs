//! 2-D convolution (cross-correlation convention) with zero padding, plus the
//! two backward directions: error w.r.t. the input (full correlation with the
//! spatially flipped, channel-transposed kernel) and the kernel gradient.
//!
//! The forward reduction per output element runs channel-major, then kernel
//! row, then kernel column — the same nest as the naive reference loop — so
//! the GEMM-based path here is bit-identical to it. Batch samples are
//! independent, which is the only axis that is ever parallelized.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output extent of a convolution/pooling window sweep: `(e + 2*pad - k)/stride + 1`.
pub fn conv_output_dim(extent: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Geometry("stride must be >= 1".into()));
    }
    let padded = extent + 2 * pad;
    if kernel == 0 || kernel > padded {
        return Err(Error::Geometry(format!(
            "kernel extent {kernel} does not fit input extent {extent} with pad {pad}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geometry {
    channels: usize,
    in_h: usize,
    in_w: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(
        channels: usize,
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let out_h = conv_output_dim(in_h, kernel_h, stride, pad)?;
        let out_w = conv_output_dim(in_w, kernel_w, stride, pad)?;
        Ok(Geometry {
            channels,
            in_h,
            in_w,
            kernel_h,
            kernel_w,
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for (output position, kernel offset); None in padding.
    fn input_index(&self, c: usize, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<usize> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.in_h as isize || x >= self.in_w as isize {
            None
        } else {
            Some((c * self.in_h + y as usize) * self.in_w + x as usize)
        }
    }
}

/// Unrolls one sample into `[patch_len, positions]`, patch index major.
/// The patch index runs (channel, kernel row, kernel column), column fastest.
fn im2col<S: Scalar>(sample: &[S], g: &Geometry) -> Vec<S> {
    let mut col = vec![S::zero(); g.patch_len() * g.positions()];
    let positions = g.positions();
    let mut t = 0;
    for c in 0..g.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = &mut col[t * positions..(t + 1) * positions];
                let mut p = 0;
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some(idx) = g.input_index(c, oy, ox, ky, kx) {
                            row[p] = sample[idx];
                        }
                        p += 1;
                    }
                }
                t += 1;
            }
        }
    }
    col
}

/// Same values as [`im2col`] laid out `[positions, patch_len]`.
fn im2col_rows<S: Scalar>(sample: &[S], g: &Geometry) -> Vec<S> {
    let patch = g.patch_len();
    let mut col = vec![S::zero(); patch * g.positions()];
    let mut t = 0;
    for c in 0..g.channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let mut p = 0;
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some(idx) = g.input_index(c, oy, ox, ky, kx) {
                            col[p * patch + t] = sample[idx];
                        }
                        p += 1;
                    }
                }
                t += 1;
            }
        }
    }
    col
}

/// `c += a * b` for row-major `a: [m,k]`, `b: [k,n]`; shared index ascending.
fn gemm<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a_row[t];
            let b_row = &b[t * n..(t + 1) * n];
            for (o, &bv) in c_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `c += a^T * b` for `a: [k,m]`, `b: [k,n]`; `k` ascending per element.
fn gemm_tn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], k: usize, m: usize, n: usize) {
    for t in 0..k {
        let b_row = &b[t * n..(t + 1) * n];
        for i in 0..m {
            let av = a[t * m + i];
            let c_row = &mut c[i * n..(i + 1) * n];
            for (o, &bv) in c_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Cross-correlation of `input: [N,C,H,W]` with `kernel: [O,C,kh,kw]`.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4("conv2d_forward")?;
    let (o, ck, kh, kw) = kernel.dims4("conv2d_forward")?;
    if c != ck {
        return Err(Error::dim("conv2d_forward", input.shape(), kernel.shape()));
    }
    let g = Geometry::new(c, h, w, kh, kw, stride, pad)?;
    let positions = g.positions();
    let sample_in = c * h * w;
    let sample_out = o * positions;

    let mut out = vec![S::zero(); n * sample_out];
    let input_data = input.data();
    let kernel_data = kernel.data();
    out.par_chunks_mut(sample_out)
        .enumerate()
        .for_each(|(i, out_n)| {
            let col = im2col(&input_data[i * sample_in..(i + 1) * sample_in], &g);
            gemm(kernel_data, &col, out_n, o, g.patch_len(), positions);
        });

    let t = Tensor::from_vec(&[n, o, g.out_h, g.out_w], out);
    match t {
        Ok(t) => Ok(t),
        Err(Error::Numeric(_)) => Err(Error::Numeric(
            "conv2d_forward produced a non-finite value".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Gradient of [`conv2d_forward`] w.r.t. its input. `in_h`/`in_w` name the
/// spatial extents of the matching forward input (floor geometry makes them
/// ambiguous otherwise); they are validated against `error_out`.
pub fn conv2d_backward_data<S: Scalar>(
    error_out: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor<S>> {
    let (n, o, eh, ew) = error_out.dims4("conv2d_backward_data")?;
    let (ok, c, kh, kw) = kernel.dims4("conv2d_backward_data")?;
    if o != ok {
        return Err(Error::dim(
            "conv2d_backward_data",
            error_out.shape(),
            kernel.shape(),
        ));
    }
    let g = Geometry::new(c, in_h, in_w, kh, kw, stride, pad)?;
    if g.out_h != eh || g.out_w != ew {
        return Err(Error::Geometry(format!(
            "error map {:?} does not match forward geometry ({}x{} -> {}x{})",
            error_out.shape(),
            in_h,
            in_w,
            g.out_h,
            g.out_w
        )));
    }
    let positions = g.positions();
    let patch = g.patch_len();
    let sample_err = o * positions;
    let sample_in = c * in_h * in_w;
    let error_data = error_out.data();
    let kernel_data = kernel.data();

    let mut out = vec![S::zero(); n * sample_in];
    out.par_chunks_mut(sample_in)
        .enumerate()
        .for_each(|(i, grad_n)| {
            let e_n = &error_data[i * sample_err..(i + 1) * sample_err];
            let mut col_grad = vec![S::zero(); patch * positions];
            gemm_tn(kernel_data, e_n, &mut col_grad, o, patch, positions);
            // col2im: scatter-add each patch row back to its input cell.
            let mut t = 0;
            for ch in 0..g.channels {
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let row = &col_grad[t * positions..(t + 1) * positions];
                        let mut p = 0;
                        for oy in 0..g.out_h {
                            for ox in 0..g.out_w {
                                if let Some(idx) = g.input_index(ch, oy, ox, ky, kx) {
                                    grad_n[idx] += row[p];
                                }
                                p += 1;
                            }
                        }
                        t += 1;
                    }
                }
            }
        });

    Tensor::from_vec(&[n, c, in_h, in_w], out)
}

/// Gradient of [`conv2d_forward`] w.r.t. the kernel, summed over the batch.
pub fn conv2d_backward_kernel<S: Scalar>(
    input: &Tensor<S>,
    error_out: &Tensor<S>,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4("conv2d_backward_kernel")?;
    let (ne, o, eh, ew) = error_out.dims4("conv2d_backward_kernel")?;
    if n != ne {
        return Err(Error::dim(
            "conv2d_backward_kernel",
            input.shape(),
            error_out.shape(),
        ));
    }
    let g = Geometry::new(c, h, w, kernel_h, kernel_w, stride, pad)?;
    if g.out_h != eh || g.out_w != ew {
        return Err(Error::Geometry(format!(
            "error map {:?} does not match forward geometry ({}x{} -> {}x{})",
            error_out.shape(),
            h,
            w,
            g.out_h,
            g.out_w
        )));
    }
    let positions = g.positions();
    let patch = g.patch_len();
    let sample_in = c * h * w;
    let sample_err = o * positions;
    let input_data = input.data();
    let error_data = error_out.data();

    // Per-sample kernel gradients computed independently, then reduced in
    // ascending sample order so thread count cannot change the result.
    let per_sample: Vec<Vec<S>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col_rows = im2col_rows(&input_data[i * sample_in..(i + 1) * sample_in], &g);
            let e_n = &error_data[i * sample_err..(i + 1) * sample_err];
            let mut dk = vec![S::zero(); o * patch];
            gemm(e_n, &col_rows, &mut dk, o, positions, patch);
            dk
        })
        .collect();

    let mut total = vec![S::zero(); o * patch];
    for dk in &per_sample {
        for (acc, &v) in total.iter_mut().zip(dk) {
            *acc += v;
        }
    }
    Tensor::from_vec(&[o, c, kernel_h, kernel_w], total)
}
