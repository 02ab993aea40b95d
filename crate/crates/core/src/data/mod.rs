//! Dataset ingestion and synthesis: CIFAR binary readers, per-channel
//! standardization, flip/crop augmentation, seeded batching, and small
//! synthetic corpora for fast tests.

mod cifar;
mod synth;

pub use cifar::{
    load_cifar10, load_cifar10_file, load_cifar100, load_cifar100_file, write_cifar10_file,
    write_cifar100_file,
};
pub use synth::{class_pattern_images, export_points_csv, gaussian_blobs, two_moons};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Labeled samples: rank-4 image tensors or rank-2 point rows.
#[derive(Debug, Clone)]
pub struct Dataset<S: Scalar> {
    pub name: String,
    images: Tensor<S>,
    labels: Vec<u32>,
    class_count: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        name: impl Into<String>,
        images: Tensor<S>,
        labels: Vec<u32>,
        class_count: usize,
    ) -> Result<Self> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n != labels.len() {
            return Err(Error::Data(format!(
                "sample count {} does not match label count {}",
                n,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset {
            name: name.into(),
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &Tensor<S> {
        &self.images
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Per-sample shape (without the leading sample axis).
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Copies the selected samples into a batch tensor, preserving order.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<S>, Vec<u32>)> {
        let stride: usize = self.sample_shape().iter().product();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Data(format!(
                    "index {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        Ok((Tensor::from_vec(&shape, data)?, labels))
    }

    /// First `n` samples as a new dataset.
    pub fn subset(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::Data(format!(
                "subset of {n} from dataset of {}",
                self.len()
            )));
        }
        let indices: Vec<usize> = (0..n).collect();
        let (images, labels) = self.gather(&indices)?;
        Dataset::new(self.name.clone(), images, labels, self.class_count)
    }
}

/// Per-channel mean/std computed from a training split.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standardizes rank-4 datasets per channel with constants computed from
/// `train`; the same constants are applied to every dataset in `others`.
pub fn standardize<S: Scalar>(
    train: &mut Dataset<S>,
    others: &mut [&mut Dataset<S>],
) -> Result<ChannelStats> {
    let shape = train.images.shape().to_vec();
    let [n, c, h, w] = match shape[..] {
        [n, c, h, w] => [n, c, h, w],
        _ => {
            return Err(Error::Rank {
                op: "standardize",
                expected: 4,
                shape,
            })
        }
    };
    let plane = h * w;
    let mut mean = vec![0.0f64; c];
    let mut std = vec![0.0f64; c];
    for ch in 0..c {
        let mut acc = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ch) * plane;
            for &v in &train.images.data()[base..base + plane] {
                acc += v.as_f64();
            }
        }
        let m = acc / (n * plane) as f64;
        let mut var = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ch) * plane;
            for &v in &train.images.data()[base..base + plane] {
                let d = v.as_f64() - m;
                var += d * d;
            }
        }
        let s = (var / (n * plane) as f64).sqrt();
        mean[ch] = m;
        std[ch] = if s < 1e-8 { 1.0 } else { s };
    }

    let apply = |ds: &mut Dataset<S>| -> Result<()> {
        let (dn, dc, dh, dw) = ds.images.dims4("standardize")?;
        if dc != c || dh != h || dw != w {
            return Err(Error::dim("standardize", &[dn, dc, dh, dw], &[n, c, h, w]));
        }
        let plane = dh * dw;
        for ni in 0..dn {
            for ch in 0..dc {
                let m = S::from_f64(mean[ch]);
                let s = S::from_f64(1.0 / std[ch]);
                let base = (ni * dc + ch) * plane;
                for v in &mut ds.images.data_mut()[base..base + plane] {
                    *v = (*v - m) * s;
                }
            }
        }
        Ok(())
    };
    apply(train)?;
    for ds in others.iter_mut() {
        apply(ds)?;
    }
    Ok(ChannelStats { mean, std })
}

/// Horizontal-flip / pad-and-crop augmentation policy.
#[derive(Debug, Clone)]
pub struct AugmentPolicy {
    pub hflip_prob: f64,
    pub crop_pad: usize,
    pub enabled: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            hflip_prob: 0.5,
            crop_pad: 4,
            enabled: true,
        }
    }
}

/// Applies the policy per image; draws run in image order (flip, then crop
/// offsets) so results are reproducible from the rng state.
pub fn augment<S: Scalar>(
    images: &Tensor<S>,
    policy: &AugmentPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<S>> {
    if !policy.enabled {
        return Ok(images.clone());
    }
    let (n, c, h, w) = images.dims4("augment")?;
    let pad = policy.crop_pad;
    let mut out = Tensor::zeros(images.shape());
    let plane = h * w;
    for ni in 0..n {
        let flip = policy.hflip_prob > 0.0 && rng.random::<f64>() < policy.hflip_prob;
        let (dy, dx) = if pad > 0 {
            (
                rng.random_range(0..=2 * pad),
                rng.random_range(0..=2 * pad),
            )
        } else {
            (0, 0)
        };
        for ch in 0..c {
            let base = (ni * c + ch) * plane;
            for y in 0..h {
                for x in 0..w {
                    // Coordinate in the zero-padded source.
                    let sy = y + dy;
                    let sx = x + dx;
                    let v = if sy < pad || sx < pad || sy >= h + pad || sx >= w + pad {
                        S::zero()
                    } else {
                        let iy = sy - pad;
                        let ix = sx - pad;
                        let ix = if flip { w - 1 - ix } else { ix };
                        images.data()[base + iy * w + ix]
                    };
                    out.data_mut()[base + y * w + x] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Seeded per-epoch batch index sequence; the last short batch is kept.
pub fn batches(n: usize, batch: usize, seed: u64, epoch: u32) -> Result<Vec<Vec<usize>>> {
    if batch == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if batch > n {
        return Err(Error::Data(format!(
            "batch size {batch} exceeds dataset size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch).map(|c| c.to_vec()).collect())
}
