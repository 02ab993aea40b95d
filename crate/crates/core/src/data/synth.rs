//! Deterministic synthetic datasets: small point corpora for fast tests and
//! a class-patterned image generator in the CIFAR pixel layout.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Two interleaved half-circles with Gaussian noise; labels balanced within
/// one sample (class 0 gets the extra point for odd `n`).
pub fn two_moons<S: Scalar>(n: usize, noise_std: f64, seed: u64) -> Result<Dataset<S>> {
    if n < 2 {
        return Err(Error::Data(format!("two_moons needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = n - n / 2;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let outer = i < n0;
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (mut x, mut y) = if outer {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        x += nx * noise_std;
        y += ny * noise_std;
        data.push(S::from_f64(x));
        data.push(S::from_f64(y));
        labels.push(if outer { 0 } else { 1 });
    }
    let images = Tensor::from_vec(&[n, 2], data)?;
    Dataset::new("two-moons", images, labels, 2)
}

/// `k` unit-variance Gaussian clusters whose centers sit on a circle sized so
/// adjacent centers are exactly `spread` apart; labels round-robin.
pub fn gaussian_blobs<S: Scalar>(n: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset<S>> {
    if n < 2 || k == 0 {
        return Err(Error::Data(format!(
            "gaussian_blobs needs n >= 2 and k >= 1, got n={n} k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = if k == 1 {
        0.0
    } else {
        spread / (2.0 * (std::f64::consts::PI / k as f64).sin())
    };
    let centers: Vec<(f64, f64)> = (0..k)
        .map(|c| {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            (radius * angle.cos(), radius * angle.sin())
        })
        .collect();
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        data.push(S::from_f64(centers[c].0 + nx));
        data.push(S::from_f64(centers[c].1 + ny));
        labels.push(c as u32);
    }
    let images = Tensor::from_vec(&[n, 2], data)?;
    Dataset::new("gaussian-blobs", images, labels, k)
}

/// Writes a rank-2 dataset as `label,x0,x1,...` CSV.
pub fn export_points_csv<S: Scalar>(ds: &Dataset<S>, path: &Path) -> Result<()> {
    let (n, d) = ds.images().dims2("export_points_csv")?;
    let mut out = Vec::new();
    write!(out, "label")?;
    for j in 0..d {
        write!(out, ",x{j}")?;
    }
    writeln!(out)?;
    for i in 0..n {
        write!(out, "{}", ds.labels()[i])?;
        for j in 0..d {
            write!(out, ",{}", ds.images().data()[i * d + j])?;
        }
        writeln!(out)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Class-patterned 3x32x32 u8 images in the CIFAR pixel layout: each class is
/// a fixed mixture of Gaussian bumps with a per-channel tint; samples jitter
/// the pattern by an integer shift, an amplitude factor, and pixel noise.
/// Returns `(labels, pixels)` with 3072 pixel bytes per sample, classes
/// assigned round-robin.
pub fn class_pattern_images(
    n: usize,
    classes: usize,
    noise_std: f64,
    max_shift: usize,
    seed: u64,
) -> (Vec<u8>, Vec<u8>) {
    const SIDE: usize = 32;
    const CH: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-class templates in [-1, 1].
    let mut templates = vec![0.0f64; classes * CH * SIDE * SIDE];
    for c in 0..classes {
        for _ in 0..3 {
            let cy = rng.random_range(8.0..24.0);
            let cx = rng.random_range(8.0..24.0);
            let sigma = rng.random_range(2.5..6.0);
            let amp = rng.random_range(0.5..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let tint: [f64; 3] = [
                rng.random_range(0.2..1.0),
                rng.random_range(0.2..1.0),
                rng.random_range(0.2..1.0),
            ];
            for ch in 0..CH {
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        let v = amp * tint[ch] * (-d2 / (2.0 * sigma * sigma)).exp();
                        templates[((c * CH + ch) * SIDE + y) * SIDE + x] += v;
                    }
                }
            }
        }
    }

    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CH * SIDE * SIDE);
    let shift_range = max_shift as i64;
    for i in 0..n {
        let c = i % classes;
        labels.push(c as u8);
        let dy = if shift_range > 0 {
            rng.random_range(-shift_range..=shift_range)
        } else {
            0
        };
        let dx = if shift_range > 0 {
            rng.random_range(-shift_range..=shift_range)
        } else {
            0
        };
        let amp = rng.random_range(0.75..1.25);
        for ch in 0..CH {
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let sy = y as i64 - dy;
                    let sx = x as i64 - dx;
                    let t = if (0..SIDE as i64).contains(&sy) && (0..SIDE as i64).contains(&sx) {
                        templates[((c * CH + ch) * SIDE + sy as usize) * SIDE + sx as usize]
                    } else {
                        0.0
                    };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let v = 128.0 + 100.0 * amp * t + noise * noise_std * 255.0;
                    pixels.push(v.clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    (labels, pixels)
}
