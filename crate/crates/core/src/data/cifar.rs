//! CIFAR binary-format readers and writers.
//!
//! CIFAR-10 records are 3073 bytes: one label byte followed by 3072 pixel
//! bytes (R, G, B planes of a 32x32 image, row-major). CIFAR-100 records
//! carry two label bytes (coarse, fine) before the same 3072 pixels; the fine
//! label is used. Pixels decode to `byte / 255` exactly at the target
//! precision; standardization is a separate step.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_SIDE: usize = 32;
const PIXELS: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;
const RECORD10: usize = 1 + PIXELS;
const RECORD100: usize = 2 + PIXELS;

fn decode<S: Scalar>(
    bytes: &[u8],
    record: usize,
    label_offset: usize,
    class_count: usize,
    name: &str,
    path: &Path,
) -> Result<Dataset<S>> {
    if bytes.is_empty() || bytes.len() % record != 0 {
        return Err(Error::Format(format!(
            "{}: expected a positive multiple of {record} bytes, got {}",
            path.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / record;
    let denom = S::from_f64(255.0);
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * PIXELS);
    for rec in bytes.chunks_exact(record) {
        labels.push(rec[label_offset] as u32);
        for &b in &rec[label_offset + 1..] {
            // Exact byte/255 at the target precision.
            data.push(S::from_f64(b as f64) / denom);
        }
    }
    let images = Tensor::from_vec(&[n, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE], data)?;
    Dataset::new(name, images, labels, class_count)
}

/// Reads one CIFAR-10 binary file.
pub fn load_cifar10_file<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let bytes = fs::read(path)?;
    decode(&bytes, RECORD10, 0, 10, "cifar10", path)
}

/// Reads the standard CIFAR-10 directory layout: `data_batch_1..5.bin`
/// concatenated as the training split, `test_batch.bin` as the test split.
pub fn load_cifar10<S: Scalar>(dir: &Path) -> Result<(Dataset<S>, Dataset<S>)> {
    let mut bytes = Vec::new();
    for i in 1..=5 {
        bytes.extend_from_slice(&fs::read(dir.join(format!("data_batch_{i}.bin")))?);
    }
    let train = decode(&bytes, RECORD10, 0, 10, "cifar10-train", dir)?;
    let test_bytes = fs::read(dir.join("test_batch.bin"))?;
    let test = decode(&test_bytes, RECORD10, 0, 10, "cifar10-test", dir)?;
    Ok((train, test))
}

/// Reads one CIFAR-100 binary file; the coarse label byte is ignored.
pub fn load_cifar100_file<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let bytes = fs::read(path)?;
    decode(&bytes, RECORD100, 1, 100, "cifar100", path)
}

/// Reads the standard CIFAR-100 directory layout (`train.bin`, `test.bin`).
pub fn load_cifar100<S: Scalar>(dir: &Path) -> Result<(Dataset<S>, Dataset<S>)> {
    let train = load_cifar100_file(&dir.join("train.bin"))?;
    let test = load_cifar100_file(&dir.join("test.bin"))?;
    Ok((train, test))
}

/// Writes CIFAR-10 records; `pixels` holds 3072 bytes per sample.
pub fn write_cifar10_file(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * PIXELS {
        return Err(Error::Data(format!(
            "pixel buffer {} does not match {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    let mut out = Vec::with_capacity(labels.len() * RECORD10);
    for (i, &label) in labels.iter().enumerate() {
        out.push(label);
        out.extend_from_slice(&pixels[i * PIXELS..(i + 1) * PIXELS]);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes CIFAR-100 records with explicit coarse and fine labels.
pub fn write_cifar100_file(
    path: &Path,
    coarse: &[u8],
    fine: &[u8],
    pixels: &[u8],
) -> Result<()> {
    if coarse.len() != fine.len() || pixels.len() != fine.len() * PIXELS {
        return Err(Error::Data("label/pixel buffer length mismatch".into()));
    }
    let mut out = Vec::with_capacity(fine.len() * RECORD100);
    for i in 0..fine.len() {
        out.push(coarse[i]);
        out.push(fine[i]);
        out.extend_from_slice(&pixels[i * PIXELS..(i + 1) * PIXELS]);
    }
    fs::write(path, out)?;
    Ok(())
}
