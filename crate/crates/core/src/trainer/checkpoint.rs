//! Flat binary checkpoints: header (magic "FDAL", version, layer count,
//! precision), per-layer parameter tensors, the frozen feedback section, and
//! the training state (velocities, counters, rng position). All integers and
//! values are little-endian.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feedback::Feedback;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::network::Network;
use crate::trainer::TrainState;

const MAGIC: &[u8; 4] = b"FDAL";
const VERSION: u32 = 1;

fn write_tensor<S: Scalar>(out: &mut Vec<u8>, t: &Tensor<S>) {
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn tensor<S: Scalar>(&mut self) -> Result<Tensor<S>> {
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = self.take(count * S::WIDTH)?;
        let mut t = Tensor::zeros(&shape);
        for i in 0..count {
            t.data_mut()[i] = S::read_le(&raw[i * S::WIDTH..]);
        }
        Ok(t)
    }
}

/// Serialized feedback section alone (count-prefixed), used to verify that
/// feedback stays frozen across training.
pub fn feedback_bytes<S: Scalar>(net: &Network<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(net.feedback().len() as u32).to_le_bytes());
    for fb in net.feedback() {
        fb.write_bytes(&mut out);
    }
    out
}

pub fn checkpoint_bytes<S: Scalar>(net: &Network<S>, state: &TrainState<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layer_count() as u32).to_le_bytes());
    out.push(S::PRECISION.tag());

    for layer in net.layers() {
        out.push(layer.tag());
        let tensors = layer.persistent_tensors();
        out.push(tensors.len() as u8);
        for t in tensors {
            write_tensor(&mut out, t);
        }
    }

    out.extend_from_slice(&feedback_bytes(net));

    out.extend_from_slice(&(state.velocities.len() as u32).to_le_bytes());
    for v in &state.velocities {
        write_tensor(&mut out, v);
    }
    out.extend_from_slice(&state.epoch.to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());

    out.extend_from_slice(&state.rng.get_seed());
    out.extend_from_slice(&state.rng.get_stream().to_le_bytes());
    out.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    out
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    net: &Network<S>,
    state: &TrainState<S>,
) -> Result<()> {
    fs::write(path, checkpoint_bytes(net, state))?;
    Ok(())
}

/// Restores parameters, feedback, and training state into a network built
/// from the same spec. Layer types, shapes, and precision must match.
pub fn load_checkpoint<S: Scalar>(
    bytes: &[u8],
    net: &mut Network<S>,
    state: &mut TrainState<S>,
) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let layer_count = r.u32()? as usize;
    if layer_count != net.layer_count() {
        return Err(Error::Format(format!(
            "checkpoint has {layer_count} layers, network has {}",
            net.layer_count()
        )));
    }
    let precision = r.u8()?;
    if precision != S::PRECISION.tag() {
        return Err(Error::Format(format!(
            "checkpoint precision tag {precision} does not match network ({})",
            S::PRECISION.tag()
        )));
    }

    for li in 0..layer_count {
        let tag = r.u8()?;
        let expected_tag = net.layers()[li].tag();
        if tag != expected_tag {
            return Err(Error::Format(format!(
                "layer {li}: checkpoint tag {tag} does not match network tag {expected_tag}"
            )));
        }
        let tensor_count = r.u8()? as usize;
        let mut loaded = Vec::with_capacity(tensor_count);
        for _ in 0..tensor_count {
            loaded.push(r.tensor::<S>()?);
        }
        let slots = net.layers_mut()[li].persistent_tensors_mut();
        if slots.len() != loaded.len() {
            return Err(Error::Format(format!(
                "layer {li}: checkpoint has {} tensors, layer expects {}",
                loaded.len(),
                slots.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(loaded) {
            if slot.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "layer {li}: tensor shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
    }

    let fb_count = r.u32()? as usize;
    if fb_count != net.feedback().len() {
        return Err(Error::Format(format!(
            "checkpoint has {fb_count} feedback matrices, network has {}",
            net.feedback().len()
        )));
    }
    let mut feedback = Vec::with_capacity(fb_count);
    for _ in 0..fb_count {
        feedback.push(Feedback::<S>::read_bytes(bytes, &mut r.pos)?);
    }
    for (slot, fb) in net.feedback_mut().iter_mut().zip(feedback) {
        if slot.rows() != fb.rows() || slot.cols() != fb.cols() {
            return Err(Error::Format("feedback shape mismatch".into()));
        }
        *slot = fb;
    }

    let vel_count = r.u32()? as usize;
    if vel_count != state.velocities.len() {
        return Err(Error::Format(format!(
            "checkpoint has {vel_count} velocity tensors, state has {}",
            state.velocities.len()
        )));
    }
    for i in 0..vel_count {
        let v = r.tensor::<S>()?;
        if v.shape() != state.velocities[i].shape() {
            return Err(Error::Format("velocity shape mismatch".into()));
        }
        state.velocities[i] = v;
    }
    state.epoch = r.u32()?;
    state.step = r.u64()?;

    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    state.rng = rng;

    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(())
}
