//! Fixed feedback matrices for error propagation: random matrices that stand
//! in for transposed weights, direct-feedback matrices built as the product of
//! the initial weight chain, and their sign-binarized bit-packed form.
//!
//! Matrices are frozen at construction: there is no mutation API, and training
//! never rewrites them. A matrix is stored "transposed-ready" as
//! `[rows = N_i, cols = N_source]` so applying it to a batch of error rows is
//! a dot of contiguous rows. Projections accumulate the source index
//! ascending; the binary path adds or subtracts the same terms in the same
//! order, which makes it bit-identical to projecting the dense +-1 expansion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tensor::Tensor;

/// How feedback values are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackScheme {
    /// Uniform in `[-a, a]` with `a = sqrt(6 / (rows + cols))`.
    RandomUniform,
    /// Zero-mean Gaussian with std `sqrt(2 / cols)`.
    RandomHe,
    /// Product of the initial transposed forward weights above the layer.
    Product,
    /// Sign of the product chain, stored as +-1.
    SignProduct,
}

impl FeedbackScheme {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackScheme::RandomUniform => "random-uniform",
            FeedbackScheme::RandomHe => "random",
            FeedbackScheme::Product => "product",
            FeedbackScheme::SignProduct => "sign-product",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "random" | "random-he" => Some(FeedbackScheme::RandomHe),
            "random-uniform" => Some(FeedbackScheme::RandomUniform),
            "product" => Some(FeedbackScheme::Product),
            "sign-product" => Some(FeedbackScheme::SignProduct),
            _ => None,
        }
    }

    pub fn is_random(self) -> bool {
        matches!(
            self,
            FeedbackScheme::RandomUniform | FeedbackScheme::RandomHe
        )
    }
}

/// Scheme plus the seed that fully determines random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackInit {
    pub scheme: FeedbackScheme,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackOrigin {
    Random,
    Product,
}

/// Dense frozen feedback matrix, stored transposed-ready (`[N_i, N_source]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrix<S: Scalar> {
    values: Tensor<S>,
    origin: FeedbackOrigin,
}

impl<S: Scalar> FeedbackMatrix<S> {
    pub fn from_tensor(values: Tensor<S>, origin: FeedbackOrigin) -> Result<Self> {
        values.dims2("feedback_matrix")?;
        values.ensure_finite("feedback_matrix")?;
        Ok(FeedbackMatrix { values, origin })
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<S> {
        &self.values
    }

    pub fn origin(&self) -> FeedbackOrigin {
        self.origin
    }
}

/// Sign-only feedback, one bit per entry (set bit = +1), packed row-major,
/// LSB first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFeedbackMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BinaryFeedbackMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn packed_bits(&self) -> &[u8] {
        &self.bits
    }

    /// True when the entry is +1.
    pub fn is_positive(&self, r: usize, c: usize) -> bool {
        let idx = r * self.cols + c;
        self.bits[idx / 8] & (1 << (idx % 8)) != 0
    }

    /// Copy with every sign flipped.
    pub fn negated(&self) -> Self {
        let mut bits: Vec<u8> = self.bits.iter().map(|b| !b).collect();
        let tail = (self.rows * self.cols) % 8;
        if tail != 0 {
            if let Some(last) = bits.last_mut() {
                *last &= (1u8 << tail) - 1;
            }
        }
        BinaryFeedbackMatrix {
            rows: self.rows,
            cols: self.cols,
            bits,
        }
    }

    /// Dense +-1 expansion at the requested precision.
    pub fn dense_expand<S: Scalar>(&self) -> FeedbackMatrix<S> {
        let mut values = Tensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for c in 0..self.cols {
                values.data_mut()[r * self.cols + c] = if self.is_positive(r, c) {
                    S::one()
                } else {
                    -S::one()
                };
            }
        }
        FeedbackMatrix {
            values,
            origin: FeedbackOrigin::Product,
        }
    }
}

/// Draws a frozen random feedback matrix; the seed fully determines it.
pub fn build_random_feedback<S: Scalar>(
    rows: usize,
    cols: usize,
    scheme: FeedbackScheme,
    seed: u64,
) -> Result<FeedbackMatrix<S>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension {
            op: "build_random_feedback",
            lhs: vec![rows],
            rhs: vec![cols],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Tensor::zeros(&[rows, cols]);
    match scheme {
        FeedbackScheme::RandomUniform => {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            for v in values.data_mut() {
                *v = S::from_f64(rng.random_range(-a..a));
            }
        }
        FeedbackScheme::RandomHe => {
            let std = (2.0 / cols as f64).sqrt();
            for v in values.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = S::from_f64(z * std);
            }
        }
        FeedbackScheme::Product | FeedbackScheme::SignProduct => {
            return Err(Error::Config(
                "product feedback schemes are built from the weight chain, not sampled".into(),
            ));
        }
    }
    Ok(FeedbackMatrix {
        values,
        origin: FeedbackOrigin::Random,
    })
}

/// Builds the direct-feedback matrix for a layer as the product of the weight
/// chain above it, ordered bottom-up (`weights[0]` maps the layer's own
/// output upward). Stored transposed-ready: `W_0^T * W_1^T * ... * W_last^T`.
pub fn build_product_feedback<S: Scalar>(weights: &[&Tensor<S>]) -> Result<FeedbackMatrix<S>> {
    let first = weights
        .first()
        .ok_or_else(|| Error::Config("product feedback needs at least one weight".into()))?;
    let mut acc = first.transpose()?;
    for w in &weights[1..] {
        acc = acc.matmul(&w.transpose()?)?;
    }
    Ok(FeedbackMatrix {
        values: acc,
        origin: FeedbackOrigin::Product,
    })
}

/// Sign-binarizes a dense feedback matrix; zero maps to +1.
pub fn binarize_sign<S: Scalar>(m: &FeedbackMatrix<S>) -> BinaryFeedbackMatrix {
    let rows = m.rows();
    let cols = m.cols();
    let mut bits = vec![0u8; (rows * cols + 7) / 8];
    for (idx, &v) in m.values.data().iter().enumerate() {
        if v >= S::zero() {
            bits[idx / 8] |= 1 << (idx % 8);
        }
    }
    BinaryFeedbackMatrix { rows, cols, bits }
}

/// `out[b][r] = sum_j e[b][j] * m[r][j]`, `j` ascending.
pub fn project<S: Scalar>(m: &FeedbackMatrix<S>, e: &Tensor<S>) -> Result<Tensor<S>> {
    let (batch, width) = e.dims2("feedback_project")?;
    let rows = m.rows();
    let cols = m.cols();
    if width != cols {
        return Err(Error::dim("feedback_project", e.shape(), m.values.shape()));
    }
    let mut out = Tensor::zeros(&[batch, rows]);
    for b in 0..batch {
        let e_row = &e.data()[b * cols..(b + 1) * cols];
        let out_row = &mut out.data_mut()[b * rows..(b + 1) * rows];
        for (r, o) in out_row.iter_mut().enumerate() {
            let v_row = &m.values.data()[r * cols..(r + 1) * cols];
            let mut acc = S::zero();
            for j in 0..cols {
                acc += e_row[j] * v_row[j];
            }
            *o = acc;
        }
    }
    out.ensure_finite("feedback_project")?;
    Ok(out)
}

/// Binary projection: adds or subtracts each error term instead of
/// multiplying, in the same ascending order as [`project`].
pub fn project_binary<S: Scalar>(m: &BinaryFeedbackMatrix, e: &Tensor<S>) -> Result<Tensor<S>> {
    let (batch, width) = e.dims2("feedback_project")?;
    let rows = m.rows;
    let cols = m.cols;
    if width != cols {
        return Err(Error::Dimension {
            op: "feedback_project",
            lhs: e.shape().to_vec(),
            rhs: vec![rows, cols],
        });
    }
    let mut out = Tensor::zeros(&[batch, rows]);
    for b in 0..batch {
        let e_row = &e.data()[b * cols..(b + 1) * cols];
        let out_row = &mut out.data_mut()[b * rows..(b + 1) * rows];
        for (r, o) in out_row.iter_mut().enumerate() {
            let base = r * cols;
            let mut acc = S::zero();
            for (j, &ev) in e_row.iter().enumerate() {
                let idx = base + j;
                if m.bits[idx / 8] & (1 << (idx % 8)) != 0 {
                    acc += ev;
                } else {
                    acc -= ev;
                }
            }
            *o = acc;
        }
    }
    out.ensure_finite("feedback_project")?;
    Ok(out)
}

/// Error through a random feedback matrix standing in for the transposed
/// weight: `(e_next projected) ⊙ f'`.
pub fn fa_error<S: Scalar>(
    r: &FeedbackMatrix<S>,
    e_next: &Tensor<S>,
    fprime: &Tensor<S>,
) -> Result<Tensor<S>> {
    project(r, e_next)?.hadamard(fprime)
}

/// Direct feedback: layer error straight from the last-layer error.
pub fn dfa_error<S: Scalar>(
    d: &FeedbackMatrix<S>,
    e_last: &Tensor<S>,
    fprime: &Tensor<S>,
) -> Result<Tensor<S>> {
    project(d, e_last)?.hadamard(fprime)
}

/// Direct feedback through a sign matrix; equals [`dfa_error`] on the dense
/// +-1 expansion bit-exactly.
pub fn bdfa_error<S: Scalar>(
    b: &BinaryFeedbackMatrix,
    e_last: &Tensor<S>,
    fprime: &Tensor<S>,
) -> Result<Tensor<S>> {
    project_binary(b, e_last)?.hadamard(fprime)
}

/// Payload bytes of the packed sign matrix (excluding any header).
pub fn packed_size_bytes(m: &BinaryFeedbackMatrix) -> usize {
    (m.rows * m.cols + 7) / 8
}

/// Bytes of the dense representation at the given precision.
pub fn dense_size_bytes(rows: usize, cols: usize, precision: Precision) -> usize {
    rows * cols * precision.bytes()
}

/// Either storage form, as held by a network per fed layer.
#[derive(Debug, Clone)]
pub enum Feedback<S: Scalar> {
    Dense(FeedbackMatrix<S>),
    Binary(BinaryFeedbackMatrix),
}

impl<S: Scalar> Feedback<S> {
    pub fn rows(&self) -> usize {
        match self {
            Feedback::Dense(m) => m.rows(),
            Feedback::Binary(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Feedback::Dense(m) => m.cols(),
            Feedback::Binary(m) => m.cols(),
        }
    }

    pub fn project(&self, e: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Feedback::Dense(m) => project(m, e),
            Feedback::Binary(m) => project_binary(m, e),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Feedback::Binary(_))
    }

    /// Serialized form: tag u8 (0 dense, 1 packed), rows u32, cols u32, then
    /// raw little-endian values or packed bits (row-major, LSB first).
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        match self {
            Feedback::Dense(m) => {
                out.push(0);
                out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
                out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
                for &v in m.values.data() {
                    v.write_le(out);
                }
            }
            Feedback::Binary(m) => {
                out.push(1);
                out.extend_from_slice(&(m.rows as u32).to_le_bytes());
                out.extend_from_slice(&(m.cols as u32).to_le_bytes());
                out.extend_from_slice(&m.bits);
            }
        }
    }

    pub fn read_bytes(bytes: &[u8], pos: &mut usize) -> Result<Self> {
        let need = |have: usize, want: usize| -> Result<()> {
            if have < want {
                Err(Error::Format(format!(
                    "feedback section truncated: expected {want} more bytes, have {have}"
                )))
            } else {
                Ok(())
            }
        };
        need(bytes.len() - *pos, 9)?;
        let tag = bytes[*pos];
        let rows = u32::from_le_bytes(bytes[*pos + 1..*pos + 5].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[*pos + 5..*pos + 9].try_into().unwrap()) as usize;
        *pos += 9;
        match tag {
            0 => {
                let count = rows * cols;
                need(bytes.len() - *pos, count * S::WIDTH)?;
                let mut values = Tensor::zeros(&[rows, cols]);
                for i in 0..count {
                    values.data_mut()[i] = S::read_le(&bytes[*pos + i * S::WIDTH..]);
                }
                *pos += count * S::WIDTH;
                Ok(Feedback::Dense(FeedbackMatrix {
                    values,
                    origin: FeedbackOrigin::Random,
                }))
            }
            1 => {
                let len = (rows * cols + 7) / 8;
                need(bytes.len() - *pos, len)?;
                let bits = bytes[*pos..*pos + len].to_vec();
                *pos += len;
                Ok(Feedback::Binary(BinaryFeedbackMatrix { rows, cols, bits }))
            }
            t => Err(Error::Format(format!("unknown feedback tag {t}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = build_random_feedback::<f32>(16, 10, FeedbackScheme::RandomHe, 99).unwrap();
        let b = build_random_feedback::<f32>(16, 10, FeedbackScheme::RandomHe, 99).unwrap();
        for (x, y) in a.values().data().iter().zip(b.values().data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn he_scheme_sample_std_near_target() {
        let m = build_random_feedback::<f64>(1000, 10, FeedbackScheme::RandomHe, 7).unwrap();
        let n = m.values().len() as f64;
        let mean: f64 = m.values().data().iter().sum::<f64>() / n;
        let var: f64 = m
            .values()
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let target = (2.0f64 / 10.0).sqrt();
        assert!(
            (var.sqrt() - target).abs() < 0.1 * target,
            "std {} vs {}",
            var.sqrt(),
            target
        );
    }

    #[test]
    fn different_seeds_differ_almost_everywhere() {
        let a = build_random_feedback::<f64>(50, 20, FeedbackScheme::RandomUniform, 1).unwrap();
        let b = build_random_feedback::<f64>(50, 20, FeedbackScheme::RandomUniform, 2).unwrap();
        let differing = a
            .values()
            .data()
            .iter()
            .zip(b.values().data())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing as f64 >= 0.99 * 1000.0);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(build_random_feedback::<f32>(0, 5, FeedbackScheme::RandomHe, 0).is_err());
        assert!(build_random_feedback::<f32>(5, 0, FeedbackScheme::RandomHe, 0).is_err());
    }

    #[test]
    fn single_weight_product_is_its_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_tensor(&mut rng, &[3, 5]);
        let d = build_product_feedback(&[&w]).unwrap();
        assert_eq!(d.values().data(), w.transpose().unwrap().data());
        assert_eq!(d.origin(), FeedbackOrigin::Product);
    }

    #[test]
    fn identity_chain_gives_identity() {
        let i = Tensor::<f64>::identity(4);
        let d = build_product_feedback(&[&i, &i, &i]).unwrap();
        assert_eq!(d.values().data(), Tensor::<f64>::identity(4).data());
    }

    #[test]
    fn product_matches_sequential_backprop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Chain 6 -> 4 -> 3: W1 maps 6 to 4, W2 maps 4 to 3.
        let w1 = random_tensor(&mut rng, &[4, 6]);
        let w2 = random_tensor(&mut rng, &[3, 4]);
        let d = build_product_feedback(&[&w1, &w2]).unwrap();
        assert_eq!(d.values().shape(), &[6, 3]);

        // Explicit matmul oracle for the stored transposed product.
        let oracle = w1
            .transpose()
            .unwrap()
            .matmul(&w2.transpose().unwrap())
            .unwrap();
        for (a, b) in d.values().data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Projection equals two sequential transposed-weight steps.
        let e = random_tensor(&mut rng, &[2, 3]);
        let direct = project(&d, &e).unwrap();
        let seq = e.matmul(&w2).unwrap().matmul(&w1).unwrap();
        for (a, b) in direct.data().iter().zip(seq.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_composable_chain_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w1 = random_tensor(&mut rng, &[4, 6]);
        let w2 = random_tensor(&mut rng, &[3, 5]);
        assert!(matches!(
            build_product_feedback(&[&w1, &w2]).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn binarize_sign_examples() {
        let m = FeedbackMatrix::from_tensor(
            Tensor::<f64>::from_f64_slice(&[2, 2], &[0.5, -0.2, 0.0, 3.1]).unwrap(),
            FeedbackOrigin::Random,
        )
        .unwrap();
        let b = binarize_sign(&m);
        assert!(b.is_positive(0, 0));
        assert!(!b.is_positive(0, 1));
        assert!(b.is_positive(1, 0)); // sign(0) = +1
        assert!(b.is_positive(1, 1));

        let neg = FeedbackMatrix::from_tensor(
            Tensor::<f64>::filled(&[3, 3], -1.5),
            FeedbackOrigin::Random,
        )
        .unwrap();
        let bn = binarize_sign(&neg);
        for r in 0..3 {
            for c in 0..3 {
                assert!(!bn.is_positive(r, c));
            }
        }
    }

    #[test]
    fn pack_unpack_round_trip_equals_sign() {
        let m = build_random_feedback::<f64>(13, 7, FeedbackScheme::RandomUniform, 10).unwrap();
        let packed = binarize_sign(&m);
        let dense = packed.dense_expand::<f64>();
        for r in 0..13 {
            for c in 0..7 {
                let want = if m.values().data()[r * 7 + c] >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                assert_eq!(dense.values().data()[r * 7 + c], want);
            }
        }
    }

    #[test]
    fn binarization_is_idempotent() {
        let m = build_random_feedback::<f32>(9, 11, FeedbackScheme::RandomHe, 3).unwrap();
        let once = binarize_sign(&m);
        let twice = binarize_sign(&once.dense_expand::<f32>());
        assert_eq!(once, twice);
    }

    #[test]
    fn fa_error_reduces_to_backprop_when_feedback_equals_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_tensor(&mut rng, &[4, 6]);
        let r =
            FeedbackMatrix::from_tensor(w.transpose().unwrap(), FeedbackOrigin::Random).unwrap();
        let e = random_tensor(&mut rng, &[3, 4]);
        let fprime = random_tensor(&mut rng, &[3, 6]);

        let fa = fa_error(&r, &e, &fprime).unwrap();
        let bp = e.matmul(&w).unwrap().hadamard(&fprime).unwrap();
        for (a, b) in fa.data().iter().zip(bp.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_error_projects_to_zero() {
        let d = build_random_feedback::<f64>(8, 4, FeedbackScheme::RandomHe, 12).unwrap();
        let e = Tensor::zeros(&[2, 4]);
        let fprime = Tensor::filled(&[2, 8], 1.0);
        let out = dfa_error(&d, &e, &fprime).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_feedback_case() {
        let d = FeedbackMatrix::from_tensor(
            Tensor::<f64>::from_f64_slice(&[1, 1], &[2.5]).unwrap(),
            FeedbackOrigin::Random,
        )
        .unwrap();
        let e = Tensor::from_f64_slice(&[1, 1], &[3.0]).unwrap();
        let fprime = Tensor::from_f64_slice(&[1, 1], &[0.5]).unwrap();
        let out = dfa_error(&d, &e, &fprime).unwrap();
        assert_eq!(out.data(), &[2.5 * 3.0 * 0.5]);
    }

    #[test]
    fn all_positive_binary_sums_error_rows() {
        let m = FeedbackMatrix::from_tensor(
            Tensor::<f32>::filled(&[3, 4], 1.0),
            FeedbackOrigin::Random,
        )
        .unwrap();
        let b = binarize_sign(&m);
        let e =
            Tensor::<f32>::from_f64_slice(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25, 0.25])
                .unwrap();
        let fprime = Tensor::<f32>::filled(&[2, 3], 1.0);
        let out = bdfa_error(&b, &e, &fprime).unwrap();
        for r in 0..3 {
            assert_eq!(out.data()[r], 10.0);
            assert_eq!(out.data()[3 + r], 0.0);
        }
    }

    #[test]
    fn binary_equals_dense_expansion_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..50 {
            let rows = rng.random_range(1..32usize);
            let cols = rng.random_range(1..32usize);
            let batch = rng.random_range(1..16usize);
            let seed: u64 = rng.random();
            let dense_src =
                build_random_feedback::<f32>(rows, cols, FeedbackScheme::RandomHe, seed).unwrap();
            let packed = binarize_sign(&dense_src);
            let expanded = packed.dense_expand::<f32>();

            let e = Tensor::<f32>::from_vec(
                &[batch, cols],
                (0..batch * cols)
                    .map(|_| rng.random_range(-1.0f32..1.0))
                    .collect(),
            )
            .unwrap();
            let fprime = Tensor::<f32>::from_vec(
                &[batch, rows],
                (0..batch * rows)
                    .map(|_| rng.random_range(0.0f32..1.0))
                    .collect(),
            )
            .unwrap();

            let via_binary = bdfa_error(&packed, &e, &fprime).unwrap();
            let via_dense = dfa_error(&expanded, &e, &fprime).unwrap();
            for (a, b) in via_binary.data().iter().zip(via_dense.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn negating_all_bits_negates_the_error() {
        let m = build_random_feedback::<f64>(6, 5, FeedbackScheme::RandomHe, 31).unwrap();
        let b = binarize_sign(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let e = random_tensor(&mut rng, &[2, 5]);
        let fprime = random_tensor(&mut rng, &[2, 6]);
        let pos = bdfa_error(&b, &e, &fprime).unwrap();
        let neg = bdfa_error(&b.negated(), &e, &fprime).unwrap();
        for (a, bl) in pos.data().iter().zip(neg.data()) {
            assert_eq!(*a, -bl);
        }
    }

    #[test]
    fn four_dimensional_targets_are_rejected() {
        let d = build_random_feedback::<f32>(4, 4, FeedbackScheme::RandomHe, 1).unwrap();
        let e = Tensor::<f32>::zeros(&[1, 4, 2, 2]);
        let fp = Tensor::<f32>::zeros(&[1, 4, 2, 2]);
        assert!(matches!(
            dfa_error(&d, &e, &fp).unwrap_err(),
            Error::Rank { .. }
        ));
    }

    #[test]
    fn storage_sizes() {
        let m = build_random_feedback::<f32>(64, 10, FeedbackScheme::RandomHe, 0).unwrap();
        let b = binarize_sign(&m);
        assert_eq!(packed_size_bytes(&b), 80);
        assert_eq!(dense_size_bytes(64, 10, Precision::F32), 2560);
        let reduction = 1.0 - 80.0 / 2560.0;
        assert_eq!(reduction, 0.96875);

        let m81 = build_random_feedback::<f32>(8, 1, FeedbackScheme::RandomHe, 0).unwrap();
        assert_eq!(packed_size_bytes(&binarize_sign(&m81)), 1);
        let m91 = build_random_feedback::<f32>(9, 1, FeedbackScheme::RandomHe, 0).unwrap();
        assert_eq!(packed_size_bytes(&binarize_sign(&m91)), 2);
    }

    #[test]
    fn serialization_round_trip() {
        let dense = Feedback::Dense(
            build_random_feedback::<f32>(5, 3, FeedbackScheme::RandomHe, 8).unwrap(),
        );
        let binary = Feedback::<f32>::Binary(binarize_sign(
            &build_random_feedback::<f32>(7, 9, FeedbackScheme::RandomUniform, 9).unwrap(),
        ));
        for fb in [dense, binary] {
            let mut bytes = Vec::new();
            fb.write_bytes(&mut bytes);
            let mut pos = 0;
            let back = Feedback::<f32>::read_bytes(&bytes, &mut pos).unwrap();
            assert_eq!(pos, bytes.len());
            let mut again = Vec::new();
            back.write_bytes(&mut again);
            assert_eq!(bytes, again);
        }
    }
}
