//! Network assembly from declarative specs, and the per-strategy backward
//! passes: full back-propagation, feedback alignment (fixed random matrices in
//! place of transposed weights), and direct feedback (each FC block's error
//! projected straight from the last-layer error, with back-propagation kept
//! for the convolutional front).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feedback::{
    binarize_sign, build_product_feedback, build_random_feedback, Feedback, FeedbackInit,
    FeedbackScheme,
};
use crate::layers::{
    ActKind, ActivationLayer, BatchNormLayer, ConvLayer, DropoutLayer, FcLayer, FlattenLayer,
    Layer, MaxPoolLayer, Mode, ParamKind,
};
use crate::scalar::Scalar;
use crate::tensor::{conv_output_dim, Tensor};

/// Credit-assignment rule for the fully-connected tail. Convolutional layers
/// always train by back-propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStrategy {
    Bp,
    Fa,
    Dfa,
    Bdfa,
}

impl FcStrategy {
    pub fn name(self) -> &'static str {
        match self {
            FcStrategy::Bp => "bp",
            FcStrategy::Fa => "fa",
            FcStrategy::Dfa => "dfa",
            FcStrategy::Bdfa => "bdfa",
        }
    }

    /// Accepts the hybrid spellings: on a network with convolutional layers
    /// the direct-feedback strategies are conventionally prefixed with "c".
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "bp" => Some(FcStrategy::Bp),
            "fa" => Some(FcStrategy::Fa),
            "dfa" | "cdfa" => Some(FcStrategy::Dfa),
            "bdfa" | "cbdfa" => Some(FcStrategy::Bdfa),
            _ => None,
        }
    }

    pub fn uses_direct_feedback(self) -> bool {
        matches!(self, FcStrategy::Dfa | FcStrategy::Bdfa)
    }
}

/// One declarative layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm,
    Activation(ActKind),
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Fc {
        out_features: usize,
    },
}

/// Declarative network layout plus strategy assignment.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-sample input shape: `[channels, h, w]` for images, `[dims]` for points.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub fc_strategy: FcStrategy,
    pub feedback_init: FeedbackInit,
}

/// FC-tail block: the FC layer at `fc_idx` plus any batch-norm, activation,
/// and dropout layers up to (excluding) `end`.
#[derive(Debug, Clone, Copy)]
struct FcBlock {
    fc_idx: usize,
    end: usize,
}

pub struct Network<S: Scalar> {
    layers: Vec<Layer<S>>,
    names: Vec<String>,
    fc_strategy: FcStrategy,
    /// FA: one dense matrix per FC layer. DFA/BDFA: one matrix per hidden FC
    /// block, projecting the last-layer error to that block's output.
    feedback: Vec<Feedback<S>>,
    blocks: Vec<FcBlock>,
    fc_start: usize,
    class_count: usize,
    input_shape: Vec<usize>,
    spec_name: String,
}

/// Per-layer-output errors recorded by a backward pass. `errors[i]` is the
/// derivative of the summed batch loss w.r.t. the output of layer `i`.
pub struct BackwardPass<S: Scalar> {
    pub errors: Vec<Option<Tensor<S>>>,
}

fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 over (base, index) so per-layer feedback draws are disjoint.
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<S: Scalar> Network<S> {
    /// Instantiates layers (He-initialized weights drawn from `seed`), checks
    /// the single-FC-tail layout, and builds frozen feedback matrices from the
    /// initial weights.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        if spec.class_count == 0 {
            return Err(Error::Config("class count must be >= 1".into()));
        }
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut names = Vec::with_capacity(spec.layers.len());
        let mut counters: std::collections::HashMap<&'static str, usize> =
            std::collections::HashMap::new();
        let mut shape = spec.input.clone();
        let mut fc_start: Option<usize> = None;

        for (i, ls) in spec.layers.iter().enumerate() {
            let layer: Layer<S> = match *ls {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    if fc_start.is_some() {
                        return Err(Error::Config(
                            "conv layer after the FC tail started".into(),
                        ));
                    }
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => {
                            return Err(Error::Config(format!(
                                "conv layer {i} needs a [c,h,w] input, have {shape:?}"
                            )))
                        }
                    };
                    let oh = conv_output_dim(h, kernel, stride, pad)?;
                    let ow = conv_output_dim(w, kernel, stride, pad)?;
                    shape = vec![out_channels, oh, ow];
                    Layer::Conv(ConvLayer::new(c, out_channels, kernel, stride, pad))
                }
                LayerSpec::BatchNorm => {
                    let channels = shape[0];
                    Layer::BatchNorm(BatchNormLayer::new(channels, 1e-5, 0.9))
                }
                LayerSpec::Activation(kind) => Layer::Activation(ActivationLayer::new(kind)),
                LayerSpec::MaxPool { window, stride } => {
                    if fc_start.is_some() {
                        return Err(Error::Config(
                            "pooling layer after the FC tail started".into(),
                        ));
                    }
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => {
                            return Err(Error::Config(format!(
                                "maxpool layer {i} needs a [c,h,w] input, have {shape:?}"
                            )))
                        }
                    };
                    let oh = conv_output_dim(h, window, stride, 0)?;
                    let ow = conv_output_dim(w, window, stride, 0)?;
                    shape = vec![c, oh, ow];
                    Layer::MaxPool(MaxPoolLayer::new((window, window), stride))
                }
                LayerSpec::Dropout { rate } => Layer::Dropout(DropoutLayer::new(rate)?),
                LayerSpec::Flatten => {
                    if fc_start.is_some() {
                        return Err(Error::Config(
                            "flatten layer after the FC tail started".into(),
                        ));
                    }
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => {
                            return Err(Error::Config(format!(
                                "flatten layer {i} needs a [c,h,w] input, have {shape:?}"
                            )))
                        }
                    };
                    shape = vec![c * h * w];
                    Layer::Flatten(FlattenLayer::new())
                }
                LayerSpec::Fc { out_features } => {
                    let [d] = match shape[..] {
                        [d] => [d],
                        _ => {
                            return Err(Error::Config(format!(
                                "fc layer {i} needs a flat input, have {shape:?} (missing flatten?)"
                            )))
                        }
                    };
                    if fc_start.is_none() {
                        fc_start = Some(i);
                    }
                    shape = vec![out_features];
                    Layer::Fc(FcLayer::new(d, out_features))
                }
            };
            let counter = counters.entry(layer.type_name()).or_insert(0);
            *counter += 1;
            names.push(format!("{}{}", layer.type_name(), counter));
            layers.push(layer);
        }

        let fc_start = fc_start
            .ok_or_else(|| Error::Config("network needs at least one FC layer".into()))?;
        if shape != vec![spec.class_count] {
            return Err(Error::Config(format!(
                "network output {shape:?} does not match class count {}",
                spec.class_count
            )));
        }

        // FC-tail blocks: one per FC layer, spanning to the next FC layer.
        let fc_indices: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Fc(_)))
            .map(|(i, _)| i)
            .collect();
        let mut blocks = Vec::with_capacity(fc_indices.len());
        for (ord, &fc_idx) in fc_indices.iter().enumerate() {
            let end = fc_indices.get(ord + 1).copied().unwrap_or(layers.len());
            blocks.push(FcBlock { fc_idx, end });
        }

        // He initialization, layer order fixed.
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(0);
        for layer in &mut layers {
            match layer {
                Layer::Fc(fc) => fc.init_he(&mut init_rng),
                Layer::Conv(conv) => conv.init_he(&mut init_rng),
                _ => {}
            }
        }

        let mut net = Network {
            layers,
            names,
            fc_strategy: spec.fc_strategy,
            feedback: Vec::new(),
            blocks,
            fc_start,
            class_count: spec.class_count,
            input_shape: spec.input.clone(),
            spec_name: spec.name.clone(),
        };
        net.build_feedback(spec.feedback_init)?;
        Ok(net)
    }

    fn fc_layer(&self, idx: usize) -> &FcLayer<S> {
        match &self.layers[idx] {
            Layer::Fc(fc) => fc,
            _ => unreachable!("block index does not point at an FC layer"),
        }
    }

    fn build_feedback(&mut self, init: FeedbackInit) -> Result<()> {
        self.feedback.clear();
        match self.fc_strategy {
            FcStrategy::Bp => {}
            FcStrategy::Fa => {
                if !init.scheme.is_random() {
                    return Err(Error::Config(
                        "feedback alignment needs a random feedback scheme; the product \
                         chain does not match per-layer transposed-weight shapes"
                            .into(),
                    ));
                }
                for (ord, block) in self.blocks.iter().enumerate() {
                    let fc = self.fc_layer(block.fc_idx);
                    let m = build_random_feedback::<S>(
                        fc.in_dim(),
                        fc.out_dim(),
                        init.scheme,
                        derive_seed(init.seed, ord as u64),
                    )?;
                    self.feedback.push(Feedback::Dense(m));
                }
            }
            FcStrategy::Dfa | FcStrategy::Bdfa => {
                let binary = self.fc_strategy == FcStrategy::Bdfa;
                let hidden = self.blocks.len().saturating_sub(1);
                for ord in 0..hidden {
                    let rows = self.fc_layer(self.blocks[ord].fc_idx).out_dim();
                    let dense = match init.scheme {
                        FeedbackScheme::RandomUniform | FeedbackScheme::RandomHe => {
                            build_random_feedback::<S>(
                                rows,
                                self.class_count,
                                init.scheme,
                                derive_seed(init.seed, ord as u64),
                            )?
                        }
                        FeedbackScheme::Product | FeedbackScheme::SignProduct => {
                            let chain: Vec<&Tensor<S>> = self.blocks[ord + 1..]
                                .iter()
                                .map(|b| &self.fc_layer(b.fc_idx).weight)
                                .collect();
                            let product = build_product_feedback(&chain)?;
                            if init.scheme == FeedbackScheme::SignProduct && !binary {
                                binarize_sign(&product).dense_expand::<S>()
                            } else {
                                product
                            }
                        }
                    };
                    if binary {
                        self.feedback.push(Feedback::Binary(binarize_sign(&dense)));
                    } else {
                        self.feedback.push(Feedback::Dense(dense));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn forward(
        &mut self,
        x: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        if x.shape().len() != self.input_shape.len() + 1
            || x.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::dim("network_forward", x.shape(), &self.input_shape));
        }
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode, rng)?;
        }
        Ok(cur)
    }

    /// Backward pass under the configured strategy; fills every parameter
    /// gradient and returns the recorded per-layer errors.
    pub fn backward(&mut self, e_last: &Tensor<S>) -> Result<BackwardPass<S>> {
        match self.fc_strategy {
            FcStrategy::Bp => self.backward_chain(e_last, false),
            FcStrategy::Fa => self.backward_chain(e_last, true),
            FcStrategy::Dfa | FcStrategy::Bdfa => {
                let order: Vec<usize> = (0..self.blocks.len()).collect();
                self.backward_direct(e_last, &order)
            }
        }
    }

    /// Plain back-propagation regardless of the configured strategy, for
    /// gradient diagnostics (alignment, gradient checks).
    pub fn backward_bp(&mut self, e_last: &Tensor<S>) -> Result<BackwardPass<S>> {
        self.backward_chain(e_last, false)
    }

    /// Direct-feedback backward with an explicit FC-block processing order
    /// (the result is order-invariant; exposed so that can be verified).
    pub fn backward_with_fc_order(
        &mut self,
        e_last: &Tensor<S>,
        order: &[usize],
    ) -> Result<BackwardPass<S>> {
        if !self.fc_strategy.uses_direct_feedback() {
            return Err(Error::Config(
                "explicit FC ordering applies to direct-feedback strategies only".into(),
            ));
        }
        self.backward_direct(e_last, order)
    }

    /// Sequential error chain through every layer; FC layers optionally route
    /// the error through their fixed random feedback instead of the weight.
    fn backward_chain(&mut self, e_last: &Tensor<S>, use_fa: bool) -> Result<BackwardPass<S>> {
        let n = self.layers.len();
        let mut errors: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut cur = e_last.clone();
        let mut fc_ord = self.blocks.len();
        for i in (0..n).rev() {
            errors[i] = Some(cur.clone());
            cur = match &mut self.layers[i] {
                Layer::Fc(fc) if use_fa => {
                    fc_ord -= 1;
                    fc.gradient(&cur)?;
                    self.feedback[fc_ord].project(&cur)?
                }
                layer => layer.backward(&cur)?,
            };
        }
        Ok(BackwardPass { errors })
    }

    /// Direct feedback over the FC tail plus back-propagation through the
    /// convolutional front. Each block's output error comes straight from the
    /// last-layer error (the top block uses it as-is); the error entering the
    /// conv stack is the first FC layer's error pushed through that layer's
    /// forward weight transpose.
    fn backward_direct(&mut self, e_last: &Tensor<S>, order: &[usize]) -> Result<BackwardPass<S>> {
        let t_count = self.blocks.len();
        let mut seen = vec![false; t_count];
        for &j in order {
            if j >= t_count || seen[j] {
                return Err(Error::Config(format!(
                    "FC order {order:?} is not a permutation of 0..{t_count}"
                )));
            }
            seen[j] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Config(format!(
                "FC order {order:?} is not a permutation of 0..{t_count}"
            )));
        }

        let n = self.layers.len();
        let mut errors: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut junction: Option<Tensor<S>> = None;
        for &j in order {
            let block = self.blocks[j];
            let mut cur = if j + 1 == t_count {
                e_last.clone()
            } else {
                self.feedback[j].project(e_last)?
            };
            for i in (block.fc_idx..block.end).rev() {
                errors[i] = Some(cur.clone());
                if i == block.fc_idx {
                    let Layer::Fc(fc) = &mut self.layers[i] else {
                        unreachable!("block start is an FC layer");
                    };
                    fc.gradient(&cur)?;
                    if j == 0 && self.fc_start > 0 {
                        junction = Some(fc.backward_error(&cur)?);
                    }
                } else {
                    cur = self.layers[i].backward(&cur)?;
                }
            }
        }

        if self.fc_start > 0 {
            let mut cur = junction.expect("bottom FC block was processed");
            for i in (0..self.fc_start).rev() {
                errors[i] = Some(cur.clone());
                cur = self.layers[i].backward(&cur)?;
            }
        }
        Ok(BackwardPass { errors })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn fc_strategy(&self) -> FcStrategy {
        self.fc_strategy
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn spec_name(&self) -> &str {
        &self.spec_name
    }

    pub fn feedback(&self) -> &[Feedback<S>] {
        &self.feedback
    }

    pub(crate) fn feedback_mut(&mut self) -> &mut Vec<Feedback<S>> {
        &mut self.feedback
    }

    /// Index of the first FC layer.
    pub fn fc_start(&self) -> usize {
        self.fc_start
    }

    /// Layer indices of the FC layers, bottom-up.
    pub fn fc_layer_indices(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.fc_idx).collect()
    }

    /// Names of the blocks that carry direct feedback (hidden FC layers).
    pub fn feedback_layer_names(&self) -> Vec<&str> {
        match self.fc_strategy {
            FcStrategy::Fa => self
                .blocks
                .iter()
                .map(|b| self.names[b.fc_idx].as_str())
                .collect(),
            FcStrategy::Dfa | FcStrategy::Bdfa => self
                .blocks
                .iter()
                .take(self.blocks.len().saturating_sub(1))
                .map(|b| self.names[b.fc_idx].as_str())
                .collect(),
            FcStrategy::Bp => Vec::new(),
        }
    }

    /// Visits `(kind, param, grad)` for every trainable tensor in layer order.
    pub fn visit_params_grads_mut(
        &mut self,
        f: &mut impl FnMut(ParamKind, &mut Tensor<S>, &Tensor<S>),
    ) {
        for layer in &mut self.layers {
            layer.visit_params_grads_mut(f);
        }
    }

    /// Vector of trainable tensor shapes, in visitation order.
    pub fn trainable_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for layer in &self.layers {
            layer.visit_params(&mut |_, t| shapes.push(t.shape().to_vec()));
        }
        shapes
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_shapes().len()
    }

    /// The `idx`-th trainable tensor (layer order), for gradient checking.
    pub fn trainable_tensor_mut(&mut self, idx: usize) -> Option<&mut Tensor<S>> {
        let mut remaining = idx;
        let mut loc = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let count = match layer {
                Layer::Fc(_) | Layer::Conv(_) | Layer::BatchNorm(_) => 2,
                _ => 0,
            };
            if remaining < count {
                loc = Some((li, remaining));
                break;
            }
            remaining -= count;
        }
        let (li, pi) = loc?;
        match &mut self.layers[li] {
            Layer::Fc(l) => Some(if pi == 0 { &mut l.weight } else { &mut l.bias }),
            Layer::Conv(l) => Some(if pi == 0 { &mut l.kernel } else { &mut l.bias }),
            Layer::BatchNorm(l) => Some(if pi == 0 { &mut l.gamma } else { &mut l.beta }),
            _ => None,
        }
    }

    /// Gradient snapshot per parameterized layer: `(layer name, flattened
    /// gradient values)` with a layer's tensors concatenated in param order.
    pub fn grad_snapshot(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter().zip(&self.names) {
            if !layer.has_params() {
                continue;
            }
            let mut flat = Vec::new();
            layer.visit_grads(&mut |_, g| {
                flat.extend(g.data().iter().map(|v| v.as_f64()));
            });
            out.push((name.clone(), flat));
        }
        out
    }

    /// Metadata for the `idx`-th trainable tensor: `(layer name, "weight"|"bias")`.
    pub fn trainable_meta(&self) -> Vec<(String, &'static str)> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter().zip(&self.names) {
            layer.visit_params(&mut |kind, _| {
                out.push((
                    name.clone(),
                    match kind {
                        ParamKind::Weight => "weight",
                        ParamKind::Bias => "bias",
                    },
                ));
            });
        }
        out
    }
}
