//! Minimal neural-network engine: explicit forward/backward passes over a
//! fixed layer vocabulary (conv2d, relu, maxpool, flatten, dense, softmax)
//! and a cost-scaled SGD update.
//!
//! All arithmetic is f64. Hidden activations are rectified linear with
//! σ'(0) := 0; the output layer is softmax with cross-entropy loss, so the
//! error at the logits is `softmax(logits) − one_hot(label)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::LabelledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training hyper-parameters. `seed` fixes shuffling, so a run is a pure
/// function of (network, data, hyper-parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {}",
                self.eta
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One network layer; parameterized layers own their weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Valid-padding, stride-1 cross-correlation. Weights are
    /// filters×in_channels×k×k, biases one per filter.
    Conv2d { weights: Tensor, biases: Tensor },
    Relu,
    /// Non-overlapping max pooling; window and stride are both `size` and
    /// trailing rows/columns that do not fill a window are dropped.
    MaxPool2d { size: usize },
    Flatten,
    /// Fully connected: weights are outputs×inputs, biases one per output.
    Dense { weights: Tensor, biases: Tensor },
    /// Output marker. Forward passes logits through; the softmax itself is
    /// folded into the loss (see [`output_error`]).
    Softmax,
}

/// Bounded uniform init: U(−s, s) with s = sqrt(6 / (fan_in + fan_out)).
fn glorot_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-s..s)).collect();
    Tensor::new(shape, data).expect("shape/data constructed consistently")
}

impl Layer {
    pub fn conv2d_seeded(filters: usize, in_channels: usize, kernel: usize, seed: u64) -> Layer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = in_channels * kernel * kernel;
        let fan_out = filters * kernel * kernel;
        Layer::Conv2d {
            weights: glorot_uniform(
                &mut rng,
                vec![filters, in_channels, kernel, kernel],
                fan_in,
                fan_out,
            ),
            biases: Tensor::zeros(vec![filters]),
        }
    }

    pub fn dense_seeded(outputs: usize, inputs: usize, seed: u64) -> Layer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Layer::Dense {
            weights: glorot_uniform(&mut rng, vec![outputs, inputs], inputs, outputs),
            biases: Tensor::zeros(vec![outputs]),
        }
    }

    /// Weight/bias pair for parameterized layers.
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2d { weights, biases } | Layer::Dense { weights, biases } => {
                Some((weights, biases))
            }
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv2d { weights, biases } | Layer::Dense { weights, biases } => {
                Some((weights, biases))
            }
            _ => None,
        }
    }

    fn output_shape(&self, input: &[usize], layer: usize) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            layer,
            expected,
            actual: input.to_vec(),
        };
        match self {
            Layer::Conv2d { weights, .. } => {
                let ws = weights.shape();
                let (f, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                if input.len() != 3 || input[0] != ic || input[1] < kh || input[2] < kw {
                    return Err(mismatch(vec![ic, kh, kw]));
                }
                Ok(vec![f, input[1] - kh + 1, input[2] - kw + 1])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2d { size } => {
                if input.len() != 3 || input[1] < *size || input[2] < *size {
                    return Err(mismatch(vec![1, *size, *size]));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense { weights, .. } => {
                let ws = weights.shape();
                if input.len() != 1 || input[0] != ws[1] {
                    return Err(mismatch(vec![ws[1]]));
                }
                Ok(vec![ws[0]])
            }
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(mismatch(vec![0]));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Per-layer weight and bias gradients, shape-congruent with the network
/// that produced them. Paramless layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    per_layer: Vec<Option<(Tensor, Tensor)>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        let per_layer = net
            .layers
            .iter()
            .map(|l| {
                l.params().map(|(w, b)| {
                    (
                        Tensor::zeros(w.shape().to_vec()),
                        Tensor::zeros(b.shape().to_vec()),
                    )
                })
            })
            .collect();
        Gradients { per_layer }
    }

    pub fn layer(&self, index: usize) -> Option<&(Tensor, Tensor)> {
        self.per_layer[index].as_ref()
    }

    pub fn layer_count(&self) -> usize {
        self.per_layer.len()
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if let (Some((w, b)), Some((ow, ob))) = (mine.as_mut(), theirs.as_ref()) {
                for (x, y) in w.data_mut().iter_mut().zip(ow.data()) {
                    *x += y;
                }
                for (x, y) in b.data_mut().iter_mut().zip(ob.data()) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for entry in self.per_layer.iter_mut().flatten() {
            for x in entry.0.data_mut() {
                *x *= factor;
            }
            for x in entry.1.data_mut() {
                *x *= factor;
            }
        }
    }
}

/// Per-layer activations recorded by [`Network::forward`]:
/// `activations[0]` is the input, `activations[i+1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Tensor>,
}

impl Trace {
    pub fn activation(&self, index: usize) -> &Tensor {
        &self.activations[index]
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

/// Ordered layer stack with a declared input shape; the final layer is
/// always [`Layer::Softmax`] over the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    class_count: usize,
}

impl Network {
    /// Validate the static shape chain and the softmax tail.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Network> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        if !matches!(layers.last(), Some(Layer::Softmax)) {
            return Err(Error::InvalidArgument(
                "final layer must be softmax".into(),
            ));
        }
        if layers
            .iter()
            .take(layers.len() - 1)
            .any(|l| matches!(l, Layer::Softmax))
        {
            return Err(Error::InvalidArgument(
                "softmax may only appear as the final layer".into(),
            ));
        }
        let mut shape: Vec<usize> = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape, i)?;
        }
        if shape.len() != 1 || shape[0] < 2 {
            return Err(Error::InvalidArgument(format!(
                "softmax output must be a class vector of length ≥ 2, got {shape:?}"
            )));
        }
        Ok(Network {
            input_shape,
            layers,
            class_count: shape[0],
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// The static shape chain: input shape, then each layer's output shape.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![self.input_shape.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap(), i)
                .expect("validated at construction");
            shapes.push(next);
        }
        shapes
    }

    /// Feedforward pass; returns class logits and the full activation trace.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Trace)> {
        if input.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: self.input_shape.to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let a = apply_layer(layer, activations.last().unwrap());
            activations.push(a);
        }
        let logits = activations.last().unwrap().clone();
        Ok((logits, Trace { activations }))
    }

    /// Exact analytic gradients for every weight and bias, by layerwise
    /// recursion from the error at the logits.
    pub fn backward(&self, trace: &Trace, delta_out: &Tensor) -> Result<Gradients> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "trace has {} activations, network needs {}",
                trace.activations.len(),
                self.layers.len() + 1
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let expected = layer.output_shape(trace.activations[i].shape(), i)?;
            if trace.activations[i + 1].shape() != expected.as_slice() {
                return Err(Error::ShapeMismatch {
                    layer: i,
                    expected,
                    actual: trace.activations[i + 1].shape().to_vec(),
                });
            }
        }
        if delta_out.shape() != [self.class_count] {
            return Err(Error::ShapeMismatch {
                layer: self.layers.len() - 1,
                expected: vec![self.class_count],
                actual: delta_out.shape().to_vec(),
            });
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = delta_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            delta = backprop_layer(layer, input, &delta, grads.per_layer[i].as_mut());
        }
        Ok(grads)
    }
}

fn apply_layer(layer: &Layer, input: &Tensor) -> Tensor {
    match layer {
        Layer::Conv2d { weights, biases } => conv2d_forward(input, weights, biases),
        Layer::Relu => {
            let data = input.data().iter().map(|&v| v.max(0.0)).collect();
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
        Layer::MaxPool2d { size } => maxpool_forward(input, *size),
        Layer::Flatten => input.clone().reshape(vec![input.len()]).unwrap(),
        Layer::Dense { weights, biases } => dense_forward(input, weights, biases),
        Layer::Softmax => input.clone(),
    }
}

fn conv2d_forward(input: &Tensor, weights: &Tensor, biases: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ws = weights.shape();
    let (f, kh, kw) = (ws[0], ws[2], ws[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0f64; f * oh * ow];
    let wd = weights.data();
    let id = input.data();
    for oc in 0..f {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(biases.data()[oc]);
        for ic in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let weight = wd[((oc * c + ic) * kh + ky) * kw + kx];
                    for y in 0..oh {
                        let src = &id[ic * h * w + (y + ky) * w + kx..][..ow];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += weight * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![f, oh, ow], out).unwrap()
}

fn maxpool_forward(input: &Tensor, size: usize) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / size, w / size);
    let id = input.data();
    let mut out = vec![0.0f64; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for py in 0..size {
                    for px in 0..size {
                        let v = id[ch * h * w + (y * size + py) * w + x * size + px];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[ch * oh * ow + y * ow + x] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

fn dense_forward(input: &Tensor, weights: &Tensor, biases: &Tensor) -> Tensor {
    let (outputs, inputs) = (weights.shape()[0], weights.shape()[1]);
    let id = input.data();
    let wd = weights.data();
    let mut out = biases.data().to_vec();
    for (o, out_v) in out.iter_mut().enumerate().take(outputs) {
        let row = &wd[o * inputs..(o + 1) * inputs];
        let mut acc = 0.0;
        for (wv, iv) in row.iter().zip(id) {
            acc += wv * iv;
        }
        *out_v += acc;
    }
    Tensor::new(vec![outputs], out).unwrap()
}

/// Backpropagate `delta` (loss gradient at the layer output) through one
/// layer; fills the layer's parameter gradients and returns the loss
/// gradient at the layer input.
fn backprop_layer(
    layer: &Layer,
    input: &Tensor,
    delta: &Tensor,
    grads: Option<&mut (Tensor, Tensor)>,
) -> Tensor {
    match layer {
        Layer::Softmax => delta.clone(),
        Layer::Relu => {
            let data = input
                .data()
                .iter()
                .zip(delta.data())
                .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
                .collect();
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
        Layer::Flatten => delta.clone().reshape(input.shape().to_vec()).unwrap(),
        Layer::MaxPool2d { size } => maxpool_backward(input, delta, *size),
        Layer::Dense { weights, .. } => {
            let (wgrad, bgrad) = grads.expect("dense layer has gradient slot");
            let (outputs, inputs) = (weights.shape()[0], weights.shape()[1]);
            let id = input.data();
            let dd = delta.data();
            let wg = wgrad.data_mut();
            for o in 0..outputs {
                let d = dd[o];
                let row = &mut wg[o * inputs..(o + 1) * inputs];
                for (g, x) in row.iter_mut().zip(id) {
                    *g += d * x;
                }
            }
            for (g, d) in bgrad.data_mut().iter_mut().zip(dd) {
                *g += d;
            }
            let wd = weights.data();
            let mut din = vec![0.0f64; inputs];
            for o in 0..outputs {
                let d = dd[o];
                let row = &wd[o * inputs..(o + 1) * inputs];
                for (dst, wv) in din.iter_mut().zip(row) {
                    *dst += d * wv;
                }
            }
            Tensor::new(vec![inputs], din).unwrap()
        }
        Layer::Conv2d { weights, .. } => {
            let (wgrad, bgrad) = grads.expect("conv layer has gradient slot");
            conv2d_backward(input, delta, weights, wgrad, bgrad)
        }
    }
}

fn maxpool_backward(input: &Tensor, delta: &Tensor, size: usize) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / size, w / size);
    let id = input.data();
    let dd = delta.data();
    let mut din = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for py in 0..size {
                    for px in 0..size {
                        let idx = ch * h * w + (y * size + py) * w + x * size + px;
                        if id[idx] > best {
                            best = id[idx];
                            best_idx = idx;
                        }
                    }
                }
                din[best_idx] += dd[ch * oh * ow + y * ow + x];
            }
        }
    }
    Tensor::new(vec![c, h, w], din).unwrap()
}

fn conv2d_backward(
    input: &Tensor,
    delta: &Tensor,
    weights: &Tensor,
    wgrad: &mut Tensor,
    bgrad: &mut Tensor,
) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ws = weights.shape();
    let (f, kh, kw) = (ws[0], ws[2], ws[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let id = input.data();
    let dd = delta.data();
    let wd = weights.data();
    let wg = wgrad.data_mut();
    let bg = bgrad.data_mut();
    let mut din = vec![0.0f64; c * h * w];
    for oc in 0..f {
        let dplane = &dd[oc * oh * ow..(oc + 1) * oh * ow];
        bg[oc] += dplane.iter().sum::<f64>();
        for ic in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((oc * c + ic) * kh + ky) * kw + kx;
                    let weight = wd[widx];
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let drow = &dplane[y * ow..(y + 1) * ow];
                        let irow = &id[ic * h * w + (y + ky) * w + kx..][..ow];
                        let dst = &mut din[ic * h * w + (y + ky) * w + kx..][..ow];
                        for ((d, i), dst_v) in drow.iter().zip(irow).zip(dst) {
                            acc += d * i;
                            *dst_v += d * weight;
                        }
                    }
                    wg[widx] += acc;
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], din).unwrap()
}

/// Numerically stable softmax probabilities of a logit vector.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::new(logits.shape().to_vec(), exps.iter().map(|e| e / sum).collect()).unwrap()
}

/// Softmax cross-entropy loss and its gradient at the logits,
/// `softmax(logits) − one_hot(label)`.
pub fn output_error(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let classes = logits.len();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let max = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.data().iter().map(|&v| (v - max).exp()).sum();
    let log_sum_exp = max + sum_exp.ln();
    let loss = log_sum_exp - logits.data()[label];
    let mut delta: Vec<f64> = logits
        .data()
        .iter()
        .map(|&v| (v - max).exp() / sum_exp)
        .collect();
    delta[label] -= 1.0;
    Ok((loss, Tensor::new(vec![classes], delta)?))
}

/// Index of the largest logit; ties break to the lowest class index.
pub fn argmax(logits: &Tensor) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in logits.data().iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Cost-scaled SGD update: `p ← p − (eta·gamma)·grad` for every layer.
///
/// The scale is computed once as `eta * gamma`, so
/// `sgd_step(eta, gamma)` and `sgd_step(eta*gamma, 1.0)` are bitwise
/// identical, and `gamma = 0` leaves parameters untouched.
pub fn sgd_step(net: &mut Network, grads: &Gradients, eta: f64, gamma: f64) -> Result<()> {
    sgd_step_frozen(net, grads, eta, gamma, 0)
}

/// [`sgd_step`] that leaves layers with index `< frozen_layers` untouched.
pub fn sgd_step_frozen(
    net: &mut Network,
    grads: &Gradients,
    eta: f64,
    gamma: f64,
    frozen_layers: usize,
) -> Result<()> {
    if !(eta > 0.0) || gamma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need eta > 0 and gamma ≥ 0, got eta={eta}, gamma={gamma}"
        )));
    }
    if grads.layer_count() != net.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "gradients cover {} layers, network has {}",
            grads.layer_count(),
            net.layers.len()
        )));
    }
    let scale = eta * gamma;
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let Some((w, b)) = layer.params_mut() else {
            continue;
        };
        let Some((gw, gb)) = grads.per_layer[i].as_ref() else {
            continue;
        };
        if gw.shape() != w.shape() || gb.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                layer: i,
                expected: w.shape().to_vec(),
                actual: gw.shape().to_vec(),
            });
        }
        if i < frozen_layers || scale == 0.0 {
            continue;
        }
        for (p, g) in w.data_mut().iter_mut().zip(gw.data()) {
            *p -= scale * g;
        }
        for (p, g) in b.data_mut().iter_mut().zip(gb.data()) {
            *p -= scale * g;
        }
    }
    Ok(())
}

/// Shuffle seed for epoch `epoch` of a run seeded with `seed`.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One pass over the data in shuffled mini-batches; gradients are averaged
/// over each batch. Returns the mean per-sample loss.
pub fn train_one_epoch(
    net: &mut Network,
    data: &LabelledDataset,
    eta: f64,
    batch_size: usize,
    gamma: f64,
    frozen_layers: usize,
    shuffle_seed: u64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.class_count() != net.class_count {
        return Err(Error::ClassCountMismatch {
            network: net.class_count,
            dataset: data.class_count(),
        });
    }
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    indices.shuffle(&mut rng);

    let mut total_loss = 0.0;
    for batch in indices.chunks(batch_size) {
        let mut batch_grads = Gradients::zeros_like(net);
        for &i in batch {
            let input = data.sample(i);
            let (logits, trace) = net.forward(&input)?;
            let (loss, delta) = output_error(&logits, data.label(i))?;
            total_loss += loss;
            let grads = net.backward(&trace, &delta)?;
            batch_grads.accumulate(&grads);
        }
        batch_grads.scale(1.0 / batch.len() as f64);
        sgd_step_frozen(net, &batch_grads, eta, gamma, frozen_layers)?;
    }
    Ok(total_loss / data.len() as f64)
}

/// Mini-batch SGD for `hp.epochs` epochs with a uniform cost `gamma`.
/// Deterministic given `hp.seed`. Returns the mean loss per epoch.
pub fn train(
    net: &mut Network,
    data: &LabelledDataset,
    hp: &HyperParams,
    gamma: f64,
) -> Result<Vec<f64>> {
    train_frozen(net, data, hp, gamma, 0)
}

/// [`train`] with the first `frozen_layers` layers held fixed.
pub fn train_frozen(
    net: &mut Network,
    data: &LabelledDataset,
    hp: &HyperParams,
    gamma: f64,
    frozen_layers: usize,
) -> Result<Vec<f64>> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut losses = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        losses.push(train_one_epoch(
            net,
            data,
            hp.eta,
            hp.batch_size,
            gamma,
            frozen_layers,
            epoch_seed(hp.seed, epoch),
        )?);
    }
    Ok(losses)
}

/// Fraction of samples whose argmax prediction differs from the label.
/// Read-only and data-parallel over samples.
pub fn evaluate(net: &Network, data: &LabelledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.class_count() != net.class_count {
        return Err(Error::ClassCountMismatch {
            network: net.class_count,
            dataset: data.class_count(),
        });
    }
    let errors: usize = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (logits, _) = net
                .forward(&data.sample(i))
                .expect("dataset shape validated against network");
            usize::from(argmax(&logits) != data.label(i))
        })
        .sum();
    Ok(errors as f64 / data.len() as f64)
}

/// Argmax predictions for every sample, in dataset order.
pub fn predict(net: &Network, data: &LabelledDataset) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((0..data.len())
        .into_par_iter()
        .map(|i| {
            let (logits, _) = net
                .forward(&data.sample(i))
                .expect("dataset shape validated against network");
            argmax(&logits)
        })
        .collect())
}
