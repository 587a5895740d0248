//! Analytic gradients vs central finite differences on random small
//! networks mixing conv, pool and dense layers.

use dtl_core::nn::{output_error, Gradients, Layer, Network};
use dtl_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;

/// Mean softmax cross-entropy loss of `net` over a fixed sample set.
fn mean_loss(net: &Network, samples: &[(Tensor, usize)]) -> f64 {
    let mut total = 0.0;
    for (input, label) in samples {
        let (logits, _) = net.forward(input).unwrap();
        let (loss, _) = output_error(&logits, *label).unwrap();
        total += loss;
    }
    total / samples.len() as f64
}

/// Mean analytic gradients over the sample set.
fn mean_grads(net: &Network, samples: &[(Tensor, usize)]) -> Gradients {
    let mut acc = Gradients::zeros_like(net);
    for (input, label) in samples {
        let (logits, trace) = net.forward(input).unwrap();
        let (_, delta) = output_error(&logits, *label).unwrap();
        acc.accumulate(&net.backward(&trace, &delta).unwrap());
    }
    acc.scale(1.0 / samples.len() as f64);
    acc
}

/// Check every partial derivative of `net` against a central difference.
fn check_network(net: &mut Network, samples: &[(Tensor, usize)]) {
    let analytic = mean_grads(net, samples);
    for layer_idx in 0..net.layer_count() {
        let Some((w, b)) = analytic.layer(layer_idx) else {
            continue;
        };
        let (weight_grads, bias_grads) = (w.data().to_vec(), b.data().to_vec());
        for (slot, grads) in [(0usize, weight_grads), (1, bias_grads)] {
            for (param_idx, &a) in grads.iter().enumerate() {
                let numeric = {
                    let read = |net: &mut Network, delta: f64| {
                        let (w, b) = net.layers_mut()[layer_idx].params_mut().unwrap();
                        let target = if slot == 0 { w } else { b };
                        target.data_mut()[param_idx] += delta;
                        let loss = mean_loss(net, samples);
                        let (w, b) = net.layers_mut()[layer_idx].params_mut().unwrap();
                        let target = if slot == 0 { w } else { b };
                        target.data_mut()[param_idx] -= delta;
                        loss
                    };
                    let plus = read(net, FD_STEP);
                    let minus = read(net, -FD_STEP);
                    (plus - minus) / (2.0 * FD_STEP)
                };
                let tol = ABS_FLOOR.max(REL_TOL * a.abs().max(numeric.abs()));
                assert!(
                    (a - numeric).abs() <= tol,
                    "layer {layer_idx} slot {slot} param {param_idx}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }
}

pub fn random_network(rng: &mut ChaCha8Rng) -> (Network, [usize; 3]) {
    loop {
        let channels = rng.gen_range(1..=2usize);
        let size = rng.gen_range(6..=9usize);
        let classes = rng.gen_range(2..=4usize);
        let input_shape = [channels, size, size];
        let template = rng.gen_range(0..4u8);
        let seed = rng.gen::<u64>();
        let result = match template {
            0 => {
                // conv → relu → pool → flatten → dense
                let f = rng.gen_range(1..=3);
                let k = rng.gen_range(2..=3);
                let conv_out = size - k + 1;
                let flat = f * (conv_out / 2) * (conv_out / 2);
                Network::new(
                    input_shape,
                    vec![
                        Layer::conv2d_seeded(f, channels, k, seed),
                        Layer::Relu,
                        Layer::MaxPool2d { size: 2 },
                        Layer::Flatten,
                        Layer::dense_seeded(classes, flat, seed ^ 1),
                        Layer::Softmax,
                    ],
                )
            }
            1 => {
                // conv → relu → conv → relu → flatten → dense
                let f1 = rng.gen_range(1..=2);
                let f2 = rng.gen_range(1..=2);
                let k = 2;
                let s1 = size - k + 1;
                let s2 = s1 - k + 1;
                Network::new(
                    input_shape,
                    vec![
                        Layer::conv2d_seeded(f1, channels, k, seed),
                        Layer::Relu,
                        Layer::conv2d_seeded(f2, f1, k, seed ^ 2),
                        Layer::Relu,
                        Layer::Flatten,
                        Layer::dense_seeded(classes, f2 * s2 * s2, seed ^ 3),
                        Layer::Softmax,
                    ],
                )
            }
            2 => {
                // flatten → dense → relu → dense
                let hidden = rng.gen_range(3..=8);
                Network::new(
                    input_shape,
                    vec![
                        Layer::Flatten,
                        Layer::dense_seeded(hidden, channels * size * size, seed),
                        Layer::Relu,
                        Layer::dense_seeded(classes, hidden, seed ^ 4),
                        Layer::Softmax,
                    ],
                )
            }
            _ => {
                // conv → relu → pool → flatten → dense → relu → dense
                let f = rng.gen_range(1..=2);
                let k = 3;
                let conv_out = size - k + 1;
                let flat = f * (conv_out / 2) * (conv_out / 2);
                let hidden = rng.gen_range(3..=6);
                Network::new(
                    input_shape,
                    vec![
                        Layer::conv2d_seeded(f, channels, k, seed),
                        Layer::Relu,
                        Layer::MaxPool2d { size: 2 },
                        Layer::Flatten,
                        Layer::dense_seeded(hidden, flat, seed ^ 5),
                        Layer::Relu,
                        Layer::dense_seeded(classes, hidden, seed ^ 6),
                        Layer::Softmax,
                    ],
                )
            }
        };
        if let Ok(net) = result {
            if net.param_count() <= 500 {
                return (net, input_shape);
            }
        }
    }
}

pub fn random_samples(
    rng: &mut ChaCha8Rng,
    input_shape: [usize; 3],
    classes: usize,
    count: usize,
) -> Vec<(Tensor, usize)> {
    let [c, h, w] = input_shape;
    (0..count)
        .map(|_| {
            let data: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
            let input = Tensor::new(vec![c, h, w], data).unwrap();
            (input, rng.gen_range(0..classes))
        })
        .collect()
}

/// Central differences are only valid away from the loss surface's
/// non-differentiable points: reject sample sets where any rectifier input
/// is within `margin` of its kink or any pool window has a near-tie.
/// The margin is safely above the finite-difference step.
pub fn well_conditioned(net: &Network, samples: &[(Tensor, usize)], margin: f64) -> bool {
    for (input, _) in samples {
        let (_, trace) = net.forward(input).unwrap();
        for (i, layer) in net.layers().iter().enumerate() {
            match layer {
                Layer::Relu => {
                    if trace.activation(i).data().iter().any(|z| z.abs() < margin) {
                        return false;
                    }
                }
                Layer::MaxPool2d { size } => {
                    let pre = trace.activation(i);
                    let (c, h, w) = (pre.shape()[0], pre.shape()[1], pre.shape()[2]);
                    for ch in 0..c {
                        for y in 0..h / size {
                            for x in 0..w / size {
                                let mut top = f64::NEG_INFINITY;
                                let mut second = f64::NEG_INFINITY;
                                for py in 0..*size {
                                    for px in 0..*size {
                                        let v = pre.data()
                                            [ch * h * w + (y * size + py) * w + x * size + px];
                                        if v > top {
                                            second = top;
                                            top = v;
                                        } else if v > second {
                                            second = v;
                                        }
                                    }
                                }
                                if top - second < margin {
                                    return false;
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    true
}

/// Draw a random network plus a sample set at which the loss is smooth.
pub fn conditioned_case(rng: &mut ChaCha8Rng, sample_count: usize) -> (Network, Vec<(Tensor, usize)>) {
    loop {
        let (net, input_shape) = random_network(rng);
        for _ in 0..20 {
            let samples = random_samples(rng, input_shape, net.class_count(), sample_count);
            if well_conditioned(&net, &samples, 10.0 * FD_STEP) {
                return (net, samples);
            }
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    for _ in 0..15 {
        let (mut net, samples) = conditioned_case(&mut rng, 2);
        check_network(&mut net, &samples);
    }
}

#[test]
fn gradient_check_covers_multi_channel_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
    let net = Network::new(
        [3, 6, 6],
        vec![
            Layer::conv2d_seeded(2, 3, 3, 99),
            Layer::Relu,
            Layer::MaxPool2d { size: 2 },
            Layer::Flatten,
            Layer::dense_seeded(3, 8, 98),
            Layer::Softmax,
        ],
    )
    .unwrap();
    let mut samples = random_samples(&mut rng, [3, 6, 6], 3, 3);
    while !well_conditioned(&net, &samples, 10.0 * FD_STEP) {
        samples = random_samples(&mut rng, [3, 6, 6], 3, 3);
    }
    let mut net = net;
    check_network(&mut net, &samples);
}
