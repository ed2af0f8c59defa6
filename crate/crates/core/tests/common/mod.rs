#![allow(dead_code)]

use distreg::estimator::DensityEstimator;
use distreg::nn::{Activation, Classifier, Layer, Loss, Network, NetworkConfig};
use distreg::partition::Partition;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Network with Gaussian weights and biases of standard deviation `scale`.
pub fn random_network<R: Rng>(rng: &mut R, input_dim: usize, hidden: &[usize], classes: usize, scale: f64) -> Network {
    let config = NetworkConfig {
        input_dim,
        hidden_sizes: hidden.to_vec(),
        output_dim: classes,
        dropout_rate: 0.0,
        activation: Activation::Elu,
    };
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(classes);
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            weights: gaussian_matrix(rng, w[0], w[1], scale),
            bias: Array1::from_iter((0..w[1]).map(|_| scale * rng.sample::<f64, _>(StandardNormal))),
        })
        .collect();
    Network::from_layers(config, layers).unwrap()
}

/// Even or random partition of a random range with 1..=30 cut-points and
/// a random network on `input_dim` features.
pub fn random_estimator<R: Rng>(rng: &mut R, input_dim: usize) -> DensityEstimator {
    let lower = rng.gen_range(-5.0..1.0);
    let upper = lower + rng.gen_range(0.5..10.0);
    random_estimator_on(rng, input_dim, lower, upper)
}

pub fn random_estimator_on<R: Rng>(rng: &mut R, input_dim: usize, lower: f64, upper: f64) -> DensityEstimator {
    let m = rng.gen_range(1..=30);
    let partition = if rng.gen_bool(0.5) {
        Partition::even(lower, upper, m).unwrap()
    } else {
        Partition::random(lower, upper, m, rng, 0.0).unwrap()
    };
    let hidden: Vec<usize> = if rng.gen_bool(0.5) { vec![] } else { vec![rng.gen_range(2..10)] };
    let scale = rng.gen_range(0.3..3.0);
    let network = random_network(rng, input_dim, &hidden, m + 1, scale);
    DensityEstimator::new(
        partition,
        Classifier {
            network,
            loss: Loss::Jbce,
        },
    )
    .unwrap()
}

fn elu(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        t.exp() - 1.0
    }
}

/// Plain forward pass written out independently of the library.
pub fn reference_probs(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let n_layers = net.layers().len();
    for (li, layer) in net.layers().iter().enumerate() {
        let (fan_in, fan_out) = layer.weights.dim();
        let mut z = vec![0.0; fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = layer.bias[j];
            for i in 0..fan_in {
                acc += h[i] * layer.weights[[i, j]];
            }
            *zj = acc;
        }
        h = if li + 1 < n_layers { z.into_iter().map(elu).collect() } else { z };
    }
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = h.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Mean loss over rows, from the reference forward pass.
pub fn reference_loss(net: &Network, x: &Array2<f64>, targets: &[usize], loss: Loss) -> f64 {
    let mut total = 0.0;
    for (row, &t) in x.rows().into_iter().zip(targets) {
        let p = reference_probs(net, &row.to_vec());
        total += match loss {
            Loss::Multinomial => -p[t].ln(),
            Loss::Jbce => {
                let k = p.len();
                let mut sum = 0.0;
                for j in 0..k - 1 {
                    let below: f64 = p[..=j].iter().sum();
                    let above: f64 = p[j + 1..].iter().sum();
                    sum -= if t <= j { below.ln() } else { above.ln() };
                }
                sum
            }
        };
    }
    total / targets.len() as f64
}

/// Central finite-difference gradient of [`reference_loss`].
pub fn numeric_gradient(net: &Network, x: &Array2<f64>, targets: &[usize], loss: Loss, step: f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        probe.set_params(&p).unwrap();
        let plus = reference_loss(&probe, x, targets, loss);
        p[i] = base[i] - step;
        probe.set_params(&p).unwrap();
        let minus = reference_loss(&probe, x, targets, loss);
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over components.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
