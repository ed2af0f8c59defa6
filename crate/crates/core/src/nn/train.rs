use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Loss};
use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub log_clip_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Jbce,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            log_clip_eps: 1e-12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidCount("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidCount("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidParameter("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParameter("adam_eps must be positive".into()));
        }
        if !(self.log_clip_eps > 0.0 && self.log_clip_eps < 0.5) {
            return Err(Error::InvalidParameter("log_clip_eps must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Covariate rows paired with zero-based bin labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledBatch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub targets: &'a [usize],
}

impl<'a> LabeledBatch<'a> {
    pub fn new(x: ArrayView2<'a, f64>, targets: &'a [usize]) -> Result<Self> {
        if x.nrows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: targets.len(),
            });
        }
        Ok(LabeledBatch { x, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Parameter-shaped gradient, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Same ordering as [`Network::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Mean loss over the batch and its exact gradient. Passing an RNG turns
/// dropout on; the mask drawn in the forward pass is reused backwards.
pub fn gradient(
    net: &Network,
    batch: LabeledBatch,
    loss: Loss,
    clip: f64,
    dropout_rng: Option<&mut SeededRng>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyData("gradient of an empty batch".into()));
    }
    let classes = net.output_dim();
    if let Some(&t) = batch.targets.iter().find(|&&t| t >= classes) {
        return Err(Error::IndexOutOfBounds {
            index: t,
            bins: classes,
        });
    }
    let cache = net.forward_cached(batch.x, dropout_rng, true)?;
    let n = batch.len() as f64;

    let mut delta = Array2::<f64>::zeros(cache.probs.raw_dim());
    let mut total = 0.0;
    for ((probs, mut d), &t) in cache
        .probs
        .axis_iter(Axis(0))
        .zip(delta.axis_iter_mut(Axis(0)))
        .zip(batch.targets)
    {
        let probs = probs.to_slice().expect("contiguous row");
        let d = d.as_slice_mut().expect("contiguous row");
        total += loss_and_grad(probs, t, loss, clip, d);
    }
    delta /= n;

    let layers = net.layers();
    let mut grads: Vec<Layer> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let input = &cache.inputs[l];
        let weights = input.t().dot(&delta);
        let bias: Array1<f64> = delta.sum_axis(Axis(0));
        grads.push(Layer { weights, bias });
        if l > 0 {
            let mut upstream = delta.dot(&layers[l].weights.t());
            if let Some(mask) = &cache.masks[l - 1] {
                upstream *= mask;
            }
            upstream *= &cache.slopes[l - 1];
            delta = upstream;
        }
    }
    grads.reverse();
    Ok((total / n, Gradients { layers: grads }))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    /// Mean training loss of each epoch (dropout active).
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let zeros = |l: &Layer| Layer {
            weights: Array2::zeros(l.weights.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        };
        Adam {
            m: net.layers().iter().map(zeros).collect(),
            v: net.layers().iter().map(zeros).collect(),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;
        let step = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| step(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| step(p, m, v, g));
        }
    }
}

/// Mini-batch Adam over shuffled epochs. Shuffling and dropout masks both
/// come from `cfg.seed`, so identical inputs give identical parameters.
pub fn train(mut net: Network, data: LabeledBatch, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData("no training rows".into()));
    }
    if data.x.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: data.x.ncols(),
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut targets = Vec::with_capacity(cfg.batch_size.min(data.len()));

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.x.select(Axis(0), chunk);
            targets.clear();
            targets.extend(chunk.iter().map(|&i| data.targets[i]));
            let batch = LabeledBatch {
                x: x.view(),
                targets: &targets,
            };
            let (loss, grads) = gradient(&net, batch, cfg.loss, cfg.log_clip_eps, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.update(&mut net, &grads, cfg);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || !net.params().iter().all(|p| p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(mean);
    }
    Ok(Trained {
        network: net,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, NetworkConfig};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_simple_fn((n, 1), || rng.gen_range(-1.0..1.0));
        let t = x.column(0).iter().map(|&v| usize::from(v >= 0.0)).collect();
        (x, t)
    }

    #[test]
    fn separable_toy_fits_under_both_losses() {
        let (x, t) = toy(200, 3);
        for loss in [Loss::Multinomial, Loss::Jbce] {
            let mut cfg_net = NetworkConfig::deep(1, 2);
            cfg_net.hidden_sizes = vec![16];
            cfg_net.dropout_rate = 0.0;
            let net = Network::init(cfg_net, 1).unwrap();
            let cfg = TrainConfig {
                loss,
                epochs: 50,
                batch_size: 16,
                learning_rate: 1e-2,
                seed: 4,
                ..TrainConfig::default()
            };
            let out = train(net, LabeledBatch::new(x.view(), &t).unwrap(), &cfg).unwrap();
            assert_eq!(out.loss_trace.len(), 50);
            let last = *out.loss_trace.last().unwrap();
            assert!(last < 0.1, "{loss}: final loss {last}");
        }
    }

    #[test]
    fn epochs_contract() {
        let (x, t) = toy(20, 1);
        let net = Network::init(NetworkConfig::logistic(1, 2), 0).unwrap();
        let batch = LabeledBatch::new(x.view(), &t).unwrap();
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(net.clone(), batch, &zero).is_err());
        let one = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert_eq!(train(net, batch, &one).unwrap().loss_trace.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, t) = toy(100, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 77,
            ..TrainConfig::default()
        };
        let mut net_cfg = NetworkConfig::deep(1, 3);
        net_cfg.hidden_sizes = vec![8, 8];
        let run = || {
            let net = Network::init(net_cfg.clone(), 5).unwrap();
            train(net, LabeledBatch::new(x.view(), &t).unwrap(), &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn huge_learning_rate_is_reported() {
        let (x, t) = toy(100, 2);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            loss: Loss::Multinomial,
            ..TrainConfig::default()
        };
        let net = Network::init(NetworkConfig::deep(1, 2), 0).unwrap();
        let res = train(net, LabeledBatch::new(x.view(), &t).unwrap(), &cfg);
        assert!(matches!(res, Err(Error::NonFiniteLoss { .. })), "{res:?}");
    }

    #[test]
    fn gradient_vanishes_at_perfect_fit() {
        let mut net = Network::init(NetworkConfig::logistic(1, 3), 0).unwrap();
        let mut params = vec![0.0; net.num_params()];
        // bias of class 1 dominates
        params[3 + 1] = 40.0;
        net.set_params(&params).unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![0.3, -0.7]).unwrap();
        let (_, g) = gradient(
            &net,
            LabeledBatch::new(x.view(), &[1, 1]).unwrap(),
            Loss::Multinomial,
            1e-12,
            None,
        )
        .unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_targets() {
        let net = Network::init(NetworkConfig::logistic(1, 3), 0).unwrap();
        let x = Array2::zeros((1, 1));
        let res = gradient(&net, LabeledBatch::new(x.view(), &[3]).unwrap(), Loss::Jbce, 1e-12, None);
        assert!(matches!(res, Err(Error::IndexOutOfBounds { .. })));
        let _ = net.forward(&[0.0], Mode::Eval).unwrap();
    }
}
