//! Feedforward softmax classifier built directly on `ndarray`.
//!
//! Hidden layers are affine maps followed by an activation (ELU by default)
//! and, in training mode, inverted dropout. The output layer is an affine
//! map followed by a softmax. With no hidden layers the network is a
//! multinomial logistic regression.

mod loss;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeededRng};

pub use loss::{cumulative, loss_jbce, loss_multinomial, Loss};
pub use train::{gradient, train, Gradients, LabeledBatch, TrainConfig, Trained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Identity,
}

impl Activation {
    fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Elu => elu(t),
            Activation::Identity => t,
        }
    }

    /// Value and derivative at `t`.
    fn apply_with_derivative(self, t: f64) -> (f64, f64) {
        match self {
            Activation::Elu => {
                if t >= 0.0 {
                    (t, 1.0)
                } else {
                    let em1 = t.exp_m1();
                    (em1, em1 + 1.0)
                }
            }
            Activation::Identity => (t, 1.0),
        }
    }
}

/// Exponential linear unit: `t` for `t >= 0`, `e^t - 1` otherwise.
pub fn elu(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        t.exp_m1()
    }
}

fn default_hidden() -> Vec<usize> {
    vec![100, 100, 100]
}

fn default_dropout() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkConfig {
    /// Three ELU layers of 100 units with 50% dropout.
    pub fn deep(input_dim: usize, output_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_sizes: default_hidden(),
            output_dim,
            dropout_rate: default_dropout(),
            activation: Activation::Elu,
        }
    }

    /// Zero hidden layers, no dropout: multinomial logistic regression.
    pub fn logistic(input_dim: usize, output_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_sizes: Vec::new(),
            output_dim,
            dropout_rate: 0.0,
            activation: Activation::Elu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidCount("input_dim must be at least 1".into()));
        }
        if self.output_dim < 2 {
            return Err(Error::InvalidCount(format!(
                "output_dim must be at least 2, got {}",
                self.output_dim
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidCount("hidden layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend(&self.hidden_sizes);
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Affine layer; `weights` is `fan_in x fan_out` so a batch maps as `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, masks drawn from this seed.
    Train(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

pub(crate) struct ForwardCache {
    /// Input to each layer (post activation and dropout for hidden layers).
    pub inputs: Vec<Array2<f64>>,
    /// Activation derivatives at the hidden pre-activations.
    pub slopes: Vec<Array2<f64>>,
    /// Dropout masks (already scaled by `1/(1-rate)`), one per hidden layer.
    pub masks: Vec<Option<Array2<f64>>>,
    pub probs: Array2<f64>,
}

impl Network {
    /// Random weights with standard deviation `1/sqrt(fan_in)`, zero biases.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let scale = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Network { config, layers })
    }

    /// Builds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                got: layers.len(),
            });
        }
        for ((fan_in, fan_out), layer) in dims.into_iter().zip(&layers) {
            if layer.weights.dim() != (fan_in, fan_out) {
                let (r, c) = layer.weights.dim();
                return Err(Error::InvalidParameter(format!(
                    "layer weights are {r}x{c}, expected {fan_in}x{fan_out}"
                )));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::DimensionMismatch {
                    expected: fan_out,
                    got: layer.bias.len(),
                });
            }
        }
        Ok(Network { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// Class probabilities for one covariate vector.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let probs = self.forward_batch(x, mode)?;
        Ok(probs.into_raw_vec_and_offset().0)
    }

    /// Class probabilities for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        match mode {
            Mode::Eval => self.forward_cached(x, None, false).map(|c| c.probs),
            Mode::Train(seed) => {
                let mut rng = rng_from_seed(seed);
                self.forward_cached(x, Some(&mut rng), false).map(|c| c.probs)
            }
        }
    }

    /// Eval-mode probabilities.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward_batch(x, Mode::Eval)
    }

    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        mut dropout_rng: Option<&mut SeededRng>,
        keep_slopes: bool,
    ) -> Result<ForwardCache> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        let n_hidden = self.layers.len() - 1;
        let rate = self.config.dropout_rate;
        let act = self.config.activation;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut slopes = Vec::with_capacity(n_hidden);
        let mut masks = Vec::with_capacity(n_hidden);
        inputs.push(x.to_owned());

        for layer in &self.layers[..n_hidden] {
            let mut h = affine(inputs.last().unwrap().view(), layer);
            let slope = if keep_slopes {
                let mut slope = Array2::zeros(h.raw_dim());
                ndarray::Zip::from(&mut h).and(&mut slope).for_each(|v, d| {
                    let (a, da) = act.apply_with_derivative(*v);
                    *v = a;
                    *d = da;
                });
                slope
            } else {
                h.mapv_inplace(|t| act.apply(t));
                Array2::zeros((0, 0))
            };
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    let mask = Array2::from_shape_simple_fn(h.raw_dim(), || {
                        if rng.gen::<f64>() < rate {
                            0.0
                        } else {
                            keep
                        }
                    });
                    h *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            slopes.push(slope);
            masks.push(mask);
            inputs.push(h);
        }

        let mut logits = affine(inputs.last().unwrap().view(), &self.layers[n_hidden]);
        softmax_rows(&mut logits);
        Ok(ForwardCache {
            inputs,
            slopes,
            masks,
            probs: logits,
        })
    }

    /// Rewrites the first layer so that raw inputs `x` behave like the
    /// standardized inputs `(x - mean) / scale` the network was trained on.
    pub fn fold_input_standardization(&mut self, mean: &[f64], scale: &[f64]) -> Result<()> {
        let d = self.config.input_dim;
        if mean.len() != d || scale.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mean.len().min(scale.len()),
            });
        }
        let first = &mut self.layers[0];
        for (j, mut row) in first.weights.axis_iter_mut(Axis(0)).enumerate() {
            row.mapv_inplace(|w| w / scale[j]);
            let shift = mean[j];
            first.bias.zip_mut_with(&row, |b, &w| *b -= shift * w);
        }
        Ok(())
    }
}

fn affine(x: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    z
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|t| (t - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|t| t / sum);
    }
}

/// Serialized shape of a layer: `w` as `fan_in` rows of `fan_out` values.
#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    config: NetworkConfig,
    layers: Vec<LayerRepr>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRepr {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    w: l.weights.outer_iter().map(|r| r.to_vec()).collect(),
                    b: l.bias.to_vec(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = NetworkRepr::deserialize(d)?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.w.len();
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) {
                    return Err(D::Error::custom("ragged weight matrix"));
                }
                let flat: Vec<f64> = l.w.into_iter().flatten().collect();
                Ok(Layer {
                    weights: Array2::from_shape_vec((rows, cols), flat).map_err(D::Error::custom)?,
                    bias: Array1::from(l.b),
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Network::from_layers(repr.config, layers).map_err(D::Error::custom)
    }
}

/// A network tagged with the objective it was trained under. Serializes as
/// `{"config": .., "layers": [..], "loss": "multinomial" | "jbce"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    #[serde(flatten)]
    pub network: Network,
    pub loss: Loss,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn init_shapes_chain() {
        let net = Network::init(NetworkConfig::deep(5, 11), 1).unwrap();
        let shapes: Vec<_> = net.layers().iter().map(|l| l.weights.dim()).collect();
        assert_eq!(shapes, vec![(5, 100), (100, 100), (100, 100), (100, 11)]);
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));

        let lr = Network::init(NetworkConfig::logistic(5, 11), 1).unwrap();
        assert_eq!(lr.layers().len(), 1);
        assert_eq!(lr.layers()[0].weights.dim(), (5, 11));
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::init(NetworkConfig::deep(3, 4), 9).unwrap();
        let b = Network::init(NetworkConfig::deep(3, 4), 9).unwrap();
        let c = Network::init(NetworkConfig::deep(3, 4), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        let mut cfg = NetworkConfig::deep(3, 4);
        cfg.dropout_rate = 1.0;
        assert!(Network::init(cfg.clone(), 0).is_err());
        cfg.dropout_rate = 0.2;
        cfg.output_dim = 1;
        assert!(Network::init(cfg, 0).is_err());
    }

    #[test]
    fn zero_logistic_is_uniform() {
        let mut net = Network::init(NetworkConfig::logistic(3, 4), 0).unwrap();
        let zeros = vec![0.0; net.num_params()];
        net.set_params(&zeros).unwrap();
        let p = net.forward(&[1.0, -2.0, 3.5], Mode::Eval).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert!((elu(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-15);
        assert_eq!(elu(2.5), 2.5);
    }

    #[test]
    fn eval_is_pure_train_is_seeded() {
        let net = Network::init(NetworkConfig::deep(2, 5), 3).unwrap();
        let x = [0.3, -1.2];
        assert_eq!(
            net.forward(&x, Mode::Eval).unwrap(),
            net.forward(&x, Mode::Eval).unwrap()
        );
        let a = net.forward(&x, Mode::Train(11)).unwrap();
        let b = net.forward(&x, Mode::Train(11)).unwrap();
        let c = net.forward(&x, Mode::Train(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Network::init(NetworkConfig::logistic(3, 4), 0).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0], Mode::Eval),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn folding_standardization_matches() {
        let net = Network::init(NetworkConfig::deep(3, 4), 5).unwrap();
        let mean = [1.0, -2.0, 10.0];
        let scale = [2.0, 0.5, 4.0];
        let x = array![[3.0, -1.0, 2.0], [0.0, 0.0, 14.0]];
        let standardized = array![[1.0, 2.0, -2.0], [-0.5, 4.0, 1.0]];
        let expected = net.predict_proba(standardized.view()).unwrap();
        let mut folded = net.clone();
        folded.fold_input_standardization(&mean, &scale).unwrap();
        let got = folded.predict_proba(x.view()).unwrap();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_json_round_trip() {
        let net = Network::init(NetworkConfig::deep(2, 3), 8).unwrap();
        let clf = Classifier {
            network: net,
            loss: Loss::Jbce,
        };
        let s = serde_json::to_string(&clf).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["loss"], "jbce");
        assert_eq!(v["layers"].as_array().unwrap().len(), 4);
        assert_eq!(v["layers"][0]["w"].as_array().unwrap().len(), 2);
        assert_eq!(v["layers"][0]["w"][0].as_array().unwrap().len(), 100);
        let back: Classifier = serde_json::from_str(&s).unwrap();
        assert_eq!(back, clf);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in proptest::collection::vec(-50.0f64..50.0, 2..20), shift in -100.0f64..100.0) {
            let n = z.len();
            let mut a = Array2::from_shape_vec((1, n), z.clone()).unwrap();
            let mut b = Array2::from_shape_vec((1, n), z.iter().map(|t| t + shift).collect()).unwrap();
            softmax_rows(&mut a);
            softmax_rows(&mut b);
            prop_assert!((a.sum() - 1.0).abs() < 1e-9);
            prop_assert!(a.iter().all(|&p| p > 0.0));
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
            let cum = cumulative(a.row(0).as_slice().unwrap());
            prop_assert!(cum.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
