//! Density, CDF, quantile and interval predictions from (partition,
//! classifier) pairs, and the ensemble over random partitions.
//!
//! Within a bin the density is constant, so the CDF is piecewise linear and
//! the quantile function inverts it exactly by linear interpolation.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, Classifier, LabeledBatch, Network, NetworkConfig, TrainConfig};
use crate::partition::Partition;
use crate::rng::{child_seed, rng_from_seed};

/// A predictive distribution for a single covariate vector.
pub trait Predictive {
    fn support(&self) -> (f64, f64);

    /// Density at `y`; errors outside the support.
    fn pdf(&self, y: f64) -> Result<f64>;

    /// CDF at `y`, clamped to 0 below and 1 above the support.
    fn cdf(&self, y: f64) -> f64;

    fn quantile(&self, tau: f64) -> Result<f64>;

    /// Central interval `[Q((1-level)/2), Q((1+level)/2)]`.
    fn interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("interval level {level} must lie in (0, 1)")));
        }
        let lo = self.quantile((1.0 - level) / 2.0)?;
        let hi = self.quantile((1.0 + level) / 2.0)?;
        Ok((lo, hi.max(lo)))
    }
}

/// Something that maps covariate rows to predictive distributions.
pub trait ConditionalModel: Sync {
    type Dist<'a>: Predictive
    where
        Self: 'a;

    fn n_features(&self) -> usize;

    /// Range `[l, u]` on which the predictive distributions live.
    fn support(&self) -> (f64, f64);

    fn predict_batch<'a>(&'a self, x: ArrayView2<f64>) -> Result<Vec<Self::Dist<'a>>>;

    fn predict<'a>(&'a self, x: &[f64]) -> Result<Self::Dist<'a>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.predict_batch(view)?.pop().expect("one row"))
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau {tau} must lie in (0, 1)")))
    }
}

/// Piecewise-constant density over one partition.
#[derive(Debug, Clone)]
pub struct BinnedDistribution<'a> {
    partition: &'a Partition,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl<'a> BinnedDistribution<'a> {
    pub fn new(partition: &'a Partition, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != partition.n_bins() {
            return Err(Error::DimensionMismatch {
                expected: partition.n_bins(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("bin probabilities must be nonnegative".into()));
        }
        let cum = nn::cumulative(&probs);
        Ok(BinnedDistribution {
            partition,
            probs,
            cum,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn partition(&self) -> &Partition {
        self.partition
    }

    fn mass_below(&self, bin: usize) -> f64 {
        if bin == 0 {
            0.0
        } else {
            self.cum[bin - 1]
        }
    }
}

impl Predictive for BinnedDistribution<'_> {
    fn support(&self) -> (f64, f64) {
        (self.partition.lower(), self.partition.upper())
    }

    fn pdf(&self, y: f64) -> Result<f64> {
        let k = self.partition.bin_index(y)?;
        Ok(self.probs[k] / self.partition.bin_width(k)?)
    }

    fn cdf(&self, y: f64) -> f64 {
        let p = self.partition;
        if y.is_nan() {
            return f64::NAN;
        }
        if y <= p.lower() {
            return 0.0;
        }
        if y >= p.upper() {
            return 1.0;
        }
        let k = p.locate(y);
        let (left, right) = (p.edge(k), p.edge(k + 1));
        self.mass_below(k) + self.probs[k] * (y - left) / (right - left)
    }

    fn quantile(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let last = self.probs.len() - 1;
        let mut k = self.cum.partition_point(|&c| c < tau).min(last);
        // cumulative rounding can leave tau just above the final sum
        while self.probs[k] <= 0.0 && k > 0 {
            k -= 1;
        }
        let p = self.partition;
        let (left, right) = (p.edge(k), p.edge(k + 1));
        if self.probs[k] <= 0.0 {
            return Ok(left);
        }
        let t = ((tau - self.mass_below(k)) / self.probs[k]).clamp(0.0, 1.0);
        Ok(left + t * (right - left))
    }
}

// Incremental mean; exact when all values are equal.
fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (i, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (i + 1) as f64;
    }
    mean
}

/// Equal-weight mixture of binned distributions sharing `[l, u]`.
#[derive(Debug, Clone)]
pub struct MixtureDistribution<'a> {
    members: Vec<BinnedDistribution<'a>>,
    knots: Vec<f64>,
    knot_cdf: Vec<f64>,
}

impl<'a> MixtureDistribution<'a> {
    pub fn new(members: Vec<BinnedDistribution<'a>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::EmptyData("mixture with no members".into()))?;
        let (lo, hi) = first.support();
        if members.iter().any(|m| m.support() != (lo, hi)) {
            return Err(Error::InvalidParameter("mixture members must share their support".into()));
        }
        // the mixture CDF is linear between consecutive knots
        let mut knots: Vec<f64> = members
            .iter()
            .flat_map(|m| m.partition.cuts().iter().copied())
            .chain([lo, hi])
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let knot_cdf = knots
            .iter()
            .map(|&y| running_mean(members.iter().map(|m| m.cdf(y))))
            .collect();
        Ok(MixtureDistribution {
            members,
            knots,
            knot_cdf,
        })
    }

    pub fn members(&self) -> &[BinnedDistribution<'a>] {
        &self.members
    }
}

impl Predictive for MixtureDistribution<'_> {
    fn support(&self) -> (f64, f64) {
        self.members[0].support()
    }

    fn pdf(&self, y: f64) -> Result<f64> {
        let values = self.members.iter().map(|m| m.pdf(y)).collect::<Result<Vec<_>>>()?;
        Ok(running_mean(values))
    }

    fn cdf(&self, y: f64) -> f64 {
        running_mean(self.members.iter().map(|m| m.cdf(y)))
    }

    /// Inverts the averaged CDF: bisection over the knot grid locates the
    /// linear segment containing `tau`, which is then inverted exactly.
    fn quantile(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let n = self.knots.len();
        let k = self.knot_cdf.partition_point(|&c| c < tau).clamp(1, n - 1);
        let (c0, c1) = (self.knot_cdf[k - 1], self.knot_cdf[k]);
        let (y0, y1) = (self.knots[k - 1], self.knots[k]);
        if c1 <= c0 {
            return Ok(y0);
        }
        let t = ((tau - c0) / (c1 - c0)).clamp(0.0, 1.0);
        Ok(y0 + t * (y1 - y0))
    }
}

/// A partition paired with a classifier whose outputs are its bin masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEstimator")]
pub struct DensityEstimator {
    partition: Partition,
    #[serde(rename = "model")]
    classifier: Classifier,
}

#[derive(Deserialize)]
struct RawEstimator {
    partition: Partition,
    model: Classifier,
}

impl TryFrom<RawEstimator> for DensityEstimator {
    type Error = Error;

    fn try_from(raw: RawEstimator) -> Result<Self> {
        DensityEstimator::new(raw.partition, raw.model)
    }
}

impl DensityEstimator {
    pub fn new(partition: Partition, classifier: Classifier) -> Result<Self> {
        if classifier.network.output_dim() != partition.n_bins() {
            return Err(Error::DimensionMismatch {
                expected: partition.n_bins(),
                got: classifier.network.output_dim(),
            });
        }
        Ok(DensityEstimator {
            partition,
            classifier,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn network(&self) -> &Network {
        &self.classifier.network
    }

    pub fn bin_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.network().forward(x, nn::Mode::Eval)
    }

    fn distributions_from(&self, probs: Array2<f64>) -> Result<Vec<BinnedDistribution<'_>>> {
        probs
            .axis_iter(Axis(0))
            .map(|row| BinnedDistribution::new(&self.partition, row.to_vec()))
            .collect()
    }

    pub fn pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        self.predict(x)?.pdf(y)
    }

    pub fn cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.predict(x)?.cdf(y))
    }

    pub fn quantile(&self, x: &[f64], tau: f64) -> Result<f64> {
        self.predict(x)?.quantile(tau)
    }

    pub fn predict_interval(&self, x: &[f64], level: f64) -> Result<(f64, f64)> {
        self.predict(x)?.interval(level)
    }
}

impl ConditionalModel for DensityEstimator {
    type Dist<'a> = BinnedDistribution<'a>;

    fn n_features(&self) -> usize {
        self.network().input_dim()
    }

    fn support(&self) -> (f64, f64) {
        (self.partition.lower(), self.partition.upper())
    }

    fn predict_batch<'a>(&'a self, x: ArrayView2<f64>) -> Result<Vec<BinnedDistribution<'a>>> {
        let probs = self.network().predict_proba(x)?;
        self.distributions_from(probs)
    }
}

/// `K` density estimators over independently drawn partitions of the same
/// range, averaged with equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnsemble")]
pub struct EnsembleEstimator {
    members: Vec<DensityEstimator>,
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct RawEnsemble {
    members: Vec<DensityEstimator>,
    lower: f64,
    upper: f64,
}

impl TryFrom<RawEnsemble> for EnsembleEstimator {
    type Error = Error;

    fn try_from(raw: RawEnsemble) -> Result<Self> {
        let ens = EnsembleEstimator::new(raw.members)?;
        if ens.lower != raw.lower || ens.upper != raw.upper {
            return Err(Error::InvalidParameter(
                "ensemble bounds disagree with its members".into(),
            ));
        }
        Ok(ens)
    }
}

impl EnsembleEstimator {
    pub fn new(members: Vec<DensityEstimator>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidCount("an ensemble needs at least one member".into()))?;
        let (lower, upper) = first.support();
        let dim = first.n_features();
        for m in &members {
            if m.support() != (lower, upper) {
                return Err(Error::InvalidParameter("ensemble members must share [lower, upper]".into()));
            }
            if m.n_features() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.n_features(),
                });
            }
        }
        Ok(EnsembleEstimator {
            members,
            lower,
            upper,
        })
    }

    pub fn members(&self) -> &[DensityEstimator] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        self.predict(x)?.pdf(y)
    }

    pub fn cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.predict(x)?.cdf(y))
    }

    pub fn quantile(&self, x: &[f64], tau: f64) -> Result<f64> {
        self.predict(x)?.quantile(tau)
    }

    pub fn predict_interval(&self, x: &[f64], level: f64) -> Result<(f64, f64)> {
        self.predict(x)?.interval(level)
    }
}

impl ConditionalModel for EnsembleEstimator {
    type Dist<'a> = MixtureDistribution<'a>;

    fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn predict_batch<'a>(&'a self, x: ArrayView2<f64>) -> Result<Vec<MixtureDistribution<'a>>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.predict_batch(x))
            .collect::<Result<Vec<_>>>()?;
        let mut columns: Vec<_> = per_member.into_iter().map(Vec::into_iter).collect();
        (0..x.nrows())
            .map(|_| MixtureDistribution::new(columns.iter_mut().map(|c| c.next().unwrap()).collect()))
            .collect()
    }
}

/// Either kind of fitted model, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FittedModel {
    Ensemble(EnsembleEstimator),
    Single(DensityEstimator),
}

#[derive(Debug, Clone)]
pub enum AnyDistribution<'a> {
    Single(BinnedDistribution<'a>),
    Mixture(MixtureDistribution<'a>),
}

impl Predictive for AnyDistribution<'_> {
    fn support(&self) -> (f64, f64) {
        match self {
            AnyDistribution::Single(d) => d.support(),
            AnyDistribution::Mixture(d) => d.support(),
        }
    }

    fn pdf(&self, y: f64) -> Result<f64> {
        match self {
            AnyDistribution::Single(d) => d.pdf(y),
            AnyDistribution::Mixture(d) => d.pdf(y),
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        match self {
            AnyDistribution::Single(d) => d.cdf(y),
            AnyDistribution::Mixture(d) => d.cdf(y),
        }
    }

    fn quantile(&self, tau: f64) -> Result<f64> {
        match self {
            AnyDistribution::Single(d) => d.quantile(tau),
            AnyDistribution::Mixture(d) => d.quantile(tau),
        }
    }
}

impl ConditionalModel for FittedModel {
    type Dist<'a> = AnyDistribution<'a>;

    fn n_features(&self) -> usize {
        match self {
            FittedModel::Single(e) => e.n_features(),
            FittedModel::Ensemble(e) => e.n_features(),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            FittedModel::Single(e) => e.support(),
            FittedModel::Ensemble(e) => e.support(),
        }
    }

    fn predict_batch<'a>(&'a self, x: ArrayView2<f64>) -> Result<Vec<AnyDistribution<'a>>> {
        Ok(match self {
            FittedModel::Single(e) => e.predict_batch(x)?.into_iter().map(AnyDistribution::Single).collect(),
            FittedModel::Ensemble(e) => e.predict_batch(x)?.into_iter().map(AnyDistribution::Mixture).collect(),
        })
    }
}

impl FittedModel {
    pub fn n_members(&self) -> usize {
        match self {
            FittedModel::Single(_) => 1,
            FittedModel::Ensemble(e) => e.len(),
        }
    }
}

/// Fitted estimator plus the classifier's per-epoch training loss.
#[derive(Debug, Clone)]
pub struct Fit<E> {
    pub estimator: E,
    pub loss_trace: Vec<Vec<f64>>,
}

impl<E> Fit<E> {
    /// Final-epoch loss averaged over members.
    pub fn final_loss(&self) -> f64 {
        let last: Vec<f64> = self.loss_trace.iter().filter_map(|t| t.last().copied()).collect();
        last.iter().sum::<f64>() / last.len().max(1) as f64
    }
}

/// Bin labels for every response; rejects responses outside the partition.
pub fn label(data: &Dataset, partition: &Partition) -> Result<Vec<usize>> {
    let (lo, hi) = (partition.lower(), partition.upper());
    let bad: Vec<usize> = data
        .y()
        .iter()
        .enumerate()
        .filter(|(_, &y)| !(y >= lo && y <= hi))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::ResponseOutOfRange {
            count: bad.len(),
            rows: bad,
            lower: lo,
            upper: hi,
        });
    }
    Ok(data.y().iter().map(|&y| partition.locate(y)).collect())
}

fn standardization(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        })
        .unzip()
}

/// Labels the responses, trains the classifier and pairs it with the
/// partition. Covariates are standardized for training and the scaling is
/// folded back into the first layer, so the stored network takes raw inputs.
pub fn fit_estimator(
    data: &Dataset,
    partition: Partition,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<Fit<DensityEstimator>> {
    if data.is_empty() {
        return Err(Error::EmptyData("no training rows".into()));
    }
    if net_cfg.input_dim != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: net_cfg.input_dim,
            got: data.n_features(),
        });
    }
    if net_cfg.output_dim != partition.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: partition.n_bins(),
            got: net_cfg.output_dim,
        });
    }
    train_cfg.validate()?;
    let targets = label(data, &partition)?;
    let (mean, scale) = standardization(data.x());
    let mut x = data.x().to_owned();
    for (mut col, (m, s)) in x.axis_iter_mut(Axis(1)).zip(mean.iter().zip(&scale)) {
        col.mapv_inplace(|v| (v - m) / s);
    }
    let net = Network::init(net_cfg.clone(), child_seed(train_cfg.seed, 0x1a17))?;
    let trained = nn::train(net, LabeledBatch::new(x.view(), &targets)?, train_cfg)?;
    let mut network = trained.network;
    network.fold_input_standardization(&mean, &scale)?;
    let estimator = DensityEstimator::new(
        partition,
        Classifier {
            network,
            loss: train_cfg.loss,
        },
    )?;
    Ok(Fit {
        estimator,
        loss_trace: vec![trained.loss_trace],
    })
}

/// Options for [`fit_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub lower: f64,
    pub upper: f64,
    pub m: usize,
    pub k: usize,
    pub min_width_fraction: f64,
    pub seed: u64,
}

/// Fits `K` members, each on its own random partition. Member `i` draws its
/// cut-points and training seed from `child_seed(seed, i)`, so the result
/// does not depend on how the members are scheduled.
pub fn fit_ensemble(
    data: &Dataset,
    spec: &EnsembleSpec,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<Fit<EnsembleEstimator>> {
    if spec.k == 0 {
        return Err(Error::InvalidCount("ensemble size K must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyData("no training rows".into()));
    }
    let fits = (0..spec.k)
        .into_par_iter()
        .map(|i| {
            let member_seed = child_seed(spec.seed, i as u64);
            let partition = Partition::random(
                spec.lower,
                spec.upper,
                spec.m,
                &mut rng_from_seed(child_seed(member_seed, 0)),
                spec.min_width_fraction,
            )?;
            let cfg = TrainConfig {
                seed: child_seed(member_seed, 1),
                ..train_cfg.clone()
            };
            fit_estimator(data, partition, net_cfg, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut members = Vec::with_capacity(fits.len());
    let mut traces = Vec::with_capacity(fits.len());
    for fit in fits {
        members.push(fit.estimator);
        traces.extend(fit.loss_trace);
    }
    Ok(Fit {
        estimator: EnsembleEstimator::new(members)?,
        loss_trace: traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Loss, NetworkConfig};
    use ndarray::{Array1, Array2};

    /// Zero-hidden-layer classifier whose output is exactly `probs` for
    /// every input (weights zero, biases = log probs).
    pub(crate) fn fixed_estimator(partition: Partition, probs: &[f64]) -> DensityEstimator {
        let cfg = NetworkConfig::logistic(1, probs.len());
        let layer = nn::Layer {
            weights: Array2::zeros((1, probs.len())),
            bias: Array1::from_iter(probs.iter().map(|p| p.ln())),
        };
        let network = Network::from_layers(cfg, vec![layer]).unwrap();
        DensityEstimator::new(
            partition,
            Classifier {
                network,
                loss: Loss::Multinomial,
            },
        )
        .unwrap()
    }

    fn two_bin() -> DensityEstimator {
        fixed_estimator(Partition::new(0.0, 1.0, vec![0.5]).unwrap(), &[0.8, 0.2])
    }

    #[test]
    fn pdf_values() {
        let e = fixed_estimator(Partition::even(0.0, 1.0, 3).unwrap(), &[0.25; 4]);
        for y in [0.0, 0.1, 0.5, 0.99, 1.0] {
            assert!((e.pdf(&[3.0], y).unwrap() - 1.0).abs() < 1e-12);
        }
        let e = two_bin();
        assert!((e.pdf(&[0.0], 0.25).unwrap() - 1.6).abs() < 1e-12);
        assert!((e.pdf(&[0.0], 0.75).unwrap() - 0.4).abs() < 1e-12);
        assert!(matches!(e.pdf(&[0.0], 1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn cdf_values() {
        let e = two_bin();
        assert!((e.cdf(&[0.0], 0.5).unwrap() - 0.8).abs() < 1e-12);
        assert!((e.cdf(&[0.0], 0.25).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(e.cdf(&[0.0], 1.0).unwrap(), 1.0);
        assert_eq!(e.cdf(&[0.0], 0.0).unwrap(), 0.0);
        assert_eq!(e.cdf(&[0.0], -4.0).unwrap(), 0.0);
        assert_eq!(e.cdf(&[0.0], 9.0).unwrap(), 1.0);
    }

    #[test]
    fn quantile_values() {
        let e = two_bin();
        assert!((e.quantile(&[0.0], 0.4).unwrap() - 0.25).abs() < 1e-12);
        assert!((e.quantile(&[0.0], 0.8).unwrap() - 0.5).abs() < 1e-12);
        let u = fixed_estimator(Partition::even(-3.0, 5.0, 7).unwrap(), &[0.125; 8]);
        assert!((u.quantile(&[0.0], 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(u.quantile(&[0.0], 0.0).is_err());
        assert!(u.quantile(&[0.0], 1.0).is_err());
    }

    #[test]
    fn interval_values() {
        let u = fixed_estimator(Partition::even(0.0, 1.0, 9).unwrap(), &[0.1; 10]);
        let (lo, hi) = u.predict_interval(&[0.0], 0.9).unwrap();
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.95).abs() < 1e-12);
        assert!(u.predict_interval(&[0.0], 1.0).is_err());
        assert!(u.predict_interval(&[0.0], 0.0).is_err());
    }

    #[test]
    fn zero_mass_bins_are_skipped() {
        let e = fixed_estimator(Partition::even(0.0, 4.0, 3).unwrap(), &[0.5, 1e-300, 1e-300, 0.5]);
        let q = e.quantile(&[0.0], 0.5).unwrap();
        assert!(q <= 1.0 + 1e-9 || q >= 3.0 - 1e-9, "{q}");
    }

    #[test]
    fn ensemble_averages_members() {
        let a = two_bin();
        let b = fixed_estimator(Partition::new(0.0, 1.0, vec![0.5]).unwrap(), &[0.2, 0.8]);
        let ens = EnsembleEstimator::new(vec![a.clone(), b]).unwrap();
        assert!((ens.pdf(&[0.0], 0.25).unwrap() - 1.0).abs() < 1e-12);
        let same = EnsembleEstimator::new(vec![a.clone(), a.clone(), a.clone()]).unwrap();
        for y in [0.1, 0.3, 0.6, 0.9] {
            assert_eq!(same.pdf(&[0.0], y).unwrap(), a.pdf(&[0.0], y).unwrap());
        }
        assert!(EnsembleEstimator::new(vec![]).is_err());
    }

    #[test]
    fn ensemble_rejects_mixed_bounds() {
        let a = two_bin();
        let b = fixed_estimator(Partition::new(0.0, 2.0, vec![0.5]).unwrap(), &[0.2, 0.8]);
        assert!(EnsembleEstimator::new(vec![a, b]).is_err());
    }

    #[test]
    fn mixture_quantile_inverts_cdf() {
        let a = fixed_estimator(Partition::new(0.0, 1.0, vec![0.3, 0.7]).unwrap(), &[0.2, 0.5, 0.3]);
        let b = fixed_estimator(Partition::new(0.0, 1.0, vec![0.1, 0.55]).unwrap(), &[0.1, 0.6, 0.3]);
        let ens = EnsembleEstimator::new(vec![a, b]).unwrap();
        let d = ens.predict(&[0.0]).unwrap();
        for t in 1..100 {
            let tau = t as f64 / 100.0;
            let q = d.quantile(tau).unwrap();
            assert!((d.cdf(q) - tau).abs() < 1e-12);
        }
    }

    #[test]
    fn model_file_shapes() {
        let e = two_bin();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert!(v["partition"]["cuts"].is_array());
        assert_eq!(v["model"]["loss"], "multinomial");
        let ens = EnsembleEstimator::new(vec![e.clone(), e.clone()]).unwrap();
        let s = serde_json::to_string(&FittedModel::Ensemble(ens.clone())).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["members"].as_array().unwrap().len(), 2);
        assert_eq!(v["lower"], 0.0);
        match serde_json::from_str::<FittedModel>(&s).unwrap() {
            FittedModel::Ensemble(back) => assert_eq!(back, ens),
            other => panic!("wrong variant {other:?}"),
        }
        let s = serde_json::to_string(&FittedModel::Single(e.clone())).unwrap();
        assert_eq!(serde_json::from_str::<FittedModel>(&s).unwrap(), FittedModel::Single(e));
    }

    #[test]
    fn labels_and_range_errors() {
        let d = Dataset::new(Array2::zeros((4, 1)), vec![0.0, 0.5, 1.0, 1.2], None).unwrap();
        let p = Partition::even(0.0, 1.0, 3).unwrap();
        match label(&d, &p) {
            Err(Error::ResponseOutOfRange { rows, .. }) => assert_eq!(rows, vec![3]),
            other => panic!("{other:?}"),
        }
        let d = d.slice_rows(0, 3);
        assert_eq!(label(&d, &p).unwrap(), vec![0, 2, 3]);
    }

    #[test]
    fn empty_data_is_rejected() {
        let d = Dataset::new(Array2::zeros((0, 1)), vec![], None).unwrap();
        let p = Partition::even(0.0, 1.0, 3).unwrap();
        let res = fit_estimator(&d, p, &NetworkConfig::logistic(1, 4), &TrainConfig::default());
        assert!(matches!(res, Err(Error::EmptyData(_))));
    }
}
