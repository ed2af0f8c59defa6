//! Declarative description of how to fit a model on a dataset: partition
//! kind, bin count, ensemble size, architecture and training settings.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_ensemble, fit_estimator, EnsembleSpec, Fit, FittedModel};
use crate::nn::{Activation, NetworkConfig, TrainConfig};
use crate::partition::{default_min_width_fraction, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    #[default]
    Even,
    Random,
}

/// Architecture without the data-dependent input/output sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings {
            hidden_sizes: vec![100, 100, 100],
            dropout_rate: 0.5,
            activation: Activation::Elu,
        }
    }
}

impl NetworkSettings {
    pub fn logistic() -> Self {
        NetworkSettings {
            hidden_sizes: Vec::new(),
            dropout_rate: 0.0,
            activation: Activation::Elu,
        }
    }

    pub fn build(&self, input_dim: usize, output_dim: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            output_dim,
            dropout_rate: self.dropout_rate,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelRecipe {
    pub partition: PartitionKind,
    /// Number of cut-points.
    pub m: usize,
    /// Ensemble size; members always use random partitions.
    pub k: usize,
    pub min_width_fraction: Option<f64>,
    /// Explicit `[lower, upper]`; otherwise the training responses' range
    /// widened by `range_widen` of the span on each side.
    pub bounds: Option<[f64; 2]>,
    pub range_widen: f64,
    pub network: NetworkSettings,
    pub train: TrainConfig,
}

impl Default for ModelRecipe {
    fn default() -> Self {
        ModelRecipe {
            partition: PartitionKind::Even,
            m: 40,
            k: 1,
            min_width_fraction: None,
            bounds: None,
            range_widen: 0.01,
            network: NetworkSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ModelRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidCount("m must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidCount("k must be at least 1".into()));
        }
        if !(self.range_widen >= 0.0) {
            return Err(Error::InvalidParameter("range_widen must be nonnegative".into()));
        }
        if let Some([lo, hi]) = self.bounds {
            if !(lo < hi) {
                return Err(Error::InvalidRange { lower: lo, upper: hi });
            }
        }
        self.network.build(1, self.m + 1).validate()?;
        self.train.validate()
    }

    /// `[l, u]` this recipe would use on `data`.
    pub fn range_for(&self, data: &Dataset, bounds: Option<(f64, f64)>) -> Result<(f64, f64)> {
        match (self.bounds, bounds) {
            (Some([lo, hi]), _) => Ok((lo, hi)),
            (None, Some(b)) => Ok(b),
            (None, None) => data.widened_range(self.range_widen),
        }
    }

    /// Fits on `data`; `bounds` is used when the recipe declares none.
    pub fn fit(&self, data: &Dataset, bounds: Option<(f64, f64)>) -> Result<Fit<FittedModel>> {
        self.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyData("no training rows".into()));
        }
        let (lower, upper) = self.range_for(data, bounds)?;
        let net_cfg = self.network.build(data.n_features(), self.m + 1);
        let min_width = self
            .min_width_fraction
            .unwrap_or_else(|| default_min_width_fraction(self.m));
        if self.k > 1 || self.partition == PartitionKind::Random {
            let spec = EnsembleSpec {
                lower,
                upper,
                m: self.m,
                k: self.k,
                min_width_fraction: min_width,
                seed: self.train.seed,
            };
            let fit = fit_ensemble(data, &spec, &net_cfg, &self.train)?;
            // a single random-partition member is stored as a plain estimator
            let estimator = if self.k == 1 {
                FittedModel::Single(fit.estimator.members()[0].clone())
            } else {
                FittedModel::Ensemble(fit.estimator)
            };
            Ok(Fit {
                estimator,
                loss_trace: fit.loss_trace,
            })
        } else {
            let partition = Partition::even(lower, upper, self.m)?;
            let fit = fit_estimator(data, partition, &net_cfg, &self.train)?;
            Ok(Fit {
                estimator: FittedModel::Single(fit.estimator),
                loss_trace: fit.loss_trace,
            })
        }
    }
}
