//! Simulation study grids (loss × classifier × bin count × ensemble size)
//! and the empirical consistency study.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Loss, TrainConfig};
use crate::recipe::{ModelRecipe, NetworkSettings, PartitionKind};
use crate::rng::{child_seed, rng_from_seed};
use crate::scoring::score_testset;
use crate::simgen::{gen_location_normal, generate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Deep,
    Logistic,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Deep => "deep",
            ClassifierKind::Logistic => "logistic",
        }
    }
}

/// One grid configuration. `bins` is the number of cut-points `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub loss: Loss,
    pub classifier: ClassifierKind,
    pub bins: usize,
    #[serde(default = "one")]
    pub ensemble_k: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: u8,
    pub replicates: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub bins: Vec<usize>,
    pub losses: Vec<Loss>,
    pub classifiers: Vec<ClassifierKind>,
    pub ensemble_k: Vec<usize>,
    /// Explicit configurations; replaces the cartesian sweep when set.
    pub configs: Option<Vec<CellConfig>>,
    pub seed: u64,
    /// Architecture of the `deep` classifier.
    pub network: NetworkSettings,
    /// Training settings; `loss` and `seed` are set per cell.
    pub train: TrainConfig,
    pub range_widen: f64,
    pub min_width_fraction: Option<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            model: 3,
            replicates: 10,
            n_train: 2000,
            n_test: 1000,
            bins: vec![10, 40, 160],
            losses: vec![Loss::Jbce, Loss::Multinomial],
            classifiers: vec![ClassifierKind::Deep, ClassifierKind::Logistic],
            ensemble_k: vec![1],
            configs: None,
            seed: 0,
            network: NetworkSettings::default(),
            train: TrainConfig::default(),
            range_widen: 0.01,
            min_width_fraction: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.model) {
            return Err(Error::UnsupportedModel(format!("unknown simulation model {}", self.model)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidCount("replicates must be at least 1".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidCount("n_train and n_test must be at least 1".into()));
        }
        let configs = self.configs();
        if configs.is_empty() {
            return Err(Error::InvalidCount("the grid has no configurations".into()));
        }
        for c in &configs {
            if c.bins == 0 {
                return Err(Error::InvalidCount("bin counts must be at least 1".into()));
            }
            if c.ensemble_k == 0 {
                return Err(Error::InvalidCount("ensemble sizes must be at least 1".into()));
            }
        }
        self.network.build(1, 2).validate()?;
        self.train.validate()
    }

    /// Configurations in grid order.
    pub fn configs(&self) -> Vec<CellConfig> {
        if let Some(c) = &self.configs {
            return c.clone();
        }
        let mut out = Vec::new();
        for &loss in &self.losses {
            for &classifier in &self.classifiers {
                for &bins in &self.bins {
                    for &ensemble_k in &self.ensemble_k {
                        out.push(CellConfig {
                            loss,
                            classifier,
                            bins,
                            ensemble_k,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn recipe(&self, cell: &CellConfig, seed: u64) -> ModelRecipe {
        let network = match cell.classifier {
            ClassifierKind::Deep => self.network.clone(),
            ClassifierKind::Logistic => NetworkSettings::logistic(),
        };
        ModelRecipe {
            partition: if cell.ensemble_k > 1 {
                PartitionKind::Random
            } else {
                PartitionKind::Even
            },
            m: cell.bins,
            k: cell.ensemble_k,
            min_width_fraction: self.min_width_fraction,
            bounds: None,
            range_widen: self.range_widen,
            network,
            train: TrainConfig {
                loss: cell.loss,
                seed,
                ..self.train.clone()
            },
        }
    }

    /// Train and test sets of one replicate, drawn together so that
    /// dataset-level parameters are shared.
    pub fn replicate_data(&self, replicate: usize) -> Result<(Dataset, Dataset)> {
        let (all, _) = generate(
            self.model,
            self.n_train + self.n_test,
            child_seed(self.seed, replicate as u64),
        )?;
        let n = all.len();
        Ok((all.slice_rows(0, self.n_train), all.slice_rows(self.n_train, n)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: u8,
    pub replicate: usize,
    pub config: CellConfig,
    pub crps: Option<f64>,
    pub aqtl: Option<f64>,
    pub coverage90: Option<f64>,
    pub wall_seconds: f64,
    /// `ok`, or `error: <message>`.
    pub status: String,
}

impl GridRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

type ReplicateData = std::result::Result<(Dataset, Dataset), String>;

fn run_cell(spec: &ExperimentSpec, data: &ReplicateData, replicate: usize, idx: usize, cell: CellConfig) -> GridRow {
    let start = Instant::now();
    let outcome = data.as_ref().map_err(Clone::clone).and_then(|(train, test)| {
        let seed = child_seed(child_seed(spec.seed, replicate as u64), 1 + idx as u64);
        spec.recipe(&cell, seed)
            .fit(train, None)
            .and_then(|fit| score_testset(&fit.estimator, test))
            .map_err(|e| e.to_string())
    });
    let wall_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(r) => GridRow {
            model: spec.model,
            replicate,
            config: cell,
            crps: Some(r.crps),
            aqtl: Some(r.aqtl),
            coverage90: Some(r.coverage90),
            wall_seconds,
            status: "ok".into(),
        },
        Err(e) => GridRow {
            model: spec.model,
            replicate,
            config: cell,
            crps: None,
            aqtl: None,
            coverage90: None,
            wall_seconds,
            status: format!("error: {e}"),
        },
    }
}

/// Runs every (replicate, configuration) cell; rows come back in
/// replicate-major, configuration-minor order. Cell failures are recorded
/// in the row's status and do not stop the grid.
pub fn run_grid(spec: &ExperimentSpec) -> Result<Vec<GridRow>> {
    spec.validate()?;
    let configs = spec.configs();
    let rows = (0..spec.replicates)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let data = spec.replicate_data(rep).map_err(|e| e.to_string());
            configs
                .iter()
                .enumerate()
                .map(|(i, c)| run_cell(spec, &data, rep, i, *c))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(rows)
}

pub const GRID_COLUMNS: [&str; 11] = [
    "model",
    "replicate",
    "loss",
    "classifier",
    "bins",
    "ensembleK",
    "crps",
    "aqtl",
    "coverage90",
    "wall_seconds",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(GRID_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.model.to_string(),
            r.replicate.to_string(),
            r.config.loss.to_string(),
            r.config.classifier.name().to_string(),
            r.config.bins.to_string(),
            r.config.ensemble_k.to_string(),
            opt(r.crps),
            opt(r.aqtl),
            opt(r.coverage90),
            format!("{:.3}", r.wall_seconds),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Mean scores of one configuration over its successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: CellConfig,
    pub ok: usize,
    pub failed: usize,
    pub crps: f64,
    pub aqtl: f64,
    pub coverage90: f64,
}

pub fn summarize(rows: &[GridRow]) -> Vec<ConfigSummary> {
    let mut out: Vec<ConfigSummary> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|s| s.config == r.config) {
            Some(i) => i,
            None => {
                out.push(ConfigSummary {
                    config: r.config,
                    ok: 0,
                    failed: 0,
                    crps: 0.0,
                    aqtl: 0.0,
                    coverage90: 0.0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        match (r.crps, r.aqtl, r.coverage90) {
            (Some(c), Some(a), Some(v)) if r.is_ok() => {
                s.ok += 1;
                s.crps += c;
                s.aqtl += a;
                s.coverage90 += v;
            }
            _ => s.failed += 1,
        }
    }
    for s in &mut out {
        let n = s.ok as f64;
        if s.ok == 0 {
            s.crps = f64::NAN;
            s.aqtl = f64::NAN;
            s.coverage90 = f64::NAN;
        } else {
            s.crps /= n;
            s.aqtl /= n;
            s.coverage90 /= n;
        }
    }
    out
}

/// Smallest `k` with `k^3 >= n`, i.e. `ceil(n^(1/3))` without rounding
/// trouble at perfect cubes.
pub fn cube_root_bins(n: usize) -> usize {
    let mut k = (n as f64).cbrt().round() as usize;
    while k.pow(3) < n {
        k += 1;
    }
    while k > 1 && (k - 1).pow(3) >= n {
        k -= 1;
    }
    k.max(1)
}

/// `\int (f_hat - f)^2` over `[lower, upper]` by the midpoint rule.
pub fn integrated_squared_error<F, G>(f_hat: F, f_true: G, lower: f64, upper: f64, points: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> Result<f64>,
{
    if !(lower < upper) {
        return Err(Error::InvalidRange { lower, upper });
    }
    if points == 0 {
        return Err(Error::InvalidCount("quadrature needs at least one point".into()));
    }
    let h = (upper - lower) / points as f64;
    let mut total = 0.0;
    for i in 0..points {
        let y = lower + (i as f64 + 0.5) * h;
        total += (f_hat(y)? - f_true(y)?).powi(2);
    }
    Ok(total * h)
}

fn consistency_train() -> TrainConfig {
    // full-batch Adam; the problem is convex, so this converges cleanly
    TrainConfig {
        loss: Loss::Multinomial,
        epochs: 1500,
        batch_size: 1 << 30,
        learning_rate: 0.05,
        ..TrainConfig::default()
    }
}

/// Consistency study on the one-feature location-normal model with
/// multinomial logistic regression on even bins, `K(n) = ceil(n^(1/3))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencySpec {
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub probes: usize,
    pub quadrature_points: usize,
    pub seed: u64,
    pub range_widen: f64,
    pub train: TrainConfig,
}

impl Default for ConsistencySpec {
    fn default() -> Self {
        ConsistencySpec {
            sample_sizes: vec![1000, 4000, 16000],
            replicates: 5,
            probes: 10,
            quadrature_points: 2000,
            seed: 0,
            range_widen: 0.01,
            train: consistency_train(),
        }
    }
}

impl ConsistencySpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidCount("no sample sizes".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) || self.sample_sizes[0] < 2 {
            return Err(Error::InvalidParameter(
                "sample sizes must be increasing and at least 2".into(),
            ));
        }
        if self.replicates == 0 || self.probes == 0 || self.quadrature_points == 0 {
            return Err(Error::InvalidCount(
                "replicates, probes and quadrature_points must be at least 1".into(),
            ));
        }
        self.train.validate()
    }

    /// Probe covariates: one uniform draw in each of `probes` equal slices
    /// of the covariate range `(0, 1)`.
    pub fn probe_points(&self) -> Vec<f64> {
        let mut rng = rng_from_seed(child_seed(self.seed, u64::MAX));
        (0..self.probes)
            .map(|i| (i as f64 + rng.gen::<f64>()) / self.probes as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    /// Number of bins `K(n)`.
    pub bins: usize,
    pub replicate: usize,
    /// ISE averaged over the probes.
    pub ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMedian {
    pub n: usize,
    pub bins: usize,
    pub median_ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub medians: Vec<ConsistencyMedian>,
}

impl ConsistencyReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.medians.windows(2).all(|w| w[1].median_ise < w[0].median_ise)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "bins", "replicate", "ise"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), r.bins.to_string(), r.replicate.to_string(), r.ise.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run_consistency(spec: &ConsistencySpec) -> Result<ConsistencyReport> {
    spec.validate()?;
    let probes = spec.probe_points();
    let cells: Vec<(usize, usize)> = spec
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..spec.replicates).map(move |r| (n, r)))
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(n, rep)| -> Result<ConsistencyRow> {
            let seed = child_seed(child_seed(spec.seed, rep as u64), n as u64);
            let (data, truth) = gen_location_normal(n, seed)?;
            let bins = cube_root_bins(n);
            let recipe = ModelRecipe {
                partition: PartitionKind::Even,
                m: bins - 1,
                k: 1,
                range_widen: spec.range_widen,
                network: NetworkSettings::logistic(),
                train: TrainConfig {
                    seed: child_seed(seed, 1),
                    ..spec.train.clone()
                },
                ..ModelRecipe::default()
            };
            if bins < 2 {
                return Err(Error::InvalidCount(format!("n = {n} gives a single bin")));
            }
            let fit = recipe.fit(&data, None)?;
            let (lower, upper) = crate::estimator::ConditionalModel::support(&fit.estimator);
            let mut total = 0.0;
            for &x in &probes {
                let xs = [x];
                let dist = crate::estimator::ConditionalModel::predict(&fit.estimator, &xs)?;
                total += integrated_squared_error(
                    |y| crate::estimator::Predictive::pdf(&dist, y),
                    |y| truth.pdf(&xs, y),
                    lower,
                    upper,
                    spec.quadrature_points,
                )?;
            }
            Ok(ConsistencyRow {
                n,
                bins,
                replicate: rep,
                ise: total / probes.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let medians = spec
        .sample_sizes
        .iter()
        .map(|&n| ConsistencyMedian {
            n,
            bins: cube_root_bins(n),
            median_ise: median(rows.iter().filter(|r| r.n == n).map(|r| r.ise).collect()),
        })
        .collect();
    Ok(ConsistencyReport { rows, medians })
}
