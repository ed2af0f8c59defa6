//! Proper scoring rules for predictive distributions: grid CRPS, pinball
//! loss, its average over the 99 percentiles, and interval coverage.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{check_tau, ConditionalModel, Predictive};

pub const DEFAULT_GRID_POINTS: usize = 1000;
pub const COVERAGE_LEVEL: f64 = 0.9;

/// Percentile levels `0.01, 0.02, ..., 0.99`.
pub fn percentiles() -> impl Iterator<Item = f64> {
    (1..=99).map(|t| t as f64 / 100.0)
}

/// Range-normalized CRPS of one observation: the mean over `grid_points`
/// evenly spaced points of `[lower, upper]` (endpoints included) of
/// `(F(y) - I(y >= y_obs))^2`. The observation is clamped into the range.
pub fn crps<F: Fn(f64) -> f64>(
    predictive_cdf: F,
    y_obs: f64,
    lower: f64,
    upper: f64,
    grid_points: usize,
) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::InvalidRange { lower, upper });
    }
    if grid_points < 2 {
        return Err(Error::InvalidCount("CRPS needs at least 2 grid points".into()));
    }
    let y_obs = y_obs.clamp(lower, upper);
    let step = (upper - lower) / (grid_points - 1) as f64;
    let total: f64 = (0..grid_points)
        .map(|g| {
            let y = if g == grid_points - 1 {
                upper
            } else {
                lower + g as f64 * step
            };
            let step_fn = if y >= y_obs { 1.0 } else { 0.0 };
            (predictive_cdf(y) - step_fn).powi(2)
        })
        .sum();
    Ok(total / grid_points as f64)
}

/// Pinball loss `(y - q)(tau - I(y <= q))`.
pub fn qtl(q_hat: f64, y_obs: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let below = if y_obs <= q_hat { 1.0 } else { 0.0 };
    Ok((y_obs - q_hat) * (tau - below))
}

/// Mean pinball loss over the 99 percentiles.
pub fn aqtl<F: Fn(f64) -> Result<f64>>(quantile_fn: F, y_obs: f64) -> Result<f64> {
    let mut total = 0.0;
    for tau in percentiles() {
        total += qtl(quantile_fn(tau)?, y_obs, tau)?;
    }
    Ok(total / 99.0)
}

/// Fraction of observations inside their closed interval.
pub fn coverage(intervals: &[(f64, f64)], ys: &[f64]) -> Result<f64> {
    if intervals.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: ys.len(),
        });
    }
    if ys.is_empty() {
        return Err(Error::EmptyData("coverage of no observations".into()));
    }
    let inside = intervals
        .iter()
        .zip(ys)
        .filter(|((lo, hi), y)| *lo <= **y && **y <= *hi)
        .count();
    Ok(inside as f64 / ys.len() as f64)
}

/// Scores averaged over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub crps: f64,
    pub aqtl: f64,
    pub coverage90: f64,
    /// `qtl_01` .. `qtl_99`.
    pub qtl: BTreeMap<String, f64>,
    /// Observations outside the model's `[l, u]`, clamped for CRPS.
    pub clamped: usize,
}

fn qtl_column(t: usize) -> String {
    format!("qtl_{t:02}")
}

impl ScoreReport {
    pub fn csv_header() -> Vec<String> {
        let mut cols: Vec<String> = ["n", "crps", "aqtl", "coverage90"].map(String::from).to_vec();
        cols.extend((1..=99).map(qtl_column));
        cols
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.n.to_string(),
            self.crps.to_string(),
            self.aqtl.to_string(),
            self.coverage90.to_string(),
        ];
        rec.extend((1..=99).map(|t| self.qtl[&qtl_column(t)].to_string()));
        rec
    }

    /// One header row and one data row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::csv_header())?;
        w.write_record(self.csv_record())?;
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub grid_points: usize,
    pub level: f64,
    /// Rows per forward pass.
    pub chunk: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            grid_points: DEFAULT_GRID_POINTS,
            level: COVERAGE_LEVEL,
            chunk: 512,
        }
    }
}

/// Scores `model` on every row of `data` over the model's support.
pub fn score_testset<M: ConditionalModel>(model: &M, data: &Dataset) -> Result<ScoreReport> {
    score_testset_with(model, data, &ScoreOptions::default())
}

pub fn score_testset_with<M: ConditionalModel>(
    model: &M,
    data: &Dataset,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    if data.is_empty() {
        return Err(Error::EmptyData("empty test set".into()));
    }
    if data.n_features() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: data.n_features(),
        });
    }
    let (lower, upper) = model.support();
    let n = data.len();
    let mut crps_sum = 0.0;
    let mut qtl_sums = [0.0f64; 99];
    let mut intervals = Vec::with_capacity(n);
    let mut clamped = 0;
    let x = data.x();
    for start in (0..n).step_by(opts.chunk.max(1)) {
        let end = (start + opts.chunk.max(1)).min(n);
        let dists = model.predict_batch(x.slice(ndarray::s![start..end, ..]))?;
        for (dist, &y) in dists.iter().zip(&data.y()[start..end]) {
            if y < lower || y > upper {
                clamped += 1;
            }
            crps_sum += crps(|t| dist.cdf(t), y, lower, upper, opts.grid_points)?;
            for (slot, tau) in qtl_sums.iter_mut().zip(percentiles()) {
                *slot += qtl(dist.quantile(tau)?, y, tau)?;
            }
            intervals.push(dist.interval(opts.level)?);
        }
    }
    let nf = n as f64;
    let qtl: BTreeMap<String, f64> = qtl_sums
        .iter()
        .enumerate()
        .map(|(i, s)| (qtl_column(i + 1), s / nf))
        .collect();
    let aqtl = qtl_sums.iter().sum::<f64>() / nf / 99.0;
    Ok(ScoreReport {
        n,
        crps: crps_sum / nf,
        aqtl,
        coverage90: coverage(&intervals, data.y())?,
        qtl,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform01(y: f64) -> f64 {
        y.clamp(0.0, 1.0)
    }

    #[test]
    fn crps_uniform() {
        let mid = crps(uniform01, 0.5, 0.0, 1.0, 1000).unwrap();
        assert!((mid - 1.0 / 12.0).abs() <= 2e-3, "{mid}");
        let edge = crps(uniform01, 0.0, 0.0, 1.0, 1000).unwrap();
        assert!((edge - 1.0 / 3.0).abs() <= 2e-3, "{edge}");
    }

    #[test]
    fn crps_of_perfect_forecast() {
        let y0 = 0.4321;
        let step = |y: f64| if y >= y0 { 1.0 } else { 0.0 };
        assert!(crps(step, y0, 0.0, 1.0, 1000).unwrap() <= 1.0 / 1000.0);
    }

    #[test]
    fn crps_arguments() {
        assert!(crps(uniform01, 0.5, 1.0, 1.0, 1000).is_err());
        assert!(crps(uniform01, 0.5, 0.0, 1.0, 1).is_err());
        // observation clamped to the range
        assert_eq!(
            crps(uniform01, -3.0, 0.0, 1.0, 100).unwrap(),
            crps(uniform01, 0.0, 0.0, 1.0, 100).unwrap()
        );
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(qtl(0.3, 0.3, 0.7).unwrap(), 0.0);
        assert!((qtl(0.0, 1.0, 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((qtl(1.0, 0.0, 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert!(qtl(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn aqtl_uniform() {
        let quantile = |tau: f64| Ok(tau);
        let mid = aqtl(quantile, 0.5).unwrap();
        // brute force over the 99 terms
        let brute: f64 = (1..=99)
            .map(|t| {
                let tau = t as f64 / 100.0;
                if 0.5 <= tau {
                    (0.5 - tau) * (tau - 1.0)
                } else {
                    (0.5 - tau) * tau
                }
            })
            .sum::<f64>()
            / 99.0;
        assert!((mid - brute).abs() < 1e-15);
        assert!((mid - 0.0417).abs() < 1e-3, "{mid}");
        let a = aqtl(quantile, 0.2).unwrap();
        let b = aqtl(quantile, 0.8).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(aqtl(|_| Ok(0.7), 0.7).unwrap(), 0.0);
    }

    #[test]
    fn coverage_counts() {
        let iv = [(0.0, 1.0), (0.0, 1.0)];
        assert_eq!(coverage(&iv, &[0.5, 1.0]).unwrap(), 1.0);
        assert_eq!(coverage(&iv, &[2.0, -1.0]).unwrap(), 0.0);
        assert_eq!(coverage(&iv, &[0.0, 1.5]).unwrap(), 0.5);
        assert!(matches!(coverage(&iv, &[0.5]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(coverage(&[], &[]), Err(Error::EmptyData(_))));
    }

    #[test]
    fn csv_columns() {
        let header = ScoreReport::csv_header();
        assert_eq!(header.len(), 4 + 99);
        assert_eq!(header[4], "qtl_01");
        assert_eq!(header[102], "qtl_99");
    }

    proptest! {
        #[test]
        fn scores_are_nonnegative(q in -10.0f64..10.0, y in -10.0f64..10.0, tau in 0.001f64..0.999) {
            prop_assert!(qtl(q, y, tau).unwrap() >= 0.0);
            let c = crps(|t| ((t + 3.0) / 6.0).clamp(0.0, 1.0), y, -5.0, 5.0, 200).unwrap();
            prop_assert!(c >= 0.0);
        }

        #[test]
        fn pinball_zero_only_at_quantile(q in -10.0f64..10.0, d in 1e-6f64..5.0, tau in 0.01f64..0.99) {
            prop_assert_eq!(qtl(q, q, tau).unwrap(), 0.0);
            prop_assert!(qtl(q, q + d, tau).unwrap() > 0.0);
            prop_assert!(qtl(q, q - d, tau).unwrap() > 0.0);
        }
    }
}
