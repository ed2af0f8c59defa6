//! Seeded generators for the four simulation models and exact conditional
//! laws for the ones that have a closed form.
//!
//! Normal noise parameters are variances: `N(0, 2.25)` has standard
//! deviation 1.5.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal, Uniform};
use statrs::function::erf::erfc;

pub use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{check_tau, ConditionalModel, Predictive};
use crate::rng::{rng_from_seed, SeededRng};

pub const MODEL1_FEATURES: usize = 5;
pub const MODEL24_FEATURES: usize = 10;

const MODEL3_SD1: f64 = 0.3;
const MODEL3_SD2: f64 = 0.8;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Exact conditional law `Y | X = x` of a generator.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueConditional {
    /// `N(x'b1, exp(2 x'b2))`.
    Model1 { beta1: Vec<f64>, beta2: Vec<f64> },
    /// Equal mixture of `N(sin x, 0.3^2)` and `N(2 sin(1.5x + 1), 0.8^2)`.
    Model3,
    /// `N(intercept + slope * x, sd^2)` with one covariate.
    LocationNormal { intercept: f64, slope: f64, sd: f64 },
    /// Models 2 and 4 have no closed conditional law here.
    Unsupported(u8),
}

impl TrueConditional {
    fn components(&self, x: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        let dot = |b: &[f64]| -> Result<f64> {
            if x.len() < b.len() {
                return Err(Error::DimensionMismatch {
                    expected: b.len(),
                    got: x.len(),
                });
            }
            Ok(b.iter().zip(x).map(|(b, x)| b * x).sum())
        };
        let first = |x: &[f64]| {
            x.first().copied().ok_or(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            })
        };
        match self {
            TrueConditional::Model1 { beta1, beta2 } => Ok(vec![(1.0, dot(beta1)?, dot(beta2)?.exp())]),
            TrueConditional::Model3 => {
                let x1 = first(x)?;
                Ok(vec![
                    (0.5, x1.sin(), MODEL3_SD1),
                    (0.5, 2.0 * (1.5 * x1 + 1.0).sin(), MODEL3_SD2),
                ])
            }
            TrueConditional::LocationNormal { intercept, slope, sd } => {
                Ok(vec![(1.0, intercept + slope * first(x)?, *sd)])
            }
            TrueConditional::Unsupported(id) => Err(Error::UnsupportedModel(format!(
                "model {id} has no closed-form conditional law"
            ))),
        }
    }

    pub fn cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self
            .components(x)?
            .iter()
            .map(|(w, mu, sd)| w * std_normal_cdf((y - mu) / sd))
            .sum())
    }

    pub fn pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self
            .components(x)?
            .iter()
            .map(|(w, mu, sd)| w * std_normal_pdf((y - mu) / sd) / sd)
            .sum())
    }

    /// Inverse CDF by bisection to `1e-10`.
    pub fn quantile(&self, x: &[f64], tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let comps = self.components(x)?;
        let cdf = |y: f64| -> f64 {
            comps
                .iter()
                .map(|(w, mu, sd)| w * std_normal_cdf((y - mu) / sd))
                .sum()
        };
        let mut lo = comps.iter().map(|(_, mu, sd)| mu - 40.0 * sd).fold(f64::INFINITY, f64::min);
        let mut hi = comps.iter().map(|(_, mu, sd)| mu + 40.0 * sd).fold(f64::NEG_INFINITY, f64::max);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cdf(mid) < tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Adapts the law to [`ConditionalModel`] over a fixed scoring range.
    pub fn bounded(&self, n_features: usize, lower: f64, upper: f64) -> Result<OracleModel> {
        if !(lower < upper) {
            return Err(Error::InvalidRange { lower, upper });
        }
        if let TrueConditional::Unsupported(id) = self {
            return Err(Error::UnsupportedModel(format!("model {id}")));
        }
        Ok(OracleModel {
            truth: self.clone(),
            n_features,
            lower,
            upper,
        })
    }
}

pub fn true_cdf(oracle: &TrueConditional, x: &[f64], y: f64) -> Result<f64> {
    oracle.cdf(x, y)
}

pub fn true_quantile(oracle: &TrueConditional, x: &[f64], tau: f64) -> Result<f64> {
    oracle.quantile(x, tau)
}

/// The true law plugged in where an estimator is expected.
#[derive(Debug, Clone)]
pub struct OracleModel {
    truth: TrueConditional,
    n_features: usize,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Clone)]
pub struct OracleDistribution<'a> {
    truth: &'a TrueConditional,
    x: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Predictive for OracleDistribution<'_> {
    fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn pdf(&self, y: f64) -> Result<f64> {
        if !(y >= self.lower && y <= self.upper) {
            return Err(Error::OutOfRange {
                value: y,
                lower: self.lower,
                upper: self.upper,
            });
        }
        self.truth.pdf(&self.x, y)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.truth.cdf(&self.x, y).unwrap_or(f64::NAN)
    }

    fn quantile(&self, tau: f64) -> Result<f64> {
        self.truth.quantile(&self.x, tau)
    }
}

impl ConditionalModel for OracleModel {
    type Dist<'a> = OracleDistribution<'a>;

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn predict_batch<'a>(&'a self, x: ArrayView2<f64>) -> Result<Vec<OracleDistribution<'a>>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x
            .axis_iter(Axis(0))
            .map(|row| OracleDistribution {
                truth: &self.truth,
                x: row.to_vec(),
                lower: self.lower,
                upper: self.upper,
            })
            .collect())
    }
}

/// Azzalini skew-normal draw: `location + scale * (d|Z0| + sqrt(1-d^2) Z1)`
/// with `d = shape / sqrt(1 + shape^2)`.
pub fn sample_skew_normal<R: Rng + ?Sized>(location: f64, scale: f64, shape: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("skew-normal scale must be positive, got {scale}")));
    }
    let delta = shape / (1.0 + shape * shape).sqrt();
    let z0: f64 = StandardNormal.sample(rng);
    let z1: f64 = StandardNormal.sample(rng);
    Ok(location + scale * (delta * z0.abs() + (1.0 - delta * delta).sqrt() * z1))
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("positive sd")
}

fn coin() -> Bernoulli {
    Bernoulli::new(0.5).expect("valid p")
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidCount("n must be at least 1".into()));
    }
    Ok(())
}

fn uniform_matrix(rng: &mut SeededRng, n: usize, p: usize, lo: f64, hi: f64) -> Array2<f64> {
    let u = Uniform::new(lo, hi);
    Array2::from_shape_simple_fn((n, p), || u.sample(rng))
}

/// `Y = x'b1 + exp(x'b2) e` with `X ~ N(0, I_5)`, `b1 ~ N(0, I_5)`,
/// `b2 ~ N(0, 0.45 I_5)` drawn once per dataset.
pub fn gen_model1(n: usize, seed: u64) -> Result<(Dataset, TrueConditional)> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let p = MODEL1_FEATURES;
    let beta1: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b2 = normal(0.45f64.sqrt());
    let beta2: Vec<f64> = (0..p).map(|_| b2.sample(&mut rng)).collect();
    let x = Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng));
    let y = x
        .axis_iter(Axis(0))
        .map(|row| {
            let loc: f64 = row.iter().zip(&beta1).map(|(a, b)| a * b).sum();
            let log_scale: f64 = row.iter().zip(&beta2).map(|(a, b)| a * b).sum();
            let e: f64 = StandardNormal.sample(&mut rng);
            loc + log_scale.exp() * e
        })
        .collect();
    Ok((Dataset::new(x, y, None)?, TrueConditional::Model1 { beta1, beta2 }))
}

/// Model 2 with the latent component indicator of each row.
pub fn gen_model2_with_latent(n: usize, seed: u64) -> Result<(Dataset, Vec<bool>)> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let x = uniform_matrix(&mut rng, n, MODEL24_FEATURES, 0.0, 1.0);
    let (e1, e2) = (normal(1.5), normal(1.0));
    let mut latent = Vec::with_capacity(n);
    let y = x
        .axis_iter(Axis(0))
        .map(|r| {
            let first = coin().sample(&mut rng);
            latent.push(first);
            if first {
                10.0 * (2.0 * PI * r[0] * r[1]).sin() + 10.0 * r[3] + e1.sample(&mut rng)
            } else {
                20.0 * (r[2] - 0.5).powi(2) + 5.0 * r[4] + e2.sample(&mut rng)
            }
        })
        .collect();
    Ok((Dataset::new(x, y, None)?, latent))
}

/// Two-component mixture with nonlinear means in 10 uniform covariates.
pub fn gen_model2(n: usize, seed: u64) -> Result<Dataset> {
    gen_model2_with_latent(n, seed).map(|(d, _)| d)
}

pub fn gen_model3_with_latent(n: usize, seed: u64) -> Result<(Dataset, Vec<bool>)> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let x = uniform_matrix(&mut rng, n, 1, 0.0, 10.0);
    let (e1, e2) = (normal(MODEL3_SD1), normal(MODEL3_SD2));
    let mut latent = Vec::with_capacity(n);
    let y = x
        .column(0)
        .iter()
        .map(|&x1| {
            let first = coin().sample(&mut rng);
            latent.push(first);
            if first {
                x1.sin() + e1.sample(&mut rng)
            } else {
                2.0 * (1.5 * x1 + 1.0).sin() + e2.sample(&mut rng)
            }
        })
        .collect();
    Ok((Dataset::new(x, y, None)?, latent))
}

/// `Y = [sin X + e1] pi + [2 sin(1.5X + 1) + e2](1 - pi)`, `X ~ U(0, 10)`.
pub fn gen_model3(n: usize, seed: u64) -> Result<(Dataset, TrueConditional)> {
    gen_model3_with_latent(n, seed).map(|(d, _)| (d, TrueConditional::Model3))
}

pub fn model4_mean(r: &[f64]) -> f64 {
    10.0 * (2.0 * PI * r[0] * r[1]).sin() + 20.0 * (r[2] - 0.5).powi(2) + 10.0 * r[3] + 5.0 * r[4]
}

/// Nonlinear mean plus `SkewNormal(0, 1, -5)` noise.
pub fn gen_model4(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let x = uniform_matrix(&mut rng, n, MODEL24_FEATURES, 0.0, 1.0);
    let y = x
        .axis_iter(Axis(0))
        .map(|r| {
            let r = r.to_vec();
            Ok(model4_mean(&r) + sample_skew_normal(0.0, 1.0, -5.0, &mut rng)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Dataset::new(x, y, None)
}

/// One-covariate Gaussian location model `Y = 2X + N(0, 0.25)`,
/// `X ~ U(0, 1)`; logits linear in `x` fit its bin probabilities well.
pub fn gen_location_normal(n: usize, seed: u64) -> Result<(Dataset, TrueConditional)> {
    check_n(n)?;
    let truth = TrueConditional::LocationNormal {
        intercept: 0.0,
        slope: 2.0,
        sd: 0.5,
    };
    let mut rng = rng_from_seed(seed);
    let x = uniform_matrix(&mut rng, n, 1, 0.0, 1.0);
    let e = normal(0.5);
    let y = x.column(0).iter().map(|&v| 2.0 * v + e.sample(&mut rng)).collect();
    Ok((Dataset::new(x, y, None)?, truth))
}

/// Dispatch by model id; oracles only for models with a closed form.
pub fn generate(model: u8, n: usize, seed: u64) -> Result<(Dataset, TrueConditional)> {
    match model {
        1 => gen_model1(n, seed),
        2 => Ok((gen_model2(n, seed)?, TrueConditional::Unsupported(2))),
        3 => gen_model3(n, seed),
        4 => Ok((gen_model4(n, seed)?, TrueConditional::Unsupported(4))),
        other => Err(Error::UnsupportedModel(format!("unknown simulation model {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_model1(50, 3).unwrap().0, gen_model1(50, 3).unwrap().0);
        assert_eq!(gen_model2(50, 3).unwrap(), gen_model2(50, 3).unwrap());
        assert_eq!(gen_model3(50, 3).unwrap().0, gen_model3(50, 3).unwrap().0);
        assert_eq!(gen_model4(50, 3).unwrap(), gen_model4(50, 3).unwrap());
        assert_ne!(gen_model4(50, 3).unwrap(), gen_model4(50, 4).unwrap());
        assert!(gen_model1(0, 1).is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(gen_model1(7, 0).unwrap().0.n_features(), 5);
        assert_eq!(gen_model2(7, 0).unwrap().n_features(), 10);
        assert_eq!(gen_model3(7, 0).unwrap().0.n_features(), 1);
        assert_eq!(gen_model4(7, 0).unwrap().n_features(), 10);
        assert!(generate(9, 5, 0).is_err());
    }

    #[test]
    fn model1_oracle_median() {
        let (d, truth) = gen_model1(10, 5).unwrap();
        let TrueConditional::Model1 { beta1, .. } = &truth else { panic!() };
        for i in 0..d.len() {
            let x = d.row(i).to_vec();
            let loc: f64 = x.iter().zip(beta1).map(|(a, b)| a * b).sum();
            assert!((truth.cdf(&x, loc).unwrap() - 0.5).abs() < 1e-15);
            let med = truth.quantile(&x, 0.5).unwrap();
            assert!((truth.cdf(&x, med).unwrap() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn model1_standardized_residuals() {
        let (d, truth) = gen_model1(10_000, 11).unwrap();
        let TrueConditional::Model1 { beta1, beta2 } = &truth else { panic!() };
        let z: Vec<f64> = (0..d.len())
            .map(|i| {
                let x = d.row(i);
                let loc: f64 = x.iter().zip(beta1).map(|(a, b)| a * b).sum();
                let ls: f64 = x.iter().zip(beta2).map(|(a, b)| a * b).sum();
                (d.y()[i] - loc) / ls.exp()
            })
            .collect();
        let (m, v) = mean_var(&z);
        assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.1, "{m} {v}");
    }

    #[test]
    fn model2_component_structure() {
        let (d, latent) = gen_model2_with_latent(10_000, 21).unwrap();
        let rate = latent.iter().filter(|&&b| b).count() as f64 / latent.len() as f64;
        assert!((rate - 0.5).abs() <= 0.02, "{rate}");
        // component-2 responses: 20(X3-0.5)^2 + 5X5 + N(0,1) lies in [-3, 10+3] but for 3-sigma tails
        let outside = latent
            .iter()
            .zip(d.y())
            .filter(|(b, _)| !**b)
            .filter(|(_, &y)| !(-3.0..=13.0).contains(&y))
            .count() as f64;
        assert!(outside / (latent.len() as f64 / 2.0) < 0.01);
    }

    #[test]
    fn model3_oracle_limits_and_equal_means() {
        let t = TrueConditional::Model3;
        assert!(t.cdf(&[1.0], -50.0).unwrap() < 1e-12);
        assert!((t.cdf(&[1.0], 50.0).unwrap() - 1.0).abs() < 1e-12);
        // find x with sin x = 2 sin(1.5x + 1) by bisection on [0, 10]
        let g = |x: f64| x.sin() - 2.0 * (1.5 * x + 1.0).sin();
        let start = (0..1000)
            .map(|i| i as f64 / 100.0)
            .find(|&a| g(a) * g(a + 0.01) < 0.0)
            .unwrap();
        let (mut lo, mut hi) = (start, start + 0.01);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        assert!((t.quantile(&[x], 0.5).unwrap() - x.sin()).abs() < 1e-8);
    }

    #[test]
    fn quantile_round_trip() {
        let t = TrueConditional::Model3;
        for &x in &[0.5, 3.3, 7.9] {
            for &y in &[-2.0, -0.4, 0.0, 0.7, 1.9] {
                let tau = t.cdf(&[x], y).unwrap();
                assert!((t.quantile(&[x], tau).unwrap() - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unsupported_oracles() {
        let t = TrueConditional::Unsupported(2);
        assert!(matches!(t.cdf(&[0.0], 0.0), Err(Error::UnsupportedModel(_))));
        assert!(t.quantile(&[0.0], 0.3).is_err());
        let (_, t4) = generate(4, 3, 1).unwrap();
        assert!(t4.bounded(10, 0.0, 1.0).is_err());
    }

    #[test]
    fn model4_noise_free_mean() {
        let r = [0.3, 0.4, 0.5, 0.0, 0.0];
        assert!((model4_mean(&r) - 10.0 * (2.0 * PI * 0.12).sin()).abs() < 1e-12);
    }

    #[test]
    fn skew_normal_rejects_bad_scale() {
        let mut rng = rng_from_seed(0);
        assert!(sample_skew_normal(0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(sample_skew_normal(0.0, -1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn skew_normal_reduces_to_normal() {
        let mut rng = rng_from_seed(99);
        let v: Vec<f64> = (0..100_000)
            .map(|_| sample_skew_normal(2.0, 3.0, 0.0, &mut rng).unwrap())
            .collect();
        let (m, var) = mean_var(&v);
        assert!((m - 2.0).abs() < 0.03, "{m}");
        assert!((var - 9.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn model4_noise_is_left_skewed() {
        let mut rng = rng_from_seed(5);
        let v: Vec<f64> = (0..10_000)
            .map(|_| sample_skew_normal(0.0, 1.0, -5.0, &mut rng).unwrap())
            .collect();
        let (m, var) = mean_var(&v);
        let skew = v.iter().map(|x| ((x - m) / var.sqrt()).powi(3)).sum::<f64>() / v.len() as f64;
        assert!(skew < -0.5, "{skew}");
    }

    #[test]
    fn location_normal_truth() {
        let (d, t) = gen_location_normal(100, 1).unwrap();
        assert_eq!(d.n_features(), 1);
        assert!((t.cdf(&[0.5], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.pdf(&[0.5], 1.0).unwrap() - 1.0 / (0.5 * (2.0 * PI).sqrt())).abs() < 1e-12);
    }
}
