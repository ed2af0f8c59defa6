mod common;

use distreg::estimator::{ConditionalModel, DensityEstimator, EnsembleEstimator, FittedModel, Predictive};
use distreg::nn::{gradient, LabeledBatch, Loss};
use distreg::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn random_x(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(seed in any::<u64>(), dim in 1usize..4) {
        let est = random_estimator(&mut rng_from_seed(seed), dim);
        let x = random_x(seed, dim);
        let dist = est.predict(&x).unwrap();
        for t in 1..100 {
            let tau = t as f64 / 100.0;
            let q = dist.quantile(tau).unwrap();
            prop_assert!((dist.cdf(q) - tau).abs() <= 1e-9, "tau {} q {}", tau, q);
        }
        // interior points of bins whose density is well above round-off
        let (l, u) = dist.support();
        let part = est.partition();
        for i in 0..part.n_bins() {
            let (a, b) = part.bin_edges(i).unwrap();
            for frac in [0.1, 0.5, 0.9] {
                let y = a + frac * (b - a);
                let c = dist.cdf(y);
                if dist.pdf(y).unwrap() > 1e-6 && c > 0.0 && c < 1.0 {
                    let back = dist.quantile(c).unwrap();
                    prop_assert!((back - y).abs() <= 1e-9 * (u - l).max(1.0), "y {} back {}", y, back);
                }
            }
        }
    }

    #[test]
    fn density_integrates_to_one(seed in any::<u64>()) {
        let est = random_estimator(&mut rng_from_seed(seed), 2);
        let x = random_x(seed, 2);
        let p = est.partition();
        // piecewise constant: exact integral is the sum over bins of height times width
        let total: f64 = (0..p.n_bins())
            .map(|i| {
                let (a, b) = p.bin_edges(i).unwrap();
                est.pdf(&x, 0.5 * (a + b)).unwrap() * (b - a)
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
        prop_assert_eq!(est.cdf(&x, p.lower()).unwrap(), 0.0);
        prop_assert!((est.cdf(&x, p.upper()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_is_member_average(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let lower = -1.0;
        let upper = 2.0;
        let members: Vec<DensityEstimator> = (0..k)
            .map(|_| {
                let m = rng.gen_range(1..20);
                let partition = distreg::Partition::random(lower, upper, m, &mut rng, 0.0).unwrap();
                let network = random_network(&mut rng, 1, &[4], m + 1, 1.5);
                DensityEstimator::new(partition, distreg::nn::Classifier { network, loss: Loss::Jbce }).unwrap()
            })
            .collect();
        let ens = EnsembleEstimator::new(members.clone()).unwrap();
        let x = [rng.gen_range(-1.0..1.0)];
        for g in 0..=60 {
            let y = lower + 3.0 * g as f64 / 60.0;
            let mean_cdf = members.iter().map(|m| m.cdf(&x, y).unwrap()).sum::<f64>() / k as f64;
            prop_assert!((ens.cdf(&x, y).unwrap() - mean_cdf).abs() <= 1e-12);
            if y < upper {
                let mean_pdf = members.iter().map(|m| m.pdf(&x, y).unwrap()).sum::<f64>() / k as f64;
                prop_assert!((ens.pdf(&x, y).unwrap() - mean_pdf).abs() <= 1e-12 * mean_pdf.max(1.0));
            }
        }
        for t in 1..100 {
            let tau = t as f64 / 100.0;
            let q = ens.quantile(&x, tau).unwrap();
            prop_assert!((ens.cdf(&x, q).unwrap() - tau).abs() <= 1e-9);
        }
    }

    #[test]
    fn json_round_trip_predicts_identically(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let single = random_estimator(&mut rng, 2);
        let model = if rng.gen_bool(0.5) {
            FittedModel::Single(single)
        } else {
            let (l, u) = (single.partition().lower(), single.partition().upper());
            let members = (0..3).map(|_| random_estimator_on(&mut rng, 2, l, u)).collect();
            FittedModel::Ensemble(EnsembleEstimator::new(members).unwrap())
        };
        let text = serde_json::to_string(&model).unwrap();
        let back: FittedModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.n_members(), model.n_members());
        let x = random_x(seed, 2);
        let (a, b) = (model.predict(&x).unwrap(), back.predict(&x).unwrap());
        for t in [0.01, 0.3, 0.5, 0.99] {
            prop_assert_eq!(a.quantile(t).unwrap().to_bits(), b.quantile(t).unwrap().to_bits());
        }
        let (l, u) = a.support();
        prop_assert_eq!(a.cdf(0.5 * (l + u)).to_bits(), b.cdf(0.5 * (l + u)).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradient_matches_finite_differences(
        seed in any::<u64>(),
        classes in 3usize..7,
        hidden in 1usize..6,
        jbce in any::<bool>(),
    ) {
        let mut rng = rng_from_seed(seed);
        let net = random_network(&mut rng, 3, &[hidden], classes, 1.0);
        let x = gaussian_matrix(&mut rng, 5, 3, 1.0);
        let targets: Vec<usize> = (0..5).map(|_| rng.gen_range(0..classes)).collect();
        let loss = if jbce { Loss::Jbce } else { Loss::Multinomial };
        let (value, grads) = gradient(&net, LabeledBatch::new(x.view(), &targets).unwrap(), loss, 1e-300, None).unwrap();
        prop_assert!((value - reference_loss(&net, &x, &targets, loss)).abs() < 1e-10);
        let numeric = numeric_gradient(&net, &x, &targets, loss, 1e-5);
        let err = max_relative_error(&grads.flatten(), &numeric, 1e-4);
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }
}
