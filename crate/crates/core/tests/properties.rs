use proptest::prelude::*;

use jsdrazor::bolfi::{bolfi_minimize, BolfiOptions, Simulator};
use jsdrazor::categorical::{empirical_from_counts, log_type_class_size, sample_multinomial, Categorical, CountVector};
use jsdrazor::divergence::{jsd, jsd_sqrt, kl};
use jsdrazor::estimate::{min_jsd_fit, mle_fit, FitOptions};
use jsdrazor::model::{example_model, jsd_gradient, loglinear_default, LoglinearVariant};
use jsdrazor::razor::{argmin_with_tiebreak, jsd_penalty, sic, sic_jsd};
use jsdrazor::simulators::{loglinear_simulator, ModelSimulator};

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.iter().map(|x| x / t).collect()
    })
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=10).prop_flat_map(|k| (simplex(k), simplex(k), simplex(k)))
}

fn cat(p: &[f64]) -> Categorical {
    Categorical::new(p.to_vec()).unwrap()
}

fn exact_multinomial(c: &[u64]) -> u64 {
    let mut num: u64 = 1;
    let mut taken = 0u64;
    for &n in c {
        for i in 1..=n {
            taken += 1;
            num = num * taken / i;
        }
    }
    num
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sqrt_jsd_triangle((p, q, r) in triple()) {
        let (p, q, r) = (cat(&p), cat(&q), cat(&r));
        let lhs = jsd_sqrt(&p, &q).unwrap();
        prop_assert!(lhs <= jsd_sqrt(&p, &r).unwrap() + jsd_sqrt(&r, &q).unwrap() + 1e-12);
    }

    #[test]
    fn jsd_equals_half_kl_minus_mixture_kl((p, q, _) in triple()) {
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let (p, q, m) = (cat(&p), cat(&q), cat(&m));
        let j = jsd(&p, &q).unwrap();
        prop_assert!((j - (0.5 * kl(&p, &q).unwrap() - kl(&m, &q).unwrap())).abs() < 1e-10);
        prop_assert!(j == 0.0 || p != q);
    }

    #[test]
    fn empirical_sums_to_one(counts in prop::collection::vec(0u64..1000, 2..12)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let e = empirical_from_counts(&CountVector::new(counts)).unwrap();
        prop_assert!((e.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn type_class_size_is_the_multinomial_coefficient(counts in prop::collection::vec(0u64..5, 1..5)) {
        prop_assume!(counts.iter().sum::<u64>() <= 12 && counts.iter().sum::<u64>() > 0);
        let c = CountVector::new(counts.clone());
        prop_assert_eq!(log_type_class_size(&c).unwrap().exp().round() as u64, exact_multinomial(&counts));
    }

    #[test]
    fn multinomial_total_and_reproducible(p in (2usize..8).prop_flat_map(simplex), n in 0u64..5000, seed: u64) {
        let p = cat(&p);
        let a = sample_multinomial(&p, n, seed);
        prop_assert_eq!(a.total(), n);
        prop_assert_eq!(a, sample_multinomial(&p, n, seed));
    }

    #[test]
    fn penalty_increases_with_dimension(d in 0usize..10, n in 26u64..1_000_000) {
        prop_assert!(jsd_penalty(d + 1, n) > jsd_penalty(d, n));
    }

    #[test]
    fn tiebreak_returns_a_minimum(scores in prop::collection::vec(-10.0f64..10.0, 1..6)) {
        let dims: Vec<usize> = (0..scores.len()).collect();
        let i = argmin_with_tiebreak(&scores, &dims).unwrap();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(scores[i] <= min + 1e-12);
    }

    #[test]
    fn model_simulator_contract(t0 in -3.0f64..3.0, t1 in -3.0f64..3.0, n in 1u64..3000, seed: u64) {
        let sim = ModelSimulator::new(example_model(2).unwrap());
        let a = sim.run(&[t0, t1], n, seed).unwrap();
        prop_assert_eq!((a.k(), a.total()), (3, n));
        prop_assert_eq!(a, sim.run(&[t0, t1], n, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sic_jsd_is_below_sic(t0 in -1.5f64..1.5, t1 in -1.5f64..1.5, d in 0usize..=2, n in 30u64..3000, seed: u64) {
        let truth = example_model(2).unwrap();
        let c = sample_multinomial(&truth.probs(&[t0, t1]).unwrap(), n, seed);
        let m = example_model(d).unwrap();
        let opts = FitOptions::default();
        let jf = min_jsd_fit(&m, &c.empirical().unwrap(), &opts, 1).unwrap();
        let mf = mle_fit(&m, &c, &opts, 1).unwrap();
        prop_assert!(sic_jsd(&m, &c, &jf).unwrap() < sic(&m, &c, &mf).unwrap());
    }

    #[test]
    fn min_jsd_fit_is_stationary_or_on_the_boundary(p in simplex(4), seed: u64) {
        let m = loglinear_default(LoglinearVariant::TwoParam).unwrap();
        let p = cat(&p);
        let opts = FitOptions { newton_refine: true, ..Default::default() };
        let f = min_jsd_fit(&m, &p, &opts, seed).unwrap();
        let g = jsd_gradient(&p, &m, &f.theta_hat).unwrap();
        let b = m.bounds();
        let on_face = f.theta_hat.iter().enumerate().any(|(s, t)| (t - b.lower()[s]).abs() < 1e-9 || (b.upper()[s] - t).abs() < 1e-9);
        prop_assert!(on_face || g.amax() < 1e-5, "gradient {}", g.amax());
    }
}

#[test]
fn bolfi_is_reproducible() {
    let sim = loglinear_simulator(LoglinearVariant::TwoParam).unwrap();
    let m = loglinear_default(LoglinearVariant::TwoParam).unwrap();
    let p = sample_multinomial(&m.probs(&[0.3, -0.4]).unwrap(), 500, 9).empirical().unwrap();
    let opts = BolfiOptions { budget: 40, ..Default::default() };
    let a = bolfi_minimize(&sim, &p, 500, &opts, 4).unwrap();
    let b = bolfi_minimize(&sim, &p, 500, &opts, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, bolfi_minimize(&sim, &p, 500, &opts, 5).unwrap());
}
