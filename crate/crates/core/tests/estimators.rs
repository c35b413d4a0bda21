mod common;

use common::*;
use loomix_core::conjugate::{GaussianLinearModel, PriorCovariance};
use loomix_core::estimators::*;
use loomix_core::psis::psis_estimate;
use loomix_core::rng::{derive_seed, rng_from_seed};
use loomix_core::{Dataset, SampleSource, WeightedSampleSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// n = 5, p = 1 toy with moderate leverages.
fn toy() -> GaussianLinearModel {
    let data = Dataset::new(
        DVector::from_vec(vec![0.8, -0.3, 1.5, 0.1, -1.2]),
        DMatrix::from_vec(5, 1, vec![0.9, -0.4, 1.1, 0.2, -0.7]),
    )
    .unwrap();
    GaussianLinearModel::centered(data, 1.0, PriorCovariance::isotropic(1.0).unwrap()).unwrap()
}

fn max_abs_err(records: &[EstimateRecord], truth: &[f64]) -> f64 {
    records
        .iter()
        .zip(truth)
        .map(|(r, t)| (r.log_mu_hat - t).abs())
        .fold(0.0, f64::max)
}

#[test]
fn brute_force_loo_is_consistent() {
    let m = toy();
    let truth = m.log_loo_predictives().unwrap();
    let sets: Vec<_> = (0..5)
        .map(|i| m.sample_loo_iid(i, 100_000, derive_seed(1, i as u64)).unwrap())
        .collect();
    let recs = loo_estimate(&sets).unwrap();
    assert!(max_abs_err(&recs, &truth) < 0.02);
    assert!(recs.iter().all(|r| r.is_ess == 100_000.0));
}

#[test]
fn posterior_estimator_is_consistent_with_low_leverage() {
    let m = iso_model(12, 1, 1.0, 50);
    assert!(m.leverages().unwrap().iter().all(|h| *h < 0.3));
    let truth = m.log_loo_predictives().unwrap();
    let recs = posterior_estimate(&m.sample_posterior_iid(100_000, 2).unwrap());
    assert!(max_abs_err(&recs, &truth) < 0.05);
    assert!(recs.iter().all(|r| r.is_ess >= 1.0 && r.is_ess <= 100_000.0));
}

#[test]
fn mixture_estimator_is_consistent_and_recovers_pi() {
    let m = toy();
    let truth = m.log_loo_predictives().unwrap();
    let me = m.mixture_exact_uniform().unwrap();
    let s = 100_000;
    let est = mixture_estimate(&m.sample_mixture_iid(&me, s, 3).unwrap(), &[1.0; 5]).unwrap();
    assert!(max_abs_err(&est.records, &truth) < 0.02);
    for (ph, p) in est.pi_hat.iter().zip(me.pis()) {
        assert!((ph - p).abs() < 4.0 * (p * (1.0 - p) / s as f64).sqrt(), "{ph} vs {p}");
    }
}

#[test]
fn weighted_mixture_estimator_is_consistent() {
    let m = toy();
    let truth = m.log_loo_predictives().unwrap();
    let alpha = [0.2, 1.0, 3.0, 0.5, 2.0];
    let me = m.mixture_exact(&alpha).unwrap();
    let est = mixture_estimate(&m.sample_mixture_iid(&me, 100_000, 4).unwrap(), &alpha).unwrap();
    assert!(max_abs_err(&est.records, &truth) < 0.02);
}

#[test]
fn bronze_estimator_is_consistent() {
    let m = toy();
    let truth = m.log_loo_predictives().unwrap();
    let recs = bronze_estimate(&m.sample_bronze_iid(100_000, 5).unwrap());
    assert!(max_abs_err(&recs, &truth) < 0.05);
}

#[test]
fn plugin_of_exact_predictives_is_exact_psi() {
    let m = iso_model(9, 2, 1.0, 51);
    let recs: Vec<EstimateRecord> = m
        .log_loo_predictives()
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, v)| EstimateRecord {
            i,
            log_mu_hat: v,
            method: Method::Exact,
            is_ess: 1.0,
            khat: None,
            empirical_av: None,
            degenerate: false,
        })
        .collect();
    let psi = psi_plugin(&recs).unwrap();
    assert!(rel_err(psi.value, m.exact_psi().unwrap()) < 1e-14);
}

#[test]
fn gold_estimator_is_unbiased() {
    let m = iso_model(20, 2, 2.0, 52);
    let log_mu = m.log_loo_predictives().unwrap();
    let psi = m.exact_psi().unwrap();
    let vals: Vec<f64> = (0..4000)
        .map(|r| gold_estimate(&log_mu, 10, derive_seed(7, r)).unwrap().value)
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt();
    assert!((mean - psi).abs() < 4.0 * sd / (vals.len() as f64).sqrt(), "{mean} vs {psi}");
}

#[test]
fn silver_with_full_subset_is_brute_force_loo() {
    let m = toy();
    let (total, seed) = (5 * 3000 + 4, 11);
    let silver = silver_estimate(5, 5, total, seed, |i, d, s| m.sample_loo_iid(i, d, s)).unwrap();
    assert_eq!(silver.discarded_draws, 4);
    let sets: Vec<_> = (0..5)
        .map(|i| m.sample_loo_iid(i, 3000, silver_run_seed(seed, i)).unwrap())
        .collect();
    let plugin = psi_plugin(&loo_estimate(&sets).unwrap()).unwrap();
    assert_eq!(silver.value, plugin.value);
}

#[test]
fn empirical_av_recovers_known_variance() {
    let (s, v, r) = (1000usize, 2.5, 400usize);
    let mut rng = rng_from_seed(53);
    let reps: Vec<f64> = (0..r)
        .map(|_| -1.0 + (v / s as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let av = empirical_av(&reps, s, -1.0).unwrap();
    assert!((av.value - v).abs() < 4.0 * v * (2.0 / (r as f64 - 1.0)).sqrt());
}

#[test]
fn empirical_av_of_posterior_estimator_matches_closed_form() {
    let data = Dataset::new(
        DVector::from_vec(vec![0.9, -0.2, 0.4, 1.1]),
        DMatrix::from_vec(4, 1, vec![0.7, 0.6, -0.4, 0.3]),
    )
    .unwrap();
    let m = GaussianLinearModel::centered(data, 1.0, PriorCovariance::isotropic(1.0).unwrap()).unwrap();
    let i = 0;
    let h = m.leverage(i).unwrap();
    assert!(h > 0.15 && h < 0.25, "{h}");
    let exact = m.av_post_exact(i).unwrap().value();
    let truth = m.log_loo_predictive(i).unwrap();
    let s = 10_000;
    let reps: Vec<f64> = (0..500)
        .map(|r| posterior_estimate(&m.sample_posterior_iid(s, derive_seed(54, r)).unwrap())[i].log_mu_hat)
        .collect();
    let av = empirical_av(&reps, s, truth).unwrap();
    assert!(rel_err(av.value, exact) < 0.25, "{} vs {exact}", av.value);
}

#[test]
fn mixture_variance_respects_the_bound() {
    let m = toy();
    let me = m.mixture_exact_uniform().unwrap();
    let s = 10_000;
    let truth = m.log_loo_predictives().unwrap();
    let reps: Vec<Vec<f64>> = (0..200)
        .map(|r| {
            let set = m.sample_mixture_iid(&me, s, derive_seed(55, r)).unwrap();
            mixture_estimate(&set, &[1.0; 5])
                .unwrap()
                .records
                .iter()
                .map(|rec| rec.log_mu_hat)
                .collect()
        })
        .collect();
    for i in 0..5 {
        let col: Vec<f64> = reps.iter().map(|r| r[i]).collect();
        let v = empirical_relative_variance(&col, s, truth[i]).unwrap().value;
        let bound = m.av_mix_bound(&me, i).unwrap();
        assert!(v <= 1.2 * bound, "i={i}: {v} > 1.2 * {bound}");
    }
}

#[test]
fn identical_observations_give_identical_estimates() {
    let x = DMatrix::from_fn(6, 2, |_, j| [0.7, -1.1][j]);
    let data = Dataset::new(DVector::from_element(6, 0.4), x).unwrap();
    let m = GaussianLinearModel::centered(data, 1.0, PriorCovariance::isotropic(2.0).unwrap()).unwrap();
    let post = m.sample_posterior_iid(500, 1).unwrap();
    let me = m.mixture_exact_uniform().unwrap();
    let mix = mixture_estimate(&m.sample_mixture_iid(&me, 500, 2).unwrap(), &[1.0; 6]).unwrap();
    let sets: Vec<_> = (0..6).map(|i| m.sample_loo_iid(i, 500, 3).unwrap()).collect();
    let all = [
        posterior_estimate(&post),
        psis_estimate(&post).unwrap().records,
        mix.records.clone(),
        bronze_estimate(&m.sample_bronze_iid(500, 4).unwrap()),
        loo_estimate(&sets).unwrap(),
    ];
    for recs in &all {
        assert!(recs.iter().all(|r| r.log_mu_hat == recs[0].log_mu_hat), "{:?}", recs[0].method);
    }
    assert!(mix.pi_hat.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
}

#[test]
fn errors_shrink_with_more_draws() {
    let m = toy();
    let truth = m.log_loo_predictives().unwrap();
    let me = m.mixture_exact_uniform().unwrap();
    let mean_err = |s: usize| -> [f64; 4] {
        let mut acc = [0.0; 4];
        for r in 0..20 {
            let seed = derive_seed(56, r);
            let post = m.sample_posterior_iid(s, seed).unwrap();
            let mix = m.sample_mixture_iid(&me, s, seed).unwrap();
            let bronze = m.sample_bronze_iid(s, seed).unwrap();
            let sets: Vec<_> = (0..5).map(|i| m.sample_loo_iid(i, s, derive_seed(seed, i as u64)).unwrap()).collect();
            let outs = [
                posterior_estimate(&post),
                mixture_estimate(&mix, &[1.0; 5]).unwrap().records,
                bronze_estimate(&bronze),
                loo_estimate(&sets).unwrap(),
            ];
            for (a, recs) in acc.iter_mut().zip(outs) {
                *a += recs.iter().zip(&truth).map(|(r, t)| (r.log_mu_hat - t).abs()).sum::<f64>();
            }
        }
        acc
    };
    let small = mean_err(200);
    let large = mean_err(20_000);
    for k in 0..4 {
        assert!(large[k] < small[k], "estimator {k}: {} vs {}", large[k], small[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixture_estimate_is_alpha_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let m = iso_model(6, 2, 2.0, seed);
        let alpha: Vec<f64> = (0..6).map(|i| 0.5 + 0.3 * i as f64).collect();
        let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
        let me = m.mixture_exact(&alpha).unwrap();
        let set = m.sample_mixture_iid(&me, 300, seed).unwrap();
        let a = mixture_estimate(&set, &alpha).unwrap();
        let b = mixture_estimate(&set, &scaled).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            prop_assert!((ra.log_mu_hat - rb.log_mu_hat).abs() < 1e-12 * (1.0 + ra.log_mu_hat.abs()));
        }
        for (pa, pb) in a.pi_hat.iter().zip(&b.pi_hat) {
            prop_assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_weights_are_a_partition_of_unity(seed in any::<u64>()) {
        let m = iso_model(8, 3, 3.0, seed);
        let me = m.mixture_exact_uniform().unwrap();
        let set = m.sample_mixture_iid(&me, 50, seed).unwrap();
        let alpha: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let w = mixture_weights(&set, &alpha).unwrap();
        for s in 0..50 {
            let col: Vec<f64> = w.iter().map(|row| row[s]).collect();
            prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn is_ess_lies_between_one_and_s(lw in prop::collection::vec(-50.0f64..50.0, 2..200)) {
        let e = is_ess(&lw).unwrap();
        prop_assert!(e >= 1.0 && e <= lw.len() as f64);
    }
}

#[test]
fn loglik_rows_must_be_coherent() {
    let m = toy();
    let set = m.sample_posterior_iid(10, 1).unwrap();
    assert!(set.is_coherent_with(&m));
    let other = iso_model(5, 1, 1.0, 57);
    assert!(!set.is_coherent_with(&other));
    assert!(WeightedSampleSet::from_loglik_rows(vec![vec![0.0]], SampleSource::External, 0).is_err());
    assert!(WeightedSampleSet::from_loglik_rows(vec![vec![0.0, f64::INFINITY]], SampleSource::External, 0).is_err());
}
