mod common;

use common::{log_predictive_by_quadrature, loo_by_reenrollment, random_responsibilities, rng};
use lgp_core::cluster::{cluster, log_predictive, loo_posteriors, update_weights, ClusterInit};
use lgp_core::synth::{sample_speakers, SynthConfig};
use lgp_core::{ClusterConfig, DurationConfig, Responsibilities, SpeakerModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_weights(resp: &Responsibilities, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = resp
        .active
        .iter()
        .map(|&a| if a { rng.random_range(0.01..1.0) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

#[test]
fn leave_one_out_matches_reenrollment() {
    let mut r = rng(3);
    for _ in 0..60 {
        let n = r.random_range(1..=20);
        let k = r.random_range(1..=5);
        let d = r.random_range(1..=8);
        let psi = DVector::from_fn(d, |_, _| r.random_range(0.1..20.0));
        let zs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0)))
            .collect();
        let resp = random_responsibilities(n, k, &mut r);
        let weights = random_weights(&resp, &mut r);
        let cfg = ClusterConfig {
            duration: DurationConfig {
                r: r.random_range(0.0..1.0),
                n0: r.random_bool(0.5).then(|| r.random_range(1.0..30.0)),
            },
            file_total: r.random_bool(0.3).then(|| r.random_range(n as f64..60.0)),
            ..ClusterConfig::default()
        };
        for seg in 0..n {
            let fast = loo_posteriors(seg, &zs, &resp, &psi, &weights, &cfg).unwrap();
            let slow = loo_by_reenrollment(seg, &zs, &resp, &psi, &weights, &cfg);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10, "segment {seg}: {fast:?} vs {slow:?}");
            }
        }
    }
}

#[test]
fn scalar_predictive_matches_quadrature() {
    let mut r = rng(8);
    for _ in 0..20 {
        let model = SpeakerModel {
            mean: DVector::from_element(1, r.random_range(-3.0..3.0)),
            cov: DVector::from_element(1, r.random_range(0.01..5.0)),
            weight: 1.0,
            eff_count: 1.0,
            active: true,
        };
        let z = r.random_range(-5.0..5.0);
        let lib = log_predictive(&DVector::from_element(1, z), &model).unwrap();
        let quad = log_predictive_by_quadrature(z, model.mean[0], model.cov[0]);
        assert!((lib - quad).abs() < 1e-6, "{lib} vs {quad}");
    }
}

#[test]
fn two_speakers_are_recovered_from_ten_at_convergence() {
    let dim = 64;
    for seed in 0..10 {
        let psi = DVector::from_element(dim, 9.0);
        let speakers = sample_speakers(2, psi.as_slice(), seed);
        let mut r = rng(100 + seed);
        let mut truth = Vec::new();
        let zs: Vec<DVector<f64>> = (0..40)
            .map(|i| {
                let s = (i / 10) % 2;
                truth.push(s);
                &speakers[s] + DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let cfg = ClusterConfig {
            seed,
            max_iterations: 200,
            duration: DurationConfig { r: 0.0, n0: None },
            ..ClusterConfig::default()
        };
        let out = cluster(&zs, &psi, &cfg, None).unwrap();
        assert!(out.log.len() < 200, "seed {seed} did not converge");
        assert_eq!(out.responsibilities.num_active(), 2, "seed {seed}");
        let labels = out.responsibilities.labels();
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(truth[i] == truth[j], labels[i] == labels[j]);
            }
        }
    }
}

#[test]
fn clustering_is_deterministic_and_respects_initial_labels() {
    let cfg = SynthConfig::default();
    let speakers = sample_speakers(3, &cfg.psi, 1);
    let mut r = rng(4);
    let zs: Vec<DVector<f64>> = (0..30)
        .map(|i| &speakers[i % 3] + DVector::from_fn(16, |_, _| r.sample::<f64, _>(StandardNormal)))
        .collect();
    let psi = DVector::from_column_slice(&cfg.psi);
    let c = ClusterConfig::default();
    let a = cluster(&zs, &psi, &c, None).unwrap();
    let b = cluster(&zs, &psi, &c, None).unwrap();
    assert_eq!(a.responsibilities, b.responsibilities);
    assert_eq!(a.log, b.log);

    let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let init = ClusterInit {
        responsibilities: Responsibilities::one_hot(&labels, 3),
        weights: None,
    };
    let out = cluster(&zs, &psi, &c, Some(init)).unwrap();
    assert_eq!(out.responsibilities.labels(), labels);
}

fn resp_strategy() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..25, 1usize..7, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loo_rows_are_distributions((n, k, seed) in resp_strategy()) {
        let mut r = rng(seed);
        let d = 3;
        let psi = DVector::from_fn(d, |_, _| r.random_range(0.5..10.0));
        let zs: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| r.random_range(-2.0..2.0))).collect();
        let resp = random_responsibilities(n, k, &mut r);
        let weights = random_weights(&resp, &mut r);
        let cfg = ClusterConfig::default();
        for seg in 0..n {
            let row = loo_posteriors(seg, &zs, &resp, &psi, &weights, &cfg).unwrap();
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (i, &g) in row.iter().enumerate() {
                prop_assert!(g >= 0.0);
                if !resp.active[i] {
                    prop_assert_eq!(g, 0.0);
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_keep_the_heaviest((n, k, seed) in resp_strategy(), threshold in 0.0f64..0.15) {
        let mut r = rng(seed);
        let resp = random_responsibilities(n, k, &mut r);
        let (weights, active) = update_weights(&resp, threshold);
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(active.iter().any(|&a| a));
        let sums: Vec<f64> = resp.matrix.column_iter().map(|c| c.sum()).collect();
        let heaviest = (0..k).filter(|&i| resp.active[i]).max_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap();
        prop_assert!(active[heaviest]);
        for i in 0..k {
            if !active[i] {
                prop_assert_eq!(weights[i], 0.0);
            }
            prop_assert!(!active[i] || resp.active[i], "pruned speaker reactivated");
        }
    }

    #[test]
    fn cluster_output_is_a_valid_partition((n, seed) in (1usize..30, any::<u64>())) {
        let mut r = rng(seed);
        let d = 4;
        let psi = DVector::from_element(d, 9.0);
        let zs: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| r.random_range(-4.0..4.0))).collect();
        let cfg = ClusterConfig { seed, max_iterations: 5, ..ClusterConfig::default() };
        let out = cluster(&zs, &psi, &cfg, None).unwrap();
        out.responsibilities.validate().unwrap();
        prop_assert!(out.responsibilities.num_active() >= 1);
        prop_assert!(out.log.len() <= 5);
        let w = out.weights();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let m: &DMatrix<f64> = &out.responsibilities.matrix;
        prop_assert_eq!(m.nrows(), n);
    }
}
