mod common;

use common::{conjugate_posterior, random_spd, rng};
use lgp_core::cluster::{enroll_speaker, SpeakerStats};
use lgp_core::plda::{length_normalize, simultaneous_diagonalize};
use lgp_core::{DurationConfig, PldaParams};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn sample(chol: &DMatrix<f64>, rng: &mut rand_chacha::ChaCha8Rng) -> DVector<f64> {
    let e = DVector::from_fn(chol.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    chol * e
}

#[test]
fn projected_within_class_covariance_is_identity_by_monte_carlo() {
    let mut r = rng(11);
    let dim = 4;
    let wc = random_spd(dim, &mut r, 0.3);
    let ac = random_spd(dim, &mut r, 0.5) * 3.0;
    let plda = PldaParams::new(wc.clone(), ac.clone()).unwrap();
    let lw = Cholesky::new(wc).unwrap().l();
    let la = Cholesky::new(ac).unwrap().l();

    let samples = 100_000;
    let mut within = DMatrix::zeros(dim, dim);
    let mut across = DMatrix::zeros(dim, dim);
    for _ in 0..samples {
        let y = sample(&la, &mut r);
        // Two observations of the same speaker; their scaled difference
        // carries only within-class noise.
        let z1 = &y + sample(&lw, &mut r);
        let z2 = &y + sample(&lw, &mut r);
        let d = &plda.transform * (z1 - z2) / 2f64.sqrt();
        within += &d * d.transpose();
        let u = &plda.transform * y;
        across += &u * u.transpose();
    }
    within /= samples as f64;
    across /= samples as f64;
    for i in 0..dim {
        for j in 0..dim {
            let expected_within = if i == j { 1.0 } else { 0.0 };
            assert!((within[(i, j)] - expected_within).abs() < 0.05, "within[{i},{j}] = {}", within[(i, j)]);
            let expected_across = if i == j { plda.psi[i] } else { 0.0 };
            let tol = 0.05 * plda.psi[0].max(1.0);
            assert!((across[(i, j)] - expected_across).abs() < tol, "across[{i},{j}] = {}", across[(i, j)]);
        }
    }
}

#[test]
fn diagonalization_identities_on_random_pairs() {
    let mut r = rng(5);
    for case in 0..40 {
        let dim = 1 + case % 24;
        let wc = random_spd(dim, &mut r, 0.1);
        let ac = random_spd(dim, &mut r, 0.0);
        let (u, psi) = simultaneous_diagonalize(&wc, &ac).unwrap();
        let w = &u * &wc * u.transpose();
        let a = &u * &ac * u.transpose();
        for i in 0..dim {
            for j in 0..dim {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((w[(i, j)] - id).abs() < 1e-8);
                let diag = if i == j { psi[i] } else { 0.0 };
                assert!((a[(i, j)] - diag).abs() < 1e-8);
            }
        }
        assert!(psi.as_slice().windows(2).all(|p| p[0] >= p[1]));
    }
}

#[test]
fn enrollment_matches_conjugate_posterior_in_original_space() {
    let mut r = rng(17);
    for case in 0..30 {
        let dim = [1, 3, 16][case % 3];
        let wc = random_spd(dim, &mut r, 0.5);
        let ac = random_spd(dim, &mut r, 0.5) * 2.0;
        let plda = PldaParams::new(wc.clone(), ac.clone()).unwrap();
        let n = r.random_range(1..12);
        let zs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| r.random_range(-2.0..2.0)))
            .collect();
        let (mean, cov) = conjugate_posterior(&wc, &ac, &zs);

        let mut stats = SpeakerStats::zero(dim);
        for z in &zs {
            stats.soft_count += 1.0;
            stats.mean_sum += &plda.transform * z;
        }
        let cfg = DurationConfig { r: 0.0, n0: None };
        let model = enroll_speaker(&stats, &plda.psi, &cfg, n as f64).unwrap();

        let projected_mean = &plda.transform * mean;
        let projected_cov = &plda.transform * cov * plda.transform.transpose();
        for i in 0..dim {
            assert!((projected_mean[i] - model.mean[i]).abs() < 1e-10);
            for j in 0..dim {
                let expected = if i == j { model.cov[i] } else { 0.0 };
                assert!((projected_cov[(i, j)] - expected).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn length_normalization_is_idempotent() {
    let mut r = rng(2);
    for _ in 0..50 {
        let v: Vec<f64> = (0..7).map(|_| r.random_range(-5.0..5.0)).collect();
        let once = length_normalize(&v).unwrap();
        let twice = length_normalize(once.as_slice()).unwrap();
        assert!((once.as_vector() - twice.as_vector()).amax() < 1e-15);
        assert!((once.as_vector().norm() - 1.0).abs() < 1e-14);
    }
}
