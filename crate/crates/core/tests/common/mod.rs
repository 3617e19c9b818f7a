//! Independent reference implementations used as test oracles.
//!
//! Everything here is written the slow, obvious way and shares no code with
//! the library beyond its public types.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lgp_core::cluster::{enroll_speaker, log_predictive, SpeakerStats};
use lgp_core::{ClusterConfig, Responsibilities, RttmRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spd(dim: usize, rng: &mut ChaCha8Rng, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * ridge;
    (&m + m.transpose()) * 0.5
}

/// Effective count from the variance of the mean of `n` unit-variance AR(1)
/// samples, summing the full correlation matrix row by row.
pub fn neff_by_rows(n: u64, r: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += r.powi((i as i64 - j as i64).unsigned_abs() as i32);
        }
    }
    (n * n) as f64 / total
}

/// Same quantity summed diagonal by diagonal (lag by lag).
pub fn neff_by_lags(n: u64, r: f64) -> f64 {
    let mut total = n as f64;
    for lag in 1..n {
        total += 2.0 * (n - lag) as f64 * r.powi(lag as i32);
    }
    (n * n) as f64 / total
}

/// Random responsibilities with a random number of active speakers; rows
/// put mass only on active speakers and some entries are exactly zero.
pub fn random_responsibilities(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Responsibilities {
    let mut active: Vec<bool> = (0..k).map(|_| rng.random_bool(0.8)).collect();
    if !active.iter().any(|&a| a) {
        active[0] = true;
    }
    let mut matrix = DMatrix::zeros(n, k);
    for row in 0..n {
        let mut sum = 0.0;
        for col in 0..k {
            if active[col] && rng.random_bool(0.7) {
                let v: f64 = rng.random_range(0.0..1.0);
                matrix[(row, col)] = v;
                sum += v;
            }
        }
        if sum == 0.0 {
            let col = active.iter().position(|&a| a).unwrap();
            matrix[(row, col)] = 1.0;
            sum = 1.0;
        }
        for col in 0..k {
            matrix[(row, col)] /= sum;
        }
    }
    Responsibilities { matrix, active }
}

/// Leave-one-out posterior by physically deleting segment `n` and enrolling
/// every speaker from scratch.
pub fn loo_by_reenrollment(
    n: usize,
    embeddings: &[DVector<f64>],
    resp: &Responsibilities,
    psi: &DVector<f64>,
    weights: &[f64],
    cfg: &ClusterConfig,
) -> Vec<f64> {
    let k = resp.num_speakers();
    let total = cfg.file_total.unwrap_or(embeddings.len() as f64);
    let mut scores = vec![None; k];
    for (i, score) in scores.iter_mut().enumerate() {
        if !resp.active[i] {
            continue;
        }
        let mut stats = SpeakerStats::zero(psi.len());
        for (m, z) in embeddings.iter().enumerate() {
            if m == n {
                continue;
            }
            let g = resp.matrix[(m, i)];
            stats.soft_count += g;
            stats.mean_sum += z * g;
        }
        let model = enroll_speaker(&stats, psi, &cfg.duration, total).unwrap();
        *score = Some(log_predictive(&embeddings[n], &model).unwrap() + weights[i].max(1e-300).ln());
    }
    let max = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |v| (v - max).exp())).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Textbook conjugate update in the original (undiagonalized) space:
/// prior `μ ~ N(0, Σac)`, observations `z ~ N(μ, Σwc)`.
pub fn conjugate_posterior(
    sigma_wc: &DMatrix<f64>,
    sigma_ac: &DMatrix<f64>,
    zs: &[DVector<f64>],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = zs.len() as f64;
    let wc_inv = sigma_wc.clone().try_inverse().unwrap();
    let precision = sigma_ac.clone().try_inverse().unwrap() + &wc_inv * n;
    let cov = precision.try_inverse().unwrap();
    let sum = zs.iter().fold(DVector::zeros(sigma_wc.nrows()), |acc, z| acc + z);
    let mean = &cov * (&wc_inv * sum);
    (mean, cov)
}

/// `log ∫ N(z; μ, 1) N(μ; m, v) dμ` by the trapezoid rule.
pub fn log_predictive_by_quadrature(z: f64, m: f64, v: f64) -> f64 {
    let normal = |x: f64, mean: f64, var: f64| {
        (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    };
    let sd = v.sqrt().max(1e-3);
    let (lo, hi) = ((m - 14.0 * sd).min(z - 14.0), (m + 14.0 * sd).max(z + 14.0));
    let steps = 400_000;
    let h = (hi - lo) / steps as f64;
    let f = |mu: f64| normal(z, mu, 1.0) * normal(mu, m, v);
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..steps {
        acc += f(lo + i as f64 * h);
    }
    (acc * h).ln()
}

/// Every injective partial map from `0..rows` into `0..cols`.
pub fn all_mappings(rows: usize, cols: usize) -> Vec<Vec<Option<usize>>> {
    fn go(row: usize, rows: usize, cols: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if row == rows {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(row + 1, rows, cols, used, cur, out);
        cur.pop();
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                go(row + 1, rows, cols, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, rows, cols, &mut vec![false; cols], &mut Vec::new(), &mut out);
    out
}

/// Error seconds `(missed, false_alarm, confusion, scored)` by walking 1 ms
/// ticks and minimizing over every speaker mapping.
pub fn der_by_ticks(reference: &[RttmRecord], hypothesis: &[RttmRecord], collar: f64, score_overlap: bool) -> (f64, f64, f64, f64) {
    let ms = |t: f64| (t * 1000.0).round() as i64;
    let names = |recs: &[RttmRecord]| {
        let mut v: Vec<String> = recs.iter().map(|r| r.speaker.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let (rn, hn) = (names(reference), names(hypothesis));
    let end = reference
        .iter()
        .chain(hypothesis)
        .map(|r| ms(r.onset + r.duration))
        .max()
        .unwrap_or(0);
    let c = ms(collar);
    let boundaries: Vec<i64> = reference.iter().flat_map(|r| [ms(r.onset), ms(r.onset + r.duration)]).collect();
    let speaking = |recs: &[RttmRecord], names: &[String], t: i64| -> Vec<usize> {
        let mut v: Vec<usize> = recs
            .iter()
            .filter(|r| ms(r.onset) <= t && t < ms(r.onset + r.duration))
            .map(|r| names.iter().position(|n| *n == r.speaker).unwrap())
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let mut ticks: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for t in 0..end {
        // Tick [t, t+1) lies in a collar iff it is inside [b - c, b + c).
        if c > 0 && boundaries.iter().any(|&b| b - c <= t && t < b + c) {
            continue;
        }
        let refs = speaking(reference, &rn, t);
        if !score_overlap && refs.len() >= 2 {
            continue;
        }
        ticks.push((refs, speaking(hypothesis, &hn, t)));
    }
    let mut best: Option<(i64, i64, i64, i64)> = None;
    for mapping in all_mappings(rn.len(), hn.len()) {
        let (mut miss, mut fa, mut conf, mut scored) = (0i64, 0i64, 0i64, 0i64);
        for (refs, hyps) in &ticks {
            let (nr, nh) = (refs.len() as i64, hyps.len() as i64);
            let correct = refs.iter().filter(|&&r| mapping[r].is_some_and(|h| hyps.contains(&h))).count() as i64;
            scored += nr;
            miss += (nr - nh).max(0);
            fa += (nh - nr).max(0);
            conf += nr.min(nh) - correct;
        }
        if best.is_none_or(|b| miss + fa + conf < b.0 + b.1 + b.2) {
            best = Some((miss, fa, conf, scored));
        }
    }
    let (m, f, cf, s) = best.unwrap();
    (m as f64 / 1000.0, f as f64 / 1000.0, cf as f64 / 1000.0, s as f64 / 1000.0)
}

/// Random RTTM with up to `max_speakers` speakers and `max_turns` turns on a
/// 10 ms grid; turns may overlap and leave gaps.
pub fn random_rttm(rng: &mut ChaCha8Rng, prefix: &str, max_speakers: usize, max_turns: usize) -> Vec<RttmRecord> {
    let k = rng.random_range(1..=max_speakers);
    let turns = rng.random_range(1..=max_turns);
    (0..turns)
        .map(|_| {
            let onset = rng.random_range(0..800) as f64 / 100.0;
            let duration = rng.random_range(5..300) as f64 / 100.0;
            RttmRecord {
                recording_id: "f".into(),
                onset,
                duration,
                speaker: format!("{prefix}{}", rng.random_range(0..k)),
            }
        })
        .collect()
}
