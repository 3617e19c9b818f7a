//! Seeded k-means used to initialize the clustering with hard assignments.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::Responsibilities;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 50;

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding. May return fewer than `k` centers when the data has
/// fewer than `k` distinct points.
fn seed_centers(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            acc += w;
            if w > 0.0 && acc >= target {
                pick = Some(i);
                break;
            }
        }
        // Roundoff in the running sum can leave `target` unreached.
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap());
        let center = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &center));
        }
        centers.push(center);
    }
    centers
}

/// Hard k-means labels in `0..k`; deterministic for a given seed.
pub fn kmeans_labels(points: &[DVector<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if points.len() <= k {
        return Ok((0..points.len()).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let dim = points[0].len();
        let mut sums = vec![DVector::zeros(dim); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        for ((center, sum), &count) in centers.iter_mut().zip(sums).zip(&counts) {
            if count > 0 {
                *center = sum / count as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

/// One-hot responsibilities over `k` speakers from k-means labels.
/// Clusters that receive no segment are inactive.
pub fn kmeans_init(points: &[DVector<f64>], k: usize, seed: u64) -> Result<Responsibilities> {
    let labels = kmeans_labels(points, k, seed)?;
    Ok(Responsibilities::one_hot(&labels, k))
}
