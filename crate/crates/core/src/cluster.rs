//! Leave-one-out Gaussian PLDA clustering.
//!
//! The algorithm alternates between Bayesian enrollment of every speaker from
//! the current soft assignments and rescoring every segment against speaker
//! models that exclude that segment. Speaker weights follow a plain maximum
//! likelihood update and speakers whose weight collapses are pruned, which is
//! how the number of speakers is selected.
//!
//! All vectors live in the diagonalized PLDA space (within-class covariance
//! `I`, across-class covariance `diag(psi)`).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::duration::{neff_continuous, scale_count, DurationConfig};
use crate::error::{Error, Result};
use crate::kmeans::kmeans_init;

const LOG_FLOOR: f64 = 1e-300;
const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModel {
    pub mean: DVector<f64>,
    /// Diagonal of the posterior covariance of the speaker mean.
    pub cov: DVector<f64>,
    pub weight: f64,
    pub eff_count: f64,
    pub active: bool,
}

/// Segments × speakers matrix of posterior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub matrix: DMatrix<f64>,
    pub active: Vec<bool>,
}

impl Responsibilities {
    /// Hard assignments. Speakers without any segment are inactive.
    pub fn one_hot(labels: &[usize], k: usize) -> Self {
        let mut matrix = DMatrix::zeros(labels.len(), k);
        let mut active = vec![false; k];
        for (n, &l) in labels.iter().enumerate() {
            matrix[(n, l)] = 1.0;
            active[l] = true;
        }
        Self { matrix, active }
    }

    pub fn num_segments(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_speakers(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Most probable speaker per segment; ties go to the lowest index.
    pub fn labels(&self) -> Vec<usize> {
        self.matrix
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidResponsibilities(msg));
        if self.active.len() != self.num_speakers() {
            return bad(format!(
                "{} activity flags for {} speakers",
                self.active.len(),
                self.num_speakers()
            ));
        }
        for (n, row) in self.matrix.row_iter().enumerate() {
            let mut sum = 0.0;
            for (i, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("entry ({n}, {i}) = {v} is outside [0, 1]"));
                }
                if !self.active[i] && v != 0.0 {
                    return bad(format!("inactive speaker {i} has mass in row {n}"));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return bad(format!("row {n} sums to {sum}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub max_speakers: usize,
    pub max_iterations: usize,
    pub posterior_change_tol: f64,
    pub prune_threshold: f64,
    pub duration: DurationConfig,
    pub seed: u64,
    /// Segment count that `N0` scaling is measured against. Defaults to the
    /// number of segments being clustered.
    pub file_total: Option<f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            max_speakers: 10,
            max_iterations: 20,
            posterior_change_tol: 1e-4,
            prune_threshold: 1e-3,
            duration: DurationConfig::default(),
            seed: 0,
            file_total: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.max_speakers < 1 {
            return bad("max_speakers must be at least 1".into());
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.posterior_change_tol >= 0.0) {
            return bad("posterior_change_tol must be nonnegative".into());
        }
        if !(self.prune_threshold >= 0.0) || self.prune_threshold >= 1.0 / self.max_speakers as f64 {
            return bad(format!(
                "prune_threshold {} must be in [0, 1/max_speakers)",
                self.prune_threshold
            ));
        }
        if let Some(total) = self.file_total {
            if !(total > 0.0) {
                return bad("file_total must be positive".into());
            }
        }
        self.duration.validate()
    }

    /// Multiplier applied to soft counts before the correlation correction.
    fn count_scale(&self, num_segments: usize) -> Result<f64> {
        let total = self.file_total.unwrap_or(num_segments as f64);
        scale_count(1.0, &self.duration, total.max(1.0))
    }
}

/// Per-speaker sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStats {
    pub soft_count: f64,
    pub mean_sum: DVector<f64>,
}

impl SpeakerStats {
    pub fn zero(dim: usize) -> Self {
        Self {
            soft_count: 0.0,
            mean_sum: DVector::zeros(dim),
        }
    }
}

pub fn accumulate_stats(embeddings: &[DVector<f64>], resp: &Responsibilities) -> Vec<SpeakerStats> {
    let dim = embeddings.first().map_or(0, |z| z.len());
    let mut stats = vec![SpeakerStats::zero(dim); resp.num_speakers()];
    for (n, z) in embeddings.iter().enumerate() {
        for (i, s) in stats.iter_mut().enumerate() {
            let g = resp.matrix[(n, i)];
            if g != 0.0 {
                s.soft_count += g;
                s.mean_sum.axpy(g, z, 1.0);
            }
        }
    }
    stats
}

/// Posterior of a speaker mean given sufficient statistics, with the soft count
/// multiplied by `count_scale` before the correlation correction.
fn posterior(
    soft_count: f64,
    mean_sum: &DVector<f64>,
    psi: &DVector<f64>,
    r: f64,
    count_scale: f64,
) -> Result<SpeakerModel> {
    let count = soft_count.max(0.0);
    if count == 0.0 {
        return Ok(SpeakerModel {
            mean: DVector::zeros(psi.len()),
            cov: psi.clone(),
            weight: 0.0,
            eff_count: 0.0,
            active: true,
        });
    }
    let neff = neff_continuous(count * count_scale, r)?;
    let mut mean = DVector::zeros(psi.len());
    let mut cov = DVector::zeros(psi.len());
    for d in 0..psi.len() {
        let denom = 1.0 + psi[d] * neff;
        cov[d] = psi[d] / denom;
        mean[d] = psi[d] * neff / denom * (mean_sum[d] / count);
    }
    Ok(SpeakerModel {
        mean,
        cov,
        weight: 0.0,
        eff_count: neff,
        active: true,
    })
}

/// Bayesian enrollment of one speaker in the diagonalized space.
///
/// With `n_eff` the scaled, correlation-corrected count, the maximum
/// likelihood mean has variance `1 / n_eff` per coordinate and the posterior is
/// `mean = psi / (psi + 1/n_eff) · z̄`, `cov = psi · (1/n_eff) / (psi + 1/n_eff)`.
/// An empty speaker gets the prior: zero mean, covariance `psi`.
pub fn enroll_speaker(
    stats: &SpeakerStats,
    psi: &DVector<f64>,
    duration: &DurationConfig,
    file_total: f64,
) -> Result<SpeakerModel> {
    if !(stats.soft_count >= 0.0) {
        return Err(Error::InvalidCount(stats.soft_count));
    }
    if stats.mean_sum.len() != psi.len() {
        return Err(Error::DimensionMismatch {
            expected: psi.len(),
            actual: stats.mean_sum.len(),
        });
    }
    let scale = if stats.soft_count > 0.0 {
        scale_count(stats.soft_count, duration, file_total)? / stats.soft_count
    } else {
        1.0
    };
    posterior(stats.soft_count, &stats.mean_sum, psi, duration.r, scale)
}

/// `log N(z; mean, I + diag(cov))`.
pub fn log_predictive(z: &DVector<f64>, model: &SpeakerModel) -> Result<f64> {
    if !model.active {
        return Err(Error::InactiveSpeaker);
    }
    if z.len() != model.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: model.mean.len(),
            actual: z.len(),
        });
    }
    Ok(log_predictive_unchecked(z, model))
}

fn log_predictive_unchecked(z: &DVector<f64>, model: &SpeakerModel) -> f64 {
    let mut acc = 0.0;
    for d in 0..z.len() {
        let var = 1.0 + model.cov[d];
        let diff = z[d] - model.mean[d];
        acc += (2.0 * std::f64::consts::PI * var).ln() + diff * diff / var;
    }
    -0.5 * acc
}

/// Normalizes log scores in place into probabilities; `None` entries get 0.
fn softmax(scores: &[Option<f64>]) -> Vec<f64> {
    let max = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores
        .iter()
        .map(|s| s.map_or(0.0, |v| (v - max).exp()))
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Frozen per-iteration state for leave-one-out scoring.
struct LooScorer<'a> {
    stats: Vec<SpeakerStats>,
    log_weights: Vec<Option<f64>>,
    psi: &'a DVector<f64>,
    r: f64,
    count_scale: f64,
}

impl<'a> LooScorer<'a> {
    fn new(
        embeddings: &[DVector<f64>],
        resp: &Responsibilities,
        psi: &'a DVector<f64>,
        weights: &[f64],
        cfg: &ClusterConfig,
    ) -> Result<Self> {
        let log_weights = resp
            .active
            .iter()
            .zip(weights)
            .map(|(&a, &w)| a.then(|| w.max(LOG_FLOOR).ln()))
            .collect();
        Ok(Self {
            stats: accumulate_stats(embeddings, resp),
            log_weights,
            psi,
            r: cfg.duration.r,
            count_scale: cfg.count_scale(embeddings.len())?,
        })
    }

    fn row(&self, z: &DVector<f64>, gammas: &[f64]) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(self.stats.len());
        for ((s, lw), &g) in self.stats.iter().zip(&self.log_weights).zip(gammas) {
            let Some(lw) = lw else {
                scores.push(None);
                continue;
            };
            let model = if g == 0.0 {
                posterior(s.soft_count, &s.mean_sum, self.psi, self.r, self.count_scale)?
            } else {
                let mut sum = s.mean_sum.clone();
                sum.axpy(-g, z, 1.0);
                posterior(s.soft_count - g, &sum, self.psi, self.r, self.count_scale)?
            };
            scores.push(Some(log_predictive_unchecked(z, &model) + lw));
        }
        Ok(softmax(&scores))
    }
}

fn check_inputs(embeddings: &[DVector<f64>], resp: &Responsibilities, psi: &DVector<f64>) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput);
    }
    if resp.num_segments() != embeddings.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            actual: resp.num_segments(),
        });
    }
    if let Some(z) = embeddings.iter().find(|z| z.len() != psi.len()) {
        return Err(Error::DimensionMismatch {
            expected: psi.len(),
            actual: z.len(),
        });
    }
    resp.validate()
}

/// Posterior row for segment `n` scored against speaker models that exclude
/// segment `n` from their statistics.
pub fn loo_posteriors(
    n: usize,
    embeddings: &[DVector<f64>],
    resp: &Responsibilities,
    psi: &DVector<f64>,
    weights: &[f64],
    cfg: &ClusterConfig,
) -> Result<Vec<f64>> {
    if n >= embeddings.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: embeddings.len(),
        });
    }
    check_inputs(embeddings, resp, psi)?;
    if weights.len() != resp.num_speakers() {
        return Err(Error::DimensionMismatch {
            expected: resp.num_speakers(),
            actual: weights.len(),
        });
    }
    let scorer = LooScorer::new(embeddings, resp, psi, weights, cfg)?;
    let gammas: Vec<f64> = resp.matrix.row(n).iter().copied().collect();
    scorer.row(&embeddings[n], &gammas)
}

/// Maximum likelihood weights over active speakers, pruning those below
/// `prune_threshold`. The heaviest speaker always survives.
pub fn update_weights(resp: &Responsibilities, prune_threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let n = resp.num_segments().max(1) as f64;
    let mut active = resp.active.clone();
    let mut weights: Vec<f64> = resp
        .matrix
        .column_iter()
        .zip(&active)
        .map(|(col, &a)| if a { col.sum() / n } else { 0.0 })
        .collect();

    let heaviest = (0..weights.len())
        .filter(|&i| active[i])
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if weights[b] >= weights[i] => Some(b),
            _ => Some(i),
        });
    for i in 0..weights.len() {
        if active[i] && weights[i] < prune_threshold && Some(i) != heaviest {
            active[i] = false;
            weights[i] = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    } else if let Some(h) = heaviest {
        weights[h] = 1.0;
    }
    (weights, active)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub active_speakers: usize,
    pub max_change: f64,
}

/// Starting point for [`cluster`] when not initializing from k-means.
#[derive(Debug, Clone)]
pub struct ClusterInit {
    pub responsibilities: Responsibilities,
    /// Weights for the first scoring step instead of the maximum likelihood
    /// update. Speakers with zero weight are treated as inactive.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub responsibilities: Responsibilities,
    pub models: Vec<SpeakerModel>,
    pub log: Vec<IterationRecord>,
}

impl ClusterOutput {
    pub fn weights(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.weight).collect()
    }
}

/// Runs the alternating enrollment / leave-one-out scoring loop.
pub fn cluster(
    embeddings: &[DVector<f64>],
    psi: &DVector<f64>,
    cfg: &ClusterConfig,
    init: Option<ClusterInit>,
) -> Result<ClusterOutput> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    let (mut resp, mut init_weights) = match init {
        Some(init) => (init.responsibilities, init.weights),
        None => (kmeans_init(embeddings, cfg.max_speakers, cfg.seed)?, None),
    };
    check_inputs(embeddings, &resp, psi)?;

    let mut log = Vec::new();
    let mut weights = vec![0.0; resp.num_speakers()];
    for iteration in 1..=cfg.max_iterations {
        let (w, active) = match init_weights.take() {
            Some(w) => {
                if w.len() != resp.num_speakers() {
                    return Err(Error::DimensionMismatch {
                        expected: resp.num_speakers(),
                        actual: w.len(),
                    });
                }
                let active: Vec<bool> = resp.active.iter().zip(&w).map(|(&a, &w)| a && w > 0.0).collect();
                let total: f64 = w.iter().zip(&active).filter(|(_, &a)| a).map(|(w, _)| w).sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidConfig("initial weights have no active mass".into()));
                }
                let w = w.iter().zip(&active).map(|(&w, &a)| if a { w / total } else { 0.0 }).collect();
                (w, active)
            }
            None => update_weights(&resp, cfg.prune_threshold),
        };
        weights = w;
        resp.active = active;

        let scorer = LooScorer::new(embeddings, &resp, psi, &weights, cfg)?;
        let rows: Vec<Vec<f64>> = (0..embeddings.len())
            .into_par_iter()
            .map(|n| {
                let gammas: Vec<f64> = resp.matrix.row(n).iter().copied().collect();
                scorer.row(&embeddings[n], &gammas)
            })
            .collect::<Result<_>>()?;

        let mut max_change = 0.0f64;
        let mut next = DMatrix::zeros(resp.num_segments(), resp.num_speakers());
        for (n, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                max_change = max_change.max((v - resp.matrix[(n, i)]).abs());
                next[(n, i)] = v;
            }
        }
        resp.matrix = next;
        log.push(IterationRecord {
            iteration,
            active_speakers: resp.num_active(),
            max_change,
        });
        if max_change < cfg.posterior_change_tol {
            break;
        }
    }

    // Report the models implied by the final assignments, with weights
    // renormalized over the surviving speakers but not pruned again.
    let n = embeddings.len() as f64;
    let mut final_weights: Vec<f64> = resp
        .matrix
        .column_iter()
        .zip(&resp.active)
        .map(|(col, &a)| if a { col.sum() / n } else { 0.0 })
        .collect();
    let total: f64 = final_weights.iter().sum();
    if total > 0.0 {
        final_weights.iter_mut().for_each(|w| *w /= total);
    } else {
        final_weights = weights;
    }
    let count_scale = cfg.count_scale(embeddings.len())?;
    let models = accumulate_stats(embeddings, &resp)
        .iter()
        .zip(&resp.active)
        .zip(&final_weights)
        .map(|((s, &active), &weight)| {
            let mut m = posterior(s.soft_count, &s.mean_sum, psi, cfg.duration.r, count_scale)?;
            m.weight = weight;
            m.active = active;
            Ok(m)
        })
        .collect::<Result<_>>()?;

    Ok(ClusterOutput {
        responsibilities: resp,
        models,
        log,
    })
}
