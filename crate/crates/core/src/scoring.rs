//! Diarization error rate with a forgiveness collar and optional exclusion of
//! overlapped reference speech.
//!
//! Times are rounded to integer milliseconds before any accounting so that
//! boundaries coming from different files compare exactly.

use std::collections::BTreeMap;

use crate::assignment::{mapping_value, optimal_mapping};
use crate::error::{Error, Result};
use crate::io::RttmRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerOptions {
    /// Seconds forgiven on each side of every reference boundary.
    pub collar: f64,
    /// When false, reference regions with two or more speakers are not scored.
    pub score_overlap: bool,
}

impl Default for DerOptions {
    fn default() -> Self {
        Self {
            collar: 0.25,
            score_overlap: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerBreakdown {
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored_total: f64,
    pub der: f64,
}

impl DerBreakdown {
    fn from_components(missed: f64, false_alarm: f64, confusion: f64, scored_total: f64) -> Self {
        let errors = missed + false_alarm + confusion;
        let der = if scored_total > 0.0 {
            errors / scored_total
        } else if errors == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            missed,
            false_alarm,
            confusion,
            scored_total,
            der,
        }
    }

    /// Time-weighted aggregate over several files.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a DerBreakdown>) -> Self {
        let (mut m, mut f, mut c, mut t) = (0.0, 0.0, 0.0, 0.0);
        for p in parts {
            m += p.missed;
            f += p.false_alarm;
            c += p.confusion;
            t += p.scored_total;
        }
        Self::from_components(m, f, c, t)
    }
}

fn to_ms(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

fn speaker_index(records: &[RttmRecord]) -> BTreeMap<&str, usize> {
    let mut names: Vec<&str> = records.iter().map(|r| r.speaker.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
}

/// Speakers present in each elementary interval `[points[k], points[k+1])`.
fn activity(records: &[RttmRecord], index: &BTreeMap<&str, usize>, points: &[i64]) -> Vec<Vec<usize>> {
    let mut active = vec![Vec::new(); points.len().saturating_sub(1)];
    for r in records {
        let (start, end) = (to_ms(r.onset), to_ms(r.end()));
        if end <= start {
            continue;
        }
        let spk = index[r.speaker.as_str()];
        let first = points.binary_search(&start).unwrap();
        let last = points.binary_search(&end).unwrap();
        for slot in &mut active[first..last] {
            if !slot.contains(&spk) {
                slot.push(spk);
            }
        }
    }
    active
}

fn recording_of(records: &[RttmRecord]) -> Option<&str> {
    records.first().map(|r| r.recording_id.as_str())
}

/// Scores a hypothesis against a reference for one recording.
pub fn score_der(reference: &[RttmRecord], hypothesis: &[RttmRecord], opts: &DerOptions) -> Result<DerBreakdown> {
    if !(opts.collar >= 0.0) {
        return Err(Error::InvalidConfig(format!("collar must be nonnegative, got {}", opts.collar)));
    }
    let rec = recording_of(reference).ok_or(Error::EmptyReference)?;
    for r in reference.iter().chain(hypothesis) {
        if r.recording_id != rec {
            return Err(Error::RecordingMismatch {
                reference: rec.to_string(),
                hypothesis: r.recording_id.clone(),
            });
        }
    }

    let collar = to_ms(opts.collar);
    let mut boundaries: Vec<i64> = reference
        .iter()
        .flat_map(|r| [to_ms(r.onset), to_ms(r.end())])
        .collect();
    boundaries.sort_unstable();
    boundaries.dedup();

    // Merged forgiveness zones around reference boundaries.
    let mut collars: Vec<(i64, i64)> = Vec::new();
    if collar > 0 {
        for &b in &boundaries {
            let (lo, hi) = (b - collar, b + collar);
            match collars.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => collars.push((lo, hi)),
            }
        }
    }

    let mut points: Vec<i64> = reference
        .iter()
        .chain(hypothesis)
        .flat_map(|r| [to_ms(r.onset), to_ms(r.end())])
        .chain(collars.iter().flat_map(|&(lo, hi)| [lo, hi]))
        .collect();
    points.sort_unstable();
    points.dedup();

    let ref_index = speaker_index(reference);
    let hyp_index = speaker_index(hypothesis);
    let ref_active = activity(reference, &ref_index, &points);
    let hyp_active = activity(hypothesis, &hyp_index, &points);

    let mut overlap = vec![vec![0i64; hyp_index.len()]; ref_index.len()];
    let (mut missed, mut false_alarm, mut matched_bound, mut total) = (0i64, 0i64, 0i64, 0i64);
    let mut collar_iter = collars.iter().peekable();
    for k in 0..points.len().saturating_sub(1) {
        let (lo, hi) = (points[k], points[k + 1]);
        while collar_iter.peek().is_some_and(|c| c.1 <= lo) {
            collar_iter.next();
        }
        if collar_iter.peek().is_some_and(|c| c.0 <= lo && hi <= c.1) {
            continue;
        }
        let refs = &ref_active[k];
        let hyps = &hyp_active[k];
        if !opts.score_overlap && refs.len() >= 2 {
            continue;
        }
        let dt = hi - lo;
        let (nr, nh) = (refs.len() as i64, hyps.len() as i64);
        total += nr * dt;
        missed += (nr - nh).max(0) * dt;
        false_alarm += (nh - nr).max(0) * dt;
        matched_bound += nr.min(nh) * dt;
        for &r in refs {
            for &h in hyps {
                overlap[r][h] += dt;
            }
        }
    }

    let weights: Vec<Vec<f64>> = overlap
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    let mapping = optimal_mapping(&weights);
    let correct = mapping_value(&weights, &mapping).round() as i64;
    let confusion = matched_bound - correct;

    let secs = |ms: i64| ms as f64 / 1000.0;
    Ok(DerBreakdown::from_components(
        secs(missed),
        secs(false_alarm),
        secs(confusion),
        secs(total),
    ))
}
