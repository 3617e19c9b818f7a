//! Coarse-then-fine diarization.
//!
//! Pass one clusters long non-overlapping windows from a k-means start. Pass
//! two re-cuts the speech into short, heavily overlapping windows, seeds them
//! with the pass-one labels and runs a couple of clustering iterations to
//! sharpen the speaker boundaries.
//!
//! Each segment labels a span of time rather than its whole window: a window
//! stands for the `step`-long interval around its center, so consecutive
//! spans tile a speech region without gaps or overlap.

use crate::cluster::{cluster, ClusterConfig, ClusterInit, ClusterOutput, Responsibilities};
use crate::error::{Error, Result};
use crate::io::{EmbeddingTable, RttmRecord, SadRegion};
use crate::plda::{length_normalize, Embedding, PldaParams};
use crate::synth::window_embedding;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassConfig {
    pub window: f64,
    pub step: f64,
    pub max_iterations: usize,
}

impl PassConfig {
    pub const COARSE: PassConfig = PassConfig {
        window: 2.0,
        step: 2.0,
        max_iterations: 20,
    };
    pub const FINE: PassConfig = PassConfig {
        window: 1.25,
        step: 0.25,
        max_iterations: 2,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.step <= self.window) {
            return Err(Error::InvalidConfig(format!(
                "pass needs 0 < step <= window, got window {} step {}",
                self.window, self.step
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("pass needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// A window of speech and the span of time its label covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub label_start: f64,
    pub label_end: f64,
}

impl Segment {
    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * self.duration
    }
}

fn check_sad(sad: &[SadRegion]) -> Result<()> {
    for (i, r) in sad.iter().enumerate() {
        if !(r.end > r.start) || r.start < 0.0 {
            return Err(Error::InvalidSad(format!(
                "region {i} [{}, {}) is empty or inverted",
                r.start, r.end
            )));
        }
        if i > 0 && r.start < sad[i - 1].end {
            return Err(Error::InvalidSad(format!(
                "region {i} starting at {} overlaps or precedes the previous one",
                r.start
            )));
        }
    }
    Ok(())
}

fn segment_region(region: &SadRegion, pass: &PassConfig, out: &mut Vec<Segment>) {
    let (a, b) = (region.start, region.end);
    let length = b - a;
    if length < pass.window - EPS {
        out.push(Segment {
            start: a,
            duration: length,
            label_start: a,
            label_end: b,
        });
        return;
    }
    let full = ((length - pass.window) / pass.step + EPS).floor() as usize + 1;
    let lead = 0.5 * (pass.window - pass.step);
    let first = out.len();
    for k in 0..full {
        let start = a + k as f64 * pass.step;
        out.push(Segment {
            start,
            duration: pass.window,
            label_start: start + lead,
            label_end: start + lead + pass.step,
        });
    }
    let covered = a + (full - 1) as f64 * pass.step + pass.window;
    if b - covered >= 0.5 * pass.step - EPS {
        let start = a + full as f64 * pass.step;
        let label_start = out.last().unwrap().label_end;
        out.push(Segment {
            start,
            duration: b - start,
            label_start,
            label_end: b,
        });
    }
    out[first].label_start = a;
    out.last_mut().unwrap().label_end = b;
}

/// Cuts each speech region into windows of `pass.window` seconds every
/// `pass.step` seconds.
///
/// A leftover tail of at least half a step becomes one shortened window;
/// a shorter tail is folded into the label span of the last window. Regions
/// shorter than a window yield a single segment covering the region.
pub fn segment_timeline(sad: &[SadRegion], pass: &PassConfig) -> Result<Vec<Segment>> {
    pass.validate()?;
    check_sad(sad)?;
    let mut out = Vec::new();
    for region in sad {
        segment_region(region, pass, &mut out);
    }
    Ok(out)
}

/// One-hot initialization for `fine` from the labels of `coarse`.
///
/// Each fine segment takes the label of the coarse span containing its
/// midpoint, with spans closed on the left. Midpoints outside every span take
/// the nearest span's label, preferring the later span on ties.
pub fn map_labels(coarse: &[Segment], labels: &[usize], fine: &[Segment], k: usize) -> Result<Responsibilities> {
    if coarse.is_empty() {
        return Err(Error::EmptyCoarse);
    }
    if labels.len() != coarse.len() {
        return Err(Error::DimensionMismatch {
            expected: coarse.len(),
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::IndexOutOfRange { index: bad, len: k });
    }
    let mapped: Vec<usize> = fine
        .iter()
        .map(|seg| {
            let m = seg.midpoint();
            let mut best = (f64::INFINITY, 0);
            for (c, span) in coarse.iter().enumerate() {
                if span.label_start <= m && m < span.label_end {
                    return labels[c];
                }
                let dist = if m < span.label_start {
                    span.label_start - m
                } else {
                    m - span.label_end
                };
                if dist <= best.0 {
                    best = (dist, c);
                }
            }
            labels[best.1]
        })
        .collect();
    Ok(Responsibilities::one_hot(&mapped, k))
}

/// Provides the embedding of an arbitrary window of speech.
pub trait EmbeddingSource {
    fn embed(&self, start: f64, duration: f64) -> Result<Embedding>;

    fn dim(&self) -> usize;
}

/// Averages frame-level vectors over the window, then length-normalizes.
#[derive(Debug, Clone)]
pub struct FrameAggregator {
    pub frames: EmbeddingTable,
}

impl EmbeddingSource for FrameAggregator {
    fn embed(&self, start: f64, duration: f64) -> Result<Embedding> {
        window_embedding(&self.frames, start, duration)
    }

    fn dim(&self) -> usize {
        self.frames.dim
    }
}

/// Precomputed window embeddings; row `i` is the window starting at
/// `start + i * step`.
#[derive(Debug, Clone)]
pub struct WindowTable {
    pub table: EmbeddingTable,
}

impl EmbeddingSource for WindowTable {
    fn embed(&self, start: f64, duration: f64) -> Result<Embedding> {
        let pos = (start - self.table.start) / self.table.step;
        let idx = pos.round();
        if idx < 0.0 || idx as usize >= self.table.rows.len() || (pos - idx).abs() > 1e-6 {
            return Err(Error::EmptyWindow {
                start,
                end: start + duration,
            });
        }
        length_normalize(&self.table.rows[idx as usize])
    }

    fn dim(&self) -> usize {
        self.table.dim
    }
}

#[derive(Debug, Clone)]
pub struct DiarizeConfig {
    pub recording_id: String,
    pub pass1: PassConfig,
    /// `None` stops after the coarse pass.
    pub pass2: Option<PassConfig>,
    /// Shared clustering settings; `max_iterations` comes from each pass.
    pub cluster: ClusterConfig,
}

impl Default for DiarizeConfig {
    fn default() -> Self {
        Self {
            recording_id: "rec".into(),
            pass1: PassConfig::COARSE,
            pass2: Some(PassConfig::FINE),
            cluster: ClusterConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PassResult {
    pub segments: Vec<Segment>,
    pub labels: Vec<usize>,
    pub output: ClusterOutput,
}

impl PassResult {
    pub fn records(&self, recording_id: &str) -> Vec<RttmRecord> {
        label_records(&self.segments, &self.labels, recording_id)
    }
}

#[derive(Debug, Clone)]
pub struct DiarizeOutput {
    pub pass1: PassResult,
    pub pass2: Option<PassResult>,
    pub records: Vec<RttmRecord>,
}

pub fn cluster_label(index: usize) -> String {
    format!("S{index}")
}

/// Merges consecutive label spans with the same speaker into RTTM records.
pub fn label_records(segments: &[Segment], labels: &[usize], recording_id: &str) -> Vec<RttmRecord> {
    let mut records: Vec<(f64, f64, usize)> = Vec::new();
    for (seg, &label) in segments.iter().zip(labels) {
        match records.last_mut() {
            Some(last) if last.2 == label && (last.1 - seg.label_start).abs() < EPS => {
                last.1 = seg.label_end;
            }
            _ => records.push((seg.label_start, seg.label_end, label)),
        }
    }
    records
        .into_iter()
        .map(|(start, end, label)| RttmRecord {
            recording_id: recording_id.to_string(),
            onset: start,
            duration: end - start,
            speaker: cluster_label(label),
        })
        .collect()
}

fn embed_segments(source: &dyn EmbeddingSource, plda: &PldaParams, segments: &[Segment]) -> Result<Vec<nalgebra::DVector<f64>>> {
    segments
        .iter()
        .map(|s| plda.project(&source.embed(s.start, s.duration)?))
        .collect()
}

/// Two-pass diarization of one recording.
///
/// `fine_source` supplies pass-two embeddings; when absent the coarse source
/// is used for both passes.
pub fn diarize(
    coarse_source: &dyn EmbeddingSource,
    fine_source: Option<&dyn EmbeddingSource>,
    plda: &PldaParams,
    sad: &[SadRegion],
    cfg: &DiarizeConfig,
) -> Result<DiarizeOutput> {
    if sad.is_empty() {
        return Err(Error::NoSpeech);
    }

    let coarse = segment_timeline(sad, &cfg.pass1)?;
    let coarse_z = embed_segments(coarse_source, plda, &coarse)?;
    let coarse_cfg = ClusterConfig {
        max_iterations: cfg.pass1.max_iterations,
        ..cfg.cluster.clone()
    };
    let out1 = cluster(&coarse_z, &plda.psi, &coarse_cfg, None)?;
    let labels1 = out1.responsibilities.labels();
    let pass1 = PassResult {
        segments: coarse,
        labels: labels1,
        output: out1,
    };

    let Some(fine_pass) = cfg.pass2 else {
        let records = pass1.records(&cfg.recording_id);
        return Ok(DiarizeOutput {
            pass1,
            pass2: None,
            records,
        });
    };

    let fine = segment_timeline(sad, &fine_pass)?;
    let fine_z = embed_segments(fine_source.unwrap_or(coarse_source), plda, &fine)?;
    let k = pass1.output.responsibilities.num_speakers();
    let init = map_labels(&pass1.segments, &pass1.labels, &fine, k)?;
    let fine_cfg = ClusterConfig {
        max_iterations: fine_pass.max_iterations,
        file_total: Some(pass1.segments.len() as f64),
        ..cfg.cluster.clone()
    };
    let out2 = cluster(
        &fine_z,
        &plda.psi,
        &fine_cfg,
        Some(ClusterInit {
            responsibilities: init,
            weights: Some(pass1.output.weights()),
        }),
    )?;
    let labels2 = out2.responsibilities.labels();
    let pass2 = PassResult {
        segments: fine,
        labels: labels2,
        output: out2,
    };
    let records = pass2.records(&cfg.recording_id);
    Ok(DiarizeOutput {
        pass1,
        pass2: Some(pass2),
        records,
    })
}
