//! Synthetic conversations drawn from the PLDA generative model.
//!
//! Each speaker gets a latent vector `y ~ N(0, diag(psi))`. Frame `t` of the
//! conversation is `y_{spk(t)} + c_t` where the channel `c_t` is a stationary
//! AR(1) process with unit marginal variance and lag-one correlation `r`.
//! Window embeddings average frames and then length-normalize, so the
//! within-class spread of a window shrinks with the number of frames it pools.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::duration::neff_discrete;
use crate::error::{Error, Result};
use crate::io::{EmbeddingTable, RttmRecord, SadRegion};
use crate::plda::{length_normalize, Embedding, PldaParams};

/// Probability that the next turn goes to a random speaker instead of the
/// next one in round-robin order.
pub const SPEAKER_JUMP_PROB: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_speakers: usize,
    pub dim: usize,
    pub psi: Vec<f64>,
    /// Lag-one correlation of the frame-level channel.
    pub r: f64,
    pub frame_step: f64,
    /// Mean of the exponential turn-length distribution, seconds.
    pub turn_mean: f64,
    pub file_length: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_speakers: 2,
            dim: 16,
            psi: vec![9.0; 16],
            r: 0.0,
            frame_step: 0.1,
            turn_mean: 8.0,
            file_length: 60.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_speakers < 1 || self.dim < 1 {
            return bad("num_speakers and dim must be at least 1".into());
        }
        if self.psi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.psi.len(),
            });
        }
        if self.psi.iter().any(|&p| !(p >= 0.0)) {
            return bad("psi entries must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.r) {
            return bad(format!("frame correlation {} must be in [0, 1)", self.r));
        }
        if !(self.frame_step > 0.0) || !(self.turn_mean > 0.0) {
            return bad("frame_step and turn_mean must be positive".into());
        }
        if !(self.file_length >= self.turn_mean) {
            return bad("file_length must be at least turn_mean".into());
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        ((self.file_length / self.frame_step).round() as usize).max(1)
    }

    /// PLDA covariances describing length-normalized means of
    /// `window / frame_step` frames.
    ///
    /// The window mean has within-speaker variance `1 / n` per coordinate,
    /// where `n` is the effective number of frames in the window; dividing
    /// by the expected squared norm of the mean gives the scale after length
    /// normalization.
    pub fn matched_plda(&self, window: f64) -> Result<PldaParams> {
        self.calibrated_plda(window, 1.0)
    }

    /// [`Self::matched_plda`] with the within-speaker covariance multiplied by
    /// `wc_scale`.
    ///
    /// Scales above one make the scorer less confident than the generator
    /// warrants, which keeps windows straddling a turn change from forming
    /// clusters of their own.
    pub fn calibrated_plda(&self, window: f64, wc_scale: f64) -> Result<PldaParams> {
        self.validate()?;
        if !(wc_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("wc_scale must be positive, got {wc_scale}")));
        }
        let frames = ((window / self.frame_step).round() as u64).max(1);
        let neff = neff_discrete(frames, self.r)?;
        let noise = 1.0 / neff;
        let norm2: f64 = self.psi.iter().sum::<f64>() + self.dim as f64 * noise;
        let sigma_wc = DMatrix::identity(self.dim, self.dim) * (wc_scale * noise / norm2);
        let sigma_ac = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim,
            self.psi.iter().map(|p| p / norm2),
        ));
        PldaParams::new(sigma_wc, sigma_ac)
    }
}

/// `k` independent draws from `N(0, diag(psi))`.
pub fn sample_speakers(k: usize, psi: &[f64], seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            DVector::from_iterator(
                psi.len(),
                psi.iter().map(|&p| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    p.sqrt() * e
                }),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turn {
    pub start: f64,
    pub end: f64,
    pub speaker: usize,
}

#[derive(Debug, Clone)]
pub struct Conversation {
    pub speakers: Vec<DVector<f64>>,
    /// Raw frame vectors, one row per frame.
    pub frames: EmbeddingTable,
    pub frame_speaker: Vec<usize>,
    /// Maximal single-speaker runs covering `[0, file_length)`.
    pub turns: Vec<Turn>,
}

pub fn speaker_name(index: usize) -> String {
    format!("spk{index}")
}

impl Conversation {
    pub fn rttm(&self, recording_id: &str) -> Vec<RttmRecord> {
        self.turns
            .iter()
            .map(|t| RttmRecord {
                recording_id: recording_id.to_string(),
                onset: t.start,
                duration: t.end - t.start,
                speaker: speaker_name(t.speaker),
            })
            .collect()
    }

    pub fn speech(&self) -> Vec<SadRegion> {
        let end = self.turns.last().map_or(0.0, |t| t.end);
        vec![SadRegion { start: 0.0, end }]
    }

    /// Speaker changes strictly inside the file.
    pub fn change_points(&self) -> Vec<f64> {
        self.turns.iter().skip(1).map(|t| t.start).collect()
    }

    pub fn num_speaking(&self) -> usize {
        let mut seen: Vec<usize> = self.turns.iter().map(|t| t.speaker).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

pub fn sample_conversation(cfg: &SynthConfig) -> Result<Conversation> {
    cfg.validate()?;
    let speakers = sample_speakers(cfg.num_speakers, &cfg.psi, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let num_frames = cfg.num_frames();
    let turn_len = Exp::new(1.0 / cfg.turn_mean).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut frame_speaker = Vec::with_capacity(num_frames);
    let mut speaker = rng.random_range(0..cfg.num_speakers);
    while frame_speaker.len() < num_frames {
        let seconds: f64 = turn_len.sample(&mut rng);
        let frames = ((seconds / cfg.frame_step).round() as usize).max(1);
        let frames = frames.min(num_frames - frame_speaker.len());
        frame_speaker.extend(std::iter::repeat_n(speaker, frames));
        if cfg.num_speakers > 1 {
            speaker = if rng.random::<f64>() < SPEAKER_JUMP_PROB {
                let other = rng.random_range(0..cfg.num_speakers - 1);
                if other >= speaker {
                    other + 1
                } else {
                    other
                }
            } else {
                (speaker + 1) % cfg.num_speakers
            };
        }
    }

    Ok(render(cfg, speakers, frame_speaker, &mut rng))
}

/// Builds a conversation from an explicit turn list instead of sampled turns.
///
/// Turns must tile `[0, file_length)` in order; each frame belongs to the turn
/// containing its start time, so the returned turns are the given ones snapped
/// to the frame grid.
pub fn conversation_from_turns(cfg: &SynthConfig, turns: &[Turn]) -> Result<Conversation> {
    cfg.validate()?;
    let mut expected_start = 0.0;
    for turn in turns {
        if turn.speaker >= cfg.num_speakers {
            return Err(Error::IndexOutOfRange {
                index: turn.speaker,
                len: cfg.num_speakers,
            });
        }
        if (turn.start - expected_start).abs() > 1e-9 || !(turn.end > turn.start) {
            return Err(Error::InvalidConfig(format!(
                "turns must tile the file without gaps, got [{}, {})",
                turn.start, turn.end
            )));
        }
        expected_start = turn.end;
    }
    if turns.is_empty() || (expected_start - cfg.file_length).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "turns must end at the file length {}",
            cfg.file_length
        )));
    }
    let speakers = sample_speakers(cfg.num_speakers, &cfg.psi, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let frame_speaker: Vec<usize> = (0..cfg.num_frames())
        .map(|t| {
            let time = t as f64 * cfg.frame_step;
            turns
                .iter()
                .find(|turn| time < turn.end - 1e-9)
                .unwrap_or(&turns[turns.len() - 1])
                .speaker
        })
        .collect();
    Ok(render(cfg, speakers, frame_speaker, &mut rng))
}

fn render(
    cfg: &SynthConfig,
    speakers: Vec<DVector<f64>>,
    frame_speaker: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> Conversation {
    let num_frames = frame_speaker.len();
    let innovation = (1.0 - cfg.r * cfg.r).sqrt();
    let mut channel: DVector<f64> = DVector::from_fn(cfg.dim, |_, _| rng.sample(StandardNormal));
    let mut rows = Vec::with_capacity(num_frames);
    for (t, &spk) in frame_speaker.iter().enumerate() {
        if t > 0 {
            for c in channel.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *c = cfg.r * *c + innovation * e;
            }
        }
        rows.push((&speakers[spk] + &channel).as_slice().to_vec());
    }

    let mut turns: Vec<Turn> = Vec::new();
    for (t, &spk) in frame_speaker.iter().enumerate() {
        if turns.last().map(|l| l.speaker) != Some(spk) {
            turns.push(Turn {
                start: t as f64 * cfg.frame_step,
                end: 0.0,
                speaker: spk,
            });
        }
    }
    for i in 0..turns.len() {
        turns[i].end = turns.get(i + 1).map_or(num_frames as f64 * cfg.frame_step, |n| n.start);
    }

    Conversation {
        speakers,
        frames: EmbeddingTable {
            dim: cfg.dim,
            step: cfg.frame_step,
            start: 0.0,
            rows,
        },
        frame_speaker,
        turns,
    }
}

/// Indices of frames whose start time lies in `[start, start + duration)`.
fn frame_range(frames: &EmbeddingTable, start: f64, duration: f64) -> std::ops::Range<usize> {
    let eps = 1e-9;
    let index = |t: f64| (((t - frames.start) / frames.step) - eps).ceil().max(0.0) as usize;
    let first = index(start).min(frames.rows.len());
    let last = index(start + duration).min(frames.rows.len());
    first..last.max(first)
}

/// Mean of the frames in `[start, start + duration)`, before normalization.
pub fn window_mean(frames: &EmbeddingTable, start: f64, duration: f64) -> Result<DVector<f64>> {
    let range = frame_range(frames, start, duration);
    if range.is_empty() {
        return Err(Error::EmptyWindow {
            start,
            end: start + duration,
        });
    }
    let count = range.len() as f64;
    let mut sum = DVector::zeros(frames.dim);
    for row in &frames.rows[range] {
        sum += DVector::from_column_slice(row);
    }
    Ok(sum / count)
}

pub fn window_embedding(frames: &EmbeddingTable, start: f64, duration: f64) -> Result<Embedding> {
    length_normalize(window_mean(frames, start, duration)?.as_slice())
}
