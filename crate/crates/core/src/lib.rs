//! Leave-one-out Gaussian PLDA (LGP) speaker diarization.
//!
//! The crate clusters time-indexed, length-normalized speaker embeddings with a
//! GMM whose per-segment posteriors exclude the segment itself from the speaker
//! statistics. A coarse pass on long non-overlapping windows is refined by a
//! second pass on short, heavily overlapping windows.
//!
//! Besides the clustering engine the crate carries everything needed to test it
//! without a trained embedding extractor: a generative conversation sampler
//! ([`synth`]), a DER scorer ([`scoring`]) and the text formats that tie them
//! together ([`io`]).

pub mod assignment;
pub mod cluster;
pub mod duration;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod plda;
pub mod scoring;
pub mod synth;
pub mod two_pass;

pub use cluster::{ClusterConfig, ClusterOutput, IterationRecord, Responsibilities, SpeakerModel};
pub use duration::DurationConfig;
pub use error::{Error, Result};
pub use io::{EmbeddingTable, RttmRecord, SadRegion};
pub use plda::{Embedding, PldaParams};
pub use scoring::{DerBreakdown, DerOptions};
pub use two_pass::{DiarizeConfig, EmbeddingSource, PassConfig, Segment};
