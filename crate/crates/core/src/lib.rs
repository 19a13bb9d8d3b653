//! Psychometric and developmental alignment metrics for language models.
//!
//! The crate works on serialized model traces (per-layer embeddings and
//! whole-sequence log-probabilities emitted by an external model adapter) and
//! scores four suites:
//!
//! * [`numeric`]: distance, ratio and size effects, mental-number-line MDS and
//!   number-concept similarity statistics.
//! * [`linguistic`]: BLiMP minimal-pair accuracy by phenomenon and level.
//! * [`concept`]: category typicality from latent similarity, surprisal, and
//!   parsed re-rank completions.
//! * [`fluid`]: textual Raven's matrices and SAT-style analogy scorers.
//!
//! Per-checkpoint scores are assembled into developmental curves by
//! [`trajectory`], and [`pipeline`] ties everything into report bundles.

pub mod concept;
pub mod error;
pub mod fluid;
pub mod linguistic;
pub mod manifest;
pub mod numeric;
pub mod numstats;
pub mod pipeline;
pub mod score;
pub mod synth;
pub mod text;
pub mod trace;
pub mod trajectory;

pub use error::{Error, Result};
pub use numstats::{FitKind, FitResult, MdsResult, StatsError};
pub use score::{Suite, SuiteScore};
pub use trace::{
    cosine_similarity, CheckpointMeta, CheckpointView, EmbeddingRecord, LogProbRecord, Task,
    TextFormat, TraceError, TraceSet, TOKENS_PER_PYTHIA_STEP,
};
pub use trajectory::{PhaseReport, TrajectoryCurve};
