//! Waltz figure recognition from a single wrist-worn IMU.
//!
//! The pipeline turns raw 4-axis sensor logs (linear acceleration x/y/z plus
//! yaw) into fixed 4×100 per-figure samples, classifies each figure with
//! either a Gaussian hidden Markov model or a feed-forward softmax network,
//! and then sharpens sequence predictions with a Markov correction step that
//! re-estimates each preceding figure from the figure transition matrix.
//!
//! Modules follow the pipeline order:
//!
//! * [`label`] / [`prob`] / [`data`] — the 16-figure vocabulary, posterior
//!   vectors, and the 4×100 sample containers.
//! * [`ingest`] — log parsing, tempo segmentation, yaw unwrapping, and
//!   median downsampling.
//! * [`transitions`] — the rule-based figure transition matrix and its
//!   count-smoothed trained variant.
//! * [`ghmm`] — Gaussian HMM fitting (Baum-Welch), Viterbi decoding, and
//!   generative state-to-label matching.
//! * [`mlp`] — the feed-forward softmax classifier trained with Adam.
//! * [`correction`] — Markov correction of classifier posteriors.
//! * [`eval`] — leave-dances-out cross-validation, confusion matrices, and
//!   improvement statistics.
//! * [`synth`] — synthetic labeled corpora for end-to-end exercises.
//!
//! With the default `parallel` feature, batch operations (downsampling,
//! corpus generation, fold evaluation, batch inference) fan out over rayon;
//! outputs are byte-identical to the sequential fallback.

pub mod correction;
pub mod data;
pub mod eval;
pub mod ghmm;
pub mod ingest;
pub mod label;
pub mod mlp;
pub mod par;
pub mod prob;
pub mod synth;
pub mod transitions;

pub use data::{Axis, DanceSequence, Dataset, FigureSample, TimedReading};
pub use label::FigureLabel;
pub use prob::ProbVector;
pub use transitions::TransitionMatrix;

/// Number of figures in the vocabulary (and states in the figure HMM).
pub const N_FIGURES: usize = 16;

/// Number of time bins per downsampled figure sample.
pub const SAMPLE_LEN: usize = 100;

/// Number of sensor axes per sample.
pub const N_AXES: usize = 4;
