//! Markov correction of classifier posteriors.
//!
//! For each position `t` the classifier's argmax is taken as correct; the
//! preceding figure is then re-estimated as
//! `argmax_i T[i][j] * p_{t-1}[i]` where `j` is the argmax at `t`, `T` the
//! transition matrix, and `p_{t-1}` the classifier posterior at `t-1`. The
//! last position has no successor and is never changed.
//!
//! Each correction uses the raw argmax of its successor, not a previously
//! corrected value; `correct_sequence_chained` is an experimental variant
//! that feeds corrections forward.

use crate::label::FigureLabel;
use crate::prob::{argmax_index, ProbVector};
use crate::transitions::TransitionMatrix;
use crate::{par, N_FIGURES};

/// Raw and corrected labels for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionResult {
    pub raw_labels: Vec<FigureLabel>,
    pub corrected_labels: Vec<FigureLabel>,
    pub changed: Vec<bool>,
}

impl CorrectionResult {
    pub fn len(&self) -> usize {
        self.raw_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_labels.is_empty()
    }

    pub fn n_changed(&self) -> usize {
        self.changed.iter().filter(|&&c| c).count()
    }
}

/// Re-estimate the predecessor of `successor_raw` from its posterior.
///
/// Falls back to the raw argmax when every candidate scores zero (the
/// successor is unreachable from every positively-weighted predecessor).
fn correct_predecessor(
    posterior: &ProbVector,
    successor_raw: FigureLabel,
    matrix: &TransitionMatrix,
) -> FigureLabel {
    let mut scores = [0.0f64; N_FIGURES];
    let p = posterior.as_array();
    for (i, score) in scores.iter_mut().enumerate() {
        *score = matrix.prob(FigureLabel::from_index(i), successor_raw) * p[i];
    }
    if scores.iter().all(|&s| s == 0.0) {
        return posterior.argmax();
    }
    FigureLabel::from_index(argmax_index(&scores))
}

/// Apply the correction to a whole sequence of posteriors.
///
/// Panics if `posteriors` is empty; callers always hold at least one figure
/// per dance.
pub fn correct_sequence(posteriors: &[ProbVector], matrix: &TransitionMatrix) -> CorrectionResult {
    assert!(
        !posteriors.is_empty(),
        "posterior sequence must be non-empty"
    );
    let raw_labels: Vec<FigureLabel> = posteriors.iter().map(ProbVector::argmax).collect();
    let mut corrected_labels = raw_labels.clone();
    for t in 1..posteriors.len() {
        corrected_labels[t - 1] = correct_predecessor(&posteriors[t - 1], raw_labels[t], matrix);
    }
    let changed = raw_labels
        .iter()
        .zip(&corrected_labels)
        .map(|(r, c)| r != c)
        .collect();
    CorrectionResult {
        raw_labels,
        corrected_labels,
        changed,
    }
}

/// Experimental chained variant: position `t-1` is corrected against the
/// already-corrected label at `t`, sweeping from the end of the sequence
/// backwards. Not part of the standard pipeline.
pub fn correct_sequence_chained(
    posteriors: &[ProbVector],
    matrix: &TransitionMatrix,
) -> CorrectionResult {
    assert!(
        !posteriors.is_empty(),
        "posterior sequence must be non-empty"
    );
    let raw_labels: Vec<FigureLabel> = posteriors.iter().map(ProbVector::argmax).collect();
    let mut corrected_labels = raw_labels.clone();
    for t in (1..posteriors.len()).rev() {
        corrected_labels[t - 1] =
            correct_predecessor(&posteriors[t - 1], corrected_labels[t], matrix);
    }
    let changed = raw_labels
        .iter()
        .zip(&corrected_labels)
        .map(|(r, c)| r != c)
        .collect();
    CorrectionResult {
        raw_labels,
        corrected_labels,
        changed,
    }
}

/// Correct many sequences, in parallel with the `parallel` feature.
pub fn correct_batch(
    sequences: &[Vec<ProbVector>],
    matrix: &TransitionMatrix,
) -> Vec<CorrectionResult> {
    par::map_batch(sequences, |posteriors| correct_sequence(posteriors, matrix))
}

/// The corrections interchange format: one row per figure with the raw and
/// corrected labels and a changed flag.
pub fn corrections_to_csv(per_dance: &[(String, CorrectionResult)]) -> String {
    let mut out = String::from("dance_id,position,raw,corrected,changed\n");
    for (dance_id, r) in per_dance {
        for t in 0..r.len() {
            out.push_str(&format!(
                "{dance_id},{t},{},{},{}\n",
                r.raw_labels[t], r.corrected_labels[t], r.changed[t]
            ));
        }
    }
    out
}

/// A finalized decision for one position of a posterior stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalizedLabel {
    pub position: usize,
    pub raw: FigureLabel,
    pub corrected: FigureLabel,
    pub changed: bool,
}

/// What one pushed posterior yields: a provisional label for its own
/// position and, from the second push on, the final label for the previous
/// position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamStep {
    pub position: usize,
    pub provisional: FigureLabel,
    pub finalized: Option<FinalizedLabel>,
}

/// One-step-lagged online correction. Posteriors arrive in sequence order;
/// after posterior `t` is pushed, position `t-1` is final. Closing the
/// stream finalizes the last position unchanged. Final labels equal
/// [`correct_sequence`] over the same prefix.
pub struct StreamCorrector<'a> {
    matrix: &'a TransitionMatrix,
    pending: Option<(usize, ProbVector, FigureLabel)>,
    next_position: usize,
}

impl<'a> StreamCorrector<'a> {
    pub fn new(matrix: &'a TransitionMatrix) -> Self {
        StreamCorrector {
            matrix,
            pending: None,
            next_position: 0,
        }
    }

    pub fn push(&mut self, posterior: ProbVector) -> StreamStep {
        let position = self.next_position;
        self.next_position += 1;
        let provisional = posterior.argmax();
        let finalized = self.pending.take().map(|(prev_pos, prev_post, prev_raw)| {
            let corrected = correct_predecessor(&prev_post, provisional, self.matrix);
            FinalizedLabel {
                position: prev_pos,
                raw: prev_raw,
                corrected,
                changed: corrected != prev_raw,
            }
        });
        self.pending = Some((position, posterior, provisional));
        StreamStep {
            position,
            provisional,
            finalized,
        }
    }

    /// Close the stream, finalizing the last pushed position (raw argmax).
    pub fn finish(mut self) -> Option<FinalizedLabel> {
        self.pending
            .take()
            .map(|(position, _, raw)| FinalizedLabel {
                position,
                raw,
                corrected: raw,
                changed: false,
            })
    }
}
