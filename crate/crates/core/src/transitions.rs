//! The 16×16 figure transition matrix.
//!
//! Two constructions share one support (the set of legal transitions, which
//! encodes the waltz's foot and travel-direction rules):
//!
//! * [`TransitionMatrix::unbiased`] — equal probability over each row's
//!   support, no training data involved.
//! * [`TransitionMatrix::trained`] — add-one-smoothed transition counts from
//!   labeled dances, normalized per row.
//!
//! Both are built from integer cell weights, so every row sums to 1 exactly
//! as a rational before conversion to `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::FigureLabel;
use crate::prob::ProbVector;
use crate::N_FIGURES;

/// Legal successor sets, row by row in canonical label order.
///
/// Figures fall into five families that share a successor set; e.g. the two
/// whisks may only be followed by a promenade chasse.
const SUPPORT: [&[FigureLabel]; N_FIGURES] = {
    use FigureLabel::*;
    [
        /* BL    */ &[Bl, Bw, N2, Nst, Oc],
        /* BW    */ &[Pc],
        /* CTR   */ &[Bl, Bw, N2, Nst, Oc],
        /* DR    */ &[Ctr, Dr, Lcc, R1, W],
        /* LCC   */ &[N1, Pc, Rcc],
        /* N1    */ &[Bl, Bw, N2, Nst, Oc],
        /* N2    */ &[N1, Pc, Rcc],
        /* NST   */ &[R2, Rc, Weave],
        /* OC    */ &[N1, Pc, Rcc],
        /* PC    */ &[N1, Pc, Rcc],
        /* R1    */ &[R2, Rc, Weave],
        /* R2    */ &[Ctr, Dr, Lcc, R1, W],
        /* RC    */ &[Bl, Bw, N2, Nst, Oc],
        /* RCC   */ &[Ctr, Dr, Lcc, R1, W],
        /* W     */ &[Pc],
        /* Weave */ &[Bl, Bw, N2, Nst, Oc],
    ]
};

/// A transition observed in training data that the support forbids.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("impossible transition {from}->{to} in dance {dance_id:?} at position {position}")]
pub struct ImpossibleTransitionInData {
    pub dance_id: String,
    pub position: usize,
    pub from: FigureLabel,
    pub to: FigureLabel,
}

/// A rejected matrix import.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixFormatError {
    #[error("label list must be the 16 canonical short names in order")]
    BadLabelOrder,
    #[error("row {row} sums to {sum}, expected 1 within 1e-9")]
    BadRowSum { row: usize, sum: f64 },
    #[error("cell ({row},{col}) = {value} disagrees with its support flag")]
    SupportMismatch { row: usize, col: usize, value: f64 },
    #[error("probability at ({row},{col}) is negative or not finite")]
    BadCell { row: usize, col: usize },
}

/// Row-stochastic 16×16 transition probabilities plus the boolean support
/// mask (`probs[i][j] > 0` iff `support[i][j]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct TransitionMatrix {
    probs: [[f64; N_FIGURES]; N_FIGURES],
    support: [[bool; N_FIGURES]; N_FIGURES],
}

/// Integer cell weights behind a trained matrix: the smoothing baseline of 1
/// per supported cell plus the observed transition count.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionWeights {
    weights: [[u64; N_FIGURES]; N_FIGURES],
}

impl TransitionWeights {
    fn baseline() -> Self {
        let mut weights = [[0u64; N_FIGURES]; N_FIGURES];
        for (i, successors) in SUPPORT.iter().enumerate() {
            for s in *successors {
                weights[i][s.index()] = 1;
            }
        }
        TransitionWeights { weights }
    }

    pub fn get(&self, from: FigureLabel, to: FigureLabel) -> u64 {
        self.weights[from.index()][to.index()]
    }

    /// Row sum (support size plus observed transitions out of `from`).
    pub fn row_total(&self, from: FigureLabel) -> u64 {
        self.weights[from.index()].iter().sum()
    }

    fn to_matrix(&self) -> TransitionMatrix {
        let mut probs = [[0.0; N_FIGURES]; N_FIGURES];
        let mut support = [[false; N_FIGURES]; N_FIGURES];
        for i in 0..N_FIGURES {
            let total: u64 = self.weights[i].iter().sum();
            for j in 0..N_FIGURES {
                if self.weights[i][j] > 0 {
                    probs[i][j] = self.weights[i][j] as f64 / total as f64;
                    support[i][j] = true;
                }
            }
        }
        TransitionMatrix { probs, support }
    }
}

impl TransitionMatrix {
    /// The rule-based matrix: uniform probability over each row's support.
    /// Cells are exact rationals (1/5, 1/3, 1) converted to `f64`.
    pub fn unbiased() -> TransitionMatrix {
        TransitionWeights::baseline().to_matrix()
    }

    /// A matrix with the canonical support but caller-chosen integer cell
    /// weights (clamped to at least 1 so the support never shrinks).
    /// Useful for generating corpora whose chains emphasize particular
    /// figures.
    pub fn weighted<F: Fn(FigureLabel, FigureLabel) -> u64>(weight: F) -> TransitionMatrix {
        let mut w = TransitionWeights::baseline();
        for (i, successors) in SUPPORT.iter().enumerate() {
            let from = FigureLabel::from_index(i);
            for s in *successors {
                w.weights[i][s.index()] = weight(from, *s).max(1);
            }
        }
        w.to_matrix()
    }

    /// The count-smoothed matrix: start every supported cell at 1, add 1 per
    /// observed transition, normalize rows. Returns the matrix together with
    /// the pre-normalization weights for inspection.
    ///
    /// Training sequences are label sequences per dance; the dance id is
    /// carried for error reporting.
    pub fn trained(
        training: &[(String, Vec<FigureLabel>)],
    ) -> Result<(TransitionMatrix, TransitionWeights), ImpossibleTransitionInData> {
        let mut w = TransitionWeights::baseline();
        for (dance_id, labels) in training {
            for (position, pair) in labels.windows(2).enumerate() {
                let (from, to) = (pair[0], pair[1]);
                if w.weights[from.index()][to.index()] == 0 {
                    return Err(ImpossibleTransitionInData {
                        dance_id: dance_id.clone(),
                        position,
                        from,
                        to,
                    });
                }
                w.weights[from.index()][to.index()] += 1;
            }
        }
        Ok((w.to_matrix(), w))
    }

    pub fn prob(&self, from: FigureLabel, to: FigureLabel) -> f64 {
        self.probs[from.index()][to.index()]
    }

    pub fn supports(&self, from: FigureLabel, to: FigureLabel) -> bool {
        self.support[from.index()][to.index()]
    }

    /// One row as a distribution over successors.
    pub fn row(&self, from: FigureLabel) -> ProbVector {
        ProbVector::normalized(self.probs[from.index()])
            .expect("matrix rows are valid distributions by construction")
    }

    pub fn probs(&self) -> &[[f64; N_FIGURES]; N_FIGURES] {
        &self.probs
    }

    pub fn support(&self) -> &[[bool; N_FIGURES]; N_FIGURES] {
        &self.support
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<TransitionMatrix, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    labels: Vec<String>,
    probs: Vec<Vec<f64>>,
    support: Vec<Vec<bool>>,
}

impl From<TransitionMatrix> for MatrixRepr {
    fn from(m: TransitionMatrix) -> Self {
        MatrixRepr {
            labels: FigureLabel::ALL
                .iter()
                .map(|l| l.short_name().to_string())
                .collect(),
            probs: m.probs.iter().map(|r| r.to_vec()).collect(),
            support: m.support.iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl TryFrom<MatrixRepr> for TransitionMatrix {
    type Error = MatrixFormatError;

    fn try_from(r: MatrixRepr) -> Result<Self, Self::Error> {
        let canonical: Vec<&str> = FigureLabel::ALL.iter().map(|l| l.short_name()).collect();
        if r.labels != canonical {
            return Err(MatrixFormatError::BadLabelOrder);
        }
        if r.probs.len() != N_FIGURES
            || r.support.len() != N_FIGURES
            || r.probs.iter().any(|row| row.len() != N_FIGURES)
            || r.support.iter().any(|row| row.len() != N_FIGURES)
        {
            return Err(MatrixFormatError::BadLabelOrder);
        }
        let mut probs = [[0.0; N_FIGURES]; N_FIGURES];
        let mut support = [[false; N_FIGURES]; N_FIGURES];
        for i in 0..N_FIGURES {
            let mut sum = 0.0;
            for j in 0..N_FIGURES {
                let v = r.probs[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(MatrixFormatError::BadCell { row: i, col: j });
                }
                if (v > 0.0) != r.support[i][j] {
                    return Err(MatrixFormatError::SupportMismatch {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                probs[i][j] = v;
                support[i][j] = r.support[i][j];
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MatrixFormatError::BadRowSum { row: i, sum });
            }
        }
        Ok(TransitionMatrix { probs, support })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FigureLabel::*;

    #[test]
    fn bw_row_goes_only_to_pc() {
        let m = TransitionMatrix::unbiased();
        for to in FigureLabel::ALL {
            let expected = if to == Pc { 1.0 } else { 0.0 };
            assert_eq!(m.prob(Bw, to), expected);
        }
    }

    #[test]
    fn lcc_row_is_one_third_over_three() {
        let m = TransitionMatrix::unbiased();
        for to in [N1, Pc, Rcc] {
            assert_eq!(m.prob(Lcc, to), 1.0 / 3.0);
        }
        assert_eq!(m.prob(Lcc, W), 0.0);
    }

    #[test]
    fn nst_and_w_rows_match_table() {
        let m = TransitionMatrix::unbiased();
        let nst = m.row(Nst);
        for to in [R2, Rc, Weave] {
            assert_eq!(nst.get(to), 1.0 / 3.0);
        }
        let w = m.row(W);
        assert_eq!(w.get(Pc), 1.0);
    }

    #[test]
    fn rows_sum_to_one_exactly_as_rationals() {
        let w = TransitionWeights::baseline();
        for from in FigureLabel::ALL {
            let total = w.row_total(from);
            let cells: u64 = FigureLabel::ALL.iter().map(|to| w.get(from, *to)).sum();
            assert_eq!(cells, total);
            assert!(total > 0);
        }
    }

    #[test]
    fn probs_positive_iff_supported() {
        let m = TransitionMatrix::unbiased();
        for from in FigureLabel::ALL {
            for to in FigureLabel::ALL {
                assert_eq!(m.prob(from, to) > 0.0, m.supports(from, to));
            }
        }
    }

    #[test]
    fn empty_training_reproduces_unbiased_exactly() {
        let (m, _) = TransitionMatrix::trained(&[]).unwrap();
        assert_eq!(m, TransitionMatrix::unbiased());
    }

    #[test]
    fn trained_counts_follow_add_one_rule() {
        // LCC observed going to N1 twice and RCC once.
        let training = vec![(
            "d0".to_string(),
            vec![Lcc, N1, Bl, Oc, Rcc, Lcc, N1, Nst, R2, Lcc, Rcc],
        )];
        let (m, w) = TransitionMatrix::trained(&training).unwrap();
        assert_eq!(w.get(Lcc, N1), 3);
        assert_eq!(w.get(Lcc, Pc), 1);
        assert_eq!(w.get(Lcc, Rcc), 2);
        assert_eq!(w.row_total(Lcc), 6);
        assert!((m.prob(Lcc, N1) - 0.5).abs() < 1e-12);
        assert!((m.prob(Lcc, Pc) - 1.0 / 6.0).abs() < 1e-12);
        assert!((m.prob(Lcc, Rcc) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_pair_is_reported_with_context() {
        let training = vec![
            ("ok".to_string(), vec![W, Pc]),
            ("bad".to_string(), vec![Pc, Rcc, W, N1]),
        ];
        let err = TransitionMatrix::trained(&training).unwrap_err();
        assert_eq!(
            err,
            ImpossibleTransitionInData {
                dance_id: "bad".to_string(),
                position: 2,
                from: W,
                to: N1,
            }
        );
    }

    #[test]
    fn trained_never_leaves_support() {
        // A long legal walk; every trained cell must stay inside the support.
        let mut seq = vec![Bl];
        for i in 0..200usize {
            let from = *seq.last().unwrap();
            let successors = SUPPORT[from.index()];
            seq.push(successors[i % successors.len()]);
        }
        let (m, _) = TransitionMatrix::trained(&[("walk".to_string(), seq)]).unwrap();
        for from in FigureLabel::ALL {
            for to in FigureLabel::ALL {
                if !m.supports(from, to) {
                    assert_eq!(m.prob(from, to), 0.0);
                }
            }
        }
    }

    #[test]
    fn unbiased_json_round_trip_is_bit_exact() {
        let m = TransitionMatrix::unbiased();
        let back = TransitionMatrix::from_json(&m.to_json()).unwrap();
        for i in 0..N_FIGURES {
            for j in 0..N_FIGURES {
                assert!(m.probs()[i][j].to_bits() == back.probs()[i][j].to_bits());
            }
        }
        assert_eq!(m.support(), back.support());
    }

    #[test]
    fn import_rejects_support_mismatch() {
        let m = TransitionMatrix::unbiased();
        let mut repr: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        repr["support"][1][9] = serde_json::Value::Bool(false); // BW->PC is 1.0
        let err = TransitionMatrix::from_json(&repr.to_string()).unwrap_err();
        assert!(err.to_string().contains("support"));
    }
}
