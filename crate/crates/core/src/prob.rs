//! Posterior distributions over the 16 figures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::FigureLabel;
use crate::N_FIGURES;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A rejected probability vector.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("probability {value} at index {index} is negative or not finite")]
    BadEntry { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}")]
    BadSum { sum: f64 },
    #[error("cannot normalize a vector with zero total mass")]
    ZeroMass,
}

/// A length-16 distribution over figures: entries are non-negative and sum
/// to 1 within [`SUM_TOLERANCE`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; N_FIGURES]", into = "[f64; N_FIGURES]")]
pub struct ProbVector {
    p: [f64; N_FIGURES],
}

impl ProbVector {
    /// Validate and wrap a distribution.
    pub fn new(p: [f64; N_FIGURES]) -> Result<ProbVector, ProbError> {
        for (index, &value) in p.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProbError::BadEntry { index, value });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ProbError::BadSum { sum });
        }
        Ok(ProbVector { p })
    }

    /// Rescale non-negative weights into a distribution.
    pub fn normalized(raw: [f64; N_FIGURES]) -> Result<ProbVector, ProbError> {
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProbError::BadEntry { index, value });
            }
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(ProbError::ZeroMass);
        }
        let mut p = raw;
        for v in &mut p {
            *v /= sum;
        }
        // Force the sum onto 1 exactly at the argmax so the constructor's
        // tolerance can stay tight even for adversarial inputs.
        let err = 1.0 - p.iter().sum::<f64>();
        let imax = argmax_index(&p);
        p[imax] += err;
        ProbVector::new(p)
    }

    /// The uniform distribution (1/16 everywhere).
    pub fn uniform() -> ProbVector {
        ProbVector {
            p: [1.0 / N_FIGURES as f64; N_FIGURES],
        }
    }

    /// All mass on a single label.
    pub fn one_hot(label: FigureLabel) -> ProbVector {
        let mut p = [0.0; N_FIGURES];
        p[label.index()] = 1.0;
        ProbVector { p }
    }

    /// Probability assigned to a label.
    pub fn get(&self, label: FigureLabel) -> f64 {
        self.p[label.index()]
    }

    pub fn as_array(&self) -> &[f64; N_FIGURES] {
        &self.p
    }

    /// The most probable label; ties break toward the lowest index.
    pub fn argmax(&self) -> FigureLabel {
        FigureLabel::from_index(argmax_index(&self.p))
    }
}

impl From<ProbVector> for [f64; N_FIGURES] {
    fn from(v: ProbVector) -> Self {
        v.p
    }
}

impl TryFrom<[f64; N_FIGURES]> for ProbVector {
    type Error = ProbError;

    fn try_from(p: [f64; N_FIGURES]) -> Result<Self, Self::Error> {
        ProbVector::new(p)
    }
}

/// Index of the maximal entry, lowest index on ties.
pub(crate) fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The most probable label of a posterior; ties break toward the lowest
/// index.
pub fn argmax_label(p: &ProbVector) -> FigureLabel {
    p.argmax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_argmax_ties_to_first_label() {
        assert_eq!(ProbVector::uniform().argmax(), FigureLabel::Bl);
    }

    #[test]
    fn unique_max_wins() {
        let mut p = [0.1 / 15.0; N_FIGURES];
        p[FigureLabel::Pc.index()] = 0.9;
        let v = ProbVector::new(p).unwrap();
        assert_eq!(v.argmax(), FigureLabel::Pc);
    }

    #[test]
    fn two_way_tie_takes_lower_index() {
        let mut p = [0.0; N_FIGURES];
        p[FigureLabel::W.index()] = 0.5;
        p[FigureLabel::Lcc.index()] = 0.5;
        let v = ProbVector::new(p).unwrap();
        assert_eq!(v.argmax(), FigureLabel::Lcc);
    }

    #[test]
    fn rejects_negative_entries() {
        let mut p = [1.0 / 15.0; N_FIGURES];
        p[3] = -1.0 / 15.0;
        assert!(matches!(
            ProbVector::new(p),
            Err(ProbError::BadEntry { index: 3, .. })
        ));
    }

    #[test]
    fn rejects_bad_sums() {
        let p = [0.05; N_FIGURES]; // sums to 0.8
        assert!(matches!(ProbVector::new(p), Err(ProbError::BadSum { .. })));
    }

    #[test]
    fn normalized_rejects_zero_mass() {
        assert_eq!(
            ProbVector::normalized([0.0; N_FIGURES]),
            Err(ProbError::ZeroMass)
        );
    }

    proptest! {
        /// Scaling raw weights by a positive constant never changes the
        /// argmax after renormalization.
        #[test]
        fn argmax_invariant_under_positive_scaling(
            raw in proptest::array::uniform16(0.0f64..1.0),
            scale in 1e-6f64..1e6,
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-12);
            let base = ProbVector::normalized(raw).unwrap();
            let mut scaled = raw;
            for v in &mut scaled {
                *v *= scale;
            }
            let rescaled = ProbVector::normalized(scaled).unwrap();
            prop_assert_eq!(base.argmax(), rescaled.argmax());
        }

        #[test]
        fn normalized_always_valid(raw in proptest::array::uniform16(0.0f64..1e3)) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-12);
            let v = ProbVector::normalized(raw).unwrap();
            let sum: f64 = v.as_array().iter().sum();
            prop_assert!((sum - 1.0).abs() <= SUM_TOLERANCE);
        }
    }
}
