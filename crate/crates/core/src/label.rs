//! The 16-figure waltz vocabulary.
//!
//! Labels are ordered alphabetically by short name; that ordering is the
//! canonical row/column order of the transition matrix and of every exported
//! artifact, so label index and matrix index always coincide.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::N_FIGURES;

/// One of the 16 syllabus figures.
///
/// The discriminant is the canonical index (alphabetical by short name).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum FigureLabel {
    #[serde(rename = "BL")]
    Bl = 0,
    #[serde(rename = "BW")]
    Bw = 1,
    #[serde(rename = "CTR")]
    Ctr = 2,
    #[serde(rename = "DR")]
    Dr = 3,
    #[serde(rename = "LCC")]
    Lcc = 4,
    #[serde(rename = "N1")]
    N1 = 5,
    #[serde(rename = "N2")]
    N2 = 6,
    #[serde(rename = "NST")]
    Nst = 7,
    #[serde(rename = "OC")]
    Oc = 8,
    #[serde(rename = "PC")]
    Pc = 9,
    #[serde(rename = "R1")]
    R1 = 10,
    #[serde(rename = "R2")]
    R2 = 11,
    #[serde(rename = "RC")]
    Rc = 12,
    #[serde(rename = "RCC")]
    Rcc = 13,
    #[serde(rename = "W")]
    W = 14,
    #[serde(rename = "Weave")]
    Weave = 15,
}

/// Unknown figure short name.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown figure label {0:?}")]
pub struct UnknownLabel(pub String);

impl FigureLabel {
    /// All 16 labels in canonical (alphabetical) order.
    pub const ALL: [FigureLabel; N_FIGURES] = [
        FigureLabel::Bl,
        FigureLabel::Bw,
        FigureLabel::Ctr,
        FigureLabel::Dr,
        FigureLabel::Lcc,
        FigureLabel::N1,
        FigureLabel::N2,
        FigureLabel::Nst,
        FigureLabel::Oc,
        FigureLabel::Pc,
        FigureLabel::R1,
        FigureLabel::R2,
        FigureLabel::Rc,
        FigureLabel::Rcc,
        FigureLabel::W,
        FigureLabel::Weave,
    ];

    /// Canonical index in `[0, 15]`.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Label at a canonical index.
    ///
    /// Panics if `index >= 16`; indices produced by this crate are always in
    /// range.
    pub fn from_index(index: usize) -> FigureLabel {
        Self::ALL[index]
    }

    /// Short name used in logs, CSV headers, and matrix axes.
    pub fn short_name(self) -> &'static str {
        match self {
            FigureLabel::Bl => "BL",
            FigureLabel::Bw => "BW",
            FigureLabel::Ctr => "CTR",
            FigureLabel::Dr => "DR",
            FigureLabel::Lcc => "LCC",
            FigureLabel::N1 => "N1",
            FigureLabel::N2 => "N2",
            FigureLabel::Nst => "NST",
            FigureLabel::Oc => "OC",
            FigureLabel::Pc => "PC",
            FigureLabel::R1 => "R1",
            FigureLabel::R2 => "R2",
            FigureLabel::Rc => "RC",
            FigureLabel::Rcc => "RCC",
            FigureLabel::W => "W",
            FigureLabel::Weave => "Weave",
        }
    }

    /// Full syllabus name, with the short name in parentheses.
    pub fn full_name(self) -> &'static str {
        match self {
            FigureLabel::Bl => "Back Lock (BL)",
            FigureLabel::Bw => "Back Whisk (BW)",
            FigureLabel::Ctr => "Chasse to Right (CTR)",
            FigureLabel::Dr => "Double Reverse (DR)",
            FigureLabel::Lcc => "Left-foot Closed Change (LCC)",
            FigureLabel::N1 => "Natural Turn 1-3 (N1)",
            FigureLabel::N2 => "Natural Turn 4-6 (N2)",
            FigureLabel::Nst => "Natural Spin Turn (NST)",
            FigureLabel::Oc => "Outside Change (OC)",
            FigureLabel::Pc => "Chasse from Promenade (PC)",
            FigureLabel::R1 => "Reverse Turn 1-3 (R1)",
            FigureLabel::R2 => "Reverse Turn 4-6 (R2)",
            FigureLabel::Rc => "Reverse Corte (RC)",
            FigureLabel::Rcc => "Right-foot Closed Change (RCC)",
            FigureLabel::W => "Whisk (W)",
            FigureLabel::Weave => "Basic Weave (Weave)",
        }
    }

    /// Look a label up by its case-sensitive short name.
    pub fn from_short_name(name: &str) -> Result<FigureLabel, UnknownLabel> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.short_name() == name)
            .ok_or_else(|| UnknownLabel(name.to_string()))
    }
}

impl std::fmt::Display for FigureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for FigureLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureLabel::from_short_name(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_labels_with_bijective_index() {
        assert_eq!(FigureLabel::ALL.len(), 16);
        for (i, label) in FigureLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(FigureLabel::from_index(i), *label);
        }
    }

    #[test]
    fn ordering_is_alphabetical_by_short_name() {
        let names: Vec<&str> = FigureLabel::ALL.iter().map(|l| l.short_name()).collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
    }

    #[test]
    fn short_name_round_trip() {
        for label in FigureLabel::ALL {
            assert_eq!(FigureLabel::from_short_name(label.short_name()), Ok(label));
        }
    }

    #[test]
    fn whisk_full_name() {
        let w = FigureLabel::from_short_name("W").unwrap();
        assert_eq!(w.full_name(), "Whisk (W)");
    }

    #[test]
    fn bl_is_first() {
        assert_eq!(FigureLabel::from_short_name("BL").unwrap().index(), 0);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert_eq!(
            FigureLabel::from_short_name("waltz"),
            Err(UnknownLabel("waltz".to_string()))
        );
        // case sensitive
        assert!(FigureLabel::from_short_name("bl").is_err());
    }

    #[test]
    fn serde_uses_short_names() {
        let json = serde_json::to_string(&FigureLabel::Weave).unwrap();
        assert_eq!(json, "\"Weave\"");
        let back: FigureLabel = serde_json::from_str("\"NST\"").unwrap();
        assert_eq!(back, FigureLabel::Nst);
    }
}
