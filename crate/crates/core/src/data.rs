//! Sensor readings, figure samples, and dance containers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::FigureLabel;
use crate::{N_AXES, SAMPLE_LEN};

/// One of the four sensor axes, in the fixed row order of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "lin_acc_x")]
    LinAccX = 0,
    #[serde(rename = "lin_acc_y")]
    LinAccY = 1,
    #[serde(rename = "lin_acc_z")]
    LinAccZ = 2,
    #[serde(rename = "yaw")]
    Yaw = 3,
}

impl Axis {
    pub const ALL: [Axis; N_AXES] = [Axis::LinAccX, Axis::LinAccY, Axis::LinAccZ, Axis::Yaw];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Name used in log files.
    pub fn name(self) -> &'static str {
        match self {
            Axis::LinAccX => "lin_acc_x",
            Axis::LinAccY => "lin_acc_y",
            Axis::LinAccZ => "lin_acc_z",
            Axis::Yaw => "yaw",
        }
    }

    pub fn from_name(name: &str) -> Option<Axis> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A single sensor reading: timestamp in nanoseconds plus a value
/// (m/s² for acceleration axes, degrees for yaw).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedReading {
    pub t_ns: i64,
    pub value: f64,
}

impl TimedReading {
    pub fn t_seconds(&self) -> f64 {
        self.t_ns as f64 / 1e9
    }
}

/// A rejected sample or dataset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("sample must be {N_AXES}x{SAMPLE_LEN}, got {rows} rows of length {cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("sample entry at axis {axis}, bin {bin} is not finite")]
    NonFinite { axis: usize, bin: usize },
    #[error("dance id {0:?} appears more than once")]
    DuplicateDanceId(String),
    #[error("dance {0:?} contains no figures")]
    EmptyDance(String),
}

/// One downsampled figure window: 4 axes × 100 time bins, optionally
/// labeled. Stored flat in axis-major order (axis 0 bins 0..99, then axis 1,
/// ...), which is also the flattening order fed to classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FigureSampleRepr", into = "FigureSampleRepr")]
pub struct FigureSample {
    values: Vec<f64>,
    label: Option<FigureLabel>,
}

impl FigureSample {
    /// Build a sample from per-axis rows, validating shape and finiteness.
    pub fn from_rows(rows: &[Vec<f64>], label: Option<FigureLabel>) -> Result<Self, DataError> {
        if rows.len() != N_AXES || rows.iter().any(|r| r.len() != SAMPLE_LEN) {
            return Err(DataError::BadShape {
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let mut values = Vec::with_capacity(N_AXES * SAMPLE_LEN);
        for (axis, row) in rows.iter().enumerate() {
            for (bin, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { axis, bin });
                }
                values.push(v);
            }
        }
        Ok(FigureSample { values, label })
    }

    pub fn label(&self) -> Option<FigureLabel> {
        self.label
    }

    pub fn with_label(mut self, label: Option<FigureLabel>) -> Self {
        self.label = label;
        self
    }

    /// One axis as a row of 100 bins.
    pub fn row(&self, axis: Axis) -> &[f64] {
        let i = axis.index() * SAMPLE_LEN;
        &self.values[i..i + SAMPLE_LEN]
    }

    pub fn value(&self, axis: Axis, bin: usize) -> f64 {
        self.values[axis.index() * SAMPLE_LEN + bin]
    }

    /// The flat axis-major view (length 400) used as classifier input.
    pub fn flat(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Serialize, Deserialize)]
struct FigureSampleRepr {
    label: Option<FigureLabel>,
    values: Vec<Vec<f64>>,
}

impl From<FigureSample> for FigureSampleRepr {
    fn from(s: FigureSample) -> Self {
        FigureSampleRepr {
            label: s.label,
            values: Axis::ALL.iter().map(|a| s.row(*a).to_vec()).collect(),
        }
    }
}

impl TryFrom<FigureSampleRepr> for FigureSample {
    type Error = DataError;

    fn try_from(r: FigureSampleRepr) -> Result<Self, Self::Error> {
        FigureSample::from_rows(&r.values, r.label)
    }
}

/// An ordered sequence of figure samples from one dance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DanceSequence {
    pub id: String,
    pub tempo_bpm: f64,
    pub intro_s: f64,
    pub figures: Vec<FigureSample>,
}

impl DanceSequence {
    /// Labels of all figures, or `None` if any figure is unlabeled.
    pub fn labels(&self) -> Option<Vec<FigureLabel>> {
        self.figures.iter().map(FigureSample::label).collect()
    }
}

/// A collection of dances with unique ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    dances: Vec<DanceSequence>,
}

impl Dataset {
    pub fn new(dances: Vec<DanceSequence>) -> Result<Dataset, DataError> {
        let mut seen = std::collections::HashSet::new();
        for d in &dances {
            if d.figures.is_empty() {
                return Err(DataError::EmptyDance(d.id.clone()));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(DataError::DuplicateDanceId(d.id.clone()));
            }
        }
        Ok(Dataset { dances })
    }

    pub fn dances(&self) -> &[DanceSequence] {
        &self.dances
    }

    pub fn n_figures(&self) -> usize {
        self.dances.iter().map(|d| d.figures.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Dataset, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    dances: Vec<DanceSequence>,
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr { dances: d.dances }
    }
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = DataError;

    fn try_from(r: DatasetRepr) -> Result<Self, Self::Error> {
        Dataset::new(r.dances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn constant_sample(v: f64, label: Option<FigureLabel>) -> FigureSample {
        FigureSample::from_rows(&vec![vec![v; SAMPLE_LEN]; N_AXES], label).unwrap()
    }

    #[test]
    fn sample_shape_is_enforced() {
        let short = vec![vec![0.0; 99]; N_AXES];
        assert!(matches!(
            FigureSample::from_rows(&short, None),
            Err(DataError::BadShape { .. })
        ));
        let few = vec![vec![0.0; SAMPLE_LEN]; 3];
        assert!(matches!(
            FigureSample::from_rows(&few, None),
            Err(DataError::BadShape { .. })
        ));
    }

    #[test]
    fn sample_rejects_nan() {
        let mut rows = vec![vec![0.0; SAMPLE_LEN]; N_AXES];
        rows[2][17] = f64::NAN;
        assert_eq!(
            FigureSample::from_rows(&rows, None),
            Err(DataError::NonFinite { axis: 2, bin: 17 })
        );
    }

    #[test]
    fn flat_is_axis_major() {
        let rows: Vec<Vec<f64>> = (0..N_AXES)
            .map(|a| {
                (0..SAMPLE_LEN)
                    .map(|b| (a * SAMPLE_LEN + b) as f64)
                    .collect()
            })
            .collect();
        let s = FigureSample::from_rows(&rows, None).unwrap();
        assert_eq!(s.flat()[0], 0.0);
        assert_eq!(s.flat()[SAMPLE_LEN], SAMPLE_LEN as f64);
        assert_eq!(s.value(Axis::Yaw, 99), 399.0);
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let dance = |id: &str| DanceSequence {
            id: id.to_string(),
            tempo_bpm: 28.5,
            intro_s: 0.0,
            figures: vec![constant_sample(0.0, None)],
        };
        assert!(Dataset::new(vec![dance("a"), dance("b")]).is_ok());
        assert_eq!(
            Dataset::new(vec![dance("a"), dance("a")]),
            Err(DataError::DuplicateDanceId("a".to_string()))
        );
    }

    #[test]
    fn dataset_json_round_trip() {
        let dance = DanceSequence {
            id: "d1".to_string(),
            tempo_bpm: 28.5,
            intro_s: 10.0,
            figures: vec![constant_sample(1.5, Some(FigureLabel::W))],
        };
        let ds = Dataset::new(vec![dance]).unwrap();
        let back = Dataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(ds, back);
    }
}
