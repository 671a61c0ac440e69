//! Leave-dances-out cross-validation and scoring.
//!
//! Folds are whole dances (two per fold in the 14-dance/7-fold layout), so
//! figure sequences never straddle a fold boundary. Each fold rebuilds the
//! trained transition matrix and the classifier from its six training folds
//! only, predicts posteriors on the held-out dances, and scores both the
//! raw argmax labels and the Markov-corrected labels.
//!
//! Folds run independently (in parallel with the `parallel` feature), each
//! on an RNG stream derived from the run seed and the fold index, so
//! results never depend on scheduling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::correct_sequence;
use crate::data::Dataset;
use crate::ghmm::{self, FitOptions, PiInit};
use crate::label::FigureLabel;
use crate::mlp::{self, MlpSpec, TrainConfig};
use crate::prob::ProbVector;
use crate::synth::derive_seed;
use crate::transitions::TransitionMatrix;
use crate::{par, N_FIGURES};

/// Evaluation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{dances} dances cannot fill {folds} folds")]
    TooFewDances { dances: usize, folds: usize },
    #[error("prediction length {pred} does not match truth length {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("dance {0:?} has unlabeled figures")]
    UnlabeledData(String),
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
}

/// Which dances belong to which fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub assignments: BTreeMap<String, usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl FoldSpec {
    pub fn fold_of(&self, dance_id: &str) -> Option<usize> {
        self.assignments.get(dance_id).copied()
    }

    pub fn dances_in_fold(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Shuffle dance ids with the seed and chunk them into `n_folds` groups of
/// near-equal size (differing by at most one).
pub fn make_folds(dataset: &Dataset, n_folds: usize, seed: u64) -> Result<FoldSpec, EvalError> {
    let n = dataset.dances().len();
    if n < n_folds || n_folds == 0 {
        return Err(EvalError::TooFewDances {
            dances: n,
            folds: n_folds,
        });
    }
    let mut ids: Vec<String> = dataset.dances().iter().map(|d| d.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let base = n / n_folds;
    let extra = n % n_folds;
    let mut assignments = BTreeMap::new();
    let mut cursor = 0;
    for fold in 0..n_folds {
        let size = base + usize::from(fold < extra);
        for id in &ids[cursor..cursor + size] {
            assignments.insert(id.clone(), fold);
        }
        cursor += size;
    }
    Ok(FoldSpec {
        assignments,
        n_folds,
        seed,
    })
}

/// Counts plus row-normalized rates, rows = truth, columns = prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zero() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![vec![0; N_FIGURES]; N_FIGURES],
        }
    }

    pub fn add(&mut self, truth: FigureLabel, pred: FigureLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..N_FIGURES {
            for j in 0..N_FIGURES {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, truth: FigureLabel, pred: FigureLabel) -> u64 {
        self.counts[truth.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row-normalized rates; rows with no observations stay all-zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                if sum == 0 {
                    vec![0.0; N_FIGURES]
                } else {
                    row.iter().map(|&c| c as f64 / sum as f64).collect()
                }
            })
            .collect()
    }

    /// CSV grid with label headers; `normalized` picks rates over counts.
    pub fn to_csv(&self, normalized: bool) -> String {
        let mut out = String::from("truth");
        for l in FigureLabel::ALL {
            out.push(',');
            out.push_str(l.short_name());
        }
        out.push('\n');
        let rates = self.normalized();
        for (i, l) in FigureLabel::ALL.iter().enumerate() {
            out.push_str(l.short_name());
            for (rate, count) in rates[i].iter().zip(&self.counts[i]) {
                if normalized {
                    out.push_str(&format!(",{rate:.6}"));
                } else {
                    out.push_str(&format!(",{count}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Tally predictions against ground truth.
pub fn confusion(
    pred: &[FigureLabel],
    truth: &[FigureLabel],
) -> Result<ConfusionMatrix, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut m = ConfusionMatrix::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        m.add(t, p);
    }
    Ok(m)
}

/// The classifier evaluated inside cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PipelineClassifier {
    /// Feed-forward softmax network on flattened samples.
    Mlp {
        depth: usize,
        width: usize,
        train: TrainConfig,
    },
    /// Generative Gaussian HMM over mean features, decoded to one-hot
    /// posteriors.
    GaussianHmm {
        max_iters: usize,
        tol: f64,
        freeze_transitions: bool,
    },
    /// One-hot on the true label (testing).
    Oracle,
    /// Uniform posterior everywhere (testing).
    Uniform,
}

/// Cross-validation controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub n_folds: usize,
    pub seed: u64,
    pub classifier: PipelineClassifier,
}

/// Everything scored for one held-out dance.
#[derive(Clone, Debug, PartialEq)]
pub struct DanceEval {
    pub dance_id: String,
    pub fold: usize,
    pub truth: Vec<FigureLabel>,
    pub raw: Vec<FigureLabel>,
    pub corrected: Vec<FigureLabel>,
    pub posteriors: Vec<ProbVector>,
}

/// Summary of a cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: CvConfig,
    pub folds: FoldSpec,
    pub fold_raw_accuracy: Vec<f64>,
    pub fold_corrected_accuracy: Vec<f64>,
    pub mean_raw_accuracy: f64,
    pub mean_corrected_accuracy: f64,
    /// Corrected minus raw accuracy per fold, in percentage points.
    pub improvement_points: Vec<f64>,
    pub confusion_raw: ConfusionMatrix,
    pub confusion_corrected: ConfusionMatrix,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<EvalReport, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Human-readable per-fold table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("fold  raw_acc  corrected_acc  improvement_pts\n");
        for f in 0..self.fold_raw_accuracy.len() {
            out.push_str(&format!(
                "{:>4}  {:>7.4}  {:>13.4}  {:>+15.2}\n",
                f,
                self.fold_raw_accuracy[f],
                self.fold_corrected_accuracy[f],
                self.improvement_points[f],
            ));
        }
        out.push_str(&format!(
            "mean  {:>7.4}  {:>13.4}  {:>+15.2}\n",
            self.mean_raw_accuracy,
            self.mean_corrected_accuracy,
            (self.mean_corrected_accuracy - self.mean_raw_accuracy) * 100.0,
        ));
        out
    }
}

/// Cross-validation result: the serializable report plus per-dance detail
/// for posterior/correction exports.
#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub dances: Vec<DanceEval>,
}

struct FoldData<'a> {
    train: Vec<&'a crate::data::DanceSequence>,
    test: Vec<&'a crate::data::DanceSequence>,
}

fn split_fold<'a>(dataset: &'a Dataset, folds: &FoldSpec, fold: usize) -> FoldData<'a> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in dataset.dances() {
        if folds.fold_of(&d.id) == Some(fold) {
            test.push(d);
        } else {
            train.push(d);
        }
    }
    FoldData { train, test }
}

fn labels_of(
    dances: &[&crate::data::DanceSequence],
) -> Result<Vec<(String, Vec<FigureLabel>)>, EvalError> {
    dances
        .iter()
        .map(|d| {
            d.labels()
                .map(|l| (d.id.clone(), l))
                .ok_or_else(|| EvalError::UnlabeledData(d.id.clone()))
        })
        .collect()
}

/// Posterior sequences for the test dances of one fold.
fn fold_posteriors(
    classifier: &PipelineClassifier,
    data: &FoldData<'_>,
    t_trained: &TransitionMatrix,
    fold_seed: u64,
) -> Result<Vec<Vec<ProbVector>>, String> {
    match classifier {
        PipelineClassifier::Oracle => Ok(data
            .test
            .iter()
            .map(|d| {
                d.figures
                    .iter()
                    .map(|s| ProbVector::one_hot(s.label().expect("labels checked upstream")))
                    .collect()
            })
            .collect()),
        PipelineClassifier::Uniform => Ok(data
            .test
            .iter()
            .map(|d| vec![ProbVector::uniform(); d.figures.len()])
            .collect()),
        PipelineClassifier::Mlp {
            depth,
            width,
            train,
        } => {
            let training: Vec<crate::data::FigureSample> = data
                .train
                .iter()
                .flat_map(|d| d.figures.iter().cloned())
                .collect();
            let spec = MlpSpec::for_figures(*depth, *width, fold_seed);
            let (model, _trace) =
                mlp::train_on_samples(&spec, &training, train).map_err(|e| e.to_string())?;
            data.test
                .iter()
                .map(|d| {
                    model
                        .predict_proba_samples(&d.figures)
                        .map_err(|e| e.to_string())
                })
                .collect()
        }
        PipelineClassifier::GaussianHmm {
            max_iters,
            tol,
            freeze_transitions,
        } => {
            let features: Vec<Vec<ghmm::MeanFeature>> = data
                .train
                .iter()
                .map(|d| d.figures.iter().map(ghmm::reduce_means).collect())
                .collect();
            let labels: Vec<Vec<FigureLabel>> = data
                .train
                .iter()
                .map(|d| d.labels().expect("labels checked upstream"))
                .collect();
            let opts = FitOptions {
                max_iters: *max_iters,
                tol: *tol,
                freeze_transitions: *freeze_transitions,
                ..FitOptions::default()
            };
            let (model, _fit) =
                ghmm::train_figure_hmm(&features, &labels, t_trained, PiInit::Uniform, &opts)
                    .map_err(|e| e.to_string())?;
            Ok(data
                .test
                .iter()
                .map(|d| {
                    let feats: Vec<ghmm::MeanFeature> =
                        d.figures.iter().map(ghmm::reduce_means).collect();
                    model
                        .predict(&feats)
                        .into_iter()
                        .map(ProbVector::one_hot)
                        .collect()
                })
                .collect())
        }
    }
}

/// Run the full leave-dances-out evaluation.
pub fn run_cv(dataset: &Dataset, config: &CvConfig) -> Result<CvOutcome, EvalError> {
    for d in dataset.dances() {
        if d.labels().is_none() {
            return Err(EvalError::UnlabeledData(d.id.clone()));
        }
    }
    let folds = make_folds(dataset, config.n_folds, config.seed)?;

    let fold_results: Vec<Result<Vec<DanceEval>, EvalError>> =
        par::map_indices(config.n_folds, |fold| {
            let data = split_fold(dataset, &folds, fold);
            let training_labels = labels_of(&data.train)?;
            let (t_trained, _) =
                TransitionMatrix::trained(&training_labels).map_err(|e| EvalError::Fold {
                    fold,
                    message: e.to_string(),
                })?;
            let fold_seed = derive_seed(config.seed, fold as u64);
            let posteriors = fold_posteriors(&config.classifier, &data, &t_trained, fold_seed)
                .map_err(|message| EvalError::Fold { fold, message })?;
            let mut out = Vec::with_capacity(data.test.len());
            for (dance, posts) in data.test.iter().zip(posteriors) {
                let truth = dance.labels().expect("labels checked upstream");
                let result = correct_sequence(&posts, &t_trained);
                out.push(DanceEval {
                    dance_id: dance.id.clone(),
                    fold,
                    truth,
                    raw: result.raw_labels,
                    corrected: result.corrected_labels,
                    posteriors: posts,
                });
            }
            Ok(out)
        });

    let mut dances = Vec::new();
    for r in fold_results {
        dances.extend(r?);
    }

    let mut fold_raw = vec![(0usize, 0usize); config.n_folds];
    let mut fold_cor = vec![(0usize, 0usize); config.n_folds];
    let mut confusion_raw = ConfusionMatrix::zero();
    let mut confusion_corrected = ConfusionMatrix::zero();
    for d in &dances {
        for ((&t, &r), &c) in d.truth.iter().zip(&d.raw).zip(&d.corrected) {
            fold_raw[d.fold].1 += 1;
            fold_cor[d.fold].1 += 1;
            if r == t {
                fold_raw[d.fold].0 += 1;
            }
            if c == t {
                fold_cor[d.fold].0 += 1;
            }
            confusion_raw.add(t, r);
            confusion_corrected.add(t, c);
        }
    }
    let acc = |(hit, n): (usize, usize)| hit as f64 / n as f64;
    let fold_raw_accuracy: Vec<f64> = fold_raw.into_iter().map(acc).collect();
    let fold_corrected_accuracy: Vec<f64> = fold_cor.into_iter().map(acc).collect();
    let improvement_points: Vec<f64> = fold_raw_accuracy
        .iter()
        .zip(&fold_corrected_accuracy)
        .map(|(r, c)| (c - r) * 100.0)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = EvalReport {
        config: config.clone(),
        folds,
        mean_raw_accuracy: mean(&fold_raw_accuracy),
        mean_corrected_accuracy: mean(&fold_corrected_accuracy),
        fold_raw_accuracy,
        fold_corrected_accuracy,
        improvement_points,
        confusion_raw,
        confusion_corrected,
    };
    Ok(CvOutcome { report, dances })
}

/// One-point-wide histogram bin of improvements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    /// Bin covers `[lo, lo + 1)` percentage points.
    pub lo: i64,
    pub count: usize,
}

/// Distribution summary of per-fold improvements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistBin>,
}

/// Summarize the per-fold improvement distribution (percentage points,
/// histogram bins one point wide).
pub fn improvement_stats(report: &EvalReport) -> ImprovementStats {
    let imps = &report.improvement_points;
    assert!(!imps.is_empty(), "report must contain at least one fold");
    let mean = imps.iter().sum::<f64>() / imps.len() as f64;
    let min = imps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = imps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo_bin = min.floor() as i64;
    let hi_bin = max.floor() as i64;
    let histogram = (lo_bin..=hi_bin)
        .map(|lo| HistBin {
            lo,
            count: imps.iter().filter(|&&x| x.floor() as i64 == lo).count(),
        })
        .collect();
    ImprovementStats {
        mean,
        min,
        max,
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DanceSequence;
    use crate::synth;
    use FigureLabel::*;

    fn synthetic_dataset(n_dances: usize, seed: u64) -> Dataset {
        let mut c = synth::SynthConfig::default_fixture();
        c.n_dances = n_dances;
        c.seed = seed;
        c.length_range = (10, 14);
        c.intro_s = 1.0;
        let dances = synth::gen_corpus(&c).unwrap();
        synth::corpus_dataset(&dances)
    }

    #[test]
    fn folds_partition_fourteen_dances_in_pairs() {
        let ds = synthetic_dataset(14, 7);
        let folds = make_folds(&ds, 7, 7).unwrap();
        for f in 0..7 {
            assert_eq!(folds.dances_in_fold(f).len(), 2);
        }
        assert_eq!(folds.assignments.len(), 14);
        let again = make_folds(&ds, 7, 7).unwrap();
        assert_eq!(folds, again);
        let other_seed = make_folds(&ds, 7, 8).unwrap();
        assert_eq!(other_seed.assignments.len(), 14);
    }

    #[test]
    fn uneven_fold_sizes_differ_by_at_most_one() {
        let ds = synthetic_dataset(16, 3);
        let folds = make_folds(&ds, 7, 3).unwrap();
        let sizes: Vec<usize> = (0..7).map(|f| folds.dances_in_fold(f).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 16);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn too_few_dances_is_rejected() {
        let ds = synthetic_dataset(3, 1);
        assert_eq!(
            make_folds(&ds, 7, 1),
            Err(EvalError::TooFewDances {
                dances: 3,
                folds: 7
            })
        );
    }

    #[test]
    fn fold_split_is_disjoint_and_exhaustive() {
        let ds = synthetic_dataset(14, 5);
        let folds = make_folds(&ds, 7, 5).unwrap();
        for f in 0..7 {
            let data = split_fold(&ds, &folds, f);
            assert_eq!(data.train.len() + data.test.len(), 14);
            for d in &data.test {
                assert!(data.train.iter().all(|t| t.id != d.id));
                assert_eq!(folds.fold_of(&d.id), Some(f));
            }
            for d in &data.train {
                assert_ne!(folds.fold_of(&d.id), Some(f));
            }
        }
    }

    #[test]
    fn confusion_identity_when_perfect() {
        let pred: Vec<FigureLabel> = FigureLabel::ALL.to_vec();
        let m = confusion(&pred, &pred).unwrap();
        let norm = m.normalized();
        for (i, row) in norm.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(m.total(), 16);
    }

    #[test]
    fn confusion_all_w_predicted_pc() {
        let truth = vec![W; 5];
        let pred = vec![Pc; 5];
        let m = confusion(&pred, &truth).unwrap();
        assert_eq!(m.count(W, Pc), 5);
        assert_eq!(m.normalized()[W.index()][Pc.index()], 1.0);
    }

    #[test]
    fn confusion_hand_tally() {
        let truth = vec![W, W, Lcc, Pc, Pc, N1];
        let pred = vec![W, Lcc, Lcc, Pc, N1, N1];
        let m = confusion(&pred, &truth).unwrap();
        assert_eq!(m.count(W, W), 1);
        assert_eq!(m.count(W, Lcc), 1);
        assert_eq!(m.count(Lcc, Lcc), 1);
        assert_eq!(m.count(Pc, Pc), 1);
        assert_eq!(m.count(Pc, N1), 1);
        assert_eq!(m.count(N1, N1), 1);
        assert_eq!(m.total(), 6);
    }

    #[test]
    fn confusion_rejects_length_mismatch() {
        assert_eq!(
            confusion(&[W], &[W, Pc]),
            Err(EvalError::LengthMismatch { pred: 1, truth: 2 })
        );
    }

    #[test]
    fn oracle_posteriors_score_perfectly() {
        let ds = synthetic_dataset(14, 21);
        let cfg = CvConfig {
            n_folds: 7,
            seed: 21,
            classifier: PipelineClassifier::Oracle,
        };
        let out = run_cv(&ds, &cfg).unwrap();
        assert_eq!(out.report.mean_raw_accuracy, 1.0);
        assert_eq!(out.report.mean_corrected_accuracy, 1.0);
        assert!(out.report.improvement_points.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_posteriors_score_first_label_frequency() {
        let ds = synthetic_dataset(14, 22);
        let cfg = CvConfig {
            n_folds: 7,
            seed: 22,
            classifier: PipelineClassifier::Uniform,
        };
        let out = run_cv(&ds, &cfg).unwrap();
        // argmax of a uniform posterior is always label 0 (BL)
        let mut bl = 0usize;
        let mut n = 0usize;
        for d in ds.dances() {
            for f in &d.figures {
                n += 1;
                if f.label() == Some(Bl) {
                    bl += 1;
                }
            }
        }
        let pooled_raw: f64 = out
            .dances
            .iter()
            .flat_map(|d| d.truth.iter().zip(&d.raw))
            .filter(|(t, r)| t == r)
            .count() as f64
            / n as f64;
        assert!((pooled_raw - bl as f64 / n as f64).abs() < 1e-12);
        for d in &out.dances {
            assert!(d.raw.iter().all(|&l| l == Bl));
        }
    }

    #[test]
    fn improvement_stats_mean_and_bins() {
        let ds = synthetic_dataset(14, 23);
        let cfg = CvConfig {
            n_folds: 7,
            seed: 23,
            classifier: PipelineClassifier::Oracle,
        };
        let mut report = run_cv(&ds, &cfg).unwrap().report;
        report.improvement_points = vec![4.0, 6.0];
        let stats = improvement_stats(&report);
        assert_eq!(stats.mean, 5.0);
        assert_eq!(stats.min, 4.0);
        assert_eq!(stats.max, 6.0);
        let total: usize = stats.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, 2);

        report.improvement_points = vec![0.0, 0.0, 0.0];
        let stats = improvement_stats(&report);
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.histogram, vec![HistBin { lo: 0, count: 3 }]);
    }

    #[test]
    fn report_json_round_trip() {
        let ds = synthetic_dataset(14, 29);
        let cfg = CvConfig {
            n_folds: 7,
            seed: 29,
            classifier: PipelineClassifier::Oracle,
        };
        let report = run_cv(&ds, &cfg).unwrap().report;
        let back = EvalReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, back);
        assert!(report.render_text().contains("mean"));
        assert!(report.confusion_raw.to_csv(true).lines().count() == 17);
    }

    #[test]
    fn unlabeled_dance_is_rejected() {
        let ds = synthetic_dataset(14, 31);
        let mut dances: Vec<DanceSequence> = ds.dances().to_vec();
        dances[3].figures[0] = dances[3].figures[0].clone().with_label(None);
        let ds = Dataset::new(dances).unwrap();
        let cfg = CvConfig {
            n_folds: 7,
            seed: 31,
            classifier: PipelineClassifier::Oracle,
        };
        assert!(matches!(
            run_cv(&ds, &cfg),
            Err(EvalError::UnlabeledData(_))
        ));
    }
}
