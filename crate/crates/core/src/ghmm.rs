//! Gaussian hidden Markov model over per-figure mean features.
//!
//! Each 4×100 sample is reduced to its per-axis means, giving a 4-dim
//! feature whose distribution across samples of one figure is modeled as a
//! diagonal Gaussian. States are fitted generatively with Baum-Welch
//! (log-space forward-backward), decoded with Viterbi, and mapped to figure
//! labels by majority vote against the training ground truth.
//!
//! The model is generic over the state count so small models can be checked
//! against exhaustive path enumeration; the figure pipeline always uses 16
//! states initialized from per-label statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Axis, FigureSample};
use crate::label::FigureLabel;
use crate::prob::ProbVector;
use crate::transitions::TransitionMatrix;
use crate::{par, N_AXES, N_FIGURES, SAMPLE_LEN};

/// Per-axis means of one sample: the 4-dim HMM observation.
pub type MeanFeature = [f64; N_AXES];

/// Variances below this are clamped after every M-step.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Fitting and model-shape failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GhmmError {
    #[error("state {state} received total responsibility {responsibility:.3e} (< 1e-12)")]
    DegenerateFit { state: usize, responsibility: f64 },
    #[error("model shape invalid: {0}")]
    BadModel(String),
    #[error("fitting needs at least one non-empty sequence")]
    NoData,
}

/// Reduce a sample to its per-axis means.
pub fn reduce_means(sample: &FigureSample) -> MeanFeature {
    let mut m = [0.0; N_AXES];
    for axis in Axis::ALL {
        m[axis.index()] = sample.row(axis).iter().sum::<f64>() / SAMPLE_LEN as f64;
    }
    m
}

/// `log(sum(exp(xs)))`, safe against -inf entries.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// A Gaussian HMM: initial distribution, row-stochastic transitions, and a
/// diagonal Gaussian per state over the 4-dim mean features.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHmm {
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    means: Vec<MeanFeature>,
    vars: Vec<MeanFeature>,
}

impl GaussianHmm {
    pub fn new(
        pi: Vec<f64>,
        trans: Vec<Vec<f64>>,
        means: Vec<MeanFeature>,
        vars: Vec<MeanFeature>,
    ) -> Result<GaussianHmm, GhmmError> {
        let n = pi.len();
        if n == 0 {
            return Err(GhmmError::BadModel("zero states".to_string()));
        }
        if trans.len() != n || means.len() != n || vars.len() != n {
            return Err(GhmmError::BadModel(format!(
                "inconsistent state counts: pi {n}, trans {}, means {}, vars {}",
                trans.len(),
                means.len(),
                vars.len()
            )));
        }
        check_distribution(&pi, "pi")?;
        for (i, row) in trans.iter().enumerate() {
            if row.len() != n {
                return Err(GhmmError::BadModel(format!("transition row {i} length")));
            }
            check_distribution(row, &format!("transition row {i}"))?;
        }
        for (i, v) in vars.iter().enumerate() {
            if v.iter().any(|&x| !x.is_finite() || x <= 0.0) {
                return Err(GhmmError::BadModel(format!(
                    "state {i} has a non-positive variance"
                )));
            }
        }
        if means.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(GhmmError::BadModel("non-finite mean".to_string()));
        }
        Ok(GaussianHmm {
            pi,
            trans,
            means,
            vars,
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn trans(&self) -> &[Vec<f64>] {
        &self.trans
    }

    pub fn means(&self) -> &[MeanFeature] {
        &self.means
    }

    pub fn vars(&self) -> &[MeanFeature] {
        &self.vars
    }

    /// Log-density of `x` under state `state`: the sum over axes of
    /// univariate Gaussian log-densities.
    pub fn log_emission(&self, state: usize, x: &MeanFeature) -> f64 {
        let mean = &self.means[state];
        let var = &self.vars[state];
        let mut ll = 0.0;
        for a in 0..N_AXES {
            let d = x[a] - mean[a];
            ll += -0.5 * (2.0 * std::f64::consts::PI * var[a]).ln() - d * d / (2.0 * var[a]);
        }
        ll
    }

    fn log_pi(&self) -> Vec<f64> {
        self.pi.iter().map(|&p| p.ln()).collect()
    }

    fn log_trans(&self) -> Vec<Vec<f64>> {
        self.trans
            .iter()
            .map(|row| row.iter().map(|&p| p.ln()).collect())
            .collect()
    }

    /// Log-likelihood of a sequence under the model (forward pass).
    pub fn log_likelihood(&self, seq: &[MeanFeature]) -> f64 {
        assert!(!seq.is_empty(), "sequence must be non-empty");
        let n = self.n_states();
        let log_pi = self.log_pi();
        let log_trans = self.log_trans();
        let mut alpha: Vec<f64> = (0..n)
            .map(|j| log_pi[j] + self.log_emission(j, &seq[0]))
            .collect();
        let mut scratch = vec![0.0; n];
        for x in &seq[1..] {
            let mut next = vec![0.0; n];
            for (j, nj) in next.iter_mut().enumerate() {
                for i in 0..n {
                    scratch[i] = alpha[i] + log_trans[i][j];
                }
                *nj = log_sum_exp(&scratch) + self.log_emission(j, x);
            }
            alpha = next;
        }
        log_sum_exp(&alpha)
    }

    /// Most probable state path; ties break toward the lower state index at
    /// every step.
    pub fn viterbi(&self, seq: &[MeanFeature]) -> Vec<usize> {
        assert!(!seq.is_empty(), "sequence must be non-empty");
        let n = self.n_states();
        let t_len = seq.len();
        let log_pi = self.log_pi();
        let log_trans = self.log_trans();
        let mut delta: Vec<f64> = (0..n)
            .map(|j| log_pi[j] + self.log_emission(j, &seq[0]))
            .collect();
        let mut backptr = vec![vec![0usize; n]; t_len];
        for t in 1..t_len {
            let mut next = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                let mut best_i = 0;
                let mut best = delta[0] + log_trans[0][j];
                for i in 1..n {
                    let cand = delta[i] + log_trans[i][j];
                    if cand > best {
                        best = cand;
                        best_i = i;
                    }
                }
                next[j] = best + self.log_emission(j, &seq[t]);
                backptr[t][j] = best_i;
            }
            delta = next;
        }
        let mut state = 0;
        for j in 1..n {
            if delta[j] > delta[state] {
                state = j;
            }
        }
        let mut path = vec![0usize; t_len];
        path[t_len - 1] = state;
        for t in (1..t_len).rev() {
            state = backptr[t][state];
            path[t - 1] = state;
        }
        path
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<(), GhmmError> {
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(GhmmError::BadModel(format!("{what} has a bad entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(GhmmError::BadModel(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Fitting controls.
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop when the total log-likelihood improves by less than this.
    pub tol: f64,
    /// Keep transitions fixed at their initial values.
    pub freeze_transitions: bool,
    pub var_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 100,
            tol: 1e-4,
            freeze_transitions: false,
            var_floor: VARIANCE_FLOOR,
        }
    }
}

/// A fitted model plus its per-iteration total log-likelihood trace.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: GaussianHmm,
    /// Total log-likelihood evaluated at the start of each iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
}

/// Baum-Welch over one or more feature sequences.
///
/// Transition updates are confined to the support of the initial matrix:
/// cells that start at zero stay zero. The variance floor is applied after
/// every M-step, and fitting is fully deterministic.
pub fn fit_em(
    seqs: &[Vec<MeanFeature>],
    init: &GaussianHmm,
    opts: &FitOptions,
) -> Result<FitOutcome, GhmmError> {
    if seqs.is_empty() || seqs.iter().any(Vec::is_empty) {
        return Err(GhmmError::NoData);
    }
    let n = init.n_states();
    let support: Vec<Vec<bool>> = init
        .trans
        .iter()
        .map(|row| row.iter().map(|&p| p > 0.0).collect())
        .collect();
    let mut model = init.clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _iter in 0..opts.max_iters {
        let log_pi = model.log_pi();
        let log_trans = model.log_trans();

        // E-step accumulators.
        let mut total_ll = 0.0;
        let mut gamma_first = vec![0.0; n];
        let mut gamma_total = vec![0.0; n];
        let mut gamma_trans_denom = vec![0.0; n];
        let mut xi_total = vec![vec![0.0; n]; n];
        let mut mean_num = vec![[0.0; N_AXES]; n];
        let mut sq_num = vec![[0.0; N_AXES]; n];

        for seq in seqs {
            let t_len = seq.len();
            let log_emit: Vec<Vec<f64>> = seq
                .iter()
                .map(|x| (0..n).map(|j| model.log_emission(j, x)).collect())
                .collect();

            // Forward.
            let mut alpha = vec![vec![0.0; n]; t_len];
            for j in 0..n {
                alpha[0][j] = log_pi[j] + log_emit[0][j];
            }
            let mut scratch = vec![0.0; n];
            for t in 1..t_len {
                for j in 0..n {
                    for i in 0..n {
                        scratch[i] = alpha[t - 1][i] + log_trans[i][j];
                    }
                    alpha[t][j] = log_sum_exp(&scratch) + log_emit[t][j];
                }
            }
            let seq_ll = log_sum_exp(&alpha[t_len - 1]);
            total_ll += seq_ll;

            // Backward.
            let mut beta = vec![vec![0.0; n]; t_len];
            for t in (0..t_len - 1).rev() {
                for i in 0..n {
                    for j in 0..n {
                        scratch[j] = log_trans[i][j] + log_emit[t + 1][j] + beta[t + 1][j];
                    }
                    beta[t][i] = log_sum_exp(&scratch);
                }
            }

            // Responsibilities.
            for t in 0..t_len {
                for i in 0..n {
                    let g = (alpha[t][i] + beta[t][i] - seq_ll).exp();
                    if t == 0 {
                        gamma_first[i] += g;
                    }
                    gamma_total[i] += g;
                    if t < t_len - 1 {
                        gamma_trans_denom[i] += g;
                    }
                    for a in 0..N_AXES {
                        mean_num[i][a] += g * seq[t][a];
                        sq_num[i][a] += g * seq[t][a] * seq[t][a];
                    }
                }
            }
            for t in 0..t_len - 1 {
                for i in 0..n {
                    if alpha[t][i] == f64::NEG_INFINITY {
                        continue;
                    }
                    for j in 0..n {
                        if !support[i][j] {
                            continue;
                        }
                        let x =
                            (alpha[t][i] + log_trans[i][j] + log_emit[t + 1][j] + beta[t + 1][j]
                                - seq_ll)
                                .exp();
                        xi_total[i][j] += x;
                    }
                }
            }
        }

        trace.push(total_ll);
        if trace.len() >= 2 {
            let improvement = total_ll - trace[trace.len() - 2];
            if improvement < opts.tol {
                converged = true;
                break;
            }
        }

        for (state, &g) in gamma_total.iter().enumerate() {
            if g < 1e-12 {
                return Err(GhmmError::DegenerateFit {
                    state,
                    responsibility: g,
                });
            }
        }

        // M-step.
        let n_seqs = seqs.len() as f64;
        let mut pi: Vec<f64> = gamma_first.iter().map(|&g| g / n_seqs).collect();
        let pi_sum: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= pi_sum;
        }

        let mut trans = model.trans.clone();
        if !opts.freeze_transitions {
            for i in 0..n {
                if gamma_trans_denom[i] <= 0.0 {
                    continue; // state never transitions out; keep its row
                }
                let mut row: Vec<f64> = (0..n)
                    .map(|j| {
                        if support[i][j] {
                            xi_total[i][j] / gamma_trans_denom[i]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let row_sum: f64 = row.iter().sum();
                if row_sum > 0.0 {
                    for v in &mut row {
                        *v /= row_sum;
                    }
                    trans[i] = row;
                }
            }
        }

        let mut means = vec![[0.0; N_AXES]; n];
        let mut vars = vec![[0.0; N_AXES]; n];
        for i in 0..n {
            for a in 0..N_AXES {
                let m = mean_num[i][a] / gamma_total[i];
                means[i][a] = m;
                vars[i][a] = (sq_num[i][a] / gamma_total[i] - m * m).max(opts.var_floor);
            }
        }

        model = GaussianHmm {
            pi,
            trans,
            means,
            vars,
        };
    }

    Ok(FitOutcome {
        model,
        log_likelihood_trace: trace,
        converged,
    })
}

/// Hidden-state index to figure label, total over all states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLabelMap {
    mapping: Vec<FigureLabel>,
}

impl StateLabelMap {
    pub fn new(mapping: Vec<FigureLabel>) -> StateLabelMap {
        StateLabelMap { mapping }
    }

    pub fn label_of(&self, state: usize) -> FigureLabel {
        self.mapping[state]
    }

    pub fn mapping(&self) -> &[FigureLabel] {
        &self.mapping
    }

    pub fn map_path(&self, path: &[usize]) -> Vec<FigureLabel> {
        path.iter().map(|&s| self.mapping[s]).collect()
    }
}

/// Map each state to the majority true label among the positions decoded as
/// that state. Never-decoded states map to the first label; ties break
/// toward the lower label index.
pub fn match_states(
    n_states: usize,
    decoded: &[Vec<usize>],
    truth: &[Vec<FigureLabel>],
) -> StateLabelMap {
    assert_eq!(
        decoded.len(),
        truth.len(),
        "decoded/truth sequence counts differ"
    );
    let mut counts = vec![[0usize; N_FIGURES]; n_states];
    for (path, labels) in decoded.iter().zip(truth) {
        assert_eq!(path.len(), labels.len(), "decoded/truth lengths differ");
        for (&state, &label) in path.iter().zip(labels) {
            counts[state][label.index()] += 1;
        }
    }
    let mapping = counts
        .iter()
        .map(|c| {
            let mut best = 0;
            for (idx, &count) in c.iter().enumerate().skip(1) {
                if count > c[best] {
                    best = idx;
                }
            }
            FigureLabel::from_index(best)
        })
        .collect();
    StateLabelMap { mapping }
}

/// A fitted 16-state figure model: the HMM plus the state-to-label map
/// learned from training decodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FigureHmmRepr", into = "FigureHmmRepr")]
pub struct FigureHmm {
    pub hmm: GaussianHmm,
    pub state_labels: StateLabelMap,
}

impl FigureHmm {
    /// Decode one feature sequence to figure labels.
    pub fn predict(&self, seq: &[MeanFeature]) -> Vec<FigureLabel> {
        self.state_labels.map_path(&self.hmm.viterbi(seq))
    }

    /// Decode many sequences, in parallel with the `parallel` feature.
    pub fn predict_batch(&self, seqs: &[Vec<MeanFeature>]) -> Vec<Vec<FigureLabel>> {
        par::map_batch(seqs, |seq| self.predict(seq))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<FigureHmm, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[derive(Serialize, Deserialize)]
struct FigureHmmRepr {
    labels: Vec<String>,
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    state_labels: Vec<FigureLabel>,
}

impl From<FigureHmm> for FigureHmmRepr {
    fn from(m: FigureHmm) -> Self {
        FigureHmmRepr {
            labels: FigureLabel::ALL
                .iter()
                .map(|l| l.short_name().to_string())
                .collect(),
            pi: m.hmm.pi.clone(),
            trans: m.hmm.trans.clone(),
            means: m.hmm.means.iter().map(|x| x.to_vec()).collect(),
            variances: m.hmm.vars.iter().map(|x| x.to_vec()).collect(),
            state_labels: m.state_labels.mapping,
        }
    }
}

impl TryFrom<FigureHmmRepr> for FigureHmm {
    type Error = GhmmError;

    fn try_from(r: FigureHmmRepr) -> Result<Self, Self::Error> {
        let canonical: Vec<&str> = FigureLabel::ALL.iter().map(|l| l.short_name()).collect();
        if r.labels != canonical || r.state_labels.len() != N_FIGURES {
            return Err(GhmmError::BadModel(
                "label list must be the 16 canonical short names".to_string(),
            ));
        }
        let fixed = |v: &Vec<f64>| -> Result<MeanFeature, GhmmError> {
            v.as_slice()
                .try_into()
                .map_err(|_| GhmmError::BadModel("feature dim must be 4".to_string()))
        };
        let means = r.means.iter().map(fixed).collect::<Result<Vec<_>, _>>()?;
        let vars = r
            .variances
            .iter()
            .map(fixed)
            .collect::<Result<Vec<_>, _>>()?;
        let hmm = GaussianHmm::new(r.pi, r.trans, means, vars)?;
        if hmm.n_states() != N_FIGURES {
            return Err(GhmmError::BadModel(
                "figure model needs 16 states".to_string(),
            ));
        }
        Ok(FigureHmm {
            hmm,
            state_labels: StateLabelMap {
                mapping: r.state_labels,
            },
        })
    }
}

/// How to initialize the figure HMM's initial-state distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PiInit {
    /// Uniform over the 16 figures.
    #[default]
    Uniform,
    /// Add-one-smoothed empirical distribution of training first figures.
    EmpiricalFirsts,
}

/// Per-label Gaussian statistics used to seed the 16-state model; labels
/// absent from the training data fall back to the global statistics.
fn per_label_stats(
    features: &[Vec<MeanFeature>],
    labels: &[Vec<FigureLabel>],
    var_floor: f64,
) -> (Vec<MeanFeature>, Vec<MeanFeature>) {
    let mut sums = vec![[0.0; N_AXES]; N_FIGURES];
    let mut sq_sums = vec![[0.0; N_AXES]; N_FIGURES];
    let mut counts = [0usize; N_FIGURES];
    let mut global_sum = [0.0; N_AXES];
    let mut global_sq = [0.0; N_AXES];
    let mut global_count = 0usize;
    for (seq, labs) in features.iter().zip(labels) {
        for (x, l) in seq.iter().zip(labs) {
            let i = l.index();
            counts[i] += 1;
            global_count += 1;
            for a in 0..N_AXES {
                sums[i][a] += x[a];
                sq_sums[i][a] += x[a] * x[a];
                global_sum[a] += x[a];
                global_sq[a] += x[a] * x[a];
            }
        }
    }
    let mut global_mean = [0.0; N_AXES];
    let mut global_var = [0.0; N_AXES];
    for a in 0..N_AXES {
        global_mean[a] = global_sum[a] / global_count as f64;
        global_var[a] =
            (global_sq[a] / global_count as f64 - global_mean[a] * global_mean[a]).max(var_floor);
    }
    let mut means = vec![[0.0; N_AXES]; N_FIGURES];
    let mut vars = vec![[0.0; N_AXES]; N_FIGURES];
    for i in 0..N_FIGURES {
        if counts[i] == 0 {
            means[i] = global_mean;
            vars[i] = global_var;
            continue;
        }
        for a in 0..N_AXES {
            let m = sums[i][a] / counts[i] as f64;
            means[i][a] = m;
            vars[i][a] = (sq_sums[i][a] / counts[i] as f64 - m * m).max(var_floor);
        }
    }
    (means, vars)
}

/// Train the 16-state figure model: seed emissions from per-label
/// statistics, run EM from the given transition matrix, then learn the
/// state-to-label map by decoding the training data.
pub fn train_figure_hmm(
    features: &[Vec<MeanFeature>],
    labels: &[Vec<FigureLabel>],
    t_init: &TransitionMatrix,
    pi_init: PiInit,
    opts: &FitOptions,
) -> Result<(FigureHmm, FitOutcome), GhmmError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(GhmmError::NoData);
    }
    let (means, vars) = per_label_stats(features, labels, opts.var_floor);
    let pi = match pi_init {
        PiInit::Uniform => ProbVector::uniform(),
        PiInit::EmpiricalFirsts => {
            let mut weights = [1.0; N_FIGURES];
            for labs in labels {
                weights[labs[0].index()] += 1.0;
            }
            ProbVector::normalized(weights).expect("weights are positive")
        }
    };
    let trans: Vec<Vec<f64>> = t_init.probs().iter().map(|r| r.to_vec()).collect();
    let init = GaussianHmm::new(pi.as_array().to_vec(), trans, means, vars)?;
    let outcome = fit_em(features, &init, opts)?;
    let decoded: Vec<Vec<usize>> = par::map_batch(features, |seq| outcome.model.viterbi(seq));
    let state_labels = match_states(N_FIGURES, &decoded, labels);
    Ok((
        FigureHmm {
            hmm: outcome.model.clone(),
            state_labels,
        },
        outcome,
    ))
}
