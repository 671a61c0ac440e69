//! Feed-forward softmax classifier over flattened figure samples.
//!
//! Dense layers with rectifier activations feed a 16-way softmax trained
//! with categorical cross-entropy and the Adam update. Inputs are
//! standardized per feature with statistics computed from the training set
//! only; the statistics travel with the model so inference applies the same
//! transform.
//!
//! Training is single-threaded and fully deterministic for a given seed
//! (parameter init and epoch shuffling both derive from it). Batch
//! inference fans out per sample under the `parallel` feature.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FigureSample;
use crate::label::FigureLabel;
use crate::prob::ProbVector;
use crate::{par, N_AXES, N_FIGURES, SAMPLE_LEN};

/// Variance floor for input standardization.
pub const STANDARDIZE_VAR_FLOOR: f64 = 1e-8;

/// Network shape: `depth` hidden dense layers of `width` units between the
/// input and the 16-way softmax output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl MlpSpec {
    /// Shape for full figure samples (4×100 flattened, 16 classes).
    pub fn for_figures(depth: usize, width: usize, seed: u64) -> MlpSpec {
        MlpSpec {
            depth,
            width,
            input_dim: N_AXES * SAMPLE_LEN,
            output_dim: N_FIGURES,
            seed,
        }
    }

    /// Per-layer `(in_dim, out_dim)` pairs, input to output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.depth {
            dims.push((prev, self.width));
            prev = self.width;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Bad classifier configuration or data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlpError {
    #[error("spec must have positive depth, width, input_dim, and output_dim 16")]
    BadSpec,
    #[error("training needs at least one sample")]
    NoData,
    #[error("input length {got} does not match spec input_dim {expected}")]
    BadInputDim { got: usize, expected: usize },
    #[error("sample is missing a label")]
    MissingLabel,
}

/// Per-feature standardization statistics (train-set only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Identity transform (used by hand-constructed models).
    pub fn identity(dim: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(inputs: &[Vec<f64>]) -> Standardizer {
        let dim = inputs[0].len();
        let n = inputs.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in inputs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for x in inputs {
            for (k, v) in x.iter().enumerate() {
                let d = v - mean[k];
                var[k] += d * d;
            }
        }
        let std = var
            .iter()
            .map(|&v| (v / n).max(STANDARDIZE_VAR_FLOOR).sqrt())
            .collect();
        Standardizer { mean, std }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
}

/// Dot product with four independent accumulators; the strict
/// left-to-right reduction otherwise serializes on add latency.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = k * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One dense layer: row-major weights (`out_dim` rows of `in_dim`) plus
/// biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeroed(in_dim: usize, out_dim: usize) -> DenseLayer {
        DenseLayer {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            out.push(dot(row, x) + self.b[o]);
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// The trained network: spec, standardization statistics, and layers
/// (hidden layers use the rectifier, the final layer feeds the softmax).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub standardizer: Standardizer,
    pub layers: Vec<DenseLayer>,
}

/// Max-subtracted softmax into a valid distribution.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl MlpModel {
    /// Seeded Glorot-uniform weight init (`±sqrt(6/(fan_in+fan_out))`),
    /// zero biases, identity standardization.
    pub fn init(spec: &MlpSpec) -> Result<MlpModel, MlpError> {
        if spec.depth == 0 || spec.width == 0 || spec.input_dim == 0 || spec.output_dim != N_FIGURES
        {
            return Err(MlpError::BadSpec);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(in_dim, out_dim)| {
                let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
                DenseLayer {
                    in_dim,
                    out_dim,
                    w: (0..in_dim * out_dim)
                        .map(|_| rng.random_range(-scale..scale))
                        .collect(),
                    b: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(MlpModel {
            spec: *spec,
            standardizer: Standardizer::identity(spec.input_dim),
            layers,
        })
    }

    /// All-zero parameters (softmax of zeros is uniform).
    pub fn zeroed(spec: &MlpSpec) -> Result<MlpModel, MlpError> {
        if spec.depth == 0 || spec.width == 0 || spec.input_dim == 0 || spec.output_dim != N_FIGURES
        {
            return Err(MlpError::BadSpec);
        }
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| DenseLayer::zeroed(i, o))
            .collect();
        Ok(MlpModel {
            spec: *spec,
            standardizer: Standardizer::identity(spec.input_dim),
            layers,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::n_params).sum()
    }

    /// Class posterior for one raw input vector.
    pub fn forward(&self, input: &[f64]) -> Result<ProbVector, MlpError> {
        if input.len() != self.spec.input_dim {
            return Err(MlpError::BadInputDim {
                got: input.len(),
                expected: self.spec.input_dim,
            });
        }
        let mut cur = Vec::new();
        self.standardizer.apply(input, &mut cur);
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if k < last {
                for z in &mut next {
                    *z = z.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let p = softmax(&cur);
        let arr: [f64; N_FIGURES] = p.try_into().expect("output_dim is 16");
        Ok(ProbVector::normalized(arr).expect("softmax output is a distribution"))
    }

    /// Posterior for one figure sample (flattened axis-major).
    pub fn forward_sample(&self, sample: &FigureSample) -> Result<ProbVector, MlpError> {
        self.forward(sample.flat())
    }

    /// Posteriors for many inputs, order preserved; parallel per sample
    /// with the `parallel` feature.
    pub fn predict_proba(&self, inputs: &[Vec<f64>]) -> Result<Vec<ProbVector>, MlpError> {
        let out = par::map_batch(inputs, |x| self.forward(x));
        out.into_iter().collect()
    }

    /// Posteriors for many samples.
    pub fn predict_proba_samples(
        &self,
        samples: &[FigureSample],
    ) -> Result<Vec<ProbVector>, MlpError> {
        let out = par::map_batch(samples, |s| self.forward_sample(s));
        out.into_iter().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<MlpModel, serde_json::Error> {
        serde_json::from_str(json)
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    fn set_flat_params(&mut self, params: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        debug_assert_eq!(k, params.len());
    }
}

/// Mean cross-entropy loss and its gradient over a batch, via
/// backpropagation. Gradients are laid out like the flat parameter vector
/// (per layer: weights then biases).
pub fn loss_and_grad(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    labels: &[FigureLabel],
) -> Result<(f64, Vec<f64>), MlpError> {
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    loss_and_grad_refs(model, &refs, labels)
}

fn loss_and_grad_refs(
    model: &MlpModel,
    inputs: &[&[f64]],
    labels: &[FigureLabel],
) -> Result<(f64, Vec<f64>), MlpError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(MlpError::NoData);
    }
    let n_layers = model.layers.len();
    let mut grad = vec![0.0; model.n_params()];
    let mut layer_offsets = Vec::with_capacity(n_layers);
    {
        let mut k = 0;
        for l in &model.layers {
            layer_offsets.push(k);
            k += l.n_params();
        }
    }
    let mut loss = 0.0;
    let batch_n = inputs.len() as f64;
    let mut std_input = Vec::new();

    for (input, &label) in inputs.iter().zip(labels) {
        if input.len() != model.spec.input_dim {
            return Err(MlpError::BadInputDim {
                got: input.len(),
                expected: model.spec.input_dim,
            });
        }
        model.standardizer.apply(input, &mut std_input);

        // Forward, keeping each layer's output (post-rectifier for hidden
        // layers).
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(std_input.clone());
        for (k, layer) in model.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&activations[k], &mut z);
            if k < n_layers - 1 {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            activations.push(z);
        }
        let probs = softmax(&activations[n_layers]);
        let p_true = probs[label.index()].max(1e-300);
        loss += -p_true.ln() / batch_n;

        // Backward: softmax + cross-entropy gives (p - onehot) at the output.
        let mut delta: Vec<f64> = probs;
        delta[label.index()] -= 1.0;
        for d in &mut delta {
            *d /= batch_n;
        }
        for k in (0..n_layers).rev() {
            let layer = &model.layers[k];
            let x = &activations[k];
            let g = &mut grad[layer_offsets[k]..layer_offsets[k] + layer.n_params()];
            let (gw, gb) = g.split_at_mut(layer.w.len());
            for (o, (&d, gb_o)) in delta.iter().zip(gb.iter_mut()).enumerate() {
                if d != 0.0 {
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gwi, xi) in row.iter_mut().zip(x) {
                        *gwi += d * xi;
                    }
                }
                *gb_o += d;
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                // Rectifier gate: the layer below stored post-activation
                // values, zero exactly where the unit was off.
                for (p, &a) in prev.iter_mut().zip(&activations[k]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok((loss, grad))
}

/// Adam accumulator over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, alpha: f64) -> AdamState {
        AdamState {
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias-corrected moments.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

/// Train from scratch on raw input vectors. Returns the model and the mean
/// per-sample loss of each epoch. `epochs = 0` returns the freshly
/// initialized model with an empty trace.
pub fn train(
    spec: &MlpSpec,
    inputs: &[Vec<f64>],
    labels: &[FigureLabel],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>), MlpError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(MlpError::NoData);
    }
    if cfg.batch_size == 0 {
        return Err(MlpError::BadSpec);
    }
    let mut model = MlpModel::init(spec)?;
    model.standardizer = Standardizer::fit(inputs);

    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    // Shuffling continues from a seed-derived stream, so the whole run is a
    // pure function of the seed.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    let mut batch_inputs: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_labels: Vec<FigureLabel> = Vec::with_capacity(cfg.batch_size);
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_inputs.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_inputs.push(inputs[i].as_slice());
                batch_labels.push(labels[i]);
            }
            model.set_flat_params(&params);
            let (loss, grad) = loss_and_grad_refs(&model, &batch_inputs, &batch_labels)?;
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut adam, &mut params, &grad);
        }
        trace.push(epoch_loss / inputs.len() as f64);
    }
    model.set_flat_params(&params);
    Ok((model, trace))
}

/// Train on labeled figure samples (flattened axis-major).
pub fn train_on_samples(
    spec: &MlpSpec,
    samples: &[FigureSample],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>), MlpError> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.flat().to_vec()).collect();
    let labels: Vec<FigureLabel> = samples
        .iter()
        .map(|s| s.label().ok_or(MlpError::MissingLabel))
        .collect::<Result<_, _>>()?;
    train(spec, &inputs, &labels, cfg)
}

/// A malformed posterior CSV row.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("posterior csv line {line}: {reason}")]
pub struct PosteriorCsvError {
    pub line: usize,
    pub reason: String,
}

/// Posterior sequences keyed by dance id, in file order.
pub type PosteriorFile = Vec<(String, Vec<ProbVector>)>;

/// The posterior interchange format: one row per figure, a dance id and
/// position followed by the 16 class probabilities in canonical label
/// order. This is also the import bridge for posteriors produced by
/// external classifiers.
pub fn posteriors_to_csv(per_dance: &[(String, Vec<ProbVector>)]) -> String {
    let mut out = String::from("dance_id,position");
    for l in FigureLabel::ALL {
        out.push(',');
        out.push_str(l.short_name());
    }
    out.push('\n');
    for (dance_id, posteriors) in per_dance {
        for (position, p) in posteriors.iter().enumerate() {
            out.push_str(dance_id);
            out.push_str(&format!(",{position}"));
            for v in p.as_array() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Parse the posterior CSV. Positions must be 0-based and contiguous per
/// dance; probabilities must be non-negative and sum to 1 within 1e-6
/// (rows are renormalized exactly, tolerating rounded external files).
pub fn posteriors_from_csv(content: &str) -> Result<PosteriorFile, PosteriorCsvError> {
    let mut lines = content.lines().enumerate();
    let expected_header = {
        let mut h = String::from("dance_id,position");
        for l in FigureLabel::ALL {
            h.push(',');
            h.push_str(l.short_name());
        }
        h
    };
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == expected_header => {}
        _ => {
            return Err(PosteriorCsvError {
                line: 1,
                reason: format!("missing header {expected_header:?}"),
            })
        }
    }
    let mut out: PosteriorFile = Vec::new();
    for (idx, raw_line) in lines {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 + N_FIGURES {
            return Err(PosteriorCsvError {
                line,
                reason: format!("expected {} columns, got {}", 2 + N_FIGURES, fields.len()),
            });
        }
        let dance_id = fields[0].to_string();
        let position: usize = fields[1].parse().map_err(|_| PosteriorCsvError {
            line,
            reason: format!("bad position {:?}", fields[1]),
        })?;
        let mut probs = [0.0f64; N_FIGURES];
        for (k, f) in fields[2..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| PosteriorCsvError {
                line,
                reason: format!("bad probability {f:?} in column {}", FigureLabel::ALL[k]),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(PosteriorCsvError {
                    line,
                    reason: format!(
                        "probability {v} in column {} out of range",
                        FigureLabel::ALL[k]
                    ),
                });
            }
            probs[k] = v;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(PosteriorCsvError {
                line,
                reason: format!("probabilities sum to {sum}, expected 1 within 1e-6"),
            });
        }
        let p = ProbVector::normalized(probs).map_err(|e| PosteriorCsvError {
            line,
            reason: e.to_string(),
        })?;
        match out.last_mut() {
            Some((id, seq)) if *id == dance_id => {
                if position != seq.len() {
                    return Err(PosteriorCsvError {
                        line,
                        reason: format!(
                            "position {position} out of order (expected {})",
                            seq.len()
                        ),
                    });
                }
                seq.push(p);
            }
            _ => {
                if out.iter().any(|(id, _)| *id == dance_id) {
                    return Err(PosteriorCsvError {
                        line,
                        reason: format!("dance {dance_id:?} rows are not contiguous"),
                    });
                }
                if position != 0 {
                    return Err(PosteriorCsvError {
                        line,
                        reason: format!("dance {dance_id:?} must start at position 0"),
                    });
                }
                out.push((dance_id, vec![p]));
            }
        }
    }
    Ok(out)
}
