//! Synthetic labeled dance corpora.
//!
//! A corpus is a Markov chain of figures realized as sensor signals: each
//! figure label carries a piecewise-linear per-axis template over its
//! normalized duration, sampled at irregular (exponential inter-arrival)
//! timestamps with per-axis Gaussian noise. Generation yields both the raw
//! log (to exercise the ingest pipeline) and ready-made 4×100 samples
//! binned from the same readings.
//!
//! The default templates are invented fixtures: yaw ramps whose sign and
//! size distinguish turning figures, plus per-figure acceleration bumps.
//! They live in `data/default_synth.toml`, versioned with the crate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::data::{Axis, DanceSequence, Dataset, FigureSample, TimedReading};
use crate::ingest::{RawLog, SegmentationSpec};
use crate::label::FigureLabel;
use crate::transitions::TransitionMatrix;
use crate::{par, N_AXES, N_FIGURES, SAMPLE_LEN};

/// The default corpus fixture, embedded from `data/default_synth.toml`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default_synth.toml");

/// Configuration problems.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("missing template for figure {0}")]
    MissingTemplate(FigureLabel),
    #[error("template for {label}: {reason}")]
    BadTemplate { label: FigureLabel, reason: String },
    #[error("bad config field {field}: {reason}")]
    BadField { field: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Per-axis piecewise-linear profile over normalized figure time, plus
/// per-axis noise levels.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureTemplate {
    /// Control points `(u, value)` per axis, sorted by `u` in `[0, 1]`.
    pub axes: [Vec<(f64, f64)>; N_AXES],
    pub noise_sigma: [f64; N_AXES],
}

impl FigureTemplate {
    fn validate(&self, label: FigureLabel) -> Result<(), SynthError> {
        for (k, pts) in self.axes.iter().enumerate() {
            if pts.len() < 2 {
                return Err(SynthError::BadTemplate {
                    label,
                    reason: format!("axis {} needs at least 2 control points", Axis::ALL[k]),
                });
            }
            if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(SynthError::BadTemplate {
                    label,
                    reason: format!("axis {} control points not strictly sorted", Axis::ALL[k]),
                });
            }
            if pts
                .iter()
                .any(|(u, v)| !u.is_finite() || !v.is_finite() || *u < 0.0 || *u > 1.0)
            {
                return Err(SynthError::BadTemplate {
                    label,
                    reason: format!("axis {} has a control point outside [0,1]", Axis::ALL[k]),
                });
            }
        }
        if self.noise_sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(SynthError::BadTemplate {
                label,
                reason: "noise sigma must be non-negative".to_string(),
            });
        }
        Ok(())
    }

    /// Template value at normalized time `u`, clamped to the profile's
    /// endpoints outside its control-point range.
    pub fn value(&self, axis: Axis, u: f64) -> f64 {
        let pts = &self.axes[axis.index()];
        if u <= pts[0].0 {
            return pts[0].1;
        }
        if u >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|(t, _)| *t <= u);
        let (t0, v0) = pts[hi - 1];
        let (t1, v1) = pts[hi];
        v0 + (v1 - v0) * (u - t0) / (t1 - t0)
    }
}

/// Full corpus configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub templates: BTreeMap<FigureLabel, FigureTemplate>,
    pub transitions: TransitionMatrix,
    pub n_dances: usize,
    pub length_range: (usize, usize),
    pub tempo_bpm: f64,
    pub intro_s: f64,
    pub sample_rate_hz: f64,
    pub sample_rate_jitter_hz: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
struct TemplateRepr {
    noise_sigma: [f64; N_AXES],
    lin_acc_x: Vec<(f64, f64)>,
    lin_acc_y: Vec<(f64, f64)>,
    lin_acc_z: Vec<(f64, f64)>,
    yaw: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct ConfigRepr {
    #[allow(dead_code)]
    version: u32,
    n_dances: usize,
    length_min: usize,
    length_max: usize,
    tempo_bpm: f64,
    intro_s: f64,
    sample_rate_hz: f64,
    sample_rate_jitter_hz: f64,
    seed: u64,
    transitions: String,
    #[serde(default)]
    identical: Vec<(String, String)>,
    templates: BTreeMap<String, TemplateRepr>,
}

impl SynthConfig {
    /// Parse a TOML config. `transitions` must currently be `"unbiased"`;
    /// callers may swap in any matrix afterwards.
    pub fn from_toml_str(content: &str) -> Result<SynthConfig, SynthError> {
        let repr: ConfigRepr =
            toml::from_str(content).map_err(|e| SynthError::Parse(e.to_string()))?;
        if repr.transitions != "unbiased" {
            return Err(SynthError::BadField {
                field: "transitions".to_string(),
                reason: format!("unknown transition source {:?}", repr.transitions),
            });
        }
        let mut templates = BTreeMap::new();
        for (name, t) in &repr.templates {
            let label = FigureLabel::from_short_name(name).map_err(|e| SynthError::BadField {
                field: format!("templates.{name}"),
                reason: e.to_string(),
            })?;
            let template = FigureTemplate {
                axes: [
                    t.lin_acc_x.clone(),
                    t.lin_acc_y.clone(),
                    t.lin_acc_z.clone(),
                    t.yaw.clone(),
                ],
                noise_sigma: t.noise_sigma,
            };
            template.validate(label)?;
            templates.insert(label, template);
        }
        let mut config = SynthConfig {
            templates,
            transitions: TransitionMatrix::unbiased(),
            n_dances: repr.n_dances,
            length_range: (repr.length_min, repr.length_max),
            tempo_bpm: repr.tempo_bpm,
            intro_s: repr.intro_s,
            sample_rate_hz: repr.sample_rate_hz,
            sample_rate_jitter_hz: repr.sample_rate_jitter_hz,
            seed: repr.seed,
        };
        for (a, b) in &repr.identical {
            let target = FigureLabel::from_short_name(a).map_err(|e| SynthError::BadField {
                field: "identical".to_string(),
                reason: e.to_string(),
            })?;
            let source = FigureLabel::from_short_name(b).map_err(|e| SynthError::BadField {
                field: "identical".to_string(),
                reason: e.to_string(),
            })?;
            config.make_identical(target, source)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// The embedded default fixture.
    pub fn default_fixture() -> SynthConfig {
        SynthConfig::from_toml_str(DEFAULT_CONFIG_TOML).expect("embedded default config must parse")
    }

    /// Copy `source`'s template onto `target`, making the two figures
    /// indistinguishable to any sample-level classifier.
    pub fn make_identical(
        &mut self,
        target: FigureLabel,
        source: FigureLabel,
    ) -> Result<(), SynthError> {
        let t = self
            .templates
            .get(&source)
            .cloned()
            .ok_or(SynthError::MissingTemplate(source))?;
        self.templates.insert(target, t);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for label in FigureLabel::ALL {
            match self.templates.get(&label) {
                None => return Err(SynthError::MissingTemplate(label)),
                Some(t) => t.validate(label)?,
            }
        }
        let (lo, hi) = self.length_range;
        if lo == 0 || hi < lo || hi > 10_000 {
            return Err(SynthError::BadField {
                field: "length_range".to_string(),
                reason: format!("got [{lo}, {hi}]"),
            });
        }
        if !self.tempo_bpm.is_finite()
            || self.tempo_bpm <= 0.0
            || !self.intro_s.is_finite()
            || self.intro_s < 0.0
        {
            return Err(SynthError::BadField {
                field: "tempo_bpm/intro_s".to_string(),
                reason: "tempo must be positive, intro non-negative".to_string(),
            });
        }
        if !self.sample_rate_hz.is_finite()
            || self.sample_rate_hz <= 0.0
            || !self.sample_rate_jitter_hz.is_finite()
            || self.sample_rate_jitter_hz < 0.0
            || self.sample_rate_jitter_hz >= self.sample_rate_hz
        {
            return Err(SynthError::BadField {
                field: "sample_rate_hz".to_string(),
                reason: "rate must be positive and larger than its jitter".to_string(),
            });
        }
        if self.n_dances == 0 {
            return Err(SynthError::BadField {
                field: "n_dances".to_string(),
                reason: "need at least one dance".to_string(),
            });
        }
        Ok(())
    }
}

/// Split one seed into independent per-unit streams.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over seed + index step
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw one label sequence from the configured Markov chain: first figure
/// uniform over the vocabulary, successors from the transition rows, length
/// uniform in the configured range.
pub fn gen_sequence(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<FigureLabel> {
    let (lo, hi) = config.length_range;
    let len = rng.random_range(lo..=hi);
    let mut labels = Vec::with_capacity(len);
    let mut current = FigureLabel::from_index(rng.random_range(0..N_FIGURES));
    labels.push(current);
    for _ in 1..len {
        current = sample_row(&config.transitions, current, rng);
        labels.push(current);
    }
    labels
}

fn sample_row(t: &TransitionMatrix, from: FigureLabel, rng: &mut ChaCha8Rng) -> FigureLabel {
    let row = &t.probs()[from.index()];
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if r < acc {
            return FigureLabel::from_index(j);
        }
    }
    // Rounding slack: fall back to the last supported cell.
    let last = row
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("rows have support");
    FigureLabel::from_index(last)
}

/// One generated dance: labels, the raw log, and the ready-made samples
/// binned from the same readings (medians per 100 bins, noise included).
#[derive(Clone, Debug)]
pub struct GeneratedDance {
    pub dance: DanceSequence,
    pub log: RawLog,
    pub labels: Vec<FigureLabel>,
}

/// Wrap an angle into `[-180, 180)` the way the sensor reports it.
fn wrap_angle(deg: f64) -> f64 {
    let mut v = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if v >= 180.0 {
        v = -180.0;
    }
    v
}

/// Generate dance `index` of the corpus. Each dance owns an RNG stream
/// derived from `(seed, index)`, so generation order and parallelism cannot
/// change the output.
///
/// Yaw rides on a per-dance heading that accumulates each figure's net
/// turn, like a couple traveling around the floor; the log stores the
/// wrapped sensor reading while the ready samples keep the continuous
/// angle (which is what unwrapping recovers).
pub fn gen_dance(config: &SynthConfig, index: usize) -> GeneratedDance {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64));
    let labels = gen_sequence(config, &mut rng);
    let n_figures = labels.len();
    let spec = SegmentationSpec::new(config.tempo_bpm, config.intro_s, n_figures, 0.0)
        .expect("validated config yields a valid segmentation spec");
    let measure = spec.measure_s();
    let dance_end = config.intro_s + n_figures as f64 * measure;
    // Record a little past the nominal end so extended ingest windows have
    // data on both sides.
    let total = dance_end + 1.0;
    let rate = config.sample_rate_hz
        + if config.sample_rate_jitter_hz > 0.0 {
            rng.random_range(-config.sample_rate_jitter_hz..config.sample_rate_jitter_hz)
        } else {
            0.0
        };
    let exp = Exp::new(rate).expect("validated rate is positive");

    // Heading before each figure: the initial orientation plus the
    // accumulated net turns of all preceding figures.
    let initial_heading = rng.random_range(-180.0..180.0);
    let mut headings = Vec::with_capacity(n_figures + 1);
    headings.push(initial_heading);
    for label in &labels {
        let net_turn = config.templates[label].value(Axis::Yaw, 1.0);
        headings.push(headings.last().unwrap() + net_turn);
    }

    let mut streams: [Vec<TimedReading>; 4] = Default::default();
    // Per figure and axis: bin -> values, feeding the ready samples.
    let mut bins: Vec<[Vec<Vec<f64>>; N_AXES]> =
        vec![std::array::from_fn(|_| vec![Vec::new(); SAMPLE_LEN]); n_figures];

    for axis in Axis::ALL {
        let is_yaw = axis == Axis::Yaw;
        let stream = &mut streams[axis.index()];
        let mut t = 0.0f64;
        let mut prev_ns = i64::MIN;
        loop {
            t += exp.sample(&mut rng);
            if t >= total {
                break;
            }
            let mut t_ns = (t * 1e9).round() as i64;
            if t_ns <= prev_ns {
                t_ns = prev_ns + 1;
            }
            prev_ns = t_ns;
            let t_q = t_ns as f64 / 1e9;

            let mut value = if is_yaw {
                if t_q < config.intro_s {
                    initial_heading
                } else {
                    *headings.last().unwrap()
                }
            } else {
                0.0
            };
            let mut sigma = 0.0;
            let mut figure: Option<(usize, usize)> = None;
            if t_q >= config.intro_s && t_q < dance_end {
                let k = (((t_q - config.intro_s) / measure) as usize).min(n_figures - 1);
                let (start, end) = spec.nominal_bounds(k);
                let u = (t_q - start) / (end - start);
                let template = &config.templates[&labels[k]];
                value = template.value(axis, u);
                if is_yaw {
                    value += headings[k];
                }
                sigma = template.noise_sigma[axis.index()];
                let b = ((u * SAMPLE_LEN as f64).floor() as isize).clamp(0, SAMPLE_LEN as isize - 1)
                    as usize;
                figure = Some((k, b));
            }
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("validated sigma");
                value += noise.sample(&mut rng);
            }
            // The log stores what the sensor reports: yaw wrapped at +/-180.
            let logged = if is_yaw { wrap_angle(value) } else { value };
            stream.push(TimedReading {
                t_ns,
                value: logged,
            });
            if let Some((k, b)) = figure {
                bins[k][axis.index()][b].push(value);
            }
        }
    }

    let figures: Vec<FigureSample> = bins
        .iter()
        .zip(&labels)
        .map(|(fig_bins, &label)| {
            let rows: Vec<Vec<f64>> = fig_bins
                .iter()
                .map(|axis_bins| fill_row(axis_bins))
                .collect();
            FigureSample::from_rows(&rows, Some(label))
                .expect("template values and Gaussian noise are finite")
        })
        .collect();

    let log = RawLog::new(streams).expect("generated streams are non-empty and sorted");
    GeneratedDance {
        dance: DanceSequence {
            id: format!("dance-{index:03}"),
            tempo_bpm: config.tempo_bpm,
            intro_s: config.intro_s,
            figures,
        },
        log,
        labels,
    }
}

/// Median per bin, empty bins forward-filled (leading gaps copy the first
/// filled bin).
fn fill_row(axis_bins: &[Vec<f64>]) -> Vec<f64> {
    let mut row = vec![f64::NAN; SAMPLE_LEN];
    for (b, bin) in axis_bins.iter().enumerate() {
        if bin.is_empty() {
            continue;
        }
        let mut vals = bin.clone();
        vals.sort_unstable_by(f64::total_cmp);
        let n = vals.len();
        row[b] = if n % 2 == 1 {
            vals[n / 2]
        } else {
            (vals[n / 2 - 1] + vals[n / 2]) / 2.0
        };
    }
    let first = row
        .iter()
        .position(|v| !v.is_nan())
        .expect("dense sampling leaves at least one bin filled");
    for b in 0..first {
        row[b] = row[first];
    }
    for b in first + 1..SAMPLE_LEN {
        if row[b].is_nan() {
            row[b] = row[b - 1];
        }
    }
    row
}

/// Generate the whole corpus, one dance per index; parallel per dance with
/// the `parallel` feature, byte-identical either way.
pub fn gen_corpus(config: &SynthConfig) -> Result<Vec<GeneratedDance>, SynthError> {
    config.validate()?;
    Ok(par::map_indices(config.n_dances, |i| gen_dance(config, i)))
}

/// Bundle generated dances into a labeled dataset.
pub fn corpus_dataset(dances: &[GeneratedDance]) -> Dataset {
    Dataset::new(dances.iter().map(|g| g.dance.clone()).collect())
        .expect("generated ids are unique")
}

/// The ground-truth labels format: one row per figure.
pub fn labels_to_csv(per_dance: &[(String, Vec<FigureLabel>)]) -> String {
    let mut out = String::from("dance_id,position,label\n");
    for (dance_id, labels) in per_dance {
        for (position, label) in labels.iter().enumerate() {
            out.push_str(&format!("{dance_id},{position},{label}\n"));
        }
    }
    out
}

/// Parse the labels CSV back into per-dance label sequences (file order).
pub fn labels_from_csv(content: &str) -> Result<Vec<(String, Vec<FigureLabel>)>, SynthError> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == "dance_id,position,label" => {}
        _ => {
            return Err(SynthError::Parse(
                "labels csv must start with header 'dance_id,position,label'".to_string(),
            ))
        }
    }
    let mut out: Vec<(String, Vec<FigureLabel>)> = Vec::new();
    for (idx, raw_line) in lines {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(SynthError::Parse(format!(
                "labels csv line {line}: expected 3 columns"
            )));
        }
        let label = FigureLabel::from_short_name(fields[2])
            .map_err(|e| SynthError::Parse(format!("labels csv line {line}: {e}")))?;
        match out.last_mut() {
            Some((id, seq)) if *id == fields[0] => seq.push(label),
            _ => out.push((fields[0].to_string(), vec![label])),
        }
    }
    Ok(out)
}
