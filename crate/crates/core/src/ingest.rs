//! Raw log parsing, tempo segmentation, and median downsampling.
//!
//! A raw log is a CSV of irregular sensor readings (`t_ns,axis,value`, one
//! reading per line, header required). Segmentation slices the log into one
//! window per figure from the song tempo: window `k` covers
//! `[intro + k*m - e, intro + (k+1)*m + e]` seconds, where `m = 60/tempo`
//! is the measure length and `e` the timing-error extension (default
//! 0.35 s). Each window is then reduced to exactly 4×100 values by taking
//! the median of 100 evenly-spaced time bins per axis.
//!
//! Yaw is unwrapped across the whole stream before segmentation: medians of
//! wrapped angles are meaningless at the ±180° seam. A flag disables this
//! for logs known to be continuous already.

use std::path::Path;

use thiserror::Error;

use crate::data::{Axis, FigureSample, TimedReading};
use crate::{par, N_AXES, SAMPLE_LEN};

/// Four time-sorted per-axis streams of raw readings.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLog {
    streams: [Vec<TimedReading>; 4],
}

impl RawLog {
    /// Build from per-axis streams, validating presence and strict time
    /// order.
    pub fn new(streams: [Vec<TimedReading>; 4]) -> Result<RawLog, IngestError> {
        for axis in Axis::ALL {
            let stream = &streams[axis.index()];
            if stream.is_empty() {
                return Err(IngestError::MissingAxis { axis });
            }
            for pair in stream.windows(2) {
                if pair[1].t_ns <= pair[0].t_ns {
                    return Err(IngestError::NonMonotonicTime { axis, line: None });
                }
            }
        }
        Ok(RawLog { streams })
    }

    pub fn stream(&self, axis: Axis) -> &[TimedReading] {
        &self.streams[axis.index()]
    }

    /// Reading counts per axis, in axis order.
    pub fn counts(&self) -> [usize; N_AXES] {
        [
            self.streams[0].len(),
            self.streams[1].len(),
            self.streams[2].len(),
            self.streams[3].len(),
        ]
    }

    /// End of the usable log: the earliest last-timestamp over the axes.
    pub fn end_seconds(&self) -> f64 {
        self.streams
            .iter()
            .map(|s| s.last().expect("streams are non-empty").t_seconds())
            .fold(f64::INFINITY, f64::min)
    }

    /// Replace the yaw stream with its unwrapped version.
    pub fn with_unwrapped_yaw(mut self) -> RawLog {
        let yaw = &mut self.streams[Axis::Yaw.index()];
        let values: Vec<f64> = yaw.iter().map(|r| r.value).collect();
        for (r, v) in yaw.iter_mut().zip(unwrap_yaw(&values)) {
            r.value = v;
        }
        self
    }
}

/// How to slice a log into figure windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationSpec {
    pub tempo_bpm: f64,
    pub intro_s: f64,
    pub n_figures: usize,
    pub extension_s: f64,
}

/// Default window extension in seconds, covering slight dancer timing error.
pub const DEFAULT_EXTENSION_S: f64 = 0.35;

impl SegmentationSpec {
    pub fn new(
        tempo_bpm: f64,
        intro_s: f64,
        n_figures: usize,
        extension_s: f64,
    ) -> Result<SegmentationSpec, IngestError> {
        let measure = 60.0 / tempo_bpm;
        if !tempo_bpm.is_finite() || tempo_bpm <= 0.0 || !measure.is_finite() {
            return Err(IngestError::BadSpec {
                reason: format!("tempo must be positive and finite, got {tempo_bpm}"),
            });
        }
        if !intro_s.is_finite() || intro_s < 0.0 {
            return Err(IngestError::BadSpec {
                reason: format!("intro must be non-negative, got {intro_s}"),
            });
        }
        if n_figures == 0 {
            return Err(IngestError::BadSpec {
                reason: "figure count must be positive".to_string(),
            });
        }
        if !extension_s.is_finite() || extension_s < 0.0 {
            return Err(IngestError::BadSpec {
                reason: format!("extension must be non-negative, got {extension_s}"),
            });
        }
        Ok(SegmentationSpec {
            tempo_bpm,
            intro_s,
            n_figures,
            extension_s,
        })
    }

    /// Measure (= figure) length in seconds.
    pub fn measure_s(&self) -> f64 {
        60.0 / self.tempo_bpm
    }

    /// Extended bounds of window `k` in seconds.
    pub fn window_bounds(&self, k: usize) -> (f64, f64) {
        let m = self.measure_s();
        let start = self.intro_s + k as f64 * m - self.extension_s;
        let end = self.intro_s + (k + 1) as f64 * m + self.extension_s;
        (start, end)
    }

    /// Unextended bounds of window `k`; these tile the dance interval.
    pub fn nominal_bounds(&self, k: usize) -> (f64, f64) {
        let m = self.measure_s();
        (
            self.intro_s + k as f64 * m,
            self.intro_s + (k + 1) as f64 * m,
        )
    }
}

/// One per-figure slice of the log, extended bounds plus the readings that
/// fall inside them.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub streams: [Vec<TimedReading>; 4],
}

/// Ingest failures.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("axis {axis}: timestamps not strictly increasing{}",
            line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    NonMonotonicTime { axis: Axis, line: Option<usize> },
    #[error("axis {axis} has no readings")]
    MissingAxis { axis: Axis },
    #[error("log ends at {log_end_s:.3}s, before the last window's nominal end {required_s:.3}s")]
    InsufficientData { log_end_s: f64, required_s: f64 },
    #[error("window {window}: axis {axis} has no readings")]
    EmptyWindow { window: usize, axis: Axis },
    #[error("bad segmentation spec: {reason}")]
    BadSpec { reason: String },
}

/// Parse a raw log CSV from a string.
///
/// Format: header `t_ns,axis,value`, then one reading per line. Timestamps
/// must be strictly increasing within each axis; rows of different axes may
/// interleave freely.
pub fn parse_log_str(content: &str) -> Result<RawLog, IngestError> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == "t_ns,axis,value" => {}
        _ => {
            return Err(IngestError::MalformedRow {
                line: 1,
                reason: "missing header 't_ns,axis,value'".to_string(),
            })
        }
    }
    let mut streams: [Vec<TimedReading>; 4] = Default::default();
    for (idx, raw_line) in lines {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let (t_str, axis_str, value_str) =
            match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(t), Some(a), Some(v), None) => (t, a, v),
                _ => {
                    return Err(IngestError::MalformedRow {
                        line,
                        reason: "expected 3 comma-separated columns".to_string(),
                    })
                }
            };
        let t_ns: i64 = t_str.parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("bad timestamp {t_str:?}"),
        })?;
        let axis = Axis::from_name(axis_str).ok_or_else(|| IngestError::MalformedRow {
            line,
            reason: format!("unknown axis {axis_str:?}"),
        })?;
        let value: f64 = value_str.parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("bad value {value_str:?}"),
        })?;
        if !value.is_finite() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("non-finite value {value_str:?}"),
            });
        }
        let stream = &mut streams[axis.index()];
        if let Some(last) = stream.last() {
            if t_ns <= last.t_ns {
                return Err(IngestError::NonMonotonicTime {
                    axis,
                    line: Some(line),
                });
            }
        }
        stream.push(TimedReading { t_ns, value });
    }
    for axis in Axis::ALL {
        if streams[axis.index()].is_empty() {
            return Err(IngestError::MissingAxis { axis });
        }
    }
    Ok(RawLog { streams })
}

/// Parse a raw log CSV from a file.
pub fn parse_log(path: &Path) -> Result<RawLog, IngestError> {
    parse_log_str(&std::fs::read_to_string(path)?)
}

/// Serialize a log back to its CSV format, rows merged in time order
/// (ties in axis order). `parse_log_str` inverts this exactly.
pub fn log_to_csv(log: &RawLog) -> String {
    let mut rows: Vec<(i64, Axis, f64)> = Vec::new();
    for axis in Axis::ALL {
        for r in log.stream(axis) {
            rows.push((r.t_ns, axis, r.value));
        }
    }
    rows.sort_by_key(|a| (a.0, a.1.index()));
    let mut out = String::from("t_ns,axis,value\n");
    for (t_ns, axis, value) in rows {
        out.push_str(&format!("{t_ns},{axis},{value}\n"));
    }
    out
}

/// Unwrap a wrapped angle stream (degrees): each consecutive delta is
/// shifted by a multiple of 360° so its magnitude is at most 180°; the first
/// value is kept as-is.
pub fn unwrap_yaw(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev_raw = f64::NAN;
    let mut prev_unwrapped = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let unwrapped = if i == 0 {
            v
        } else {
            let delta = v - prev_raw;
            let wrapped_delta = delta - 360.0 * (delta / 360.0).round();
            prev_unwrapped + wrapped_delta
        };
        out.push(unwrapped);
        prev_raw = v;
        prev_unwrapped = unwrapped;
    }
    out
}

/// Slice the log into `n_figures` extended windows.
///
/// A reading belongs to window `k` when its timestamp lies in the closed
/// extended interval; the extension is silently truncated where the stream
/// ends. Fails with [`IngestError::InsufficientData`] when the log ends
/// before the last window's nominal (unextended) end.
pub fn segment(log: &RawLog, spec: &SegmentationSpec) -> Result<Vec<RawWindow>, IngestError> {
    let nominal_end = spec.nominal_bounds(spec.n_figures - 1).1;
    let log_end = log.end_seconds();
    if log_end < nominal_end {
        return Err(IngestError::InsufficientData {
            log_end_s: log_end,
            required_s: nominal_end,
        });
    }
    let mut windows = Vec::with_capacity(spec.n_figures);
    for k in 0..spec.n_figures {
        let (start, end) = spec.window_bounds(k);
        let mut streams: [Vec<TimedReading>; 4] = Default::default();
        for axis in Axis::ALL {
            // Streams are time-sorted, so each window is a contiguous run.
            let stream = log.stream(axis);
            let lo = stream.partition_point(|r| r.t_seconds() < start);
            let hi = stream.partition_point(|r| r.t_seconds() <= end);
            streams[axis.index()] = stream[lo..hi].to_vec();
        }
        windows.push(RawWindow {
            start_s: start,
            end_s: end,
            streams,
        });
    }
    Ok(windows)
}

/// Median of a non-empty slice; even counts average the two middle values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Reduce one window to a 4×100 sample.
///
/// The window is split into 100 evenly-spaced half-open time bins (the last
/// bin closed); each bin becomes the median of its readings. Empty bins copy
/// the nearest previously filled bin; leading empty bins copy the first
/// filled bin's value.
pub fn downsample(window: &RawWindow, window_index: usize) -> Result<FigureSample, IngestError> {
    let duration = window.end_s - window.start_s;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(N_AXES);
    for axis in Axis::ALL {
        let readings = &window.streams[axis.index()];
        if readings.is_empty() {
            return Err(IngestError::EmptyWindow {
                window: window_index,
                axis,
            });
        }
        let mut bins: Vec<Vec<f64>> = vec![Vec::new(); SAMPLE_LEN];
        for r in readings {
            let rel = (r.t_seconds() - window.start_s) / duration;
            let b = ((rel * SAMPLE_LEN as f64).floor() as isize).clamp(0, SAMPLE_LEN as isize - 1)
                as usize;
            bins[b].push(r.value);
        }
        let mut row = vec![f64::NAN; SAMPLE_LEN];
        for (b, bin) in bins.iter_mut().enumerate() {
            if !bin.is_empty() {
                row[b] = median(bin);
            }
        }
        // Forward-fill empty bins; leading gaps take the first filled value.
        let first_filled = row
            .iter()
            .position(|v| !v.is_nan())
            .expect("at least one reading implies at least one filled bin");
        let seed = row[first_filled];
        row[..first_filled].fill(seed);
        for b in first_filled + 1..SAMPLE_LEN {
            if row[b].is_nan() {
                row[b] = row[b - 1];
            }
        }
        rows.push(row);
    }
    FigureSample::from_rows(&rows, None).map_err(|e| IngestError::BadSpec {
        reason: format!("downsample produced an invalid sample: {e}"),
    })
}

/// Downsample all windows, in parallel with the `parallel` feature. Results
/// are identical to calling [`downsample`] in order.
pub fn downsample_windows(windows: &[RawWindow]) -> Result<Vec<FigureSample>, IngestError> {
    let results = par::map_indices(windows.len(), |k| downsample(&windows[k], k));
    results.into_iter().collect()
}

/// The full ingest pipeline: optional yaw unwrap, segment, downsample.
pub fn ingest_log(
    log: RawLog,
    spec: &SegmentationSpec,
    unwrap_yaw_stream: bool,
) -> Result<Vec<FigureSample>, IngestError> {
    let log = if unwrap_yaw_stream {
        log.with_unwrapped_yaw()
    } else {
        log
    };
    let windows = segment(&log, spec)?;
    downsample_windows(&windows)
}
