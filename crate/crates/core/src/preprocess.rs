//! FHR cleaning and featurization.
//!
//! The pipeline runs in a fixed order: out-of-range samples (and dropouts)
//! become missing, gaps are linearly interpolated, the result is median
//! smoothed, and the final segment is bin-averaged into a vector in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassLabel, SignalRecord};

pub const MIN_BPM: f64 = 50.0;
pub const MAX_BPM: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Odd window length in samples.
    pub median_window: usize,
    /// Length of the trailing segment kept for featurization.
    pub segment_minutes: f64,
    /// Output dimension d.
    pub feature_dim: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            median_window: 5,
            segment_minutes: 20.0,
            feature_dim: 480,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.median_window)?;
        if self.feature_dim == 0 {
            return Err(Error::Config("preprocess.feature_dim must be positive".into()));
        }
        if !(self.segment_minutes > 0.0 && self.segment_minutes.is_finite()) {
            return Err(Error::Config("preprocess.segment_minutes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSignal {
    pub values: Vec<f64>,
    /// `true` where the input sample was missing before interpolation.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub record_id: String,
    pub label: ClassLabel,
    pub x: Vec<f64>,
}

fn stage_error(message: impl Into<String>) -> Error {
    Error::Preprocess {
        record_id: String::new(),
        message: message.into(),
    }
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        Err(Error::Config(format!("median window must be odd and positive, got {window}")))
    } else {
        Ok(())
    }
}

/// Marks samples outside [50, 200] bpm, dropouts (0) and non-finite values as missing.
pub fn clip_physiological(signal: &[f64]) -> Vec<Option<f64>> {
    signal
        .iter()
        .map(|&v| (v.is_finite() && (MIN_BPM..=MAX_BPM).contains(&v)).then_some(v))
        .collect()
}

/// Fills interior gaps by linear interpolation between the nearest valid
/// neighbours and edge gaps by extending the nearest valid value.
pub fn interpolate_missing(signal: &[Option<f64>]) -> Result<CleanSignal> {
    let valid: Vec<usize> = signal
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect();
    let (&first, &last) = match (valid.first(), valid.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(stage_error("signal has no valid samples")),
    };

    let mut values = vec![0.0; signal.len()];
    let mask: Vec<bool> = signal.iter().map(Option::is_none).collect();
    let at = |i: usize| signal[i].expect("valid index");

    values[..=first].fill(at(first));
    values[last..].fill(at(last));
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (at(a), at(b));
        values[a] = va;
        let span = (b - a) as f64;
        for (k, slot) in values[a + 1..b].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *slot = va + (vb - va) * t;
        }
        values[b] = vb;
    }
    Ok(CleanSignal { values, mask })
}

/// Sliding-window median with boundary replication; preserves length.
pub fn median_smooth(signal: &CleanSignal, window: usize) -> Result<CleanSignal> {
    check_window(window)?;
    let n = signal.values.len();
    if window == 1 || n == 0 {
        return Ok(signal.clone());
    }
    let half = window / 2;
    let mut buf = vec![0.0; window];
    let values = (0..n)
        .map(|i| {
            for (k, slot) in buf.iter_mut().enumerate() {
                let j = (i + k).saturating_sub(half).min(n - 1);
                *slot = signal.values[j];
            }
            buf.sort_by(f64::total_cmp);
            buf[half]
        })
        .collect();
    Ok(CleanSignal {
        values,
        mask: signal.mask.clone(),
    })
}

/// Maps a bpm value into [0, 1].
pub fn normalize_bpm(v: f64) -> f64 {
    ((v - MIN_BPM) / (MAX_BPM - MIN_BPM)).clamp(0.0, 1.0)
}

/// Keeps the trailing `segment_len` samples, averages them into `d` uniform
/// bins and normalizes each bin mean.
pub fn featurize(signal: &CleanSignal, d: usize, segment_len: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    let n = signal.values.len();
    let start = n.saturating_sub(segment_len.max(1));
    let segment = &signal.values[start..];
    let t = segment.len();
    if t < d {
        return Err(stage_error(format!(
            "segment has {t} samples, fewer than feature dimension {d}"
        )));
    }
    Ok((0..d)
        .map(|i| {
            let lo = i * t / d;
            let hi = (i + 1) * t / d;
            let bin = &segment[lo..hi];
            normalize_bpm(bin.iter().sum::<f64>() / bin.len() as f64)
        })
        .collect())
}

/// Number of samples in the trailing segment for a given rate.
pub fn segment_samples(config: &PreprocessConfig, sample_rate_hz: f64) -> usize {
    (config.segment_minutes * 60.0 * sample_rate_hz).round() as usize
}

/// clip → interpolate → median smooth → featurize. Errors carry the record id.
pub fn preprocess_pipeline(
    record: &SignalRecord,
    label: ClassLabel,
    config: &PreprocessConfig,
) -> Result<FeatureVector> {
    let annotate = |e: Error| match e {
        Error::Preprocess { message, .. } => Error::Preprocess {
            record_id: record.record_id.clone(),
            message,
        },
        other => other,
    };
    if record.fhr.is_empty() {
        return Err(annotate(stage_error("empty signal")));
    }
    let marked = clip_physiological(&record.fhr);
    let filled = interpolate_missing(&marked).map_err(annotate)?;
    let smooth = median_smooth(&filled, config.median_window).map_err(annotate)?;
    let seg = segment_samples(config, record.sample_rate_hz);
    let x = featurize(&smooth, config.feature_dim, seg).map_err(annotate)?;
    Ok(FeatureVector {
        record_id: record.record_id.clone(),
        label,
        x,
    })
}

/// Runs the pipeline over a labeled collection, splitting successes from
/// per-record failures.
pub fn preprocess_all<'a>(
    records: impl IntoIterator<Item = &'a (SignalRecord, ClassLabel)>,
    config: &PreprocessConfig,
) -> (Vec<FeatureVector>, Vec<Error>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (rec, label) in records {
        match preprocess_pipeline(rec, *label, config) {
            Ok(f) => ok.push(f),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}
