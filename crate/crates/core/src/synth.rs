//! Parametric FHR-like signals with ground-truth labels.
//!
//! A record is a flat baseline plus smooth acceleration/deceleration bumps,
//! correlated Gaussian variability and Bernoulli dropouts (written as 0).
//! Abnormal records additionally carry sustained bradycardia episodes inside
//! the final 20 minutes and half the variability.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::{self, ClassLabel, ClinicalMetadata, SignalRecord};

/// Shortest and shallowest bradycardia episode an abnormal record carries.
pub const MIN_BRADY_DEPTH_BPM: f64 = 20.0;
pub const MIN_BRADY_DURATION_S: f64 = 180.0;
/// Window (from the end of the record) that holds the bradycardia episodes.
const BRADY_WINDOW_S: f64 = 20.0 * 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub baseline_bpm: f64,
    /// Per-record baseline offset drawn uniformly in `±baseline_jitter_bpm`,
    /// clamped to [110, 160].
    pub baseline_jitter_bpm: f64,
    pub n_accels: usize,
    pub accel_amplitude_bpm: f64,
    pub accel_duration_s: f64,
    pub n_decels: usize,
    pub decel_amplitude_bpm: f64,
    pub decel_duration_s: f64,
    /// Stationary std of the variability process.
    pub noise_std: f64,
    /// Lag-one autocorrelation of the variability process, in [0, 1).
    pub noise_correlation: f64,
    pub dropout_rate: f64,
    pub duration_min: f64,
    pub sample_rate_hz: f64,
    pub n_brady: usize,
    pub brady_depth_bpm: f64,
    pub brady_duration_s: f64,
    pub abnormal: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            baseline_bpm: 140.0,
            baseline_jitter_bpm: 10.0,
            n_accels: 3,
            accel_amplitude_bpm: 15.0,
            accel_duration_s: 30.0,
            n_decels: 1,
            decel_amplitude_bpm: 15.0,
            decel_duration_s: 40.0,
            noise_std: 5.0,
            noise_correlation: 0.9,
            dropout_rate: 0.02,
            duration_min: 30.0,
            sample_rate_hz: ingest::DEFAULT_SAMPLE_RATE_HZ,
            n_brady: 1,
            brady_depth_bpm: 35.0,
            brady_duration_s: 300.0,
            abnormal: false,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic parameters: {msg}")));
        if !(110.0..=160.0).contains(&self.baseline_bpm) {
            return bad(format!("baseline_bpm {} outside [110, 160]", self.baseline_bpm));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1]", self.dropout_rate));
        }
        if !(0.0..1.0).contains(&self.noise_correlation) {
            return bad(format!("noise_correlation {} outside [0, 1)", self.noise_correlation));
        }
        let positive = [
            ("accel_duration_s", self.accel_duration_s),
            ("decel_duration_s", self.decel_duration_s),
            ("duration_min", self.duration_min),
            ("sample_rate_hz", self.sample_rate_hz),
            ("brady_duration_s", self.brady_duration_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("baseline_jitter_bpm", self.baseline_jitter_bpm),
            ("accel_amplitude_bpm", self.accel_amplitude_bpm),
            ("decel_amplitude_bpm", self.decel_amplitude_bpm),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.abnormal {
            if self.n_brady == 0 {
                return bad("abnormal records need at least one bradycardia episode".into());
            }
            if self.brady_depth_bpm < MIN_BRADY_DEPTH_BPM {
                return bad(format!("brady_depth_bpm must be at least {MIN_BRADY_DEPTH_BPM}"));
            }
            if self.brady_duration_s < MIN_BRADY_DURATION_S {
                return bad(format!("brady_duration_s must be at least {MIN_BRADY_DURATION_S}"));
            }
            let window = BRADY_WINDOW_S.min(self.duration_min * 60.0);
            if self.n_brady as f64 * self.brady_duration_s > window {
                return bad(format!(
                    "{} episodes of {} s do not fit in the final {window} s",
                    self.n_brady, self.brady_duration_s
                ));
            }
        }
        Ok(())
    }

    pub fn with_abnormal(&self, abnormal: bool) -> Self {
        SynthParams {
            abnormal,
            ..self.clone()
        }
    }
}

/// Raised-cosine bump of unit height over `[start, start + len)` samples.
fn add_bump(signal: &mut [f64], start: f64, len: f64, amplitude: f64) {
    let lo = start.max(0.0).floor() as usize;
    let hi = ((start + len).ceil() as usize).min(signal.len());
    for (i, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
        let u = (i as f64 - start) / len;
        if (0.0..=1.0).contains(&u) {
            *v += amplitude * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos());
        }
    }
}

/// Flat-bottomed dip: a short cosine ramp down, plateau, ramp up. The plateau
/// alone lasts `len` samples at full depth.
fn add_plateau_dip(signal: &mut [f64], start: usize, len: usize, ramp: usize, depth: f64) {
    let n = signal.len();
    for k in 0..ramp {
        let w = 0.5 * (1.0 - (std::f64::consts::PI * (k as f64 + 0.5) / ramp as f64).cos());
        if let Some(i) = start.checked_sub(ramp - k) {
            if i < n {
                signal[i] -= depth * w;
            }
        }
        let j = start + len + (ramp - 1 - k);
        if j < n {
            signal[j] -= depth * w;
        }
    }
    for v in signal.iter_mut().skip(start).take(len) {
        *v -= depth;
    }
}

/// One synthetic recording; deterministic per `(params, seed)`.
pub fn generate_record(params: &SynthParams, seed: u64) -> Result<(SignalRecord, ClassLabel)> {
    generate_named(params, seed, format!("syn{seed:016x}"))
}

fn generate_named(params: &SynthParams, seed: u64, record_id: String) -> Result<(SignalRecord, ClassLabel)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs_hz = params.sample_rate_hz;
    let n = (params.duration_min * 60.0 * fs_hz).round() as usize;
    if n == 0 {
        return Err(Error::Config("synthetic record would be empty".into()));
    }

    let jitter = if params.baseline_jitter_bpm > 0.0 {
        rng.random_range(-params.baseline_jitter_bpm..=params.baseline_jitter_bpm)
    } else {
        0.0
    };
    let baseline = (params.baseline_bpm + jitter).clamp(110.0, 160.0);
    let mut fhr = vec![baseline; n];

    let place = |rng: &mut ChaCha8Rng, len: f64| -> f64 {
        let span = (n as f64 - len).max(0.0);
        rng.random_range(0.0..=span)
    };
    let accel_len = params.accel_duration_s * fs_hz;
    for _ in 0..params.n_accels {
        let at = place(&mut rng, accel_len);
        add_bump(&mut fhr, at, accel_len, params.accel_amplitude_bpm);
    }
    let decel_len = params.decel_duration_s * fs_hz;
    for _ in 0..params.n_decels {
        let at = place(&mut rng, decel_len);
        add_bump(&mut fhr, at, decel_len, -params.decel_amplitude_bpm);
    }

    let mut noise_std = params.noise_std;
    if params.abnormal {
        noise_std *= 0.5;
        // Non-overlapping episodes in equal slots of the final window.
        let window = (BRADY_WINDOW_S.min(params.duration_min * 60.0) * fs_hz) as usize;
        let window_start = n - window.min(n);
        let len = (params.brady_duration_s * fs_hz).round() as usize;
        let ramp = ((20.0 * fs_hz) as usize).max(1);
        let slot = window / params.n_brady;
        for e in 0..params.n_brady {
            let lead = ramp.min(slot.saturating_sub(len));
            let slack = slot.saturating_sub(len + 2 * ramp);
            let start = window_start + e * slot + lead + rng.random_range(0..=slack);
            add_plateau_dip(&mut fhr, start, len, ramp, params.brady_depth_bpm);
        }
    }

    if noise_std > 0.0 {
        let rho = params.noise_correlation;
        let innovation = Normal::new(0.0, noise_std * (1.0 - rho * rho).sqrt())
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let mut state = Normal::new(0.0, noise_std)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?
            .sample(&mut rng);
        for v in fhr.iter_mut() {
            *v += state;
            state = rho * state + innovation.sample(&mut rng);
        }
    }

    if params.dropout_rate > 0.0 {
        for v in fhr.iter_mut() {
            if rng.random_bool(params.dropout_rate) {
                *v = 0.0;
            }
        }
    }

    let label = if params.abnormal {
        ClassLabel::Abnormal
    } else {
        ClassLabel::Normal
    };
    let metadata = synthetic_metadata(&record_id, label);
    Ok((
        SignalRecord {
            record_id,
            fhr,
            sample_rate_hz: fs_hz,
            metadata,
        },
        label,
    ))
}

/// Metadata that `assign_label` maps back to `label`.
pub fn synthetic_metadata(record_id: &str, label: ClassLabel) -> ClinicalMetadata {
    match label {
        ClassLabel::Abnormal => ClinicalMetadata::new(record_id, 7.00, 4),
        ClassLabel::Normal => ClinicalMetadata::new(record_id, 7.35, 9),
    }
}

/// `n_normal` normal records followed by `n_abnormal` abnormal ones, each with
/// its own derived seed. The `abnormal` flag of `base` is ignored.
pub fn generate_dataset(
    n_normal: usize,
    n_abnormal: usize,
    base: &SynthParams,
    seed: u64,
) -> Result<Vec<(SignalRecord, ClassLabel)>> {
    if n_normal + n_abnormal == 0 {
        return Err(Error::Config("synthetic dataset needs at least one record".into()));
    }
    let normal = base.with_abnormal(false);
    let abnormal = base.with_abnormal(true);
    (0..n_normal + n_abnormal)
        .map(|i| {
            let params = if i < n_normal { &normal } else { &abnormal };
            generate_named(params, derive_seed(seed, i as u64), format!("syn{i:04}"))
        })
        .collect()
}

/// Writes one `<record_id>.csv` per record plus `metadata.csv` into `dir`.
pub fn write_dataset(dir: &Path, data: &[(SignalRecord, ClassLabel)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (rec, _) in data {
        let path = dir.join(format!("{}.csv", rec.record_id));
        fs::write(&path, ingest::write_record_csv(rec)).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("metadata.csv");
    fs::write(&path, ingest::write_metadata_csv(data.iter().map(|(r, _)| &r.metadata)))
        .map_err(|e| Error::io(&path, e))
}
