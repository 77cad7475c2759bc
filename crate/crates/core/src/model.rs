//! Persisted detectors: one JSON artifact holding the trained model, its
//! calibrated threshold and the preprocessing settings features were built with.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ae::{self, AeModel};
use crate::config::ModelKind;
use crate::error::{Error, Result};
use crate::ganomaly::GanomalyModel;
use crate::iforest::{self, IsolationForestModel};
use crate::ingest::ClassLabel;
use crate::preprocess::{FeatureVector, PreprocessConfig};
use crate::stats;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Detector {
    Iforest(IsolationForestModel),
    Ae(AeModel),
    Ganomaly(GanomalyModel),
}

impl Detector {
    pub fn kind(&self) -> ModelKind {
        match self {
            Detector::Iforest(_) => ModelKind::Iforest,
            Detector::Ae(_) => ModelKind::Ae,
            Detector::Ganomaly(_) => ModelKind::Ganomaly,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Detector::Iforest(m) => m.feature_dim,
            Detector::Ae(m) => m.feature_dim(),
            Detector::Ganomaly(m) => m.feature_dim(),
        }
    }

    /// The decision threshold: `tau` for the neural models, the contamination
    /// quantile for the forest.
    pub fn threshold(&self) -> f64 {
        match self {
            Detector::Iforest(m) => m.threshold,
            Detector::Ae(m) => m.tau,
            Detector::Ganomaly(m) => m.tau,
        }
    }

    pub fn calibration_scores(&self) -> &[f64] {
        match self {
            Detector::Iforest(m) => &m.calibration_scores,
            Detector::Ae(m) => &m.calibration_scores,
            Detector::Ganomaly(m) => &m.calibration_scores,
        }
    }

    /// Threshold recomputed from the stored calibration scores.
    pub fn recompute_threshold(&self) -> Result<f64> {
        match self {
            Detector::Iforest(m) => iforest::if_threshold(&m.calibration_scores, m.contamination),
            Detector::Ae(m) => ae::calibrate_threshold(&m.calibration_scores, m.k_sigma),
            Detector::Ganomaly(m) => ae::calibrate_threshold(&m.calibration_scores, m.k_sigma),
        }
    }

    pub fn score_batch(&self, data: &[FeatureVector]) -> Result<Vec<f64>> {
        if let Some(bad) = data.iter().find(|f| f.x.len() != self.feature_dim()) {
            return Err(Error::shape(
                format!("feature dim {} for {} model", self.feature_dim(), self.kind()),
                format!("{} for record {}", bad.x.len(), bad.record_id),
            ));
        }
        match self {
            Detector::Iforest(m) => m.score_batch(&rows(data)),
            Detector::Ae(m) => m.score_batch(data),
            Detector::Ganomaly(m) => m.score_batch(data),
        }
    }

    /// Sets the threshold from training scores. `param` is `k` for the neural
    /// models and the contamination for the forest.
    pub fn calibrate(&mut self, training: &[FeatureVector], param: f64) -> Result<f64> {
        match self {
            Detector::Iforest(m) => m.calibrate(&rows(training), param),
            Detector::Ae(m) => m.calibrate(training, param),
            Detector::Ganomaly(m) => m.calibrate(training, param),
        }
    }

    pub fn calibration_param(&self) -> f64 {
        match self {
            Detector::Iforest(m) => m.contamination,
            Detector::Ae(m) => m.k_sigma,
            Detector::Ganomaly(m) => m.k_sigma,
        }
    }

    pub fn decide(&self, score: f64) -> ClassLabel {
        ae::classify(score, self.threshold())
    }
}

fn rows(data: &[FeatureVector]) -> Vec<Vec<f64>> {
    data.iter().map(|f| f.x.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub preprocess: PreprocessConfig,
    pub detector: Detector,
}

impl ModelArtifact {
    pub fn new(preprocess: PreprocessConfig, detector: Detector) -> Self {
        ModelArtifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            preprocess,
            detector,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.detector.threshold().is_finite() {
            return Err(Error::Model("refusing to persist an uncalibrated model".into()));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact = serde_json::from_str(text)?;
        if artifact.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported artifact version {} (expected {ARTIFACT_FORMAT_VERSION})",
                artifact.format_version
            )));
        }
        if artifact.preprocess.feature_dim != artifact.detector.feature_dim() {
            return Err(Error::Model(format!(
                "preprocessing yields {} features but the model expects {}",
                artifact.preprocess.feature_dim,
                artifact.detector.feature_dim()
            )));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean and population std of one group of scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGroup {
    pub split: String,
    pub label: ClassLabel,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub split: String,
    pub record_id: String,
    pub label: ClassLabel,
    pub score: f64,
}

/// Per-split, per-class score summaries with Gaussian fits, the raw scores
/// and the threshold line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub threshold: f64,
    pub groups: Vec<ScoreGroup>,
    /// Split/class combinations with no samples.
    pub omitted: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreDistribution {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("split,record_id,label,score\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.split, r.record_id, r.label, r.score));
        }
        out
    }
}

/// Summarizes already computed scores, so the test partition need not be
/// scored twice.
pub fn score_distribution_from_scores(threshold: f64, splits: &[(&str, &[FeatureVector], &[f64])]) -> Result<ScoreDistribution> {
    let mut out = ScoreDistribution {
        threshold,
        groups: Vec::new(),
        omitted: Vec::new(),
        rows: Vec::new(),
    };
    for (name, data, scores) in splits {
        if data.len() != scores.len() {
            return Err(Error::shape(format!("{} scores", data.len()), scores.len()));
        }
        for (f, &s) in data.iter().zip(scores.iter()) {
            out.rows.push(ScoreRow {
                split: name.to_string(),
                record_id: f.record_id.clone(),
                label: f.label,
                score: s,
            });
        }
        for label in [ClassLabel::Normal, ClassLabel::Abnormal] {
            let group: Vec<f64> = data
                .iter()
                .zip(scores.iter())
                .filter(|(f, _)| f.label == label)
                .map(|(_, &s)| s)
                .collect();
            if group.is_empty() {
                out.omitted.push(format!("{name}/{label}"));
                continue;
            }
            out.groups.push(ScoreGroup {
                split: name.to_string(),
                label,
                count: group.len(),
                mean: stats::mean(&group),
                std: stats::population_std(&group),
            });
        }
    }
    Ok(out)
}

pub fn score_distribution_report(
    detector: &Detector,
    train: &[FeatureVector],
    test: &[FeatureVector],
) -> Result<ScoreDistribution> {
    let train_scores = detector.score_batch(train)?;
    let test_scores = detector.score_batch(test)?;
    score_distribution_from_scores(
        detector.threshold(),
        &[("train", train, &train_scores), ("test", test, &test_scores)],
    )
}
