//! Experiment configuration: JSON with sections `data`, `preprocess`, `split`,
//! `model`, `grid`, `eval` and `output`. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ae::AeConfig;
use crate::error::{Error, Result};
use crate::ganomaly::GanomalyConfig;
use crate::iforest::IForestConfig;
use crate::preprocess::PreprocessConfig;
use crate::synth::SynthParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Iforest,
    Ae,
    Ganomaly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Iforest, ModelKind::Ae, ModelKind::Ganomaly];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Iforest => "iforest",
            ModelKind::Ae => "ae",
            ModelKind::Ganomaly => "ganomaly",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`; valid options: iforest, ae, ganomaly")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// CSV recordings in `signal_dir` labeled from `metadata_file`.
    Directory { signal_dir: PathBuf, metadata_file: PathBuf },
    Synthetic {
        n_normal: usize,
        n_abnormal: usize,
        #[serde(default)]
        params: SynthParams,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            n_normal: 370,
            n_abnormal: 182,
            params: SynthParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Validation share of the training part for every model but GANomaly.
    pub validation_fraction: f64,
    pub ganomaly_validation_fraction: f64,
    /// Bootstrap the GANomaly training core back to the pre-validation size.
    pub ganomaly_bootstrap: bool,
    /// Seed of the test split; kept fixed across repeated runs.
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.1,
            validation_fraction: 0.1,
            ganomaly_validation_fraction: 0.4,
            ganomaly_bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub iforest: Option<IForestConfig>,
    pub ae: Option<AeConfig>,
    pub ganomaly: Option<GanomalyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Models to run; `model` entries are defaults when omitted here.
    pub models: Vec<ModelKind>,
    /// Number of repeated runs; run `r` trains with seed `seed + r`.
    pub seeds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            models: vec![ModelKind::Ae],
            seeds: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub curves_svg: bool,
    pub save_models: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs"),
            curves_svg: true,
            save_models: true,
        }
    }
}

/// Per-model grids: parameter path (dots for nesting, e.g.
/// `adam.learning_rate`) to the candidate values.
pub type Grid = BTreeMap<String, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub iforest: Grid,
    pub ae: Grid,
    pub ganomaly: Grid,
}

impl GridSection {
    pub fn for_model(&self, kind: ModelKind) -> &Grid {
        match kind {
            ModelKind::Iforest => &self.iforest,
            ModelKind::Ae => &self.ae,
            ModelKind::Ganomaly => &self.ganomaly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub grid: GridSection,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {} column {}: {}", e.line(), e.column(), strip_position(&e)))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        for (name, f) in [
            ("test_fraction", self.split.test_fraction),
            ("validation_fraction", self.split.validation_fraction),
            ("ganomaly_validation_fraction", self.split.ganomaly_validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("split.{name} must lie in (0, 1), got {f}")));
            }
        }
        if self.eval.models.is_empty() {
            return Err(Error::Config("eval.models is empty".into()));
        }
        if self.eval.seeds == 0 {
            return Err(Error::Config("eval.seeds must be at least 1".into()));
        }
        if let DataConfig::Synthetic { params, .. } = &self.data {
            params.validate()?;
        }
        if let Some(c) = &self.model.ae {
            c.validate()?;
        }
        if let Some(c) = &self.model.ganomaly {
            c.validate()?;
        }
        for kind in ModelKind::ALL {
            for (param, values) in self.grid.for_model(kind) {
                if values.is_empty() {
                    return Err(Error::Config(format!("grid.{kind}.{param} has no values")));
                }
                // Each candidate must produce a valid model config.
                for v in values {
                    match kind {
                        ModelKind::Iforest => {
                            with_param(&self.iforest(), param, v)?;
                        }
                        ModelKind::Ae => with_param(&self.ae(), param, v)?.validate()?,
                        ModelKind::Ganomaly => with_param(&self.ganomaly(), param, v)?.validate()?,
                    }
                }
            }
        }
        Ok(())
    }

    pub fn iforest(&self) -> IForestConfig {
        self.model.iforest.clone().unwrap_or_default()
    }

    pub fn ae(&self) -> AeConfig {
        self.model.ae.clone().unwrap_or_default()
    }

    pub fn ganomaly(&self) -> GanomalyConfig {
        self.model.ganomaly.clone().unwrap_or_default()
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

/// Returns `config` with the field at dotted `path` replaced by `value`.
pub fn with_param<T: Serialize + serde::de::DeserializeOwned>(config: &T, path: &str, value: &Value) -> Result<T> {
    let mut tree = serde_json::to_value(config)?;
    let mut node = &mut tree;
    for key in path.split('.') {
        node = node
            .get_mut(key)
            .ok_or_else(|| Error::Config(format!("grid parameter `{path}`: no field `{key}`")))?;
    }
    *node = value.clone();
    serde_json::from_value(tree).map_err(|e| Error::Config(format!("grid parameter `{path}` = {value}: {e}")))
}

/// Cartesian product of a grid, in key order; a single empty assignment for
/// an empty grid.
pub fn grid_points(grid: &Grid) -> Vec<Vec<(String, Value)>> {
    let mut points = vec![Vec::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.ae().k_sigma, 1.0);
        assert_eq!(cfg.ganomaly().k_sigma, 5.0);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.eval.models = ModelKind::ALL.to_vec();
        cfg.grid.ae.insert("k_sigma".into(), vec![1.0.into(), 2.0.into()]);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = "{\n  \"split\": {\n    \"test_fraction\": 0.1,\n    \"tset\": 3\n  }\n}";
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("tset"), "{err}");
    }

    #[test]
    fn unknown_model_names_options() {
        let err = ExperimentConfig::from_json(r#"{"model": {"svm": {}}}"#).unwrap_err().to_string();
        for name in ["iforest", "ae", "ganomaly"] {
            assert!(err.contains(name), "{err}");
        }
        let err = ExperimentConfig::from_json(r#"{"eval": {"models": ["svm"]}}"#).unwrap_err().to_string();
        assert!(err.contains("ganomaly"), "{err}");
        assert!("svm".parse::<ModelKind>().unwrap_err().to_string().contains("iforest"));
        assert_eq!("ae".parse::<ModelKind>().unwrap(), ModelKind::Ae);
    }

    #[test]
    fn data_sources() {
        let cfg = ExperimentConfig::from_json(
            r#"{"data": {"kind": "directory", "signal_dir": "d", "metadata_file": "d/m.csv"}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.data, DataConfig::Directory { .. }));
        let cfg = ExperimentConfig::from_json(r#"{"data": {"kind": "synthetic", "n_normal": 4, "n_abnormal": 2}}"#).unwrap();
        assert!(matches!(cfg.data, DataConfig::Synthetic { n_normal: 4, .. }));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"split": {"test_fraction": 1.5}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"eval": {"seeds": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"preprocess": {"median_window": 4}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"grid": {"ae": {"nope": [1]}}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"grid": {"ae": {"batch_size": [0]}}}"#).is_err());
    }

    #[test]
    fn nested_grid_parameter() {
        let cfg = AeConfig::default();
        let out = with_param(&cfg, "adam.learning_rate", &Value::from(0.01)).unwrap();
        assert_eq!(out.adam.learning_rate, 0.01);
        assert_eq!(out.batch_size, cfg.batch_size);
    }

    #[test]
    fn grid_product() {
        let mut g = Grid::new();
        assert_eq!(grid_points(&g), vec![Vec::new()]);
        g.insert("a".into(), vec![1.into(), 2.into()]);
        g.insert("b".into(), vec![3.into(), 4.into(), 5.into()]);
        let pts = grid_points(&g);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![("a".to_string(), Value::from(1)), ("b".to_string(), Value::from(3))]);
    }
}
