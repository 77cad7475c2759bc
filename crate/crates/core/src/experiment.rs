//! Config-driven experiments: data → features → split → train on normals →
//! calibrate → optional grid search on validation F1 → a single pass over the
//! held-out test partition, repeated over several seeds.
//!
//! The test split is fixed by `split.seed`; repeated runs differ in the
//! validation carving, bootstrap draws and model initialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ae::{self, LossHistory};
use crate::config::{grid_points, with_param, DataConfig, ExperimentConfig, ModelKind};
use crate::datasets::{bootstrap_resample, derive_seed, normals_only, stratified_split, train_test_split, DatasetSplit};
use crate::error::{Error, Result};
use crate::ganomaly::{self, GanTrainingTrace};
use crate::iforest::{self, TrainingSubset};
use crate::ingest::{self, ClassLabel, SignalRecord, SkippedRecord};
use crate::metrics::{self, EvalReport, MeanStd, ScalarMetrics};
use crate::model::{score_distribution_from_scores, Detector, ModelArtifact, ScoreDistribution};
use crate::preprocess::{self, FeatureVector};
use crate::synth;

/// A value that can be taken exactly once; later attempts are errors.
#[derive(Debug)]
pub struct Sealed<T> {
    inner: Option<T>,
    len: usize,
}

impl<T> Sealed<Vec<T>> {
    pub fn new(value: Vec<T>) -> Self {
        Sealed {
            len: value.len(),
            inner: Some(value),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_open(&self) -> bool {
        self.inner.is_none()
    }

    pub fn open(&mut self) -> Result<Vec<T>> {
        self.inner
            .take()
            .ok_or_else(|| Error::Evaluation("test partition was already read in this run".into()))
    }
}

/// Labeled recordings from the configured source.
pub fn load_records(data: &DataConfig) -> Result<(Vec<(SignalRecord, ClassLabel)>, Vec<SkippedRecord>)> {
    match data {
        DataConfig::Directory {
            signal_dir,
            metadata_file,
        } => {
            let col = ingest::load_collection(signal_dir, metadata_file)?;
            Ok((col.records, col.skipped))
        }
        DataConfig::Synthetic {
            n_normal,
            n_abnormal,
            params,
            seed,
        } => Ok((synth::generate_dataset(*n_normal, *n_abnormal, params, *seed)?, Vec::new())),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PreparedData {
    pub features: Vec<FeatureVector>,
    pub skipped: Vec<SkippedRecord>,
}

impl PreparedData {
    pub fn count(&self, label: ClassLabel) -> usize {
        self.features.iter().filter(|f| f.label == label).count()
    }
}

/// Loads and preprocesses; records that fail either stage are reported, not fatal.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    let (records, mut skipped) = load_records(&config.data)?;
    let (features, failures) = preprocess::preprocess_all(&records, &config.preprocess);
    for e in failures {
        let (record_id, reason) = match &e {
            Error::Preprocess { record_id, message } => (record_id.clone(), message.clone()),
            other => (String::new(), other.to_string()),
        };
        warn!("rejected {record_id}: {reason}");
        skipped.push(SkippedRecord { record_id, reason });
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("no records survived preprocessing".into()));
    }
    info!(
        "{} feature vectors ({} abnormal), {} skipped",
        features.len(),
        features.iter().filter(|f| f.label.is_abnormal()).count(),
        skipped.len()
    );
    Ok(PreparedData { features, skipped })
}

/// Training views shared by all stages of one run.
#[derive(Debug, Clone)]
pub struct RunData {
    /// Data the model is fit on (normals only for the neural models).
    pub fit: Vec<FeatureVector>,
    /// Data the threshold is calibrated on.
    pub calibration: Vec<FeatureVector>,
    /// Full validation partition, both classes.
    pub validation: Vec<FeatureVector>,
}

fn validation_fraction(config: &ExperimentConfig, kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Ganomaly => config.split.ganomaly_validation_fraction,
        _ => config.split.validation_fraction,
    }
}

/// Carves validation out of `train` and builds the fit/calibration views.
pub fn run_views(config: &ExperimentConfig, kind: ModelKind, train: &[FeatureVector], run_seed: u64) -> Result<RunData> {
    let (core, validation) = stratified_split(train, validation_fraction(config, kind), derive_seed(run_seed, 1))?;
    let views = match kind {
        ModelKind::Iforest => {
            let fit = match config.iforest().train_on {
                TrainingSubset::All => core,
                TrainingSubset::Normals => normals_only(&core)?,
            };
            RunData {
                calibration: fit.clone(),
                fit,
                validation,
            }
        }
        ModelKind::Ae => {
            let fit = normals_only(&core)?;
            RunData {
                calibration: fit.clone(),
                fit,
                validation,
            }
        }
        ModelKind::Ganomaly => {
            let normals = normals_only(&core)?;
            let fit = if config.split.ganomaly_bootstrap {
                let target = train.iter().filter(|f| f.label == ClassLabel::Normal).count();
                bootstrap_resample(&normals, target, derive_seed(run_seed, 2))?
            } else {
                normals.clone()
            };
            RunData {
                fit,
                calibration: normals,
                validation,
            }
        }
    };
    Ok(views)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainingTrace {
    Iforest,
    Ae(LossHistory),
    Ganomaly(GanTrainingTrace),
}

impl TrainingTrace {
    pub fn csv(&self) -> Option<(&'static str, String)> {
        match self {
            TrainingTrace::Iforest => None,
            TrainingTrace::Ae(h) => Some(("loss.csv", h.to_csv())),
            TrainingTrace::Ganomaly(t) => Some(("trace.csv", t.to_csv())),
        }
    }
}

/// Model config for `kind` with one grid assignment applied.
fn configured(config: &ExperimentConfig, kind: ModelKind, point: &[(String, Value)]) -> Result<ModelConfig> {
    let mut mc = match kind {
        ModelKind::Iforest => ModelConfig::Iforest(config.iforest()),
        ModelKind::Ae => ModelConfig::Ae(config.ae()),
        ModelKind::Ganomaly => ModelConfig::Ganomaly(config.ganomaly()),
    };
    for (path, value) in point {
        mc = match mc {
            ModelConfig::Iforest(c) => ModelConfig::Iforest(with_param(&c, path, value)?),
            ModelConfig::Ae(c) => ModelConfig::Ae(with_param(&c, path, value)?),
            ModelConfig::Ganomaly(c) => ModelConfig::Ganomaly(with_param(&c, path, value)?),
        };
    }
    Ok(mc)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Iforest(iforest::IForestConfig),
    Ae(ae::AeConfig),
    Ganomaly(ganomaly::GanomalyConfig),
}

/// Trains and calibrates one detector.
pub fn train_detector(model: &ModelConfig, views: &RunData, seed: u64) -> Result<(Detector, TrainingTrace)> {
    let validation_normals: Vec<FeatureVector> = views
        .validation
        .iter()
        .filter(|f| f.label == ClassLabel::Normal)
        .cloned()
        .collect();
    match model {
        ModelConfig::Iforest(c) => {
            let rows: Vec<Vec<f64>> = views.fit.iter().map(|f| f.x.clone()).collect();
            let m = iforest::build_forest(&rows, c.n_trees, c.subsample_size, derive_seed(seed, 3))?;
            let mut det = Detector::Iforest(m);
            det.calibrate(&views.calibration, c.contamination)?;
            Ok((det, TrainingTrace::Iforest))
        }
        ModelConfig::Ae(c) => {
            let (m, history) = ae::train_ae(&views.fit, &validation_normals, c, derive_seed(seed, 3))?;
            let mut det = Detector::Ae(m);
            det.calibrate(&views.calibration, c.k_sigma)?;
            Ok((det, TrainingTrace::Ae(history)))
        }
        ModelConfig::Ganomaly(c) => {
            let (m, trace) = ganomaly::train_ganomaly(&views.fit, &validation_normals, c, derive_seed(seed, 3))?;
            let mut det = Detector::Ganomaly(m);
            det.calibrate(&views.calibration, c.k_sigma)?;
            Ok((det, TrainingTrace::Ganomaly(trace)))
        }
    }
}

/// Scores, thresholded decisions and the full report for one partition.
pub fn evaluate_detector(detector: &Detector, data: &[FeatureVector]) -> Result<(Vec<f64>, EvalReport)> {
    let scores = detector.score_batch(data)?;
    let decisions: Vec<ClassLabel> = scores.iter().map(|&s| detector.decide(s)).collect();
    let labels: Vec<ClassLabel> = data.iter().map(|f| f.label).collect();
    let report = metrics::evaluate(&labels, &scores, &decisions)?;
    Ok((scores, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub params: BTreeMap<String, Value>,
    pub validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub fit: usize,
    pub calibration: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelKind,
    pub run: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub sizes: PartitionSizes,
    pub threshold: f64,
    /// `k` for the neural models, contamination for the forest.
    pub calibration_param: f64,
    pub grid: Vec<GridCandidate>,
    pub selected: BTreeMap<String, Value>,
    pub validation: ScalarMetrics,
    pub test: EvalReport,
    /// Reads of the test partition during the run; always 1.
    pub test_reads: usize,
}

/// Everything one run produces; `report` is the part persisted as JSON.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub artifact: ModelArtifact,
    pub trace: TrainingTrace,
    pub distribution: ScoreDistribution,
}

/// One full run for `kind` with model seed `seed`.
pub fn run_once(
    config: &ExperimentConfig,
    kind: ModelKind,
    data: &[FeatureVector],
    run: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let (train, test) = train_test_split(data, config.split.test_fraction, config.split.seed)?;
    let mut sealed = Sealed::new(test);
    let views = run_views(config, kind, &train, seed)?;

    let points = grid_points(config.grid.for_model(kind));
    let mut grid = Vec::new();
    let mut best: Option<(f64, Vec<(String, Value)>, Detector, TrainingTrace, ScalarMetrics)> = None;
    for point in points {
        let mc = configured(config, kind, &point)?;
        let (det, trace) = train_detector(&mc, &views, seed)?;
        let (_, val_report) = evaluate_detector(&det, &views.validation)?;
        let f1 = val_report.metrics.f1;
        info!("{kind} run {run}: validation f1 {f1:.4} for {point:?}");
        grid.push(GridCandidate {
            params: point.iter().cloned().collect(),
            validation_f1: f1,
        });
        if best.as_ref().is_none_or(|b| f1 > b.0) {
            best = Some((f1, point, det, trace, val_report.metrics));
        }
    }
    let (_, point, detector, trace, validation) = best.expect("grid has at least one point");

    // Training and calibration are complete; the test partition is read once.
    let test = sealed.open()?;
    let (test_scores, test_report) = evaluate_detector(&detector, &test)?;
    let calib_scores = detector.calibration_scores().to_vec();
    let distribution = score_distribution_from_scores(
        detector.threshold(),
        &[("train", &views.calibration, &calib_scores), ("test", &test, &test_scores)],
    )?;
    info!(
        "{kind} run {run} (seed {seed}): test f1 {:.4}, balanced accuracy {:.4}",
        test_report.metrics.f1, test_report.metrics.balanced_accuracy
    );

    let report = RunReport {
        model: kind,
        run,
        seed,
        split_seed: config.split.seed,
        sizes: PartitionSizes {
            fit: views.fit.len(),
            calibration: views.calibration.len(),
            validation: views.validation.len(),
            test: sealed.len(),
        },
        threshold: detector.threshold(),
        calibration_param: detector.calibration_param(),
        grid,
        selected: point.into_iter().collect(),
        validation,
        test: test_report,
        test_reads: usize::from(sealed.is_open()),
    };
    Ok(RunOutcome {
        report,
        artifact: ModelArtifact::new(config.preprocess.clone(), detector),
        trace,
        distribution,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MeanStd>,
}

const AGGREGATED: [&str; 7] = ["f1", "balanced_accuracy", "precision", "recall", "accuracy", "auc_roc", "auc_pr"];

pub fn aggregate(model: ModelKind, reports: &[RunReport]) -> AggregateRow {
    let mut metrics = BTreeMap::new();
    for name in AGGREGATED {
        let values: Vec<f64> = reports
            .iter()
            .map(|r| match name {
                "auc_roc" => r.test.auc_roc,
                "auc_pr" => r.test.auc_pr,
                other => r.test.metrics.get(other).expect("known metric"),
            })
            .collect();
        metrics.insert(name.to_string(), MeanStd::of(&values));
    }
    AggregateRow {
        model,
        runs: reports.len(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        metrics,
    }
}

/// Markdown table with one `mean ± std` row per model.
pub fn aggregate_table(rows: &[AggregateRow]) -> String {
    let mut out = String::from("| model | runs |");
    for name in AGGREGATED {
        out.push_str(&format!(" {name} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(AGGREGATED.len()));
    out.push('\n');
    for row in rows {
        out.push_str(&format!("| {} | {} |", row.model, row.runs));
        for name in AGGREGATED {
            out.push_str(&format!(" {} |", row.metrics[name]));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub records: usize,
    pub abnormal: usize,
    pub skipped: Vec<SkippedRecord>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Directory for one model and seed.
pub fn run_dir(out: &Path, kind: ModelKind, seed: u64) -> PathBuf {
    out.join(kind.name()).join(format!("seed_{seed}"))
}

/// Writes the per-run artifacts into `dir`.
pub fn write_run(dir: &Path, outcome: &RunOutcome, config: &ExperimentConfig) -> Result<()> {
    let r = &outcome.report;
    write(&dir.join("report.json"), to_json_pretty(r)?)?;
    write(&dir.join("pr.csv"), metrics::pr_csv(&r.test.pr_points))?;
    write(&dir.join("roc.csv"), metrics::roc_csv(&r.test.roc_points))?;
    if config.output.curves_svg {
        let title = format!("{} seed {}", r.model, r.seed);
        write(&dir.join("curves.svg"), metrics::curves_svg(&r.test, &title))?;
    }
    write(&dir.join("score_distribution.json"), to_json_pretty(&outcome.distribution)?)?;
    write(&dir.join("scores.csv"), outcome.distribution.rows_csv())?;
    if let Some((name, csv)) = outcome.trace.csv() {
        write(&dir.join(name), csv)?;
    }
    if config.output.save_models {
        outcome.artifact.save(&dir.join("model.json"))?;
    }
    Ok(())
}

/// Seeds of the repeated runs.
pub fn run_seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.eval.seeds as u64).map(|r| config.eval.seed + r).collect()
}

/// Runs every configured model over every seed and writes all artifacts under
/// `config.output.dir`. Artifacts of completed runs survive a later failure.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = &config.output.dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.json"), config.to_json() + "\n")?;

    let data = prepare(config)?;
    let abnormal = data.count(ClassLabel::Abnormal);
    let mut aggregates = Vec::new();
    for &kind in &config.eval.models {
        let mut reports = Vec::new();
        for (run, seed) in run_seeds(config).into_iter().enumerate() {
            let outcome = run_once(config, kind, &data.features, run, seed)?;
            write_run(&run_dir(out, kind, seed), &outcome, config)?;
            reports.push(outcome.report);
        }
        let row = aggregate(kind, &reports);
        write(&out.join(kind.name()).join("aggregate.json"), to_json_pretty(&row)?)?;
        aggregates.push(row);
    }
    let summary = ExperimentSummary {
        records: data.features.len(),
        abnormal,
        skipped: data.skipped,
        aggregates,
    };
    write(&out.join("summary.json"), to_json_pretty(&summary)?)?;
    write(&out.join("summary.md"), aggregate_table(&summary.aggregates))?;
    Ok(summary)
}

/// The split every run of a config shares, for the stage-by-stage commands.
pub fn split_stage(config: &ExperimentConfig, kind: ModelKind, data: &[FeatureVector], seed: u64) -> Result<DatasetSplit<FeatureVector>> {
    let (train, test) = train_test_split(data, config.split.test_fraction, config.split.seed)?;
    let (train, validation) = stratified_split(&train, validation_fraction(config, kind), derive_seed(seed, 1))?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed: config.split.seed,
    })
}

/// Training views from a stored split (the inverse of `split_stage`).
pub fn views_from_split(config: &ExperimentConfig, kind: ModelKind, split: &DatasetSplit<FeatureVector>, seed: u64) -> Result<RunData> {
    let mut views = match kind {
        ModelKind::Iforest => {
            let fit = match config.iforest().train_on {
                TrainingSubset::All => split.train.clone(),
                TrainingSubset::Normals => normals_only(&split.train)?,
            };
            RunData {
                calibration: fit.clone(),
                fit,
                validation: Vec::new(),
            }
        }
        ModelKind::Ae => {
            let fit = normals_only(&split.train)?;
            RunData {
                calibration: fit.clone(),
                fit,
                validation: Vec::new(),
            }
        }
        ModelKind::Ganomaly => {
            let normals = normals_only(&split.train)?;
            let fit = if config.split.ganomaly_bootstrap {
                let target = normals.len()
                    + split.validation.iter().filter(|f| f.label == ClassLabel::Normal).count();
                bootstrap_resample(&normals, target, derive_seed(seed, 2))?
            } else {
                normals.clone()
            };
            RunData {
                fit,
                calibration: normals,
                validation: Vec::new(),
            }
        }
    };
    views.validation = split.validation.clone();
    Ok(views)
}

/// Trains and calibrates `kind` with its configured (ungridded) settings.
pub fn train_stage(
    config: &ExperimentConfig,
    kind: ModelKind,
    split: &DatasetSplit<FeatureVector>,
    seed: u64,
) -> Result<(ModelArtifact, TrainingTrace)> {
    let views = views_from_split(config, kind, split, seed)?;
    let (det, trace) = train_detector(&configured(config, kind, &[])?, &views, seed)?;
    Ok((ModelArtifact::new(config.preprocess.clone(), det), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthParams;

    fn small_config(dir: &Path, models: Vec<ModelKind>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            data: DataConfig::Synthetic {
                n_normal: 40,
                n_abnormal: 20,
                params: SynthParams {
                    duration_min: 21.0,
                    ..Default::default()
                },
                seed: 3,
            },
            ..Default::default()
        };
        cfg.preprocess.feature_dim = 48;
        cfg.eval.models = models;
        cfg.eval.seeds = 2;
        cfg.output.dir = dir.to_path_buf();
        let mut ae = cfg.ae();
        ae.max_epochs = 5;
        cfg.model.ae = Some(ae);
        let mut gan = cfg.ganomaly();
        gan.max_epochs = 1;
        gan.iterations_per_epoch = 20;
        cfg.model.ganomaly = Some(gan);
        let mut forest = cfg.iforest();
        forest.n_trees = 20;
        cfg.model.iforest = Some(forest);
        cfg
    }

    #[test]
    fn sealed_opens_once() {
        let mut s = Sealed::new(vec![1, 2]);
        assert!(!s.is_open());
        assert_eq!(s.open().unwrap(), vec![1, 2]);
        assert!(s.is_open());
        assert!(s.open().is_err());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn views_respect_training_policy() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), vec![ModelKind::Ae]);
        let data = prepare(&cfg).unwrap();
        let (train, _) = train_test_split(&data.features, 0.1, 0).unwrap();
        let ae = run_views(&cfg, ModelKind::Ae, &train, 1).unwrap();
        assert!(ae.fit.iter().all(|f| f.label == ClassLabel::Normal));
        let gan = run_views(&cfg, ModelKind::Ganomaly, &train, 1).unwrap();
        let train_normals = train.iter().filter(|f| f.label == ClassLabel::Normal).count();
        assert_eq!(gan.fit.len(), train_normals);
        assert!(gan.calibration.len() < gan.fit.len());
        let forest = run_views(&cfg, ModelKind::Iforest, &train, 1).unwrap();
        assert!(forest.fit.iter().any(|f| f.label.is_abnormal()));
    }

    #[test]
    fn experiment_writes_artifacts_and_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let kinds = vec![ModelKind::Iforest, ModelKind::Ae, ModelKind::Ganomaly];
        let sa = run_experiment(&small_config(a.path(), kinds.clone())).unwrap();
        run_experiment(&small_config(b.path(), kinds)).unwrap();
        assert_eq!(sa.aggregates.len(), 3);
        for kind in ["iforest", "ae", "ganomaly"] {
            for seed in [0, 1] {
                let rel = format!("{kind}/seed_{seed}/report.json");
                let ra = fs::read(a.path().join(&rel)).unwrap();
                assert_eq!(ra, fs::read(b.path().join(&rel)).unwrap(), "{rel}");
                let report: RunReport = serde_json::from_slice(&ra).unwrap();
                assert_eq!(report.test_reads, 1);
                assert_eq!(report.sizes.test, 6);
            }
            assert!(a.path().join(kind).join("aggregate.json").exists());
        }
        assert!(a.path().join("ae/seed_0/loss.csv").exists());
        assert!(a.path().join("ganomaly/seed_1/trace.csv").exists());
        let table = fs::read_to_string(a.path().join("summary.md")).unwrap();
        assert!(table.contains("| ganomaly | 2 |"));
    }

    #[test]
    fn grid_selects_on_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), vec![ModelKind::Iforest]);
        cfg.grid
            .iforest
            .insert("contamination".into(), vec![Value::from(0.1), Value::from(0.33)]);
        let data = prepare(&cfg).unwrap();
        let out = run_once(&cfg, ModelKind::Iforest, &data.features, 0, 5).unwrap();
        assert_eq!(out.report.grid.len(), 2);
        let best = out
            .report
            .grid
            .iter()
            .map(|g| g.validation_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.report.validation.f1, best);
        assert_eq!(out.report.calibration_param, out.report.selected["contamination"].as_f64().unwrap());
    }

    #[test]
    fn aggregate_uses_population_std() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), vec![ModelKind::Iforest]);
        let data = prepare(&cfg).unwrap();
        let reports: Vec<RunReport> = (0..3)
            .map(|r| run_once(&cfg, ModelKind::Iforest, &data.features, r, r as u64).unwrap().report)
            .collect();
        let row = aggregate(ModelKind::Iforest, &reports);
        let f1: Vec<f64> = reports.iter().map(|r| r.test.metrics.f1).collect();
        assert_eq!(row.metrics["f1"], MeanStd::of(&f1));
        assert!(aggregate_table(&[row]).contains("f1"));
    }
}
