use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use fetalguard::config::{DataConfig, ExperimentConfig, ModelKind};
use fetalguard::datasets::DatasetSplit;
use fetalguard::experiment::{self, to_json_pretty, views_from_split};
use fetalguard::ingest::{self, ClassLabel};
use fetalguard::metrics::{self, EvalReport};
use fetalguard::model::ModelArtifact;
use fetalguard::preprocess::{self, FeatureVector};
use fetalguard::synth;

/// Semi-supervised anomaly detection for fetal heart rate recordings.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Detector: iforest, ae or ganomaly.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    /// Model seed (first seed for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of repeated runs for `run`.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and label a directory of CSV recordings.
    Ingest {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
    },
    /// Write a synthetic dataset in the ingestion CSV schema.
    Synth {
        #[arg(long, default_value_t = 370)]
        normal: usize,
        #[arg(long, default_value_t = 182)]
        abnormal: usize,
    },
    /// Build feature vectors from the configured data source.
    Preprocess {
        /// Overrides the config's data section with a CSV directory.
        #[arg(long, requires = "metadata")]
        signals: Option<PathBuf>,
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Stratified train/validation/test split of a feature file.
    Split {
        #[arg(long)]
        features: PathBuf,
    },
    /// Train and calibrate a detector on a split.
    Train {
        #[arg(long)]
        split: PathBuf,
    },
    /// Recalibrate a persisted model's threshold on the split's training view.
    Calibrate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// k for the neural models, contamination for the forest.
        #[arg(long)]
        param: Option<f64>,
    },
    /// Evaluate a persisted model on the split's test partition.
    Evaluate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Score one recording: prints `record_id,score,tau,verdict`.
    Score {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        signal: PathBuf,
    },
    /// Curve CSVs and SVG from an evaluation report.
    Curves {
        #[arg(long)]
        report: PathBuf,
    },
    /// End-to-end experiment over all configured models and seeds.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FETALGUARD_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = cli.model {
        cfg.eval.models = vec![m];
    }
    if let Some(s) = cli.seed {
        cfg.eval.seed = s;
    }
    if let Some(n) = cli.seeds {
        cfg.eval.seeds = n;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn single_model(cfg: &ExperimentConfig) -> anyhow::Result<ModelKind> {
    match cfg.eval.models.as_slice() {
        [m] => Ok(*m),
        _ => bail!("this command needs exactly one model; pass --model"),
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.output.dir.clone();
    let seed = cfg.eval.seed;
    match cli.command {
        Command::Ingest { signals, metadata } => {
            let col = ingest::load_collection(&signals, &metadata)?;
            let mut labels = String::from("record_id,label\n");
            for (rec, label) in &col.records {
                labels.push_str(&format!("{},{label}\n", rec.record_id));
            }
            write_file(&out.join("labels.csv"), labels)?;
            write_file(&out.join("skipped.json"), to_json_pretty(&col.skipped)?)?;
            println!(
                "records={} abnormal={} normal={} skipped={}",
                col.records.len(),
                col.count(ClassLabel::Abnormal),
                col.count(ClassLabel::Normal),
                col.skipped.len()
            );
        }
        Command::Synth { normal, abnormal } => {
            let params = match &cfg.data {
                DataConfig::Synthetic { params, .. } => params.clone(),
                DataConfig::Directory { .. } => synth::SynthParams::default(),
            };
            let data = synth::generate_dataset(normal, abnormal, &params, seed)?;
            synth::write_dataset(&out, &data)?;
            println!("wrote {} records to {}", data.len(), out.display());
        }
        Command::Preprocess { signals, metadata } => {
            let mut cfg = cfg;
            if let (Some(signal_dir), Some(metadata_file)) = (signals, metadata) {
                cfg.data = DataConfig::Directory {
                    signal_dir,
                    metadata_file,
                };
            }
            let data = experiment::prepare(&cfg)?;
            write_file(&out.join("features.json"), serde_json::to_string(&data.features)?)?;
            write_file(&out.join("skipped.json"), to_json_pretty(&data.skipped)?)?;
            println!("features={} skipped={}", data.features.len(), data.skipped.len());
        }
        Command::Split { features } => {
            let kind = single_model(&cfg)?;
            let features: Vec<FeatureVector> = read_json(&features)?;
            let split = experiment::split_stage(&cfg, kind, &features, seed)?;
            write_file(&out.join("split.json"), serde_json::to_string(&split)?)?;
            println!(
                "train={} validation={} test={}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            );
        }
        Command::Train { split } => {
            let kind = single_model(&cfg)?;
            let split: DatasetSplit<FeatureVector> = read_json(&split)?;
            let (artifact, trace) = experiment::train_stage(&cfg, kind, &split, seed)?;
            artifact.save(&out.join("model.json"))?;
            if let Some((name, csv)) = trace.csv() {
                write_file(&out.join(name), csv)?;
            }
            println!("model={kind} threshold={}", artifact.detector.threshold());
        }
        Command::Calibrate {
            model_file,
            split,
            param,
        } => {
            let mut artifact = ModelArtifact::load(&model_file)?;
            let split: DatasetSplit<FeatureVector> = read_json(&split)?;
            let kind = artifact.detector.kind();
            let views = views_from_split(&cfg, kind, &split, seed)?;
            let param = param.unwrap_or(artifact.detector.calibration_param());
            let threshold = artifact.detector.calibrate(&views.calibration, param)?;
            let target = cli.out.as_ref().map(|o| o.join("model.json")).unwrap_or(model_file);
            artifact.save(&target)?;
            println!("model={kind} param={param} threshold={threshold}");
        }
        Command::Evaluate { model_file, split } => {
            let artifact = ModelArtifact::load(&model_file)?;
            let split: DatasetSplit<FeatureVector> = read_json(&split)?;
            let (_, report) = experiment::evaluate_detector(&artifact.detector, &split.test)?;
            write_file(&out.join("report.json"), to_json_pretty(&report)?)?;
            let m = &report.metrics;
            println!(
                "f1={:.4} balanced_accuracy={:.4} precision={:.4} recall={:.4} accuracy={:.4} auc_roc={:.4} auc_pr={:.4}",
                m.f1, m.balanced_accuracy, m.precision, m.recall, m.accuracy, report.auc_roc, report.auc_pr
            );
        }
        Command::Score { model_file, signal } => {
            let artifact = ModelArtifact::load(&model_file)?;
            let id = signal
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let file = fs::File::open(&signal).with_context(|| format!("opening {}", signal.display()))?;
            let record = ingest::parse_record_csv(std::io::BufReader::new(file), &id)?;
            // The label is unknown at scoring time and does not affect the features.
            let fv = preprocess::preprocess_pipeline(&record, ClassLabel::Normal, &artifact.preprocess)?;
            let score = artifact.detector.score_batch(std::slice::from_ref(&fv))?[0];
            let verdict = artifact.detector.decide(score);
            println!("{},{},{},{}", fv.record_id, score, artifact.detector.threshold(), verdict);
        }
        Command::Curves { report } => {
            let report: EvalReport = read_json(&report)?;
            write_file(&out.join("pr.csv"), metrics::pr_csv(&report.pr_points))?;
            write_file(&out.join("roc.csv"), metrics::roc_csv(&report.roc_points))?;
            write_file(&out.join("curves.svg"), metrics::curves_svg(&report, "evaluation"))?;
        }
        Command::Run => {
            let summary = experiment::run_experiment(&cfg)?;
            print!("{}", experiment::aggregate_table(&summary.aggregates));
        }
    }
    Ok(())
}
