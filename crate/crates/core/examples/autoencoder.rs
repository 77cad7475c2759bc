//! Trains the L1 autoencoder on synthetic normal recordings and checks how
//! well its reconstruction error separates held-out abnormal ones.

use fetalguard::ae::{train_ae, AeConfig};
use fetalguard::datasets::{make_split, normals_only};
use fetalguard::metrics::evaluate;
use fetalguard::preprocess::{preprocess_pipeline, PreprocessConfig};
use fetalguard::synth::{generate_dataset, SynthParams};

fn main() -> fetalguard::Result<()> {
    let cfg = PreprocessConfig::default();
    let features = generate_dataset(150, 70, &SynthParams::default(), 21)?
        .iter()
        .map(|(r, l)| preprocess_pipeline(r, *l, &cfg))
        .collect::<fetalguard::Result<Vec<_>>>()?;
    let split = make_split(&features, 0.2, 0.1, 0)?;
    let train = normals_only(&split.train)?;
    let val = normals_only(&split.validation)?;

    let ae_cfg = AeConfig {
        max_epochs: 100,
        ..Default::default()
    };
    let (mut model, history) = train_ae(&train, &val, &ae_cfg, 0)?;
    for (e, (t, v)) in history.train.iter().zip(&history.validation).enumerate().step_by(10) {
        println!("epoch {e:>3}  train {t:.4}  val {v:.4}");
    }
    println!("kept epoch {}", history.best_epoch);

    let tau = model.calibrate(&train, ae_cfg.k_sigma)?;
    let scores = model.score_batch(&split.test)?;
    let labels: Vec<_> = split.test.iter().map(|f| f.label).collect();
    let report = evaluate(&labels, &scores, &scores.iter().map(|&s| fetalguard::ae::classify(s, tau)).collect::<Vec<_>>())?;
    println!(
        "tau {tau:.4}  test f1 {:.3}  balanced acc {:.3}  auc {:.3}",
        report.metrics.f1, report.metrics.balanced_accuracy, report.auc_roc
    );
    Ok(())
}
