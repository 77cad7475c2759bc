//! A short GANomaly run: adversarial training on normals, then the latent
//! reconstruction score on held-out data. Takes a minute or so in release.

use fetalguard::ae::classify;
use fetalguard::datasets::{make_split, normals_only};
use fetalguard::ganomaly::{train_ganomaly, GanomalyConfig};
use fetalguard::metrics::evaluate;
use fetalguard::preprocess::{preprocess_pipeline, PreprocessConfig};
use fetalguard::synth::{generate_dataset, SynthParams};

fn main() -> fetalguard::Result<()> {
    let cfg = PreprocessConfig::default();
    let features = generate_dataset(150, 70, &SynthParams::default(), 8)?
        .iter()
        .map(|(r, l)| preprocess_pipeline(r, *l, &cfg))
        .collect::<fetalguard::Result<Vec<_>>>()?;
    let split = make_split(&features, 0.2, 0.2, 1)?;
    let train = normals_only(&split.train)?;

    let gan_cfg = GanomalyConfig {
        iterations_per_epoch: 200,
        max_epochs: 6,
        ..Default::default()
    };
    let (mut model, trace) = train_ganomaly(&train, &normals_only(&split.validation)?, &gan_cfg, 4)?;
    let mut start = 0;
    for (e, &end) in trace.epoch_ends.iter().enumerate() {
        let mean = |v: &[f64]| v[start..end].iter().sum::<f64>() / (end - start) as f64;
        println!("epoch {e}  L_D {:.4}  L_G {:.4}  val {:.4}", mean(&trace.l_d), mean(&trace.l_g), trace.validation[e]);
        start = end;
    }
    println!(
        "{} discriminator / {} generator updates, kept epoch {}",
        trace.discriminator_updates, trace.generator_updates, trace.best_epoch
    );

    let tau = model.calibrate(&train, gan_cfg.k_sigma)?;
    let scores = model.score_batch(&split.test)?;
    let labels: Vec<_> = split.test.iter().map(|f| f.label).collect();
    let decisions: Vec<_> = scores.iter().map(|&s| classify(s, tau)).collect();
    let report = evaluate(&labels, &scores, &decisions)?;
    println!("tau {tau:.4}  f1 {:.3}  auc_pr {:.3}", report.metrics.f1, report.auc_pr);
    Ok(())
}
