//! A small end-to-end experiment from a JSON config: isolation forest and
//! autoencoder over three seeds, reports written under a temp directory.

use fetalguard::config::ExperimentConfig;
use fetalguard::experiment::{aggregate_table, run_dir, run_experiment, RunReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("fetalguard_experiment");
    let mut cfg = ExperimentConfig::from_json(
        r#"{
          "data": {"kind": "synthetic", "n_normal": 120, "n_abnormal": 60, "seed": 3},
          "model": {"ae": {"max_epochs": 60}},
          "grid": {"ae": {"k_sigma": [0.5, 1.0, 2.0]}},
          "eval": {"models": ["iforest", "ae"], "seeds": 3}
        }"#,
    )?;
    cfg.output.dir = out.clone();

    let summary = run_experiment(&cfg)?;
    print!("{}", aggregate_table(&summary.aggregates));
    for row in &summary.aggregates {
        for &seed in &row.seeds {
            let text = std::fs::read_to_string(run_dir(&out, row.model, seed).join("report.json"))?;
            let r: RunReport = serde_json::from_str(&text)?;
            println!(
                "{:>8} seed {}  selected {:?}  tau {:.4}",
                r.model.name(),
                r.seed,
                r.selected,
            r.threshold
            );
        }
    }
    println!("reports in {}", out.display());
    Ok(())
}
