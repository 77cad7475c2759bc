//! Confusion metrics, PR/ROC curves and the SVG plot for a hand-made score list.

use fetalguard::metrics::{curves_svg, evaluate, pr_csv, MeanStd};
use fetalguard::ClassLabel::{Abnormal as A, Normal as N};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = [N, N, N, N, N, N, A, N, A, A];
    let scores = [0.1, 0.2, 0.15, 0.3, 0.35, 0.5, 0.45, 0.7, 0.8, 0.9];
    let decisions: Vec<_> = scores.iter().map(|&s| if s > 0.4 { A } else { N }).collect();

    let report = evaluate(&labels, &scores, &decisions)?;
    println!("{:?}", report.counts);
    for name in fetalguard::metrics::ScalarMetrics::NAMES {
        println!("  {name:<18} {:.3}", report.metrics.get(name).unwrap());
    }
    println!("  auc_roc            {:.3}", report.auc_roc);
    println!("  auc_pr             {:.3} (no-skill {:.1})", report.auc_pr, report.positive_fraction);
    print!("\n{}", pr_csv(&report.pr_points));

    let path = std::env::temp_dir().join("fetalguard_curves.svg");
    std::fs::write(&path, curves_svg(&report, "toy scores"))?;
    println!("\nwrote {}", path.display());

    println!("f1 over three runs: {}", MeanStd::of(&[0.81, 0.86, 0.84]));
    Ok(())
}
