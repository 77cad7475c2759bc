//! Isolation forest on a 2-D point cloud with a few far-away points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fetalguard::iforest::{average_path_length, build_forest, if_score};

fn main() -> fetalguard::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut data: Vec<Vec<f64>> = (0..300)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    data.extend([vec![6.0, 6.0], vec![-5.0, 4.0], vec![0.0, -7.0]]);

    println!("c(256) = {:.4}", average_path_length(256));
    let mut forest = build_forest(&data, 100, 256, 0)?;
    let tau = forest.calibrate(&data, 0.01)?;
    println!("threshold at 1% contamination: {tau:.4}");

    for p in [[0.0, 0.0], [0.9, -0.9], [6.0, 6.0], [0.0, -7.0], [3.0, 0.0]] {
        let s = if_score(&forest, &p)?;
        let flag = if s > tau { "anomaly" } else { "" };
        println!("  {p:?}  score {s:.4} {flag}");
    }
    let flagged = forest.score_batch(&data)?.iter().filter(|&&s| s > tau).count();
    println!("{flagged} of {} training points above threshold", data.len());
    Ok(())
}
