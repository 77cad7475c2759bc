//! Normal vs abnormal synthetic traces: baseline stats over the last 20 min.

use fetalguard::stats::{mean, population_std};
use fetalguard::synth::{generate_record, SynthParams};

fn main() -> fetalguard::Result<()> {
    let params = SynthParams::default();
    for abnormal in [false, true] {
        for seed in 0..3 {
            let (rec, label) = generate_record(&params.with_abnormal(abnormal), seed)?;
            let tail: Vec<f64> = rec.fhr[rec.fhr.len() - 4800..].iter().copied().filter(|&v| v > 0.0).collect();
            let low = tail.iter().filter(|&&v| v < 110.0).count() as f64 / tail.len() as f64;
            println!(
                "{} {label:<8} mean {:6.1} bpm  sd {:5.1}  below 110: {:4.1}%",
                rec.record_id,
                mean(&tail),
                population_std(&tail),
                100.0 * low
            );
        }
    }
    Ok(())
}
