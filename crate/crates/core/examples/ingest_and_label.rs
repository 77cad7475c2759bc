//! Writes a tiny CSV collection to a temp dir, loads it back and shows the
//! labeling rule (abnormal only when pH < 7.20 *and* Apgar1 < 7).

use std::fs;

use fetalguard::ingest::{self, assign_label, ClinicalMetadata};
use fetalguard::synth::{self, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (ph, apgar) in [(7.10, 5), (7.20, 5), (7.10, 8), (7.35, 9)] {
        let label = assign_label(&ClinicalMetadata::new("demo", ph, apgar))?;
        println!("pH {ph:.2}, Apgar1 {apgar} -> {label}");
    }

    let dir = std::env::temp_dir().join("fetalguard_ingest_demo");
    let _ = fs::remove_dir_all(&dir);
    let params = SynthParams {
        duration_min: 25.0,
        ..Default::default()
    };
    synth::write_dataset(&dir, &synth::generate_dataset(4, 2, &params, 1)?)?;
    // a recording nobody has metadata for
    fs::write(dir.join("stray.csv"), "time_s,fhr_bpm\n0,140\n")?;

    let col = ingest::load_collection(&dir, &dir.join("metadata.csv"))?;
    println!("\nloaded {} records from {}", col.records.len(), dir.display());
    for (rec, label) in &col.records {
        println!(
            "  {:<8} {:>5} samples @ {} Hz  pH={:.2}  -> {label}",
            rec.record_id,
            rec.fhr.len(),
            rec.sample_rate_hz,
            rec.metadata.ph.unwrap_or(f64::NAN)
        );
    }
    for s in &col.skipped {
        println!("  skipped {}: {}", s.record_id, s.reason);
    }
    Ok(())
}
