//! The preprocessing chain on a hand-made trace: out-of-range samples are
//! dropped, gaps are interpolated, a median filter removes spikes, and the
//! tail is averaged into a fixed-length vector.

use fetalguard::preprocess::{
    clip_physiological, featurize, interpolate_missing, median_smooth, preprocess_pipeline, PreprocessConfig,
};
use fetalguard::synth::{generate_record, SynthParams};

fn main() -> fetalguard::Result<()> {
    let raw = [140.0, 0.0, 0.0, 146.0, 230.0, 144.0, 190.0, 143.0, 141.0, 45.0, 139.0];
    let clipped = clip_physiological(&raw);
    let filled = interpolate_missing(&clipped)?;
    let smooth = median_smooth(&filled, 3)?;
    println!("raw      {raw:?}");
    println!("clipped  {:?}", clipped.iter().map(|v| v.map(|x| x as i64)).collect::<Vec<_>>());
    println!("filled   {:?}", filled.values);
    println!("median3  {:?}", smooth.values);
    println!("features {:?}", featurize(&smooth, 4, 8)?);

    let (record, label) = generate_record(&SynthParams::default().with_abnormal(true), 5)?;
    let cfg = PreprocessConfig::default();
    let fv = preprocess_pipeline(&record, label, &cfg)?;
    let dropouts = record.fhr.iter().filter(|&&v| v == 0.0).count();
    println!(
        "\n{}: {} samples ({dropouts} dropouts) -> {} features, range [{:.3}, {:.3}]",
        fv.record_id,
        record.fhr.len(),
        fv.x.len(),
        fv.x.iter().cloned().fold(f64::INFINITY, f64::min),
        fv.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(())
}
