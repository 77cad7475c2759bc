//! Stratified splitting and bootstrap resampling over a 370/182 collection.

use std::collections::BTreeMap;

use fetalguard::datasets::{bootstrap_resample, make_split, normals_only, stratified_allocation};
use fetalguard::{ClassLabel, FeatureVector};

fn counts(v: &[FeatureVector]) -> String {
    let a = v.iter().filter(|f| f.label.is_abnormal()).count();
    format!("{:>3} ({:>3} normal, {:>3} abnormal)", v.len(), v.len() - a, a)
}

fn main() -> fetalguard::Result<()> {
    let data: Vec<FeatureVector> = (0..552)
        .map(|i| FeatureVector {
            record_id: format!("r{i:03}"),
            label: if i < 370 { ClassLabel::Normal } else { ClassLabel::Abnormal },
            x: vec![i as f64],
        })
        .collect();

    let by_class = BTreeMap::from([(ClassLabel::Normal, 370), (ClassLabel::Abnormal, 182)]);
    println!("10% allocation: {:?}", stratified_allocation(&by_class, 0.1));

    let split = make_split(&data, 0.1, 0.1, 42)?;
    println!("train      {}", counts(&split.train));
    println!("validation {}", counts(&split.validation));
    println!("test       {}", counts(&split.test));

    // with-replacement resample of the normal core, as GANomaly training does
    let core = normals_only(&split.train)?;
    let boot = bootstrap_resample(&core, core.len(), 7)?;
    let unique: std::collections::HashSet<_> = boot.iter().map(|f| &f.record_id).collect();
    println!("bootstrap  {} draws, {} distinct of {}", boot.len(), unique.len(), core.len());
    Ok(())
}
