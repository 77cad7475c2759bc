//! Stratified splitting, bootstrap resampling and normal-only training views.
//!
//! Split sizes follow the usual stratified convention: the held-out side gets
//! `ceil(fraction * n)` samples, each class contributes `floor(fraction * n_c)`
//! and the leftover slots go to the classes with the largest fractional parts.
//! Both sides keep their input order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassLabel, SignalRecord};
use crate::preprocess::FeatureVector;

/// Anything that carries an identity and a class label.
pub trait Labeled {
    fn record_id(&self) -> &str;
    fn label(&self) -> ClassLabel;
}

impl Labeled for FeatureVector {
    fn record_id(&self) -> &str {
        &self.record_id
    }
    fn label(&self) -> ClassLabel {
        self.label
    }
}

impl Labeled for (SignalRecord, ClassLabel) {
    fn record_id(&self) -> &str {
        &self.0.record_id
    }
    fn label(&self) -> ClassLabel {
        self.1
    }
}

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("split fraction must lie in (0, 1), got {fraction}")))
    }
}

/// Number of held-out samples per class for a stratified split.
pub fn stratified_allocation(class_counts: &BTreeMap<ClassLabel, usize>, fraction: f64) -> BTreeMap<ClassLabel, usize> {
    let total: usize = class_counts.values().sum();
    let target = ((fraction * total as f64) - EPS).ceil().max(0.0) as usize;
    let mut alloc: BTreeMap<ClassLabel, usize> = class_counts
        .iter()
        .map(|(&label, &n)| (label, (fraction * n as f64 + EPS).floor() as usize))
        .collect();
    let mut remaining = target.saturating_sub(alloc.values().sum());
    let mut order: Vec<(ClassLabel, f64, usize)> = class_counts
        .iter()
        .map(|(&label, &n)| {
            let exact = fraction * n as f64;
            (label, exact - (exact + EPS).floor(), n)
        })
        .collect();
    // Largest fractional part first; larger class breaks ties.
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    for (label, _, n) in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        let slot = alloc.get_mut(label).expect("label present");
        if *slot < *n {
            *slot += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Stratified, seeded split into `(kept, held_out)`.
pub fn stratified_split<T: Labeled + Clone>(data: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    check_fraction(fraction)?;
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, item) in data.iter().enumerate() {
        by_class.entry(item.label()).or_default().push(i);
    }
    for label in [ClassLabel::Normal, ClassLabel::Abnormal] {
        if !by_class.contains_key(&label) {
            return Err(Error::Split(format!("no {label} samples to split")));
        }
    }
    let counts: BTreeMap<ClassLabel, usize> = by_class.iter().map(|(l, v)| (*l, v.len())).collect();
    let alloc = stratified_allocation(&counts, fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; data.len()];
    for (label, indices) in &by_class {
        let take = alloc[label];
        if take == 0 || take == indices.len() {
            return Err(Error::Split(format!(
                "fraction {fraction} leaves the {label} class empty on one side ({take} of {})",
                indices.len()
            )));
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..take] {
            held[i] = true;
        }
    }
    let (mut kept, mut out) = (Vec::new(), Vec::new());
    for (item, &h) in data.iter().zip(&held) {
        if h {
            out.push(item.clone());
        } else {
            kept.push(item.clone());
        }
    }
    Ok((kept, out))
}

/// Returns `(train, test)`.
pub fn train_test_split<T: Labeled + Clone>(data: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    stratified_split(data, test_fraction, seed)
}

/// Returns `(train_core, validation)`.
pub fn validation_split<T: Labeled + Clone>(train: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    stratified_split(train, fraction, seed)
}

/// Test split then validation split, with the validation stage seeded
/// independently of the test stage.
pub fn make_split<T: Labeled + Clone>(
    data: &[T],
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit<T>> {
    let (train, test) = train_test_split(data, test_fraction, seed)?;
    let (train, validation) = validation_split(&train, val_fraction, derive_seed(seed, 1))?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
    })
}

/// Uniform draws with replacement, `target_size` of them.
pub fn bootstrap_resample<T: Clone>(source: &[T], target_size: usize, seed: u64) -> Result<Vec<T>> {
    if target_size == 0 {
        return Err(Error::Config("resample target size must be positive".into()));
    }
    if source.is_empty() {
        return Err(Error::TrainingData("cannot resample an empty collection".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..target_size)
        .map(|_| source[rng.random_range(0..source.len())].clone())
        .collect())
}

/// Keeps normal samples in order; errors if none remain.
pub fn normals_only<T: Labeled + Clone>(collection: &[T]) -> Result<Vec<T>> {
    let out: Vec<T> = collection
        .iter()
        .filter(|s| s.label() == ClassLabel::Normal)
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(Error::TrainingData("no normal samples available for training".into()));
    }
    Ok(out)
}

/// SplitMix64-style mixing for independent per-stage and per-component seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
