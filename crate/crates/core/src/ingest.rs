//! Recording and clinical-metadata ingestion.
//!
//! Signal files are CSV with header `time_s,fhr_bpm`, one file per recording;
//! the file stem is the record id. A `fhr_bpm` of 0 marks a sensor dropout and
//! is kept verbatim here. Metadata is a single CSV with header
//! `record_id,ph,apgar1,pco2,po2,bdecf` where empty cells mean missing.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling rate of the CTU-UHB FHR channel.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 4.0;

pub const SIGNAL_HEADER: [&str; 2] = ["time_s", "fhr_bpm"];
pub const METADATA_HEADER: [&str; 6] = ["record_id", "ph", "apgar1", "pco2", "po2", "bdecf"];

/// pH strictly below this (together with a low Apgar1) is abnormal.
pub const PH_THRESHOLD: f64 = 7.20;
/// Apgar1 strictly below this (together with a low pH) is abnormal.
pub const APGAR1_THRESHOLD: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal = 0,
    /// The positive class.
    Abnormal = 1,
}

impl ClassLabel {
    pub fn is_abnormal(self) -> bool {
        self == ClassLabel::Abnormal
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(ClassLabel::Normal),
            1 => Some(ClassLabel::Abnormal),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Normal => f.write_str("normal"),
            ClassLabel::Abnormal => f.write_str("abnormal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClinicalMetadata {
    pub record_id: String,
    /// Umbilical arterial blood pH.
    pub ph: Option<f64>,
    pub apgar1: Option<u8>,
    pub pco2: Option<f64>,
    pub po2: Option<f64>,
    /// Carried through, never used for labeling.
    pub bdecf: Option<f64>,
}

impl ClinicalMetadata {
    pub fn new(record_id: impl Into<String>, ph: f64, apgar1: u8) -> Self {
        ClinicalMetadata {
            record_id: record_id.into(),
            ph: Some(ph),
            apgar1: Some(apgar1),
            ..Default::default()
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if let Some(ph) = self.ph {
            if !(6.5..=7.8).contains(&ph) {
                return Err(Error::Parse {
                    line,
                    message: format!("pH {ph} outside [6.5, 7.8]"),
                });
            }
        }
        if let Some(apgar) = self.apgar1 {
            if apgar > 10 {
                return Err(Error::Parse {
                    line,
                    message: format!("apgar1 {apgar} outside [0, 10]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub record_id: String,
    /// Fetal heart rate in bpm; 0 marks a dropout.
    pub fhr: Vec<f64>,
    pub sample_rate_hz: f64,
    pub metadata: ClinicalMetadata,
}

/// Labels a recording: abnormal iff pH < 7.20 and Apgar1 < 7, both strict.
pub fn assign_label(meta: &ClinicalMetadata) -> Result<ClassLabel> {
    let missing = |field: &str| Error::Labeling {
        record_id: meta.record_id.clone(),
        message: format!("missing {field}"),
    };
    let ph = meta.ph.ok_or_else(|| missing("ph"))?;
    let apgar1 = meta.apgar1.ok_or_else(|| missing("apgar1"))?;
    if ph < PH_THRESHOLD && apgar1 < APGAR1_THRESHOLD {
        Ok(ClassLabel::Abnormal)
    } else {
        Ok(ClassLabel::Normal)
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str], required: usize) -> Result<()> {
    let names: Vec<&str> = found.iter().map(str::trim).collect();
    let ok = names.len() >= required
        && names.len() <= expected.len()
        && names.iter().zip(expected).all(|(a, b)| a == b);
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), names.join(",")),
        })
    }
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Parses one signal CSV. The sample rate is inferred from the median time step.
pub fn parse_record_csv<R: Read>(text: R, id: &str) -> Result<SignalRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyInput(format!("signal {id} has no header")));
    }
    check_header(&header, &SIGNAL_HEADER, 2)?;

    let mut times = Vec::new();
    let mut fhr = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = line_of(&row);
        if row.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("invalid {what} `{s}`"),
                })
        };
        let t = parse(&row[0], "time")?;
        let v = parse(&row[1], "fhr")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Structure(format!(
                    "signal {id}: time not strictly increasing at line {line} ({t} after {prev})"
                )));
            }
        }
        times.push(t);
        fhr.push(v);
    }
    if fhr.is_empty() {
        return Err(Error::EmptyInput(format!("signal {id} has no samples")));
    }

    let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let sample_rate_hz = if deltas.is_empty() {
        DEFAULT_SAMPLE_RATE_HZ
    } else {
        1.0 / crate::stats::median(&mut deltas)
    };

    Ok(SignalRecord {
        record_id: id.to_string(),
        fhr,
        sample_rate_hz,
        metadata: ClinicalMetadata {
            record_id: id.to_string(),
            ..Default::default()
        },
    })
}

fn parse_optional<T: std::str::FromStr>(cell: Option<&str>, line: usize, what: &str) -> Result<Option<T>> {
    match cell.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse::<T>().map(Some).map_err(|_| Error::Parse {
            line,
            message: format!("invalid {what} `{s}`"),
        }),
    }
}

/// Parses the metadata table, keyed by record id.
pub fn parse_metadata_csv<R: Read>(text: R) -> Result<BTreeMap<String, ClinicalMetadata>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text);
    let header = reader.headers()?.clone();
    check_header(&header, &METADATA_HEADER, 3)?;

    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = line_of(&row);
        let id = row.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty record_id".into(),
            });
        }
        let meta = ClinicalMetadata {
            record_id: id.clone(),
            ph: parse_optional(row.get(1), line, "ph")?,
            apgar1: parse_optional(row.get(2), line, "apgar1")?,
            pco2: parse_optional(row.get(3), line, "pco2")?,
            po2: parse_optional(row.get(4), line, "po2")?,
            bdecf: parse_optional(row.get(5), line, "bdecf")?,
        };
        meta.validate(line)?;
        if out.insert(id.clone(), meta).is_some() {
            return Err(Error::Structure(format!("duplicate record_id `{id}` at line {line}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Collection {
    pub records: Vec<(SignalRecord, ClassLabel)>,
    pub skipped: Vec<SkippedRecord>,
}

impl Collection {
    pub fn count(&self, label: ClassLabel) -> usize {
        self.records.iter().filter(|(_, l)| *l == label).count()
    }
}

/// Attaches metadata and labels to parsed signals. Signals without a usable
/// metadata row are skipped and reported.
pub fn label_records(
    signals: Vec<SignalRecord>,
    metadata: &BTreeMap<String, ClinicalMetadata>,
) -> Result<Collection> {
    let mut out = Collection::default();
    let mut seen = HashSet::new();
    for mut rec in signals {
        if !seen.insert(rec.record_id.clone()) {
            return Err(Error::Structure(format!("duplicate record_id `{}`", rec.record_id)));
        }
        let Some(meta) = metadata.get(&rec.record_id) else {
            out.skipped.push(SkippedRecord {
                record_id: rec.record_id.clone(),
                reason: "no metadata row".into(),
            });
            continue;
        };
        match assign_label(meta) {
            Ok(label) => {
                rec.metadata = meta.clone();
                out.records.push((rec, label));
            }
            Err(e) => out.skipped.push(SkippedRecord {
                record_id: rec.record_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Loads every `*.csv` under `signal_dir` (sorted by file name) and labels it
/// from `metadata_file`. Fails only when nothing loads.
pub fn load_collection(signal_dir: &Path, metadata_file: &Path) -> Result<Collection> {
    let meta_text = fs::read(metadata_file).map_err(|e| Error::io(metadata_file, e))?;
    let metadata = parse_metadata_csv(meta_text.as_slice())?;

    let mut paths: Vec<_> = fs::read_dir(signal_dir)
        .map_err(|e| Error::io(signal_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "csv"))
        .filter(|p| p != metadata_file)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no signal files in {}", signal_dir.display())));
    }

    let mut signals = Vec::with_capacity(paths.len());
    let mut parse_failures = Vec::new();
    for path in &paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parsed = fs::File::open(path)
            .map_err(|e| Error::io(path, e))
            .and_then(|f| parse_record_csv(std::io::BufReader::new(f), &id));
        match parsed {
            Ok(rec) => signals.push(rec),
            Err(e) => parse_failures.push(SkippedRecord {
                record_id: id,
                reason: e.to_string(),
            }),
        }
    }

    let mut collection = label_records(signals, &metadata)?;
    collection.skipped.extend(parse_failures);
    collection.skipped.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    for skip in &collection.skipped {
        warn!("skipped {}: {}", skip.record_id, skip.reason);
    }
    if collection.records.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no labeled records loaded from {} ({} skipped)",
            signal_dir.display(),
            collection.skipped.len()
        )));
    }
    info!(
        "loaded {} records: {} abnormal, {} normal, {} skipped",
        collection.records.len(),
        collection.count(ClassLabel::Abnormal),
        collection.count(ClassLabel::Normal),
        collection.skipped.len()
    );
    Ok(collection)
}

/// Renders a signal in the ingestion CSV schema.
pub fn write_record_csv(record: &SignalRecord) -> String {
    let mut out = String::with_capacity(record.fhr.len() * 12 + 16);
    out.push_str("time_s,fhr_bpm\n");
    let dt = 1.0 / record.sample_rate_hz;
    for (i, v) in record.fhr.iter().enumerate() {
        out.push_str(&format!("{:.2},{}\n", i as f64 * dt, v));
    }
    out
}

/// Renders metadata rows in the ingestion CSV schema.
pub fn write_metadata_csv<'a>(rows: impl IntoIterator<Item = &'a ClinicalMetadata>) -> String {
    fn cell<T: fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = METADATA_HEADER.join(",");
    out.push('\n');
    for m in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.record_id,
            cell(&m.ph),
            cell(&m.apgar1),
            cell(&m.pco2),
            cell(&m.po2),
            cell(&m.bdecf)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_rows_in_order() {
        let text = "time_s,fhr_bpm\n0.00,140\n0.25,141\n0.50,139\n";
        let rec = parse_record_csv(text.as_bytes(), "r1").unwrap();
        assert_eq!(rec.fhr, vec![140.0, 141.0, 139.0]);
        assert_eq!(rec.sample_rate_hz, 4.0);
        assert_eq!(rec.record_id, "r1");
    }

    #[test]
    fn keeps_zero_samples() {
        let text = "time_s,fhr_bpm\n0.00,0\n0.25,141\n";
        let rec = parse_record_csv(text.as_bytes(), "r").unwrap();
        assert_eq!(rec.fhr, vec![0.0, 141.0]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "time_s,fhr_bpm\n0.00,140\n0.25,abc\n";
        match parse_record_csv(text.as_bytes(), "r") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_time_is_structural() {
        let text = "time_s,fhr_bpm\n0.00,140\n0.25,141\n0.25,142\n";
        assert!(matches!(parse_record_csv(text.as_bytes(), "r"), Err(Error::Structure(_))));
    }

    #[test]
    fn empty_body_is_empty_input() {
        assert!(matches!(
            parse_record_csv("time_s,fhr_bpm\n".as_bytes(), "r"),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(parse_record_csv("".as_bytes(), "r"), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn labeling_rule() {
        let l = |ph, apgar| assign_label(&ClinicalMetadata::new("x", ph, apgar)).unwrap();
        assert_eq!(l(7.10, 5), ClassLabel::Abnormal);
        assert_eq!(l(7.20, 5), ClassLabel::Normal);
        assert_eq!(l(7.10, 8), ClassLabel::Normal);
        assert_eq!(l(7.10, 7), ClassLabel::Normal);
    }

    #[test]
    fn labeling_requires_fields() {
        let mut meta = ClinicalMetadata::new("x", 7.1, 5);
        meta.apgar1 = None;
        assert!(matches!(assign_label(&meta), Err(Error::Labeling { .. })));
        meta.apgar1 = Some(5);
        meta.ph = None;
        assert!(matches!(assign_label(&meta), Err(Error::Labeling { .. })));
    }

    #[test]
    fn metadata_empty_cells_are_missing() {
        let text = "record_id,ph,apgar1,pco2,po2,bdecf\na,7.1,5,,,\nb,7.3,,1.0,2.0,3.0\n";
        let meta = parse_metadata_csv(text.as_bytes()).unwrap();
        assert_eq!(meta["a"].ph, Some(7.1));
        assert_eq!(meta["a"].pco2, None);
        assert_eq!(meta["b"].apgar1, None);
        assert_eq!(meta["b"].bdecf, Some(3.0));
    }

    #[test]
    fn metadata_range_checked() {
        let text = "record_id,ph,apgar1\na,8.1,5\n";
        assert!(matches!(parse_metadata_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "record_id,ph,apgar1\na,7.1,11\n";
        assert!(matches!(parse_metadata_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn orphan_signal_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let sig = "time_s,fhr_bpm\n0.00,140\n0.25,141\n";
        fs::write(dir.path().join("a.csv"), sig).unwrap();
        fs::write(dir.path().join("orphan.csv"), sig).unwrap();
        let meta_path = dir.path().join("meta.txt");
        fs::write(&meta_path, "record_id,ph,apgar1,pco2,po2,bdecf\na,7.1,5,,,\n").unwrap();
        let c = load_collection(dir.path(), &meta_path).unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.records[0].1, ClassLabel::Abnormal);
        assert_eq!(c.skipped.len(), 1);
        assert_eq!(c.skipped[0].record_id, "orphan");
    }

    #[test]
    fn empty_directory_is_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let sigs = dir.path().join("signals");
        fs::create_dir(&sigs).unwrap();
        let meta_path = dir.path().join("meta.csv");
        fs::write(&meta_path, "record_id,ph,apgar1\n").unwrap();
        assert!(matches!(load_collection(&sigs, &meta_path), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn writer_output_parses_back() {
        let rec = SignalRecord {
            record_id: "w".into(),
            fhr: vec![140.0, 0.0, 139.5],
            sample_rate_hz: 4.0,
            metadata: ClinicalMetadata::default(),
        };
        let back = parse_record_csv(write_record_csv(&rec).as_bytes(), "w").unwrap();
        assert_eq!(back.fhr, rec.fhr);
        assert_eq!(back.sample_rate_hz, 4.0);
    }

    proptest! {
        #[test]
        fn high_ph_or_apgar_is_normal(ph in 6.5f64..7.8, apgar in 0u8..=10) {
            let label = assign_label(&ClinicalMetadata::new("p", ph, apgar)).unwrap();
            if ph >= PH_THRESHOLD || apgar >= APGAR1_THRESHOLD {
                prop_assert_eq!(label, ClassLabel::Normal);
            } else {
                prop_assert_eq!(label, ClassLabel::Abnormal);
            }
        }

        #[test]
        fn labeling_is_permutation_equivariant(
            rows in proptest::collection::vec((6.5f64..7.8, 0u8..=10), 1..20),
            rot in 0usize..20,
        ) {
            let metas: BTreeMap<String, ClinicalMetadata> = rows
                .iter()
                .enumerate()
                .map(|(i, (ph, a))| (format!("r{i}"), ClinicalMetadata::new(format!("r{i}"), *ph, *a)))
                .collect();
            let signals: Vec<SignalRecord> = (0..rows.len())
                .map(|i| SignalRecord {
                    record_id: format!("r{i}"),
                    fhr: vec![140.0],
                    sample_rate_hz: 4.0,
                    metadata: ClinicalMetadata::default(),
                })
                .collect();
            let mut rotated = signals.clone();
            rotated.rotate_left(rot % rows.len());
            let mut a: Vec<_> = label_records(signals, &metas).unwrap().records
                .into_iter().map(|(r, l)| (r.record_id, l)).collect();
            let mut b: Vec<_> = label_records(rotated, &metas).unwrap().records
                .into_iter().map(|(r, l)| (r.record_id, l)).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
