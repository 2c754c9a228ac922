//! Recording storage, the reference label file, and the stratified
//! train/validation split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three rhythm classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Normal,
    AFib,
    Other,
}

impl ClassLabel {
    pub const COUNT: usize = 3;

    pub fn all() -> [ClassLabel; 3] {
        [ClassLabel::Normal, ClassLabel::AFib, ClassLabel::Other]
    }

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::AFib => 1,
            ClassLabel::Other => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        match i {
            0 => Some(ClassLabel::Normal),
            1 => Some(ClassLabel::AFib),
            2 => Some(ClassLabel::Other),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            ClassLabel::Normal => 'N',
            ClassLabel::AFib => 'A',
            ClassLabel::Other => 'O',
        }
    }
}

/// How to treat records labeled `~` (noisy) in the reference file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseHandling {
    /// Skip the record entirely (default: the task is three-class).
    Drop,
    /// Fold it into the Other class.
    MapToOther,
}

/// One single-channel recording.
#[derive(Debug, Clone)]
pub struct Record {
    pub id: String,
    pub samples: Vec<f64>,
    /// Sampling frequency in Hz.
    pub fs: f64,
    pub label: Option<ClassLabel>,
}

impl Record {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, fs: f64, label: Option<ClassLabel>) -> Result<Self> {
        if fs <= 0.0 {
            return Err(Error::InvalidInput(format!("sampling frequency must be positive, got {fs}")));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample value {bad}")));
        }
        Ok(Record {
            id: id.into(),
            samples,
            fs,
            label,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// A set of records with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate record id {}", r.id)));
            }
        }
        Ok(Dataset { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            if let Some(label) = r.label {
                *counts.entry(label).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Parses the reference file: one `record_id,label` line per record with
/// labels N, A, O, or `~`.
pub fn load_reference(path: &Path, noise: NoiseHandling) -> Result<Vec<(String, ClassLabel)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected `id,label`"))?;
        let label = label.trim();
        let id = id.trim();
        let class = match label {
            "N" => Some(ClassLabel::Normal),
            "A" => Some(ClassLabel::AFib),
            "O" => Some(ClassLabel::Other),
            "~" => match noise {
                NoiseHandling::Drop => None,
                NoiseHandling::MapToOther => Some(ClassLabel::Other),
            },
            other => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("unknown label {other:?} (expected N, A, O, or ~)"),
                ))
            }
        };
        if let Some(class) = class {
            out.push((id.to_string(), class));
        }
    }
    Ok(out)
}

/// Loads a record from `<id>.csv` (one decimal per line) or `<id>.f32`
/// (little-endian float32, no header), selected by extension.
pub fn load_record(path: &Path, fs: f64, id: impl Into<String>) -> Result<Record> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let samples = match ext {
        "csv" => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut vals = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let v: f64 = line.parse().map_err(|_| {
                    Error::parse(path, lineno + 1, format!("not a number: {line:?}"))
                })?;
                vals.push(v);
            }
            vals
        }
        "f32" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() % 4 != 0 {
                return Err(Error::InvalidInput(format!(
                    "{} has {} bytes, not a multiple of 4",
                    path.display(),
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported record extension {other:?} (expected .csv or .f32)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!("{} is empty", path.display())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} contains NaN or infinity", path.display())));
    }
    Record::new(id, samples, fs, None)
}

/// Writes samples as little-endian float32, the inverse of loading `.f32`.
pub fn save_record_f32(path: &Path, samples: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 4);
    for &v in samples {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-class stratified split. The train side receives
/// round(train_fraction * |ds|) records in total, apportioned to classes by
/// largest remainder so every class stays within one record of its exact
/// share. Identical seeds give identical splits.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }

    // group record indices by label, fixed class order with unlabeled last
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ClassLabel::COUNT + 1];
    for (i, r) in ds.records.iter().enumerate() {
        let g = r.label.map(|l| l.index()).unwrap_or(ClassLabel::COUNT);
        groups[g].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in &mut groups {
        g.shuffle(&mut rng);
    }

    let target_total = (train_fraction * ds.len() as f64).round() as usize;
    let mut take: Vec<usize> = groups
        .iter()
        .map(|g| (train_fraction * g.len() as f64).floor() as usize)
        .collect();
    let mut leftover = target_total - take.iter().sum::<usize>();
    let mut by_rem: Vec<usize> = (0..groups.len()).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = train_fraction * groups[a].len() as f64 - take[a] as f64;
        let rb = train_fraction * groups[b].len() as f64 - take[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &g in &by_rem {
        if leftover == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            leftover -= 1;
        }
    }

    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        train_idx.extend_from_slice(&members[..take[g]]);
        val_idx.extend_from_slice(&members[take[g]..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let train = Dataset {
        records: train_idx.iter().map(|&i| ds.records[i].clone()).collect(),
    };
    let val = Dataset {
        records: val_idx.iter().map(|&i| ds.records[i].clone()).collect(),
    };
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn labeled(id: &str, label: ClassLabel) -> Record {
        Record::new(id, vec![0.0; 10], 300.0, Some(label)).unwrap()
    }

    #[test]
    fn reference_parses_and_maps_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("REFERENCE.csv");
        std::fs::write(&path, "r1,N\nr2,A\nr3,O\nr4,~\n").unwrap();
        let refs = load_reference(&path, NoiseHandling::Drop).unwrap();
        assert_eq!(
            refs,
            vec![
                ("r1".to_string(), ClassLabel::Normal),
                ("r2".to_string(), ClassLabel::AFib),
                ("r3".to_string(), ClassLabel::Other),
            ]
        );
        let refs = load_reference(&path, NoiseHandling::MapToOther).unwrap();
        assert_eq!(refs.len(), 4);
        assert_eq!(refs[3].1, ClassLabel::Other);
    }

    #[test]
    fn reference_empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("REFERENCE.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_reference(&path, NoiseHandling::Drop).unwrap().is_empty());
    }

    #[test]
    fn reference_rejects_unknown_label_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("REFERENCE.csv");
        std::fs::write(&path, "r1,N\nr2,A\nr3,X\n").unwrap();
        let err = load_reference(&path, NoiseHandling::Drop).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn csv_record_parses_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "0.1\n-0.2\n0.3").unwrap();
        let rec = load_record(&path, 300.0, "r").unwrap();
        assert_eq!(rec.samples, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn empty_record_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_record(&path, 300.0, "r").is_err());
    }

    #[test]
    fn f32_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.f32");
        let samples: Vec<f64> = (0..9000).map(|i| (i as f32 * 0.01).sin() as f64).collect();
        save_record_f32(&path, &samples).unwrap();
        let rec = load_record(&path, 300.0, "r").unwrap();
        assert_eq!(rec.samples.len(), 9000);
        assert_eq!(rec.samples, samples);
    }

    #[test]
    fn f32_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.f32");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_record(&path, 300.0, "r"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn split_fraction_one_keeps_everything() {
        let ds = Dataset::new(vec![labeled("a", ClassLabel::Normal), labeled("b", ClassLabel::AFib)]).unwrap();
        let (train, val) = split_dataset(&ds, 1.0, 7).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(val.len(), 0);
    }

    #[test]
    fn split_sizes_and_partition() {
        let mut records = Vec::new();
        for i in 0..10 {
            let label = ClassLabel::from_index(i % 3).unwrap();
            records.push(labeled(&format!("r{i}"), label));
        }
        let ds = Dataset::new(records).unwrap();
        let (train, val) = split_dataset(&ds, 0.7, 42).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(val.len(), 3);
        let mut ids: Vec<&str> = train.records.iter().chain(&val.records).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10, "train and val must partition the dataset");
    }

    #[test]
    fn split_is_seed_deterministic() {
        let records: Vec<Record> = (0..30)
            .map(|i| labeled(&format!("r{i}"), ClassLabel::from_index(i % 3).unwrap()))
            .collect();
        let ds = Dataset::new(records).unwrap();
        let (t1, v1) = split_dataset(&ds, 0.7, 42).unwrap();
        let (t2, v2) = split_dataset(&ds, 0.7, 42).unwrap();
        let ids = |d: &Dataset| d.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&t1), ids(&t2));
        assert_eq!(ids(&v1), ids(&v2));
    }

    #[test]
    fn split_stratification_within_one_of_exact_share() {
        // uneven class sizes
        let mut records = Vec::new();
        for i in 0..23 {
            records.push(labeled(&format!("n{i}"), ClassLabel::Normal));
        }
        for i in 0..7 {
            records.push(labeled(&format!("a{i}"), ClassLabel::AFib));
        }
        for i in 0..13 {
            records.push(labeled(&format!("o{i}"), ClassLabel::Other));
        }
        let ds = Dataset::new(records).unwrap();
        let (train, _) = split_dataset(&ds, 0.7, 3).unwrap();
        assert_eq!(train.len(), (0.7f64 * 43.0).round() as usize);
        let counts = train.class_counts();
        for (label, total) in [(ClassLabel::Normal, 23.0), (ClassLabel::AFib, 7.0), (ClassLabel::Other, 13.0)] {
            let got = *counts.get(&label).unwrap_or(&0) as f64;
            let exact = (0.7f64 * total).round();
            assert!((got - exact).abs() <= 1.0, "{label:?}: got {got}, exact {exact}");
        }
    }

    #[test]
    fn split_rejects_empty_dataset() {
        assert!(split_dataset(&Dataset::default(), 0.7, 1).is_err());
    }
}
