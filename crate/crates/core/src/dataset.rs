//! Labeled dataset manifests, label vocabularies and stratified splits.
//!
//! A manifest is a UTF-8 CSV file with the header
//! `clip_id,file_path,dataset_id,label`. Labels are validated against the
//! built-in vocabulary of the declared dataset. Underscores in labels are
//! read as spaces, so `dog_bark` and `dog bark` name the same class.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, shuffle};

/// The labeled datasets a classifier can be trained on.
///
/// `Synthetic` is the bundled three-tone corpus used for offline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Esc50,
    Us8k,
    Tut,
    Synthetic,
}

impl DatasetId {
    pub const PUBLIC_DATASETS: [DatasetId; 3] = [DatasetId::Esc50, DatasetId::Us8k, DatasetId::Tut];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Esc50 => "esc50",
            DatasetId::Us8k => "us8k",
            DatasetId::Tut => "tut",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "esc50" => Ok(DatasetId::Esc50),
            "us8k" | "urbansound8k" | "urbansounds8k" => Ok(DatasetId::Us8k),
            "tut" | "tut2016" => Ok(DatasetId::Tut),
            "synthetic" => Ok(DatasetId::Synthetic),
            _ => Err(DatasetError::UnknownDataset(s.to_string())),
        }
    }
}

const ESC50_LABELS: [&str; 50] = [
    "dog",
    "rooster",
    "pig",
    "cow",
    "frog",
    "cat",
    "hen",
    "insects",
    "sheep",
    "crow",
    "rain",
    "sea waves",
    "crackling fire",
    "crickets",
    "chirping birds",
    "water drops",
    "wind",
    "pouring water",
    "toilet flush",
    "thunderstorm",
    "crying baby",
    "sneezing",
    "clapping",
    "breathing",
    "coughing",
    "footsteps",
    "laughing",
    "brushing teeth",
    "snoring",
    "drinking sipping",
    "door wood knock",
    "mouse click",
    "keyboard typing",
    "door wood creaks",
    "can opening",
    "washing machine",
    "vacuum cleaner",
    "clock alarm",
    "clock tick",
    "glass breaking",
    "helicopter",
    "chainsaw",
    "siren",
    "car horn",
    "engine",
    "train",
    "church bells",
    "airplane",
    "fireworks",
    "hand saw",
];

const US8K_LABELS: [&str; 10] = [
    "air conditioner",
    "car horn",
    "children playing",
    "dog bark",
    "drilling",
    "engine idling",
    "gun shot",
    "jackhammer",
    "siren",
    "street music",
];

// Home context first, then residential area. "people walking" occurs in
// both contexts and is kept as two classes.
const TUT_LABELS: [&str; 18] = [
    "object rustling",
    "object snapping",
    "cupboard",
    "cutlery",
    "dishes",
    "drawer",
    "glass jingling",
    "object impact",
    "people walking indoors",
    "washing dishes",
    "water tap running",
    "object banging",
    "bird singing",
    "car passing by",
    "children shouting",
    "people speaking",
    "people walking outdoors",
    "wind blowing",
];

const SYNTHETIC_LABELS: [&str; 3] = ["low tone", "mid tone", "high tone"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest file not found: {0}")]
    MissingFile(String),
    #[error("malformed manifest row at line {line_no}: {reason}")]
    MalformedRow { line_no: u64, reason: String },
    #[error("unknown label {label:?} for dataset {dataset}")]
    UnknownLabel { label: String, dataset: DatasetId },
    #[error("unknown dataset id {0:?}")]
    UnknownDataset(String),
    #[error("duplicate clip id {0:?}")]
    DuplicateClip(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("class {0:?} has fewer than 5 clips")]
    ClassTooSmall(String),
    #[error("no entries to split")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ordered class names of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    pub dataset_id: DatasetId,
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(dataset_id: DatasetId, labels: Vec<String>) -> Result<Self, DatasetError> {
        if labels.is_empty() {
            return Err(DatasetError::InvalidVocabulary("no labels".into()));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(DatasetError::InvalidVocabulary("empty label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(DatasetError::InvalidVocabulary(format!(
                    "duplicate label {label:?}"
                )));
            }
        }
        Ok(Self { dataset_id, labels })
    }

    /// The built-in vocabulary of a dataset.
    pub fn builtin(dataset_id: DatasetId) -> Self {
        let labels: &[&str] = match dataset_id {
            DatasetId::Esc50 => &ESC50_LABELS,
            DatasetId::Us8k => &US8K_LABELS,
            DatasetId::Tut => &TUT_LABELS,
            DatasetId::Synthetic => &SYNTHETIC_LABELS,
        };
        Self {
            dataset_id,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Maps a raw manifest label onto a vocabulary entry.
    pub fn resolve(&self, raw: &str) -> Option<&str> {
        let norm = normalize_label(raw);
        self.labels
            .iter()
            .find(|l| **l == norm)
            .map(String::as_str)
    }
}

pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifestEntry {
    pub clip_id: String,
    pub file_path: String,
    pub dataset_id: DatasetId,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn fraction(self) -> f64 {
        match self {
            Split::Train => 0.6,
            Split::Val => 0.2,
            Split::Test => 0.2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::MalformedRow {
                line_no: 0,
                reason: format!("unknown split {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub clip_id: String,
    #[serde(with = "split_serde")]
    pub split: Split,
}

mod split_serde {
    use super::Split;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(split: &Split, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(split.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Split, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Deserialize)]
struct RawManifestRow {
    clip_id: String,
    file_path: String,
    dataset_id: String,
    label: String,
}

/// Reads a manifest with the built-in vocabularies.
pub fn load_manifest(path: &Path) -> Result<Vec<ClipManifestEntry>, DatasetError> {
    load_manifest_with(path, LabelVocabulary::builtin)
}

/// Reads a manifest, validating labels against `vocab_for(dataset)`.
///
/// Relative `file_path` values are resolved against the manifest's directory.
pub fn load_manifest_with<F>(path: &Path, vocab_for: F) -> Result<Vec<ClipManifestEntry>, DatasetError>
where
    F: Fn(DatasetId) -> LabelVocabulary,
{
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let expected = ["clip_id", "file_path", "dataset_id", "label"];
    if headers.len() < expected.len() || !expected.iter().zip(headers.iter()).all(|(a, b)| *a == b) {
        return Err(DatasetError::MalformedRow {
            line_no: 1,
            reason: format!("expected header {}", expected.join(",")),
        });
    }

    let mut vocabularies: BTreeMap<DatasetId, LabelVocabulary> = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for record in reader.records() {
        let line_no = |e: &csv::Error| e.position().map(|p| p.line()).unwrap_or(0);
        let record = record.map_err(|e| DatasetError::MalformedRow {
            line_no: line_no(&e),
            reason: e.to_string(),
        })?;
        let row_line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: RawManifestRow = record
            .deserialize(Some(&headers))
            .map_err(|e| DatasetError::MalformedRow {
                line_no: row_line,
                reason: e.to_string(),
            })?;
        if row.clip_id.is_empty() || row.file_path.is_empty() {
            return Err(DatasetError::MalformedRow {
                line_no: row_line,
                reason: "empty clip_id or file_path".into(),
            });
        }
        let dataset_id: DatasetId =
            row.dataset_id
                .parse()
                .map_err(|_| DatasetError::MalformedRow {
                    line_no: row_line,
                    reason: format!("unknown dataset id {:?}", row.dataset_id),
                })?;
        let vocab = vocabularies
            .entry(dataset_id)
            .or_insert_with(|| vocab_for(dataset_id));
        let label = vocab
            .resolve(&row.label)
            .ok_or_else(|| DatasetError::UnknownLabel {
                label: row.label.clone(),
                dataset: dataset_id,
            })?
            .to_string();
        if !seen.insert(row.clip_id.clone()) {
            return Err(DatasetError::DuplicateClip(row.clip_id));
        }
        let file = Path::new(&row.file_path);
        let file_path = if file.is_relative() {
            base.join(file).to_string_lossy().into_owned()
        } else {
            row.file_path
        };
        entries.push(ClipManifestEntry {
            clip_id: row.clip_id,
            file_path,
            dataset_id,
            label,
            duration_s: None,
        });
    }
    Ok(entries)
}

/// Per-class split sizes: `round(0.6 n)`, `round(0.2 n)` and the remainder.
pub fn split_counts(n: usize) -> [usize; 3] {
    let train = (0.6 * n as f64).round() as usize;
    let val = (0.2 * n as f64).round() as usize;
    [train, val, n - train - val]
}

/// Stratified 60/20/20 split, deterministic for a fixed seed.
///
/// Classes are visited in sorted label order and each class's clips are
/// sorted by clip id before a seeded Fisher-Yates shuffle, so the result does
/// not depend on the order of `entries`. The output follows input order.
pub fn split_dataset(
    entries: &[ClipManifestEntry],
    seed: u64,
) -> Result<Vec<SplitAssignment>, DatasetError> {
    if entries.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in entries {
        by_class.entry(e.label.as_str()).or_default().push(e.clip_id.as_str());
    }
    if let Some((label, _)) = by_class.iter().find(|(_, clips)| clips.len() < 5) {
        return Err(DatasetError::ClassTooSmall(label.to_string()));
    }

    let mut rng = seeded(seed);
    let mut assigned: BTreeMap<&str, Split> = BTreeMap::new();
    for clips in by_class.values_mut() {
        clips.sort_unstable();
        shuffle(clips, &mut rng);
        let [train, val, _] = split_counts(clips.len());
        for (i, clip) in clips.iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            assigned.insert(clip, split);
        }
    }
    Ok(entries
        .iter()
        .map(|e| SplitAssignment {
            clip_id: e.clip_id.clone(),
            split: assigned[e.clip_id.as_str()],
        })
        .collect())
}

pub fn write_splits<W: std::io::Write>(
    out: W,
    assignments: &[SplitAssignment],
) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_writer(out);
    for a in assignments {
        writer.serialize(a)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitAssignment>, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(DatasetError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn entry(clip: &str, label: &str) -> ClipManifestEntry {
        ClipManifestEntry {
            clip_id: clip.into(),
            file_path: format!("{clip}.wav"),
            dataset_id: DatasetId::Esc50,
            label: label.into(),
            duration_s: None,
        }
    }

    #[test]
    fn builtin_vocabulary_sizes() {
        assert_eq!(LabelVocabulary::builtin(DatasetId::Esc50).class_count(), 50);
        assert_eq!(LabelVocabulary::builtin(DatasetId::Us8k).class_count(), 10);
        assert_eq!(LabelVocabulary::builtin(DatasetId::Tut).class_count(), 18);
        let total: usize = DatasetId::PUBLIC_DATASETS
            .iter()
            .map(|d| LabelVocabulary::builtin(*d).class_count())
            .sum();
        assert_eq!(total, 78);
        for d in DatasetId::PUBLIC_DATASETS {
            let v = LabelVocabulary::builtin(d);
            LabelVocabulary::new(d, v.labels().to_vec()).expect("builtin labels are unique");
        }
    }

    #[test]
    fn vocabulary_rejects_empty_and_duplicate_labels() {
        assert!(LabelVocabulary::new(DatasetId::Tut, vec!["a".into(), "".into()]).is_err());
        assert!(LabelVocabulary::new(DatasetId::Tut, vec!["a".into(), "a".into()]).is_err());
        assert!(LabelVocabulary::new(DatasetId::Tut, vec![]).is_err());
    }

    #[test]
    fn load_three_valid_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "clip_id,file_path,dataset_id,label").unwrap();
        writeln!(f, "a,a.wav,esc50,dog").unwrap();
        writeln!(f, "b,/abs/b.wav,ESC50,sea_waves").unwrap();
        writeln!(f, "c,c.wav,us8k,dog bark").unwrap();
        let entries = load_manifest(f.path()).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].label, "sea waves");
        assert_eq!(entries[1].file_path, "/abs/b.wav");
        assert_eq!(entries[2].dataset_id, DatasetId::Us8k);
        assert!(Path::new(&entries[0].file_path).ends_with("a.wav"));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "clip_id,file_path,dataset_id,label").unwrap();
        writeln!(f, "a,a.wav,esc50,flying carpet").unwrap();
        match load_manifest(f.path()) {
            Err(DatasetError::UnknownLabel { label, dataset }) => {
                assert_eq!(label, "flying carpet");
                assert_eq!(dataset, DatasetId::Esc50);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/manifest.csv")),
            Err(DatasetError::MissingFile(_))
        ));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "clip_id,file_path,dataset_id,label").unwrap();
        writeln!(f, "a,a.wav,esc50,dog").unwrap();
        writeln!(f, "b,b.wav").unwrap();
        match load_manifest(f.path()) {
            Err(DatasetError::MalformedRow { line_no, .. }) => assert_eq!(line_no, 3),
            other => panic!("unexpected {other:?}"),
        }
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "id,path,dataset,label").unwrap();
        assert!(matches!(
            load_manifest(g.path()),
            Err(DatasetError::MalformedRow { line_no: 1, .. })
        ));
    }

    #[test]
    fn duplicate_clip_ids_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "clip_id,file_path,dataset_id,label").unwrap();
        writeln!(f, "a,a.wav,esc50,dog").unwrap();
        writeln!(f, "a,b.wav,esc50,cat").unwrap();
        assert!(matches!(load_manifest(f.path()), Err(DatasetError::DuplicateClip(_))));
    }

    #[test]
    fn ten_clips_split_six_two_two() {
        let entries: Vec<_> = (0..10).map(|i| entry(&format!("c{i}"), "dog")).collect();
        for seed in [0, 1, 42, u64::MAX] {
            let splits = split_dataset(&entries, seed).unwrap();
            let count = |s| splits.iter().filter(|a| a.split == s).count();
            assert_eq!(
                (count(Split::Train), count(Split::Val), count(Split::Test)),
                (6, 2, 2)
            );
        }
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let entries: Vec<_> = (0..30)
            .map(|i| entry(&format!("c{i:02}"), if i % 2 == 0 { "dog" } else { "cat" }))
            .collect();
        let a = split_dataset(&entries, 7).unwrap();
        let b = split_dataset(&entries, 7).unwrap();
        assert_eq!(a, b);
        let mut reversed = entries.clone();
        reversed.reverse();
        let mut c = split_dataset(&reversed, 7).unwrap();
        c.reverse();
        assert_eq!(a, c);
        let d = split_dataset(&entries, 8).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn small_class_rejected() {
        let mut entries: Vec<_> = (0..10).map(|i| entry(&format!("d{i}"), "dog")).collect();
        entries.extend((0..4).map(|i| entry(&format!("c{i}"), "cat")));
        assert!(matches!(
            split_dataset(&entries, 0),
            Err(DatasetError::ClassTooSmall(l)) if l == "cat"
        ));
        assert!(matches!(split_dataset(&[], 0), Err(DatasetError::Empty)));
    }

    #[test]
    fn splits_round_trip_through_csv() {
        let entries: Vec<_> = (0..5).map(|i| entry(&format!("c{i}"), "dog")).collect();
        let splits = split_dataset(&entries, 3).unwrap();
        let mut buf = Vec::new();
        write_splits(&mut buf, &splits).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("clip_id,split\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, buf).unwrap();
        assert_eq!(read_splits(&p).unwrap(), splits);
    }
}
