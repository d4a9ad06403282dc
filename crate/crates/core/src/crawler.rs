//! Query construction, pluggable fetching and the crawled-corpus inventory.
//!
//! A [`Fetcher`] only reports candidates. [`crawl`] applies the duration
//! filter, canonicalises accepted audio into the corpus store and writes the
//! inventory, so fetchers never touch the store themselves.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError};
use crate::dataset::{DatasetId, LabelVocabulary};

pub const MIN_DURATION_S: f64 = 3.0;
pub const MAX_DURATION_S: f64 = 600.0;
pub const INVENTORY_FILE: &str = "inventory.csv";

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("fetcher unavailable: {0}")]
    FetcherUnavailable(String),
    #[error("fetch failed for {video_id}: {reason}")]
    FetchFailed { video_id: String, reason: String },
    #[error("malformed inventory or manifest: {0}")]
    Malformed(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub label: String,
    pub query_string: String,
    pub dataset_id: DatasetId,
}

impl QueryRecord {
    pub fn new(label: &str, dataset_id: DatasetId) -> Self {
        QueryRecord {
            label: label.to_string(),
            query_string: format!("{label} sound"),
            dataset_id,
        }
    }
}

/// One query per label, in vocabulary order.
pub fn build_queries(vocab: &LabelVocabulary) -> Vec<QueryRecord> {
    vocab
        .labels()
        .iter()
        .map(|l| QueryRecord::new(l, vocab.dataset_id))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FetchedAudio {
    Path(PathBuf),
    Bytes(Vec<u8>),
}

/// A candidate reported by a fetcher, not yet filtered or stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchedItem {
    pub video_id: String,
    pub duration_s: f64,
    pub audio: FetchedAudio,
}

/// Source of candidate audio for a query.
///
/// `Err` from `fetch` means the fetcher as a whole cannot serve requests and
/// aborts the crawl; per-item `Err`s are logged and skipped.
pub trait Fetcher: Sync {
    fn fetch(&self, query: &QueryRecord, limit: usize) -> Result<Vec<Result<FetchedItem, CrawlError>>, CrawlError>;
}

/// Reads `root/<query label>/*.wav`. Folder names may use the label as is or
/// with spaces replaced by underscores. Files are taken in name order.
#[derive(Debug, Clone)]
pub struct LocalDirFetcher {
    root: PathBuf,
}

impl LocalDirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn query_dir(&self, label: &str) -> Option<PathBuf> {
        [label.to_string(), label.replace(' ', "_")]
            .into_iter()
            .map(|name| self.root.join(name))
            .find(|p| p.is_dir())
    }
}

impl Fetcher for LocalDirFetcher {
    fn fetch(&self, query: &QueryRecord, limit: usize) -> Result<Vec<Result<FetchedItem, CrawlError>>, CrawlError> {
        if !self.root.is_dir() {
            return Err(CrawlError::FetcherUnavailable(format!(
                "corpus root {} is not a directory",
                self.root.display()
            )));
        }
        let Some(dir) = self.query_dir(&query.label) else {
            return Ok(Vec::new());
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            })
            .collect();
        files.sort();
        files.truncate(limit);
        Ok(files
            .into_iter()
            .map(|path| {
                let video_id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                match audio::wav_duration(&path) {
                    Ok(duration_s) => Ok(FetchedItem {
                        video_id,
                        duration_s,
                        audio: FetchedAudio::Path(path),
                    }),
                    Err(e) => Err(CrawlError::FetchFailed {
                        video_id,
                        reason: e.to_string(),
                    }),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestRow {
    query_label: String,
    video_id: String,
    duration_s: f64,
    url: String,
}

/// Reads a CSV manifest (`query_label,video_id,duration_s,url`) served over
/// HTTP and downloads the audio of each listed video on demand.
#[derive(Debug, Clone)]
pub struct HttpManifestFetcher {
    manifest_url: String,
}

impl HttpManifestFetcher {
    pub fn new(manifest_url: impl Into<String>) -> Self {
        Self {
            manifest_url: manifest_url.into(),
        }
    }

    fn manifest(&self) -> Result<Vec<ManifestRow>, CrawlError> {
        let text = ureq::get(&self.manifest_url)
            .call()
            .and_then(|mut r| r.body_mut().read_to_string())
            .map_err(|e| CrawlError::FetcherUnavailable(format!("{}: {e}", self.manifest_url)))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        reader
            .deserialize()
            .collect::<Result<Vec<ManifestRow>, _>>()
            .map_err(|e| CrawlError::Malformed(e.to_string()))
    }
}

fn download(url: &str) -> Result<Vec<u8>, String> {
    let mut response = ureq::get(url).call().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| e.to_string())?;
    Ok(bytes)
}

impl Fetcher for HttpManifestFetcher {
    fn fetch(&self, query: &QueryRecord, limit: usize) -> Result<Vec<Result<FetchedItem, CrawlError>>, CrawlError> {
        let rows = self.manifest()?;
        Ok(rows
            .into_iter()
            .filter(|r| r.query_label.trim().eq_ignore_ascii_case(&query.label))
            .take(limit)
            .map(|r| {
                download(&r.url)
                    .map(|bytes| FetchedItem {
                        video_id: r.video_id.clone(),
                        duration_s: r.duration_s,
                        audio: FetchedAudio::Bytes(bytes),
                    })
                    .map_err(|reason| CrawlError::FetchFailed {
                        video_id: r.video_id,
                        reason,
                    })
            })
            .collect())
    }
}

/// An accepted video, stored once per query it surfaced under.
#[derive(Debug, Clone, PartialEq)]
pub struct CrawledVideo {
    pub video_id: String,
    pub query: QueryRecord,
    pub duration_s: f64,
    pub audio_path: PathBuf,
}

impl CrawledVideo {
    /// Corpus-wide identifier of this (video, query) pair; the source id of
    /// all its segments.
    pub fn entry_id(&self) -> String {
        entry_id(self.query.dataset_id, &self.query.label, &self.video_id)
    }
}

pub fn entry_id(dataset: DatasetId, label: &str, video_id: &str) -> String {
    format!("{}.{}.{}", dataset.as_str(), slug(label), slug(video_id))
}

/// Filesystem- and URL-safe form of a label or id.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

/// The label every segment of `video` inherits.
pub fn query_ground_truth(video: &CrawledVideo) -> &str {
    &video.query.label
}

pub fn duration_accepted(duration_s: f64) -> bool {
    (MIN_DURATION_S..=MAX_DURATION_S).contains(&duration_s)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrawlReport {
    pub videos: Vec<CrawledVideo>,
    pub rejected_duration: usize,
    /// `(query string, message)` for every skipped item or failed query.
    pub failures: Vec<(String, String)>,
}

/// Runs every query through `fetcher`, stores accepted audio under
/// `store_root` at `sample_rate` and writes `store_root/inventory.csv`.
pub fn crawl(
    queries: &[QueryRecord],
    fetcher: &dyn Fetcher,
    limit_per_query: usize,
    store_root: &Path,
    sample_rate: u32,
) -> Result<CrawlReport, CrawlError> {
    fs::create_dir_all(store_root)?;
    let per_query: Vec<Result<CrawlReport, CrawlError>> = queries
        .par_iter()
        .map(|q| crawl_query(q, fetcher, limit_per_query, store_root, sample_rate))
        .collect();

    let mut report = CrawlReport::default();
    for (q, r) in queries.iter().zip(per_query) {
        let r = r?;
        info!(
            "{:?}: {} accepted, {} outside duration bounds, {} failed",
            q.query_string,
            r.videos.len(),
            r.rejected_duration,
            r.failures.len()
        );
        report.videos.extend(r.videos);
        report.rejected_duration += r.rejected_duration;
        report.failures.extend(r.failures);
    }
    sort_inventory(&mut report.videos);
    write_inventory(&store_root.join(INVENTORY_FILE), &report.videos, store_root)?;
    Ok(report)
}

fn crawl_query(
    query: &QueryRecord,
    fetcher: &dyn Fetcher,
    limit: usize,
    store_root: &Path,
    sample_rate: u32,
) -> Result<CrawlReport, CrawlError> {
    let items = match fetcher.fetch(query, limit) {
        Ok(items) => items,
        Err(e @ CrawlError::FetcherUnavailable(_)) => return Err(e),
        Err(e) => {
            warn!("{:?}: {e}", query.query_string);
            return Ok(CrawlReport {
                failures: vec![(query.query_string.clone(), e.to_string())],
                ..Default::default()
            });
        }
    };
    let mut report = CrawlReport::default();
    let mut seen = HashSet::new();
    for item in items {
        let item = match item {
            Ok(item) => item,
            Err(e) => {
                warn!("{:?}: {e}", query.query_string);
                report.failures.push((query.query_string.clone(), e.to_string()));
                continue;
            }
        };
        if !duration_accepted(item.duration_s) {
            report.rejected_duration += 1;
            continue;
        }
        let id = entry_id(query.dataset_id, &query.label, &item.video_id);
        if !seen.insert(id.clone()) {
            warn!("{:?}: duplicate video {}", query.query_string, item.video_id);
            continue;
        }
        match store_item(&item, &id, query, store_root, sample_rate) {
            Ok(audio_path) => report.videos.push(CrawledVideo {
                video_id: item.video_id,
                query: query.clone(),
                duration_s: item.duration_s,
                audio_path,
            }),
            Err(e) => {
                warn!("{:?}: {}: {e}", query.query_string, item.video_id);
                report.failures.push((query.query_string.clone(), format!("{}: {e}", item.video_id)));
            }
        }
    }
    Ok(report)
}

fn store_item(
    item: &FetchedItem,
    id: &str,
    query: &QueryRecord,
    store_root: &Path,
    sample_rate: u32,
) -> Result<PathBuf, CrawlError> {
    let clip = match &item.audio {
        FetchedAudio::Path(p) => audio::decode_and_canonicalize_at(p, sample_rate)?,
        FetchedAudio::Bytes(b) => audio::decode_bytes(b, id, sample_rate)?,
    };
    let path = store_root
        .join("audio")
        .join(query.dataset_id.as_str())
        .join(slug(&query.label))
        .join(format!("{}.wav", slug(&item.video_id)));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    audio::write_wav_file(&path, &clip.samples, clip.sample_rate)?;
    Ok(path)
}

fn sort_inventory(videos: &mut [CrawledVideo]) {
    videos.sort_by(|a, b| {
        (a.query.dataset_id.as_str(), &a.query.label, &a.video_id).cmp(&(
            b.query.dataset_id.as_str(),
            &b.query.label,
            &b.video_id,
        ))
    });
}

#[derive(Debug, Serialize, Deserialize)]
struct InventoryRow {
    video_id: String,
    query_label: String,
    dataset_id: DatasetId,
    duration_s: f64,
    audio_path: String,
}

/// Writes the inventory with audio paths relative to `base` where possible.
pub fn write_inventory(path: &Path, videos: &[CrawledVideo], base: &Path) -> Result<(), CrawlError> {
    let mut writer = csv::Writer::from_path(path)?;
    for v in videos {
        let rel = v.audio_path.strip_prefix(base).unwrap_or(&v.audio_path);
        writer.serialize(InventoryRow {
            video_id: v.video_id.clone(),
            query_label: v.query.label.clone(),
            dataset_id: v.query.dataset_id,
            duration_s: v.duration_s,
            audio_path: rel.to_string_lossy().replace('\\', "/"),
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an inventory; relative audio paths resolve against its directory.
pub fn read_inventory(path: &Path) -> Result<Vec<CrawledVideo>, CrawlError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: InventoryRow = row?;
        if !duration_accepted(row.duration_s) {
            return Err(CrawlError::Malformed(format!(
                "{} has duration {} s outside [{MIN_DURATION_S}, {MAX_DURATION_S}]",
                row.video_id, row.duration_s
            )));
        }
        let audio_path = PathBuf::from(&row.audio_path);
        out.push(CrawledVideo {
            video_id: row.video_id,
            query: QueryRecord::new(&row.query_label, row.dataset_id),
            duration_s: row.duration_s,
            audio_path: if audio_path.is_absolute() { audio_path } else { base.join(audio_path) },
        });
    }
    Ok(out)
}
