//! Glue between the stages: dataset clips to labeled patches, crawled videos
//! to corpus patches and a segment index.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError, Segment};
use crate::cnn::{predict_segments, CnnError, CnnModel, LabeledPatch, Prediction};
use crate::crawler::CrawledVideo;
use crate::dataset::{ClipManifestEntry, DatasetId, LabelVocabulary, Split, SplitAssignment};
use crate::features::{normalize, pad_to_patch, FeatureError, FeatureExtractor, FeaturePatch, NormStats};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("clip {0} has no split assignment")]
    MissingSplit(String),
    #[error("label {label:?} is not in the {dataset} vocabulary")]
    UnknownLabel { label: String, dataset: DatasetId },
    #[error("{0}: {1}")]
    Clip(String, Box<PipelineError>),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
}

/// Normalised patches of one dataset, by split.
#[derive(Debug, Clone)]
pub struct DatasetPatches {
    pub train: Vec<LabeledPatch>,
    pub val: Vec<LabeledPatch>,
    pub test: Vec<LabeledPatch>,
    pub norm_stats: NormStats,
}

impl DatasetPatches {
    pub fn split(&self, split: Split) -> &[LabeledPatch] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn clip_patches(path: &Path, source_id: &str, extractor: &FeatureExtractor) -> Result<Vec<FeaturePatch>, PipelineError> {
    let clip = audio::decode_and_canonicalize_at(path, extractor.config().sample_rate)?;
    let samples = pad_to_patch(&clip.samples, extractor.config());
    Ok(extractor.clip_patches(&samples, source_id)?)
}

/// Decodes every clip, cuts patches (short clips are zero-padded to one
/// patch), and z-scores all splits with training-split statistics.
pub fn featurize_dataset(
    entries: &[ClipManifestEntry],
    splits: &[SplitAssignment],
    vocabulary: &LabelVocabulary,
    extractor: &FeatureExtractor,
) -> Result<DatasetPatches, PipelineError> {
    let split_of: HashMap<&str, Split> = splits.iter().map(|s| (s.clip_id.as_str(), s.split)).collect();
    let per_clip: Vec<Result<(Split, Vec<LabeledPatch>), PipelineError>> = entries
        .par_iter()
        .map(|e| {
            let split = *split_of
                .get(e.clip_id.as_str())
                .ok_or_else(|| PipelineError::MissingSplit(e.clip_id.clone()))?;
            let label = vocabulary
                .index_of(&e.label)
                .ok_or_else(|| PipelineError::UnknownLabel {
                    label: e.label.clone(),
                    dataset: vocabulary.dataset_id,
                })?;
            let patches = clip_patches(Path::new(&e.file_path), &e.clip_id, extractor)
                .map_err(|err| PipelineError::Clip(e.clip_id.clone(), Box::new(err)))?;
            Ok((
                split,
                patches
                    .into_iter()
                    .map(|patch| LabeledPatch {
                        patch,
                        label,
                        clip_id: e.clip_id.clone(),
                    })
                    .collect(),
            ))
        })
        .collect();

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for r in per_clip {
        let (split, patches) = r?;
        match split {
            Split::Train => train.extend(patches),
            Split::Val => val.extend(patches),
            Split::Test => test.extend(patches),
        }
    }
    let norm_stats = NormStats::from_patches(train.iter().map(|p| &p.patch))?;
    for set in [&mut train, &mut val, &mut test] {
        normalize_labeled(set, &norm_stats)?;
    }
    Ok(DatasetPatches {
        train,
        val,
        test,
        norm_stats,
    })
}

fn normalize_labeled(set: &mut [LabeledPatch], stats: &NormStats) -> Result<(), FeatureError> {
    let mut patches: Vec<FeaturePatch> = set.iter_mut().map(|p| std::mem::replace(&mut p.patch, empty_patch())).collect();
    normalize(&mut patches, stats)?;
    for (slot, p) in set.iter_mut().zip(patches) {
        slot.patch = p;
    }
    Ok(())
}

fn empty_patch() -> FeaturePatch {
    FeaturePatch {
        segment_id: String::new(),
        values: ndarray::Array3::zeros((0, 0, 0)),
    }
}

/// Un-normalised patches of crawled videos with their query labels.
#[derive(Debug, Clone, Default)]
pub struct CorpusPatches {
    pub patches: Vec<FeaturePatch>,
    /// Query label of each segment (query ground truth).
    pub query_labels: HashMap<String, String>,
}

/// One patch per segment of every video, in inventory order. Segment ids
/// are `<entry id>#<index>`, matching [`build_segment_index`].
pub fn featurize_corpus(videos: &[CrawledVideo], extractor: &FeatureExtractor) -> Result<CorpusPatches, PipelineError> {
    let per_video: Vec<Result<Vec<FeaturePatch>, PipelineError>> = videos
        .par_iter()
        .map(|v| {
            let id = v.entry_id();
            let clip = audio::decode_and_canonicalize_at(&v.audio_path, extractor.config().sample_rate)
                .map_err(|e| PipelineError::Clip(id.clone(), Box::new(e.into())))?;
            if clip.samples.len() < extractor.config().patch_samples() {
                return Ok(Vec::new());
            }
            extractor
                .clip_patches(&clip.samples, &id)
                .map_err(|e| PipelineError::Clip(id, Box::new(e.into())))
        })
        .collect();
    let mut out = CorpusPatches::default();
    for (v, r) in videos.iter().zip(per_video) {
        for p in r? {
            out.query_labels.insert(p.segment_id.clone(), v.query.label.clone());
            out.patches.push(p);
        }
    }
    Ok(out)
}

/// Normalises with the model's statistics and scores every patch.
pub fn predict_corpus(model: &CnnModel<f32>, mut patches: Vec<FeaturePatch>) -> Result<Vec<Prediction>, PipelineError> {
    normalize(&mut patches, &model.norm_stats)?;
    Ok(predict_segments(model, &patches)?)
}

/// Where a segment's audio lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment: Segment,
    pub audio_path: PathBuf,
    pub query_label: String,
    pub dataset_id: DatasetId,
}

/// Every segment of every video, keyed by segment id. Lengths come from the
/// stored WAV headers, which are already at the canonical rate.
pub fn build_segment_index(
    videos: &[CrawledVideo],
    window: usize,
    stride: usize,
) -> Result<BTreeMap<String, SegmentRef>, PipelineError> {
    let mut index = BTreeMap::new();
    for v in videos {
        let reader = hound::WavReader::open(&v.audio_path).map_err(|e| AudioError::UnreadableFile {
            path: v.audio_path.display().to_string(),
            reason: e.to_string(),
        })?;
        let len = reader.duration() as usize;
        let source_id = v.entry_id();
        for i in 0..audio::segment_count(len, window, stride) {
            let segment = Segment {
                segment_id: audio::segment_id(&source_id, i),
                source_id: source_id.clone(),
                start_sample: i * stride,
                length_samples: window,
            };
            index.insert(
                segment.segment_id.clone(),
                SegmentRef {
                    segment,
                    audio_path: v.audio_path.clone(),
                    query_label: v.query.label.clone(),
                    dataset_id: v.query.dataset_id,
                },
            );
        }
    }
    Ok(index)
}

/// The samples of one indexed segment.
pub fn segment_samples(seg: &SegmentRef, sample_rate: u32) -> Result<Vec<f32>, PipelineError> {
    let clip = audio::decode_and_canonicalize_at(&seg.audio_path, sample_rate)?;
    let start = seg.segment.start_sample;
    let end = start + seg.segment.length_samples;
    if end > clip.samples.len() {
        return Err(AudioError::UnreadableFile {
            path: seg.audio_path.display().to_string(),
            reason: format!("segment ends at {end} but the file has {} samples", clip.samples.len()),
        }
        .into());
    }
    Ok(clip.samples[start..end].to_vec())
}
