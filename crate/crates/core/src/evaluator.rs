//! Confidence ranking, Precision@K curves and test accuracy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{argmax, predict_segments, CnnError, CnnModel, LabeledPatch, Prediction, Real};
use crate::dataset::{DatasetId, LabelVocabulary};
use crate::feedback::Judgment;

pub const DEFAULT_KMAX: usize = 40;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground truth for segment {0}")]
    MissingGroundTruth(String),
    #[error("curves do not share a k grid and ground-truth mode")]
    GridMismatch,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("malformed row: {0}")]
    Malformed(String),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtMode {
    Query,
    Human,
}

impl GtMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GtMode::Query => "query",
            GtMode::Human => "human",
        }
    }
}

impl fmt::Display for GtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GtMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "query" => Ok(GtMode::Query),
            "human" => Ok(GtMode::Human),
            other => Err(format!("unknown ground-truth mode {other:?} (expected query or human)")),
        }
    }
}

/// Ground truth per segment: the query label, or the aggregated human verdict.
#[derive(Debug, Clone, Copy)]
pub enum GroundTruth<'a> {
    Query(&'a HashMap<String, String>),
    Human(&'a HashMap<String, Judgment>),
}

impl GroundTruth<'_> {
    pub fn mode(&self) -> GtMode {
        match self {
            GroundTruth::Query(_) => GtMode::Query,
            GroundTruth::Human(_) => GtMode::Human,
        }
    }

    /// Whether `segment_id` counts as a hit for `class_label`.
    fn is_hit(&self, segment_id: &str, class_label: &str) -> Result<bool, EvalError> {
        let missing = || EvalError::MissingGroundTruth(segment_id.to_string());
        match self {
            GroundTruth::Query(map) => Ok(map.get(segment_id).ok_or_else(missing)? == class_label),
            GroundTruth::Human(map) => match map.get(segment_id) {
                Some(Judgment::Correct) => Ok(true),
                Some(Judgment::Incorrect) => Ok(false),
                Some(Judgment::Pending) | None => Err(missing()),
            },
        }
    }

    /// Whether a segment has a usable entry (judged, in human mode).
    pub fn covers(&self, segment_id: &str) -> bool {
        match self {
            GroundTruth::Query(map) => map.contains_key(segment_id),
            GroundTruth::Human(map) => matches!(map.get(segment_id), Some(Judgment::Correct | Judgment::Incorrect)),
        }
    }
}

/// The persisted form of a prediction: one row of the predictions CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub segment_id: String,
    pub classifier: DatasetId,
    pub predicted_class: String,
    pub confidence: f64,
}

impl ScoredSegment {
    pub fn from_prediction(p: &Prediction, classifier: DatasetId) -> Self {
        ScoredSegment {
            segment_id: p.segment_id.clone(),
            classifier,
            predicted_class: p.predicted_class.clone(),
            confidence: p.confidence,
        }
    }
}

/// Anything that can be ranked by confidence within its predicted class.
pub trait Ranked {
    fn segment_id(&self) -> &str;
    fn predicted_class(&self) -> &str;
    fn confidence(&self) -> f64;
}

impl Ranked for Prediction {
    fn segment_id(&self) -> &str {
        &self.segment_id
    }
    fn predicted_class(&self) -> &str {
        &self.predicted_class
    }
    fn confidence(&self) -> f64 {
        self.confidence
    }
}

impl Ranked for ScoredSegment {
    fn segment_id(&self) -> &str {
        &self.segment_id
    }
    fn predicted_class(&self) -> &str {
        &self.predicted_class
    }
    fn confidence(&self) -> f64 {
        self.confidence
    }
}

fn rank_order<R: Ranked>(a: &R, b: &R) -> Ordering {
    b.confidence()
        .total_cmp(&a.confidence())
        .then_with(|| a.segment_id().cmp(b.segment_id()))
}

/// Top `k` segments predicted as `class_label`, by descending confidence with
/// ties broken by ascending segment id.
pub fn rank_segments<R: Ranked>(predictions: &[R], class_label: &str, k: usize) -> Vec<String> {
    let mut hits: Vec<&R> = predictions
        .iter()
        .filter(|p| p.predicted_class() == class_label)
        .collect();
    let k = k.min(hits.len());
    if k == 0 {
        return Vec::new();
    }
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        hits.truncate(k);
    }
    hits.sort_by(|a, b| rank_order(*a, *b));
    hits.into_iter().map(|p| p.segment_id().to_string()).collect()
}

/// Fraction of `ranked` that are hits for `class_label`; 0 for an empty list.
pub fn precision_at_k(ranked: &[String], gt: &GroundTruth, class_label: &str) -> Result<f64, EvalError> {
    if ranked.is_empty() {
        return Ok(0.0);
    }
    Ok(hit_prefix_counts(ranked, gt, class_label)?[ranked.len()] as f64 / ranked.len() as f64)
}

/// `counts[i]` = number of hits among the first `i` ranked segments.
fn hit_prefix_counts(ranked: &[String], gt: &GroundTruth, class_label: &str) -> Result<Vec<usize>, EvalError> {
    let mut counts = Vec::with_capacity(ranked.len() + 1);
    counts.push(0);
    for id in ranked {
        let hit = gt.is_hit(id, class_label)? as usize;
        counts.push(counts.last().unwrap() + hit);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCurve {
    pub points: Vec<CurvePoint>,
    pub gt_mode: GtMode,
}

impl PrecisionCurve {
    pub fn ks(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|p| p.k)
    }
}

/// The default grid `1..=kmax`.
pub fn k_grid(kmax: usize) -> Vec<usize> {
    (1..=kmax).collect()
}

/// Precision@K of one class at every `k` in `grid` (strictly increasing).
/// When fewer than `k` segments were predicted as the class, the
/// denominator is the number available. `None` if the class has no
/// predicted segments.
pub fn class_curve<R: Ranked>(
    predictions: &[R],
    class_label: &str,
    gt: &GroundTruth,
    grid: &[usize],
) -> Result<Option<PrecisionCurve>, EvalError> {
    let kmax = grid.iter().copied().max().unwrap_or(0);
    let ranked = match gt {
        GroundTruth::Query(_) => rank_segments(predictions, class_label, kmax),
        GroundTruth::Human(_) => {
            let judged: Vec<&R> = predictions.iter().filter(|p| gt.covers(p.segment_id())).collect();
            rank_refs(&judged, class_label, kmax)
        }
    };
    if ranked.is_empty() {
        return Ok(None);
    }
    let counts = hit_prefix_counts(&ranked, gt, class_label)?;
    let points = grid
        .iter()
        .map(|&k| {
            let n = k.min(ranked.len());
            CurvePoint {
                k,
                precision: counts[n] as f64 / n as f64,
            }
        })
        .collect();
    Ok(Some(PrecisionCurve {
        points,
        gt_mode: gt.mode(),
    }))
}

fn rank_refs<R: Ranked>(predictions: &[&R], class_label: &str, k: usize) -> Vec<String> {
    struct ByRef<'a, R>(&'a R);
    impl<R: Ranked> Ranked for ByRef<'_, R> {
        fn segment_id(&self) -> &str {
            self.0.segment_id()
        }
        fn predicted_class(&self) -> &str {
            self.0.predicted_class()
        }
        fn confidence(&self) -> f64 {
            self.0.confidence()
        }
    }
    let wrapped: Vec<ByRef<R>> = predictions.iter().map(|p| ByRef(*p)).collect();
    rank_segments(&wrapped, class_label, k)
}

/// Per-class curves of one classifier, in vocabulary order. Classes with no
/// predicted (or, in human mode, no judged) segments are omitted.
pub fn per_class_curves<R: Ranked + Sync>(
    predictions: &[R],
    vocabulary: &LabelVocabulary,
    gt: &GroundTruth,
    grid: &[usize],
) -> Result<Vec<(String, PrecisionCurve)>, EvalError> {
    let curves: Vec<Result<Option<(String, PrecisionCurve)>, EvalError>> = vocabulary
        .labels()
        .par_iter()
        .map(|label| Ok(class_curve(predictions, label, gt, grid)?.map(|c| (label.clone(), c))))
        .collect();
    curves.into_iter().filter_map(|c| c.transpose()).collect()
}

/// Macro average over the classes that have a ranking.
pub fn classifier_curve<R: Ranked + Sync>(
    predictions: &[R],
    vocabulary: &LabelVocabulary,
    gt: &GroundTruth,
    grid: &[usize],
) -> Result<PrecisionCurve, EvalError> {
    let classes = per_class_curves(predictions, vocabulary, gt, grid)?;
    Ok(macro_average(&classes, grid, gt.mode()))
}

/// Weights proportional to each vocabulary's class count.
pub fn class_count_weights(vocabularies: &[&LabelVocabulary]) -> Vec<f64> {
    let total: usize = vocabularies.iter().map(|v| v.class_count()).sum();
    vocabularies
        .iter()
        .map(|v| v.class_count() as f64 / total as f64)
        .collect()
}

/// Pointwise weighted mean; weights are normalised by their sum.
pub fn weighted_average_curve(curves: &[PrecisionCurve], weights: &[f64]) -> Result<PrecisionCurve, EvalError> {
    if curves.is_empty() || curves.len() != weights.len() {
        return Err(EvalError::InvalidWeights(format!(
            "{} weights for {} curves",
            weights.len(),
            curves.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(EvalError::InvalidWeights("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(EvalError::InvalidWeights("weights sum to zero".into()));
    }
    let first = &curves[0];
    if curves
        .iter()
        .any(|c| c.gt_mode != first.gt_mode || !c.ks().eq(first.ks()))
    {
        return Err(EvalError::GridMismatch);
    }
    let points = first
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| CurvePoint {
            k: p.k,
            precision: curves
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.points[i].precision)
                .sum::<f64>()
                / total,
        })
        .collect();
    Ok(PrecisionCurve {
        points,
        gt_mode: first.gt_mode,
    })
}

/// Curves of one classifier: the macro average and its per-class parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierCurves {
    pub classifier: DatasetId,
    pub curve: PrecisionCurve,
    pub per_class: Vec<(String, PrecisionCurve)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    /// Classifiers with at least one ranked class, in input order.
    pub classifiers: Vec<ClassifierCurves>,
    /// Class-count weighted average over `classifiers`; `None` if empty.
    pub weighted: Option<PrecisionCurve>,
}

/// Evaluates several classifiers against one ground truth. Classifiers with
/// nothing to rank are left out, and the weights of the rest renormalised.
pub fn evaluate_classifiers(
    groups: &[(&LabelVocabulary, &[ScoredSegment])],
    gt: &GroundTruth,
    grid: &[usize],
) -> Result<CurveSet, EvalError> {
    let mut classifiers = Vec::new();
    let mut vocabs = Vec::new();
    for (vocab, preds) in groups {
        let per_class = per_class_curves(preds, vocab, gt, grid)?;
        if per_class.is_empty() {
            continue;
        }
        let curve = macro_average(&per_class, grid, gt.mode());
        classifiers.push(ClassifierCurves {
            classifier: vocab.dataset_id,
            curve,
            per_class,
        });
        vocabs.push(*vocab);
    }
    let weighted = if classifiers.is_empty() {
        None
    } else {
        let curves: Vec<PrecisionCurve> = classifiers.iter().map(|c| c.curve.clone()).collect();
        Some(weighted_average_curve(&curves, &class_count_weights(&vocabs))?)
    };
    Ok(CurveSet { classifiers, weighted })
}

fn macro_average(classes: &[(String, PrecisionCurve)], grid: &[usize], gt_mode: GtMode) -> PrecisionCurve {
    let n = classes.len();
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| CurvePoint {
            k,
            precision: if n == 0 {
                0.0
            } else {
                classes.iter().map(|(_, c)| c.points[i].precision).sum::<f64>() / n as f64
            },
        })
        .collect();
    PrecisionCurve { points, gt_mode }
}

/// Fraction of all segments whose predicted class equals their query label.
pub fn corpus_precision<R: Ranked>(predictions: &[R], query_gt: &HashMap<String, String>) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let gt = GroundTruth::Query(query_gt);
    let mut hits = 0usize;
    for p in predictions {
        hits += gt.is_hit(p.segment_id(), p.predicted_class())? as usize;
    }
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub patch_accuracy: f64,
    pub clip_accuracy: f64,
    pub patches: usize,
    pub clips: usize,
}

/// Patch-level and clip-level accuracy from per-patch class probabilities.
/// A clip's label is the argmax of its mean patch probability.
pub fn accuracy_from_probabilities(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    clip_ids: &[&str],
) -> Result<AccuracyReport, EvalError> {
    if probabilities.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if probabilities.len() != labels.len() || labels.len() != clip_ids.len() {
        return Err(EvalError::Malformed("probabilities, labels and clip ids differ in length".into()));
    }
    let mut correct = 0usize;
    let mut clips: BTreeMap<&str, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for ((p, &label), &clip) in probabilities.iter().zip(labels).zip(clip_ids) {
        correct += (argmax(p).0 == label) as usize;
        let entry = clips.entry(clip).or_insert_with(|| (vec![0.0; p.len()], label, 0));
        if entry.1 != label {
            return Err(EvalError::Malformed(format!("clip {clip} has patches with different labels")));
        }
        entry.0.iter_mut().zip(p).for_each(|(s, v)| *s += v);
        entry.2 += 1;
    }
    let clip_correct = clips
        .values()
        .filter(|(sum, label, n)| {
            let mean: Vec<f64> = sum.iter().map(|s| s / *n as f64).collect();
            argmax(&mean).0 == *label
        })
        .count();
    Ok(AccuracyReport {
        patch_accuracy: correct as f64 / probabilities.len() as f64,
        clip_accuracy: clip_correct as f64 / clips.len() as f64,
        patches: probabilities.len(),
        clips: clips.len(),
    })
}

/// Scores normalised test patches with `model`.
pub fn test_accuracy<T: Real>(model: &CnnModel<T>, test: &[LabeledPatch]) -> Result<AccuracyReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let patches: Vec<_> = test.iter().map(|p| p.patch.clone()).collect();
    let predictions = predict_segments(model, &patches)?;
    let probabilities: Vec<Vec<f64>> = predictions.into_iter().map(|p| p.probabilities).collect();
    let labels: Vec<usize> = test.iter().map(|p| p.label).collect();
    let clip_ids: Vec<&str> = test.iter().map(|p| p.clip_id.as_str()).collect();
    accuracy_from_probabilities(&probabilities, &labels, &clip_ids)
}

pub fn write_predictions<W: Write>(out: W, rows: &[ScoredSegment]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a predictions CSV; `#` lines are comments.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<ScoredSegment>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    k: usize,
    precision: f64,
    gt_mode: GtMode,
    classifier: &'a str,
}

/// Writes `k,precision,gt_mode,classifier` rows for each named curve.
pub fn write_curves<W: Write>(out: W, curves: &[(String, PrecisionCurve)]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_writer(out);
    for (name, curve) in curves {
        for p in &curve.points {
            writer.serialize(CurveRow {
                k: p.k,
                precision: p.precision,
                gt_mode: curve.gt_mode,
                classifier: name,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClassCurveRow<'a> {
    k: usize,
    precision: f64,
    gt_mode: GtMode,
    classifier: &'a str,
    class_label: &'a str,
}

/// Per-class variant of [`write_curves`] with an extra `class_label` column.
pub fn write_class_curves<W: Write>(
    out: W,
    classifier: &str,
    curves: &[(String, PrecisionCurve)],
) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_writer(out);
    for (label, curve) in curves {
        for p in &curve.points {
            writer.serialize(ClassCurveRow {
                k: p.k,
                precision: p.precision,
                gt_mode: curve.gt_mode,
                classifier,
                class_label: label,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}
