//! One function per subcommand. Each reads its inputs from the work
//! directory, so any step can be rerun on its own.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::path::Path;

use hearsay_core::cnn::{self, load_model, save_model, LabeledPatch};
use hearsay_core::crawler::{self, read_inventory, CrawledVideo, Fetcher, HttpManifestFetcher, LocalDirFetcher};
use hearsay_core::dataset::{self, DatasetId, LabelVocabulary, Split};
use hearsay_core::evaluator::{
    self, evaluate_classifiers, k_grid, read_predictions, GroundTruth, GtMode, ScoredSegment,
};
use hearsay_core::feedback::{self, FeedbackState, FeedbackStore};
use hearsay_core::features::{read_patch_cache, write_patch_cache, FeatureExtractor, NormStats, PatchCacheMeta};
use hearsay_core::fixture::{self, FixtureConfig};
use hearsay_core::pipeline::{self, build_segment_index};
use hearsay_server::{AppState, Corpus};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::layout::{self, ensure_parent, recorded_hash, require, warn_if_stale, write_csv, Layout};

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub hash: String,
    pub layout: Layout,
}

impl Ctx {
    pub fn new(cfg: PipelineConfig) -> Self {
        let hash = cfg.hash();
        let layout = Layout::new(&cfg.paths.work_dir);
        Self { cfg, hash, layout }
    }

    fn check_csv(&self, path: &Path) {
        warn_if_stale(path, recorded_hash(path).as_deref(), &self.hash);
    }
}

pub fn split(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    for &d in datasets {
        let entries = load_entries(ctx, d)?;
        let assignments = dataset::split_dataset(&entries, ctx.cfg.seed)?;
        let counts = [Split::Train, Split::Val, Split::Test]
            .map(|s| assignments.iter().filter(|a| a.split == s).count());
        log::info!("{d}: {} train / {} val / {} test clips", counts[0], counts[1], counts[2]);
        write_csv(&ctx.layout.splits(d), &ctx.hash, |buf| {
            Ok(dataset::write_splits(buf, &assignments)?)
        })?;
    }
    Ok(())
}

fn load_entries(ctx: &Ctx, d: DatasetId) -> Result<Vec<dataset::ClipManifestEntry>> {
    let path = ctx.cfg.manifest(d)?;
    let entries = dataset::load_manifest(path)?;
    if let Some(e) = entries.iter().find(|e| e.dataset_id != d) {
        return Err(CliError::InvalidData(format!(
            "{} lists clip {} of dataset {}, expected {d}",
            path.display(),
            e.clip_id,
            e.dataset_id
        )));
    }
    Ok(entries)
}

/// Normalisation statistics of a dataset's training split.
#[derive(Debug, Serialize, Deserialize)]
struct NormFile {
    config_hash: String,
    norm_stats: NormStats,
}

pub fn featurize(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let extractor = FeatureExtractor::new(ctx.cfg.features.clone())?;
    for &d in datasets {
        let entries = load_entries(ctx, d)?;
        let splits_path = ctx.layout.splits(d);
        require(&splits_path, "split")?;
        ctx.check_csv(&splits_path);
        let splits = dataset::read_splits(&splits_path)?;
        let vocab = ctx.cfg.vocabulary(d);
        let patches = pipeline::featurize_dataset(&entries, &splits, &vocab, &extractor)?;
        for split in [Split::Train, Split::Val, Split::Test] {
            let set = patches.split(split);
            let path = ctx.layout.features(d, split);
            ensure_parent(&path)?;
            let meta = PatchCacheMeta {
                config_hash: ctx.hash.clone(),
                shape: [ctx.cfg.features.mel_bands, ctx.cfg.features.frames_per_patch, 2],
                segment_ids: Vec::new(),
                labels: Some(set.iter().map(|p| vocab.label(p.label).to_string()).collect()),
                clip_ids: Some(set.iter().map(|p| p.clip_id.clone()).collect()),
            };
            let plain: Vec<_> = set.iter().map(|p| p.patch.clone()).collect();
            write_patch_cache(&path, &plain, meta)?;
            log::info!("{d}/{}: {} patches", split.as_str(), set.len());
            println!("wrote {}", path.display());
        }
        let norm_path = ctx.layout.norm_stats(d);
        let norm = NormFile {
            config_hash: ctx.hash.clone(),
            norm_stats: patches.norm_stats,
        };
        fs::write(&norm_path, serde_json::to_vec_pretty(&norm)?)?;
        println!("wrote {}", norm_path.display());
    }
    Ok(())
}

fn read_labeled(ctx: &Ctx, d: DatasetId, split: Split, vocab: &LabelVocabulary) -> Result<Vec<LabeledPatch>> {
    let path = ctx.layout.features(d, split);
    require(&path, "featurize")?;
    let (patches, meta) = read_patch_cache(&path)?;
    warn_if_stale(&path, Some(&meta.config_hash), &ctx.hash);
    let (labels, clips) = match (meta.labels, meta.clip_ids) {
        (Some(l), Some(c)) if l.len() == patches.len() && c.len() == patches.len() => (l, c),
        _ => {
            return Err(CliError::InvalidData(format!(
                "{} lacks per-patch labels and clip ids",
                path.display()
            )))
        }
    };
    patches
        .into_iter()
        .zip(labels)
        .zip(clips)
        .map(|((patch, label), clip_id)| {
            let label = vocab
                .index_of(&label)
                .ok_or_else(|| CliError::InvalidData(format!("{}: unknown label {label}", path.display())))?;
            Ok(LabeledPatch { patch, label, clip_id })
        })
        .collect()
}

pub fn train(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    for &d in datasets {
        let vocab = ctx.cfg.vocabulary(d);
        let train_set = read_labeled(ctx, d, Split::Train, &vocab)?;
        let val_set = read_labeled(ctx, d, Split::Val, &vocab)?;
        let norm_path = ctx.layout.norm_stats(d);
        require(&norm_path, "featurize")?;
        let norm: NormFile = serde_json::from_slice(&fs::read(&norm_path)?)?;
        let cnn_cfg = ctx.cfg.cnn_config(vocab.class_count());
        log::info!(
            "{d}: training on {} patches, validating on {}",
            train_set.len(),
            val_set.len()
        );
        let (mut model, log) = cnn::train::<f32>(
            &train_set,
            &val_set,
            &ctx.cfg.train_config(),
            &cnn_cfg,
            &vocab,
            norm.norm_stats,
        )?;
        model.config_hash = ctx.hash.clone();
        let model_path = ctx.layout.model(d);
        save_model(&model, &model_path)?;
        println!("wrote {}", model_path.display());
        log::info!("{d}: best validation accuracy {:.4} at epoch {}", log.best_val_acc, log.best_epoch);
        write_csv(&ctx.layout.train_log(d), &ctx.hash, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for e in &log.epochs {
                w.serialize(e)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

pub fn crawl(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let queries: Vec<_> = datasets
        .iter()
        .flat_map(|&d| crawler::build_queries(&ctx.cfg.vocabulary(d)))
        .collect();
    let fetcher: Box<dyn Fetcher> = match (&ctx.cfg.crawl.manifest_url, &ctx.cfg.paths.corpus_root) {
        (Some(url), _) => Box::new(HttpManifestFetcher::new(url.clone())),
        (None, Some(root)) => {
            if !root.is_dir() {
                return Err(CliError::MissingInput(format!("corpus root not found: {}", root.display())));
            }
            Box::new(LocalDirFetcher::new(root.clone()))
        }
        (None, None) => {
            return Err(CliError::BadConfig(
                "set crawl.manifest_url or paths.corpus_root to crawl".into(),
            ))
        }
    };
    let report = crawler::crawl(
        &queries,
        fetcher.as_ref(),
        ctx.cfg.crawl.limit_per_query,
        &ctx.layout.corpus(),
        ctx.cfg.features.sample_rate,
    )?;
    for (query, msg) in &report.failures {
        log::warn!("{query}: {msg}");
    }
    log::info!(
        "{} videos stored, {} rejected by duration, {} failures",
        report.videos.len(),
        report.rejected_duration,
        report.failures.len()
    );
    layout::stamp_csv(&ctx.layout.inventory(), &ctx.hash)
}

fn inventory(ctx: &Ctx) -> Result<Vec<CrawledVideo>> {
    let path = ctx.layout.inventory();
    require(&path, "crawl")?;
    ctx.check_csv(&path);
    Ok(read_inventory(&path)?)
}

pub fn predict(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let videos = inventory(ctx)?;
    let extractor = FeatureExtractor::new(ctx.cfg.features.clone())?;
    for &d in datasets {
        let model_path = ctx.layout.model(d);
        require(&model_path, "train")?;
        let model = load_model(&model_path)?;
        warn_if_stale(&model_path, Some(&model.config_hash), &ctx.hash);
        let own: Vec<CrawledVideo> = videos.iter().filter(|v| v.query.dataset_id == d).cloned().collect();
        if own.is_empty() {
            log::warn!("{d}: the inventory holds no videos crawled for this dataset");
        }
        let corpus = pipeline::featurize_corpus(&own, &extractor)?;
        let predictions = pipeline::predict_corpus(&model, corpus.patches)?;
        let rows: Vec<ScoredSegment> = predictions
            .iter()
            .map(|p| ScoredSegment::from_prediction(p, d))
            .collect();
        log::info!("{d}: scored {} segments from {} videos", rows.len(), own.len());
        write_csv(&ctx.layout.predictions(d), &ctx.hash, |buf| {
            Ok(evaluator::write_predictions(buf, &rows)?)
        })?;
    }
    Ok(())
}

fn predictions(ctx: &Ctx, d: DatasetId) -> Result<Vec<ScoredSegment>> {
    let path = ctx.layout.predictions(d);
    require(&path, "predict")?;
    ctx.check_csv(&path);
    let rows = read_predictions(File::open(&path)?)?;
    if let Some(r) = rows.iter().find(|r| r.classifier != d) {
        return Err(CliError::InvalidData(format!(
            "{} holds a {} prediction for {}",
            path.display(),
            r.classifier,
            r.segment_id
        )));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct RankRow<'a> {
    classifier: DatasetId,
    class_label: &'a str,
    rank: usize,
    segment_id: &'a str,
    confidence: f64,
}

pub fn rank(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let kmax = ctx.cfg.evaluation.kmax;
    for &d in datasets {
        let rows = predictions(ctx, d)?;
        let confidence: HashMap<&str, f64> = rows.iter().map(|r| (r.segment_id.as_str(), r.confidence)).collect();
        let vocab = ctx.cfg.vocabulary(d);
        write_csv(&ctx.layout.rankings(d), &ctx.hash, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for label in vocab.labels() {
                for (i, id) in evaluator::rank_segments(&rows, label, kmax).iter().enumerate() {
                    w.serialize(RankRow {
                        classifier: d,
                        class_label: label,
                        rank: i + 1,
                        segment_id: id,
                        confidence: confidence[id.as_str()],
                    })?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

/// Predictions of every requested dataset that has been predicted.
fn available_predictions(ctx: &Ctx, datasets: &[DatasetId]) -> Result<Vec<(DatasetId, Vec<ScoredSegment>)>> {
    let out: Vec<_> = datasets
        .iter()
        .filter(|&&d| ctx.layout.predictions(d).exists())
        .map(|&d| Ok((d, predictions(ctx, d)?)))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(CliError::MissingInput(format!(
            "no predictions under {}; run `hearsay predict` first",
            ctx.layout.root().display()
        )));
    }
    Ok(out)
}

pub fn assign(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let all: Vec<ScoredSegment> = available_predictions(ctx, datasets)?
        .into_iter()
        .flat_map(|(_, rows)| rows)
        .collect();
    let ev = &ctx.cfg.evaluation;
    let segments = feedback::select_evaluation_set(&all, ev.k_per_class);
    let assignments = feedback::assign(&segments, &ev.evaluators, ev.min_votes, ctx.cfg.seed)?;

    let path = ctx.layout.assignments();
    let votes = ctx.layout.votes();
    let has_votes = fs::metadata(&votes).map(|m| m.len() > 0).unwrap_or(false);
    if has_votes && path.exists() {
        let existing = feedback::read_assignments(File::open(&path)?)?;
        if existing != assignments {
            return Err(CliError::InvalidData(format!(
                "{} already holds votes for a different assignment table; move it aside to reassign",
                votes.display()
            )));
        }
    }
    log::info!(
        "{} segments, {} assignments over {} evaluators",
        segments.len(),
        assignments.len(),
        ev.evaluators.len()
    );
    write_csv(&path, &ctx.hash, |buf| Ok(feedback::write_assignments(buf, &assignments)?))
}

fn feedback_state(ctx: &Ctx) -> Result<FeedbackState> {
    let path = ctx.layout.assignments();
    require(&path, "assign")?;
    let assignments = feedback::read_assignments(File::open(&path)?)?;
    let votes = match File::open(ctx.layout.votes()) {
        Ok(f) => feedback::read_vote_log(f)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(FeedbackState::replay(assignments, ctx.cfg.evaluation.min_votes, votes)?)
}

/// Query label of every segment, from the inventory entry its id names.
fn query_ground_truth(videos: &[CrawledVideo], rows: &[ScoredSegment]) -> HashMap<String, String> {
    let by_entry: HashMap<String, &str> = videos.iter().map(|v| (v.entry_id(), v.query.label.as_str())).collect();
    rows.iter()
        .filter_map(|r| {
            let (entry, _) = r.segment_id.rsplit_once('#')?;
            by_entry.get(entry).map(|l| (r.segment_id.clone(), l.to_string()))
        })
        .collect()
}

#[derive(Serialize)]
struct CorpusPrecisionRow {
    classifier: DatasetId,
    segments: usize,
    precision: f64,
}

#[derive(Serialize)]
struct AccuracyRow {
    classifier: DatasetId,
    patch_accuracy: f64,
    clip_accuracy: f64,
    patches: usize,
    clips: usize,
}

pub fn evaluate(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let gt_mode = ctx.cfg.evaluation.gt;
    let loaded = available_predictions(ctx, datasets)?;
    let all: Vec<ScoredSegment> = loaded.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let videos = inventory(ctx)?;
    let query_gt = query_ground_truth(&videos, &all);
    let judgments = match gt_mode {
        GtMode::Query => HashMap::new(),
        GtMode::Human => feedback_state(ctx)?.judgments(),
    };
    let gt = match gt_mode {
        GtMode::Query => GroundTruth::Query(&query_gt),
        GtMode::Human => GroundTruth::Human(&judgments),
    };

    let vocabs: Vec<LabelVocabulary> = loaded.iter().map(|(d, _)| ctx.cfg.vocabulary(*d)).collect();
    let groups: Vec<(&LabelVocabulary, &[ScoredSegment])> =
        vocabs.iter().zip(&loaded).map(|(v, (_, rows))| (v, rows.as_slice())).collect();
    let grid = k_grid(ctx.cfg.evaluation.kmax);
    let set = evaluate_classifiers(&groups, &gt, &grid)?;

    let mut named: Vec<(String, evaluator::PrecisionCurve)> = set
        .classifiers
        .iter()
        .map(|c| (c.classifier.to_string(), c.curve.clone()))
        .collect();
    match &set.weighted {
        Some(w) => named.push(("weighted".to_string(), w.clone())),
        None => log::warn!("no classifier has a ranking under {gt_mode} ground truth"),
    }
    write_csv(&ctx.layout.curves(gt_mode), &ctx.hash, |buf| {
        Ok(evaluator::write_curves(buf, &named)?)
    })?;
    for c in &set.classifiers {
        write_csv(&ctx.layout.class_curves(gt_mode, c.classifier), &ctx.hash, |buf| {
            Ok(evaluator::write_class_curves(buf, c.classifier.as_str(), &c.per_class)?)
        })?;
    }

    let mut precision_rows = Vec::new();
    for (d, rows) in &loaded {
        precision_rows.push(CorpusPrecisionRow {
            classifier: *d,
            segments: rows.len(),
            precision: evaluator::corpus_precision(rows, &query_gt)?,
        });
    }
    write_csv(&ctx.layout.corpus_precision(), &ctx.hash, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for r in &precision_rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut accuracy_rows = Vec::new();
    for (d, _) in &loaded {
        let model_path = ctx.layout.model(*d);
        if !model_path.exists() || !ctx.layout.features(*d, Split::Test).exists() {
            continue;
        }
        let model = load_model(&model_path)?;
        let test = read_labeled(ctx, *d, Split::Test, &model.vocabulary)?;
        let r = evaluator::test_accuracy(&model, &test)?;
        log::info!("{d}: clip accuracy {:.4}, patch accuracy {:.4}", r.clip_accuracy, r.patch_accuracy);
        accuracy_rows.push(AccuracyRow {
            classifier: *d,
            patch_accuracy: r.patch_accuracy,
            clip_accuracy: r.clip_accuracy,
            patches: r.patches,
            clips: r.clips,
        });
    }
    if !accuracy_rows.is_empty() {
        write_csv(&ctx.layout.test_accuracy(), &ctx.hash, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in &accuracy_rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

pub fn serve(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    let loaded = available_predictions(ctx, datasets)?;
    let videos = inventory(ctx)?;
    let features = &ctx.cfg.features;
    let segments = build_segment_index(&videos, features.patch_samples(), features.patch_stride_samples())?;
    let path = ctx.layout.assignments();
    require(&path, "assign")?;
    ctx.check_csv(&path);
    let assignments = feedback::read_assignments(File::open(&path)?)?;
    let store = FeedbackStore::open(assignments, ctx.cfg.evaluation.min_votes, &ctx.layout.votes())?;

    let corpus = Corpus {
        segments,
        predictions: loaded.iter().flat_map(|(_, r)| r.iter().cloned()).collect(),
        vocabularies: loaded.iter().map(|(d, _)| ctx.cfg.vocabulary(*d)).collect(),
        sample_rate: features.sample_rate,
        default_kmax: ctx.cfg.evaluation.kmax,
    };
    let state = AppState::new(corpus, store);
    let addr = format!("{}:{}", ctx.cfg.serve.host, ctx.cfg.serve.port);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Unavailable(format!("cannot listen on {addr}: {e}")))?;
        println!("listening on http://{}", listener.local_addr()?);
        hearsay_server::serve(listener, state).await?;
        Ok(())
    })
}

/// Every offline step in order: split through evaluation plus evaluator
/// assignment.
pub fn run(ctx: &Ctx, datasets: &[DatasetId]) -> Result<()> {
    split(ctx, datasets)?;
    featurize(ctx, datasets)?;
    train(ctx, datasets)?;
    crawl(ctx, datasets)?;
    predict(ctx, datasets)?;
    rank(ctx, datasets)?;
    evaluate(ctx, datasets)?;
    assign(ctx, datasets)
}

/// Writes the synthetic tone dataset, a crawlable corpus directory and a
/// config file pointing at both.
pub fn fixture(out: &Path, fixture_cfg: &FixtureConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    let manifest = fixture::generate_dataset(&out.join("dataset"), fixture_cfg)?;
    fixture::generate_corpus(&out.join("videos"), fixture_cfg)?;

    let mut cfg = PipelineConfig::default();
    let rel = manifest.strip_prefix(out).unwrap_or(&manifest).to_path_buf();
    cfg.paths.manifests = BTreeMap::from([(DatasetId::Synthetic, rel)]);
    cfg.paths.corpus_root = Some("videos".into());
    cfg.paths.work_dir = "work".into();
    let toy = fixture::toy_train_config(cfg.seed);
    cfg.cnn.fc_width = fixture::toy_cnn_config().fc_width;
    cfg.train.batch_size = toy.batch_size;
    cfg.train.learning_rate = toy.learning_rate;
    cfg.train.epochs = toy.epochs;
    cfg.train.early_stop_patience = toy.early_stop_patience;
    cfg.evaluation.kmax = 10;
    cfg.evaluation.k_per_class = 5;
    let path = out.join("hearsay.toml");
    fs::write(&path, cfg.to_toml())?;
    println!("wrote {}", path.display());
    Ok(())
}
