//! Pipeline configuration: a TOML document layered under `HEARSAY_*`
//! environment variables and command-line flags.
//!
//! Precedence, highest first: flags, environment, file, built-in defaults.
//! Nested keys use a double underscore in the environment, so
//! `HEARSAY_TRAIN__EPOCHS=5` sets `train.epochs`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use hearsay_core::cnn::{CnnConfig, TrainConfig};
use hearsay_core::dataset::{DatasetId, LabelVocabulary};
use hearsay_core::evaluator::{GtMode, DEFAULT_KMAX};
use hearsay_core::feedback::{DEFAULT_K_PER_CLASS, DEFAULT_MIN_VOTES};
use hearsay_core::features::FeatureConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "HEARSAY_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives the split, training and evaluator assignment.
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    pub paths: PathsConfig,
    pub features: FeatureConfig,
    pub cnn: CnnSettings,
    pub train: TrainSettings,
    pub crawl: CrawlSettings,
    pub evaluation: EvalSettings,
    pub serve: ServeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Clip manifest per dataset.
    pub manifests: BTreeMap<DatasetId, PathBuf>,
    /// Directory of `<label>/*.wav` used when no manifest URL is set.
    pub corpus_root: Option<PathBuf>,
    pub work_dir: PathBuf,
}

/// Hidden-layer settings; the convolutional stages are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSettings {
    pub fc_width: usize,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub epochs: usize,
    pub early_stop_patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlSettings {
    pub limit_per_query: usize,
    /// CSV manifest of downloadable videos; overrides `paths.corpus_root`.
    pub manifest_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub kmax: usize,
    pub gt: GtMode,
    /// Segments per (classifier, class) sent to human evaluators.
    pub k_per_class: usize,
    pub min_votes: usize,
    pub evaluators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            paths: PathsConfig::default(),
            features: FeatureConfig::default(),
            cnn: CnnSettings::default(),
            train: TrainSettings::default(),
            crawl: CrawlSettings::default(),
            evaluation: EvalSettings::default(),
            serve: ServeSettings::default(),
        }
    }
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifests: BTreeMap::new(),
            corpus_root: None,
            work_dir: PathBuf::from("work"),
        }
    }
}

impl Default for CnnSettings {
    fn default() -> Self {
        let reference = CnnConfig::reference(1);
        Self {
            fc_width: reference.fc_width,
            dropout_p: reference.dropout_p,
        }
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            l2: t.l2,
            epochs: t.epochs,
            early_stop_patience: t.early_stop_patience,
        }
    }
}

impl Default for CrawlSettings {
    fn default() -> Self {
        Self {
            limit_per_query: 100,
            manifest_url: None,
        }
    }
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            kmax: DEFAULT_KMAX,
            gt: GtMode::Query,
            k_per_class: DEFAULT_K_PER_CLASS,
            min_votes: DEFAULT_MIN_VOTES,
            evaluators: (1..=5).map(|i| format!("evaluator-{i}")).collect(),
        }
    }
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub kmax: Option<usize>,
    pub gt: Option<GtMode>,
    pub port: Option<u16>,
    pub work_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Layers defaults, `file`, the environment and `overrides`, then
    /// validates. Relative paths from the file resolve against its
    /// directory; all others against the working directory.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut figment = Figment::from(Serialized::defaults(PipelineConfig::default()));
        if let Some(path) = file {
            if !path.is_file() {
                return Err(CliError::MissingInput(format!("config file not found: {}", path.display())));
            }
            figment = figment.merge(Toml::file_exact(path));
        }
        let file_only: Option<PipelineConfig> = match file {
            Some(path) => Some(
                Figment::from(Serialized::defaults(PipelineConfig::default()))
                    .merge(Toml::file_exact(path))
                    .extract()
                    .map_err(|e| CliError::BadConfig(e.to_string()))?,
            ),
            None => None,
        };
        figment = figment.merge(Env::prefixed(ENV_PREFIX).split("__").ignore(&["config"]));
        let mut cfg: PipelineConfig = figment.extract().map_err(|e| CliError::BadConfig(e.to_string()))?;

        let cwd = std::env::current_dir()?;
        let file_dir = absolute(&cwd, file.and_then(Path::parent).unwrap_or(Path::new("")));
        let from_file = |value: &PathBuf, in_file: Option<&PathBuf>| -> PathBuf {
            let base = if in_file == Some(value) { &file_dir } else { &cwd };
            absolute(base, value)
        };
        let ff = file_only.as_ref();
        cfg.paths.manifests = cfg
            .paths
            .manifests
            .iter()
            .map(|(d, p)| (*d, from_file(p, ff.and_then(|f| f.paths.manifests.get(d)))))
            .collect();
        cfg.paths.corpus_root = cfg
            .paths
            .corpus_root
            .as_ref()
            .map(|p| from_file(p, ff.and_then(|f| f.paths.corpus_root.as_ref())));
        cfg.paths.work_dir = from_file(&cfg.paths.work_dir, ff.map(|f| &f.paths.work_dir));

        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = overrides.threads {
            cfg.threads = threads;
        }
        if let Some(kmax) = overrides.kmax {
            cfg.evaluation.kmax = kmax;
        }
        if let Some(gt) = overrides.gt {
            cfg.evaluation.gt = gt;
        }
        if let Some(port) = overrides.port {
            cfg.serve.port = port;
        }
        if let Some(dir) = &overrides.work_dir {
            cfg.paths.work_dir = absolute(&cwd, dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::BadConfig(m));
        self.features.validate()?;
        self.train_config().validate()?;
        self.cnn_config(2).shapes()?;
        if self.evaluation.kmax == 0 {
            return bad("evaluation.kmax must be at least 1".into());
        }
        if self.evaluation.min_votes == 0 {
            return bad("evaluation.min_votes must be at least 1".into());
        }
        if self.evaluation.evaluators.len() < self.evaluation.min_votes {
            return bad(format!(
                "{} evaluators cannot give {} votes per segment",
                self.evaluation.evaluators.len(),
                self.evaluation.min_votes
            ));
        }
        if self.crawl.limit_per_query == 0 {
            return bad("crawl.limit_per_query must be at least 1".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            l2: t.l2,
            epochs: t.epochs,
            early_stop_patience: t.early_stop_patience,
            seed: self.seed,
        }
    }

    pub fn cnn_config(&self, num_classes: usize) -> CnnConfig {
        let mut c = CnnConfig::reference(num_classes).with_fc_width(self.cnn.fc_width);
        c.input_shape = [self.features.mel_bands, self.features.frames_per_patch, 2];
        c.dropout_p = self.cnn.dropout_p;
        c
    }

    /// Datasets named on the command line, or every configured one.
    pub fn datasets(&self, requested: &[DatasetId]) -> Result<Vec<DatasetId>> {
        if requested.is_empty() {
            if self.paths.manifests.is_empty() {
                return Err(CliError::BadConfig("no dataset manifests configured under [paths.manifests]".into()));
            }
            return Ok(self.paths.manifests.keys().copied().collect());
        }
        let mut out = requested.to_vec();
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn manifest(&self, dataset: DatasetId) -> Result<&Path> {
        let path = self
            .paths
            .manifests
            .get(&dataset)
            .ok_or_else(|| CliError::BadConfig(format!("no manifest configured for {dataset}")))?;
        if !path.is_file() {
            return Err(CliError::MissingInput(format!("manifest not found: {}", path.display())));
        }
        Ok(path)
    }

    pub fn vocabulary(&self, dataset: DatasetId) -> LabelVocabulary {
        LabelVocabulary::builtin(dataset)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// leaving out settings that cannot change any artifact.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        let map = value.as_object_mut().expect("config is an object");
        map.remove("threads");
        map.remove("serve");
        if let Some(paths) = map.get_mut("paths").and_then(|p| p.as_object_mut()) {
            paths.remove("work_dir");
        }
        let canonical = serde_json::to_vec(&value).expect("value serialises");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
