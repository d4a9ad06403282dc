//! Bundled synthetic corpus: three tone classes with noise.
//!
//! The labeled part is a manifest of short WAV clips ("low tone" 440 Hz,
//! "mid tone" 1 kHz, "high tone" 3 kHz, each with random detuning,
//! amplitude, phase, a second harmonic and white noise). The crawl part is a
//! `corpus_root/<label>/*.wav` tree of longer recordings, some of which carry
//! the wrong tone for their folder so query labels are only mostly right.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError};
use crate::cnn::{CnnConfig, TrainConfig};
use crate::dataset::{DatasetId, LabelVocabulary};
use crate::rng::{seeded, unit_f64, SeededRng};

pub const TONE_FREQUENCIES: [f64; 3] = [440.0, 1000.0, 3000.0];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub clips_per_class: usize,
    pub clip_seconds: f64,
    pub videos_per_class: usize,
    pub video_seconds: f64,
    /// Fraction of crawled videos whose audio belongs to another class.
    pub mislabeled_fraction: f64,
    /// Videos per class that fall outside the crawl duration bounds.
    pub short_videos_per_class: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            clips_per_class: 60,
            clip_seconds: 1.5,
            videos_per_class: 6,
            video_seconds: 4.0,
            mislabeled_fraction: 0.2,
            short_videos_per_class: 1,
            sample_rate: audio::CANONICAL_RATE,
            seed: 7,
        }
    }
}

pub fn vocabulary() -> LabelVocabulary {
    LabelVocabulary::builtin(DatasetId::Synthetic)
}

/// Reference convolutional stages with narrow hidden layers, sized for the
/// fixture.
pub fn toy_cnn_config() -> CnnConfig {
    CnnConfig::reference(TONE_FREQUENCIES.len()).with_fc_width(64)
}

pub fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        learning_rate: 0.003,
        epochs: 30,
        early_stop_patience: 10,
        seed,
        ..TrainConfig::default()
    }
}

/// A noisy tone of class `class` (index into [`TONE_FREQUENCIES`]).
pub fn tone_clip(class: usize, seconds: f64, sample_rate: u32, rng: &mut SeededRng) -> Vec<f32> {
    let n = (seconds * sample_rate as f64).round() as usize;
    let freq = TONE_FREQUENCIES[class] * (1.0 + 0.06 * (unit_f64(rng) - 0.5));
    let amp = 0.2 + 0.5 * unit_f64(rng);
    let harmonic = 0.3 * unit_f64(rng);
    let noise = 0.01 + 0.05 * unit_f64(rng);
    let phase = std::f64::consts::TAU * unit_f64(rng);
    let w = std::f64::consts::TAU * freq / sample_rate as f64;
    (0..n)
        .map(|i| {
            let t = w * i as f64 + phase;
            let x = amp * (t.sin() + harmonic * (2.0 * t).sin()) / (1.0 + harmonic) + noise * (2.0 * unit_f64(rng) - 1.0);
            x.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

/// Writes `dir/clips/*.wav` and `dir/manifest.csv`; returns the manifest path.
pub fn generate_dataset(dir: &Path, cfg: &FixtureConfig) -> Result<PathBuf, FixtureError> {
    let clips = dir.join("clips");
    fs::create_dir_all(&clips)?;
    let vocab = vocabulary();
    let mut rng = seeded(cfg.seed);
    let manifest = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest)?;
    writer.write_record(["clip_id", "file_path", "dataset_id", "label"])?;
    for (class, label) in vocab.labels().iter().enumerate() {
        for i in 0..cfg.clips_per_class {
            let clip_id = format!("{}-{i:03}", label.replace(' ', "_"));
            let samples = tone_clip(class, cfg.clip_seconds, cfg.sample_rate, &mut rng);
            let rel = format!("clips/{clip_id}.wav");
            audio::write_wav_file(&dir.join(&rel), &samples, cfg.sample_rate)?;
            writer.write_record([clip_id.as_str(), rel.as_str(), DatasetId::Synthetic.as_str(), label.as_str()])?;
        }
    }
    writer.flush()?;
    Ok(manifest)
}

/// Writes the crawlable tree `root/<label>/<video>.wav`.
pub fn generate_corpus(root: &Path, cfg: &FixtureConfig) -> Result<(), FixtureError> {
    let vocab = vocabulary();
    let mut rng = seeded(cfg.seed ^ 0x00c0_ffee);
    let classes = vocab.class_count();
    for (class, label) in vocab.labels().iter().enumerate() {
        let dir = root.join(label);
        fs::create_dir_all(&dir)?;
        for i in 0..cfg.videos_per_class {
            let actual = if unit_f64(&mut rng) < cfg.mislabeled_fraction {
                (class + 1 + (unit_f64(&mut rng) * (classes - 1) as f64) as usize) % classes
            } else {
                class
            };
            let seconds = cfg.video_seconds * (0.8 + 0.4 * unit_f64(&mut rng));
            let samples = tone_clip(actual, seconds, cfg.sample_rate, &mut rng);
            audio::write_wav_file(&dir.join(format!("vid{i:03}.wav")), &samples, cfg.sample_rate)?;
        }
        for i in 0..cfg.short_videos_per_class {
            let samples = tone_clip(class, 2.0, cfg.sample_rate, &mut rng);
            audio::write_wav_file(&dir.join(format!("short{i:03}.wav")), &samples, cfg.sample_rate)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_is_bounded_and_seeded() {
        let a = tone_clip(1, 0.1, 8000, &mut seeded(1));
        let b = tone_clip(1, 0.1, 8000, &mut seeded(1));
        assert_eq!(a.len(), 800);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}
