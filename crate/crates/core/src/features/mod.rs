//! Two-channel log-mel feature patches.
//!
//! Channel 0 is a log-compressed mel spectrogram; channel 1 holds its
//! regression deltas. Patches are `mel_bands x frames_per_patch x 2`
//! (60 x 101 x 2 by default), cut every `patch_stride_frames` frames.

mod cache;
mod mel;

use std::sync::Arc;

use ndarray::{s, Array2, Array3, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_patch_cache, write_patch_cache, PatchCacheMeta};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("input of {len} samples is shorter than one {window}-sample window")]
    InputTooShort { len: usize, window: usize },
    #[error("channel {channel} has degenerate standard deviation {std}")]
    DegenerateStd { channel: usize, std: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt patch cache: {0}")]
    CorruptCache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    #[default]
    Power,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub fft_window: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub sample_rate: u32,
    pub frames_per_patch: usize,
    pub patch_stride_frames: usize,
    pub log_floor: f64,
    pub delta_half_window: usize,
    pub spectrum: SpectrumKind,
    pub log_base: LogBase,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fft_window: 1024,
            hop: 512,
            mel_bands: 60,
            sample_rate: crate::audio::CANONICAL_RATE,
            frames_per_patch: 101,
            patch_stride_frames: 10,
            log_floor: 1e-10,
            delta_half_window: 4,
            spectrum: SpectrumKind::Power,
            log_base: LogBase::Natural,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.fft_window < 2 || !self.fft_window.is_power_of_two() {
            return bad("fft_window must be a power of two");
        }
        if self.hop == 0 {
            return bad("hop must be positive");
        }
        if self.mel_bands == 0 {
            return bad("mel_bands must be at least 1");
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.frames_per_patch == 0 || self.patch_stride_frames == 0 {
            return bad("frames_per_patch and patch_stride_frames must be positive");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        if self.delta_half_window == 0 {
            return bad("delta_half_window must be positive");
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_window / 2 + 1
    }

    /// Samples covered by one patch: `(frames - 1) * hop + fft_window`.
    pub fn patch_samples(&self) -> usize {
        (self.frames_per_patch - 1) * self.hop + self.fft_window
    }

    /// Samples between consecutive patches.
    pub fn patch_stride_samples(&self) -> usize {
        self.patch_stride_frames * self.hop
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_window {
            0
        } else {
            (len - self.fft_window) / self.hop + 1
        }
    }

    fn log(&self, x: f64) -> f64 {
        let x = x.max(self.log_floor);
        match self.log_base {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePatch {
    pub segment_id: String,
    /// `[mel_bands][frames][2]`
    pub values: Array3<f32>,
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time spectra with reusable FFT plan and window.
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    hop: usize,
}

impl Stft {
    pub fn new(fft_window: usize, hop: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_window);
        Self {
            fft,
            window: hann_window(fft_window),
            hop,
        }
    }

    /// Non-centred `|STFT|^2`, shape `[frames][fft_window / 2 + 1]`.
    pub fn power(&self, samples: &[f32]) -> Array2<f64> {
        let n = self.window.len();
        let bins = n / 2 + 1;
        let frames = if samples.len() < n {
            0
        } else {
            (samples.len() - n) / self.hop + 1
        };
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            let frame = &samples[t * self.hop..t * self.hop + n];
            for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = Complex::new(x as f64 * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, c) in row.iter_mut().zip(&buf[..bins]) {
                *o = c.norm_sqr();
            }
        }
        out
    }
}

/// Computes log-mel spectrograms for one configuration.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    filterbank: MelFilterbank,
    stft: Stft,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        let filterbank = MelFilterbank::new(&cfg)?;
        let stft = Stft::new(cfg.fft_window, cfg.hop);
        Ok(Self {
            cfg,
            filterbank,
            stft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// `[mel_bands][T]` with `T = floor((len - fft_window) / hop) + 1`.
    pub fn log_mel(&self, samples: &[f32]) -> Result<Array2<f64>, FeatureError> {
        if samples.len() < self.cfg.fft_window {
            return Err(FeatureError::InputTooShort {
                len: samples.len(),
                window: self.cfg.fft_window,
            });
        }
        let mut spec = self.stft.power(samples);
        if self.cfg.spectrum == SpectrumKind::Magnitude {
            spec.mapv_inplace(f64::sqrt);
        }
        let mut mel = self.filterbank.weights().dot(&spec.t());
        mel.mapv_inplace(|v| self.cfg.log(v));
        Ok(mel)
    }

    /// Log-mel, deltas and patches for a whole clip. Patch `i` gets the id
    /// `segment_id(source_id, i)` and lines up with audio segment `i`.
    pub fn clip_patches(&self, samples: &[f32], source_id: &str) -> Result<Vec<FeaturePatch>, FeatureError> {
        let logmel = self.log_mel(samples)?;
        let delta = delta_coefficients(&logmel, self.cfg.delta_half_window);
        let mut patches = patchify(&logmel, &delta, &self.cfg)?;
        for (i, p) in patches.iter_mut().enumerate() {
            p.segment_id = crate::audio::segment_id(source_id, i);
        }
        Ok(patches)
    }
}

pub fn log_mel_spectrogram(samples: &[f32], cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    FeatureExtractor::new(cfg.clone())?.log_mel(samples)
}

/// Regression deltas over `±half_window` frames with edge replication.
pub fn delta_coefficients(logmel: &Array2<f64>, half_window: usize) -> Array2<f64> {
    let (bands, frames) = logmel.dim();
    let mut out = Array2::zeros((bands, frames));
    if frames == 0 {
        return out;
    }
    let denom = 2.0 * (1..=half_window).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames as isize - 1;
    let at = |t: isize| t.clamp(0, last) as usize;
    for b in 0..bands {
        let row = logmel.row(b);
        for t in 0..frames {
            let t = t as isize;
            let num: f64 = (1..=half_window as isize)
                .map(|n| n as f64 * (row[at(t + n)] - row[at(t - n)]))
                .sum();
            out[[b, t as usize]] = num / denom;
        }
    }
    out
}

pub fn patch_count(frames: usize, frames_per_patch: usize, stride: usize) -> usize {
    if frames < frames_per_patch {
        0
    } else {
        (frames - frames_per_patch) / stride + 1
    }
}

/// Cuts aligned `[bands][frames_per_patch][2]` patches every
/// `patch_stride_frames` frames. Segment ids are left empty.
pub fn patchify(
    logmel: &Array2<f64>,
    delta: &Array2<f64>,
    cfg: &FeatureConfig,
) -> Result<Vec<FeaturePatch>, FeatureError> {
    if logmel.dim() != delta.dim() {
        return Err(FeatureError::ShapeMismatch(format!(
            "log-mel {:?} vs delta {:?}",
            logmel.dim(),
            delta.dim()
        )));
    }
    let (bands, frames) = logmel.dim();
    let width = cfg.frames_per_patch;
    let count = patch_count(frames, width, cfg.patch_stride_frames);
    Ok((0..count)
        .map(|i| {
            let start = i * cfg.patch_stride_frames;
            let mut values = Array3::zeros((bands, width, 2));
            values
                .slice_mut(s![.., .., 0])
                .assign(&logmel.slice(s![.., start..start + width]).mapv(|v| v as f32));
            values
                .slice_mut(s![.., .., 1])
                .assign(&delta.slice(s![.., start..start + width]).mapv(|v| v as f32));
            FeaturePatch {
                segment_id: String::new(),
                values,
            }
        })
        .collect())
}

/// Per-channel mean and standard deviation of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        mean: [0.0, 0.0],
        std: [1.0, 1.0],
    };

    /// Population statistics over every value of every patch.
    pub fn from_patches<'a, I>(patches: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a FeaturePatch> + Clone,
    {
        let mut count = 0usize;
        let mut sum = [0.0f64; 2];
        for p in patches.clone() {
            for c in 0..2 {
                sum[c] += p.values.index_axis(Axis(2), c).iter().map(|&v| v as f64).sum::<f64>();
            }
            count += p.values.len() / 2;
        }
        if count == 0 {
            return Err(FeatureError::DegenerateStd { channel: 0, std: 0.0 });
        }
        let mean = [sum[0] / count as f64, sum[1] / count as f64];
        let mut sq = [0.0f64; 2];
        for p in patches {
            for c in 0..2 {
                sq[c] += p
                    .values
                    .index_axis(Axis(2), c)
                    .iter()
                    .map(|&v| (v as f64 - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = [(sq[0] / count as f64).sqrt(), (sq[1] / count as f64).sqrt()];
        let stats = NormStats { mean, std };
        stats.check()?;
        Ok(stats)
    }

    fn check(&self) -> Result<(), FeatureError> {
        for c in 0..2 {
            let std = self.std[c];
            if !std.is_finite() || std <= 1e-9 * self.mean[c].abs().max(1.0) {
                return Err(FeatureError::DegenerateStd { channel: c, std });
            }
        }
        Ok(())
    }
}

/// Z-scores each channel with the supplied statistics.
pub fn normalize(patches: &mut [FeaturePatch], stats: &NormStats) -> Result<(), FeatureError> {
    stats.check()?;
    for p in patches {
        for c in 0..2 {
            let (m, s) = (stats.mean[c], stats.std[c]);
            p.values
                .index_axis_mut(Axis(2), c)
                .mapv_inplace(|v| ((v as f64 - m) / s) as f32);
        }
    }
    Ok(())
}

/// Zero-pads a clip shorter than one patch so it still yields a patch.
pub fn pad_to_patch(samples: &[f32], cfg: &FeatureConfig) -> Vec<f32> {
    let mut out = samples.to_vec();
    if out.len() < cfg.patch_samples() {
        out.resize(cfg.patch_samples(), 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn default_geometry() {
        let cfg = FeatureConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.patch_samples(), crate::audio::SEGMENT_WINDOW);
        assert_eq!(cfg.patch_stride_samples(), crate::audio::SEGMENT_STRIDE);
        assert_eq!(cfg.bins(), 513);
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            FeatureConfig { fft_window: 1000, ..Default::default() },
            FeatureConfig { mel_bands: 0, ..Default::default() },
            FeatureConfig { hop: 0, ..Default::default() },
            FeatureConfig { log_floor: 0.0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(FeatureError::InvalidConfig(_))));
        }
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = FeatureConfig::default();
        let m = log_mel_spectrogram(&vec![0.0; 52_224], &cfg).unwrap();
        assert_eq!(m.dim(), (60, 101));
        let floor = 1e-10f64.ln();
        assert!(m.iter().all(|&v| v == floor));
    }

    #[test]
    fn short_input_rejected() {
        let cfg = FeatureConfig::default();
        assert!(matches!(
            log_mel_spectrogram(&[0.0; 1023], &cfg),
            Err(FeatureError::InputTooShort { len: 1023, window: 1024 })
        ));
        assert_eq!(log_mel_spectrogram(&[0.0; 1024], &cfg).unwrap().dim(), (60, 1));
    }

    #[test]
    fn delta_of_constant_is_zero() {
        let m = Array2::from_elem((5, 20), 3.5);
        assert!(delta_coefficients(&m, 4).iter().all(|&v| v == 0.0));
        let single = Array2::from_elem((5, 1), -2.0);
        assert!(delta_coefficients(&single, 4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_of_unit_ramp_is_one_in_the_interior() {
        let m = Array::from_shape_fn((3, 30), |(_, t)| t as f64);
        let d = delta_coefficients(&m, 4);
        for b in 0..3 {
            for t in 4..26 {
                assert!((d[[b, t]] - 1.0).abs() < 1e-12);
            }
            // replication flattens the edges
            assert!(d[[b, 0]] < 1.0);
        }
    }

    #[test]
    fn delta_is_shift_invariant() {
        let m = Array::from_shape_fn((4, 17), |(b, t)| ((b * 7 + t * 3) % 11) as f64 * 0.3);
        let shifted = &m + 12.25;
        let a = delta_coefficients(&m, 4);
        let b = delta_coefficients(&shifted, 4);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_counts() {
        let cfg = FeatureConfig::default();
        for (t, expected) in [(101, 1), (111, 2), (100, 0), (0, 0)] {
            let m = Array2::zeros((60, t));
            assert_eq!(patchify(&m, &m, &cfg).unwrap().len(), expected, "T={t}");
        }
        let a = Array2::<f64>::zeros((60, 120));
        let b = Array2::<f64>::zeros((60, 119));
        assert!(matches!(patchify(&a, &b, &cfg), Err(FeatureError::ShapeMismatch(_))));
    }

    #[test]
    fn patch_channels_hold_logmel_and_delta() {
        let cfg = FeatureConfig::default();
        let m = Array::from_shape_fn((60, 121), |(b, t)| (b * 1000 + t) as f64);
        let d = m.mapv(|v| -v);
        let patches = patchify(&m, &d, &cfg).unwrap();
        assert_eq!(patches.len(), 3);
        assert_eq!(patches[2].values.dim(), (60, 101, 2));
        assert_eq!(patches[2].values[[7, 0, 0]], 7020.0);
        assert_eq!(patches[2].values[[7, 3, 1]], -7023.0);
    }

    #[test]
    fn one_segment_gives_one_full_patch() {
        let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let samples: Vec<f32> = (0..52_224).map(|i| ((i as f32) * 0.01).sin() * 0.3).collect();
        let patches = ex.clip_patches(&samples, "clip").unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].values.dim(), (60, 101, 2));
        assert_eq!(patches[0].segment_id, "clip#00000");
        assert!(patches[0].values.iter().all(|v| v.is_finite()));
    }

    fn patch_from(f: impl Fn(usize, usize, usize) -> f32) -> FeaturePatch {
        FeaturePatch {
            segment_id: "p".into(),
            values: Array3::from_shape_fn((6, 5, 2), |(a, b, c)| f(a, b, c)),
        }
    }

    #[test]
    fn identity_stats_leave_patches_alone() {
        let mut ps = vec![patch_from(|a, b, c| (a * 10 + b) as f32 - c as f32 * 3.0)];
        let before = ps.clone();
        normalize(&mut ps, &NormStats::IDENTITY).unwrap();
        assert_eq!(ps, before);
    }

    #[test]
    fn self_normalised_training_set_is_standard() {
        let mut ps: Vec<_> = (0..7)
            .map(|k| patch_from(move |a, b, c| ((a * 13 + b * 7 + k * 5) % 17) as f32 * (1.0 + c as f32) - 40.0))
            .collect();
        let stats = NormStats::from_patches(&ps).unwrap();
        normalize(&mut ps, &stats).unwrap();
        let after = NormStats::from_patches(&ps).unwrap();
        for c in 0..2 {
            assert!(after.mean[c].abs() < 1e-6, "{:?}", after);
            assert!((after.std[c] - 1.0).abs() < 1e-6, "{:?}", after);
        }
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let ps = vec![patch_from(|a, _, c| if c == 0 { -23.0 } else { a as f32 })];
        assert!(matches!(
            NormStats::from_patches(&ps),
            Err(FeatureError::DegenerateStd { channel: 0, .. })
        ));
        let mut ps = ps;
        let bad = NormStats { mean: [0.0; 2], std: [1.0, 0.0] };
        assert!(matches!(normalize(&mut ps, &bad), Err(FeatureError::DegenerateStd { channel: 1, .. })));
    }

    #[test]
    fn padding_short_clips() {
        let cfg = FeatureConfig::default();
        assert_eq!(pad_to_patch(&[0.1; 10], &cfg).len(), 52_224);
        assert_eq!(pad_to_patch(&vec![0.1; 60_000], &cfg).len(), 60_000);
    }
}
