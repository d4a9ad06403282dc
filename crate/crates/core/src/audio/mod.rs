//! Audio decoding, canonicalisation and fixed-length segmentation.
//!
//! Every clip entering the pipeline is brought to mono at the canonical rate
//! (44.1 kHz by default) with samples in `[-1, 1]`. Segments are windows of
//! `100 * hop + fft_window` samples so that each yields exactly 101 analysis
//! frames.

mod resample;

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resample::{resample, PolyphaseResampler, KAISER_BETA, TAPS_PER_PHASE};

pub const CANONICAL_RATE: u32 = 44_100;
/// 100 hops of 512 plus one 1024-sample window.
pub const SEGMENT_WINDOW: usize = 52_224;
/// Ten hops of 512.
pub const SEGMENT_STRIDE: usize = 5_120;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read audio file {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("cannot write audio: {0}")]
    Write(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub source_id: String,
    pub start_sample: usize,
    pub length_samples: usize,
}

pub fn segment_id(source_id: &str, index: usize) -> String {
    format!("{source_id}#{index:05}")
}

/// Decodes a WAV file to mono at [`CANONICAL_RATE`].
pub fn decode_and_canonicalize(path: &Path) -> Result<AudioClip, AudioError> {
    decode_and_canonicalize_at(path, CANONICAL_RATE)
}

pub fn decode_and_canonicalize_at(path: &Path, target_rate: u32) -> Result<AudioClip, AudioError> {
    let file = std::fs::File::open(path).map_err(|e| AudioError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_reader(std::io::BufReader::new(file), &path.display().to_string(), source_id, target_rate)
}

pub fn decode_bytes(bytes: &[u8], source_id: &str, target_rate: u32) -> Result<AudioClip, AudioError> {
    decode_reader(Cursor::new(bytes), source_id, source_id.to_string(), target_rate)
}

fn decode_reader<R: Read + Seek>(
    reader: R,
    display: &str,
    source_id: String,
    target_rate: u32,
) -> Result<AudioClip, AudioError> {
    let unreadable = |reason: String| AudioError::UnreadableFile {
        path: display.to_string(),
        reason,
    };
    let wav = hound::WavReader::new(reader).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding(display.to_string()),
        other => unreadable(other.to_string()),
    })?;
    let spec = wav.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(unreadable("zero channels or sample rate".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            wav.into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(|e| unreadable(e.to_string()))?
        }
        (hound::SampleFormat::Float, 32) => wav
            .into_samples::<f32>()
            .map(|s| s.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 }))
            .collect::<Result<_, _>>()
            .map_err(|e| unreadable(e.to_string()))?,
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{display}: {format:?} {bits}-bit"
            )))
        }
    };

    let mono = downmix(&interleaved, channels);
    let mut samples = resample(&mono, spec.sample_rate, target_rate);
    samples.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        source_id,
    })
}

/// Arithmetic mean over channels of an interleaved buffer.
pub fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().map(|&v| v as f64).sum::<f64>() / channels as f64) as f32)
        .collect()
}

/// Window placements at `0, stride, 2 * stride, ...` that fit in the clip.
pub fn segment_clip(clip: &AudioClip, window_samples: usize, stride_samples: usize) -> Vec<Segment> {
    (0..segment_count(clip.samples.len(), window_samples, stride_samples))
        .map(|i| Segment {
            segment_id: segment_id(&clip.source_id, i),
            source_id: clip.source_id.clone(),
            start_sample: i * stride_samples,
            length_samples: window_samples,
        })
        .collect()
}

pub fn segment_count(len: usize, window: usize, stride: usize) -> usize {
    assert!(window > 0 && stride > 0, "window and stride must be positive");
    if len < window {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Encodes mono samples as a 16-bit PCM WAV.
pub fn write_wav<W: Write + Seek>(out: W, samples: &[f32], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(out, spec).map_err(|e| AudioError::Write(e.to_string()))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| AudioError::Write(e.to_string()))?;
    }
    writer.finalize().map_err(|e| AudioError::Write(e.to_string()))
}

pub fn write_wav_file(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), AudioError> {
    let file = std::fs::File::create(path)?;
    write_wav(std::io::BufWriter::new(file), samples, sample_rate)
}

pub fn wav_bytes(samples: &[f32], sample_rate: u32) -> Result<Vec<u8>, AudioError> {
    let mut cursor = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    write_wav(&mut cursor, samples, sample_rate)?;
    Ok(cursor.into_inner())
}

/// Duration in seconds read from a WAV header without decoding samples.
pub fn wav_duration(path: &Path) -> Result<f64, AudioError> {
    let reader = hound::WavReader::open(path).map_err(|e| AudioError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}

pub fn write_segments<W: Write>(out: W, segments: &[Segment]) -> Result<(), AudioError> {
    let mut writer = csv::Writer::from_writer(out);
    for s in segments {
        writer.serialize(s)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>, AudioError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
