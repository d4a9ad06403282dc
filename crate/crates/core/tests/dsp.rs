//! Feature extraction and segmentation against slow reference computations.

mod support;

use hearsay_core::audio::{segment_count, CANONICAL_RATE};
use hearsay_core::features::{patch_count, FeatureConfig};
use proptest::prelude::*;

#[test]
fn stft_matches_naive_dft() {
    let err = support::stft_error(100);
    assert!(err < 1e-6, "max relative error {err}");
}

#[test]
fn one_kilohertz_peaks_in_nearest_band() {
    let (measured, nearest) = support::mel_peak_band(1000.0);
    assert_eq!(measured, nearest);
    for f in [300.0, 2500.0, 8000.0] {
        let (measured, nearest) = support::mel_peak_band(f);
        assert!(measured.abs_diff(nearest) <= 1, "{f} Hz: {measured} vs {nearest}");
    }
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    let (len, peak) = support::resampled_peak_hz(440.0, 22_050);
    assert_eq!(len, CANONICAL_RATE as usize);
    let bin = CANONICAL_RATE as f64 / len as f64;
    assert!((peak - 440.0).abs() <= bin, "{peak} Hz");
}

#[test]
fn segments_and_patches_match_enumeration() {
    support::check_segmentation().unwrap();
}

proptest! {
    #[test]
    fn patch_i_covers_segment_i(len in 0usize..400_000) {
        let cfg = FeatureConfig::default();
        let segments = segment_count(len, cfg.patch_samples(), cfg.patch_stride_samples());
        let patches = patch_count(cfg.frame_count(len), cfg.frames_per_patch, cfg.patch_stride_frames);
        prop_assert_eq!(segments, patches);
        // the last patch ends inside the audio
        if patches > 0 {
            let last_frame = (patches - 1) * cfg.patch_stride_frames + cfg.frames_per_patch - 1;
            prop_assert!(last_frame * cfg.hop + cfg.fft_window <= len);
        }
    }
}
