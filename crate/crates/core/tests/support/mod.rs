//! Independent oracles shared by the integration tests and the acceptance
//! runner. Each check returns a one-line summary, or the reason it failed.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use hearsay_core::audio::{self, AudioClip};
use hearsay_core::cnn::{model_to_bytes, train, CnnConfig, ConvSpec, Network, Parameters, PoolSpec, TrainLog};
use hearsay_core::dataset::{load_manifest, split_dataset, DatasetId, LabelVocabulary};
use hearsay_core::evaluator::{
    class_count_weights, corpus_precision, precision_at_k, rank_segments, test_accuracy, weighted_average_curve,
    AccuracyReport, CurvePoint, GroundTruth, GtMode, PrecisionCurve, ScoredSegment,
};
use hearsay_core::feedback::{aggregate_votes, assign, FeedbackError, FeedbackState, Judgment, Verdict, VoteRecord};
use hearsay_core::features::{patch_count, FeatureConfig, FeatureExtractor, Stft};
use hearsay_core::fixture::{generate_dataset, toy_cnn_config, toy_train_config, vocabulary, FixtureConfig};
use hearsay_core::pipeline::{featurize_dataset, DatasetPatches};
use hearsay_core::rng::{seeded, unit_f64};
use ndarray::Array4;
use rand::RngExt;

pub type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- CNN

pub fn small_config(dropout_p: f64) -> CnnConfig {
    CnnConfig {
        input_shape: [12, 15, 2],
        conv1: ConvSpec { filters: 4, kernel: [9, 3], stride: [1, 1] },
        pool1: PoolSpec { shape: [2, 2], stride: [1, 2] },
        conv2: ConvSpec { filters: 3, kernel: [1, 3], stride: [1, 1] },
        pool2: PoolSpec { shape: [1, 2], stride: [1, 2] },
        fc_width: 7,
        num_classes: 3,
        dropout_p,
    }
}

fn random_batch(n: usize, cfg: &CnnConfig, seed: u64) -> Array4<f64> {
    let [h, w, c] = cfg.input_shape;
    let mut rng = seeded(seed);
    Array4::from_shape_simple_fn((n, h, w, c), || 2.0 * unit_f64(&mut rng) - 1.0)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, with dropout masks frozen by re-seeding.
pub fn max_gradient_error(cfg: &CnnConfig, l2: f64) -> f64 {
    let net = Network::new(cfg).unwrap();
    let batch = random_batch(5, cfg, 3);
    let labels = [0, 2, 1, 1, 0];
    let mut params = Parameters::<f64>::he_uniform(cfg, 17).unwrap();
    // non-zero biases so no unit sits exactly on a ReLU kink
    let mut rng = seeded(99);
    for (t, is_weight) in params.tensors_mut().into_iter().zip(Parameters::<f64>::IS_WEIGHT) {
        if !is_weight {
            t.iter_mut().for_each(|b| *b = 0.2 * (unit_f64(&mut rng) - 0.3));
        }
    }
    let loss_at = |p: &Parameters<f64>| {
        let cache = net.forward_train(p, batch.view(), &mut seeded(7)).unwrap();
        net.backward(p, &cache, &labels, l2).unwrap().0
    };
    let cache = net.forward_train(&params, batch.view(), &mut seeded(7)).unwrap();
    let (_, grads) = net.backward(&params, &cache, &labels, l2).unwrap();

    let h = 1e-6;
    let mut worst = 0.0f64;
    for t in 0..Parameters::<f64>::NAMES.len() {
        for i in 0..grads.tensors()[t].len() {
            let original = params.tensors()[t][i];
            params.tensors_mut()[t][i] = original + h;
            let up = loss_at(&params);
            params.tensors_mut()[t][i] = original - h;
            let down = loss_at(&params);
            params.tensors_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors()[t][i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn check_gradients() -> Check {
    let errors = [
        max_gradient_error(&small_config(0.0), 0.0),
        max_gradient_error(&small_config(0.0), 0.05),
    ];
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    ensure(worst < 1e-4, format!("max relative error {worst:.2e} (limit 1e-4)"))
}

pub fn check_reference_shapes() -> Check {
    let shapes = CnnConfig::reference(50).shapes().map_err(|e| e.to_string())?;
    let got = (shapes.conv1, shapes.pool1, shapes.conv2, shapes.pool2, shapes.flatten);
    let want = ([80, 4, 96], [80, 1, 32], [80, 1, 30], [80, 1, 10], 800);
    ensure(got == want, format!("{got:?}"))
}

// ---------------------------------------------------------------- DSP

fn naive_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let window: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                let v = x * window[t];
                re += v * angle.cos();
                im += v * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Per-frame error relative to the frame's peak bin, over `trials` random
/// signals with random window, hop and length.
pub fn stft_error(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = seeded(1000 + trial);
        let n = 1usize << rng.random_range(3..=10);
        let hop = rng.random_range(1..=n);
        let len = n + rng.random_range(0..3 * n);
        let samples: Vec<f32> = (0..len).map(|_| (2.0 * unit_f64(&mut rng) - 1.0) as f32).collect();
        let spec = Stft::new(n, hop).power(&samples);
        let frames = (len - n) / hop + 1;
        if spec.nrows() != frames || spec.ncols() != n / 2 + 1 {
            return f64::INFINITY;
        }
        for t in 0..frames {
            let frame: Vec<f64> = samples[t * hop..t * hop + n].iter().map(|&x| x as f64).collect();
            let oracle = naive_power(&frame);
            let peak = oracle.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for (a, b) in spec.row(t).iter().zip(&oracle) {
                worst = worst.max((a - b).abs() / peak);
            }
        }
    }
    worst
}

fn sine(freq: f64, rate: u32, len: usize) -> Vec<f32> {
    (0..len)
        .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
        .collect()
}

/// Band with the most mean log-mel energy for a tone, and the band whose
/// centre (recomputed here on the HTK scale) lies nearest the tone.
pub fn mel_peak_band(freq: f64) -> (usize, usize) {
    let cfg = FeatureConfig::default();
    let extractor = FeatureExtractor::new(cfg.clone()).unwrap();
    let logmel = extractor.log_mel(&sine(freq, cfg.sample_rate, cfg.sample_rate as usize)).unwrap();
    let means: Vec<f64> = logmel.rows().into_iter().map(|r| r.mean().unwrap()).collect();
    let measured = argmax(&means);

    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let mel_max = mel(cfg.sample_rate as f64 / 2.0);
    let step = mel_max / (cfg.mel_bands + 1) as f64;
    let distances: Vec<f64> = (1..=cfg.mel_bands)
        .map(|m| {
            let centre_hz = 700.0 * (10f64.powf(m as f64 * step / 2595.0) - 1.0);
            -(centre_hz - freq).abs()
        })
        .collect();
    (measured, argmax(&distances))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

pub fn check_dsp() -> Check {
    let err = stft_error(100);
    let (measured, nearest) = mel_peak_band(1000.0);
    ensure(
        err < 1e-6 && measured == nearest,
        format!("STFT max relative error {err:.2e} (limit 1e-6); 1 kHz peak band {measured}, nearest centre band {nearest}"),
    )
}

/// Dominant DFT bin (in Hz) of a tone after resampling from `from_rate`.
pub fn resampled_peak_hz(freq: f64, from_rate: u32) -> (usize, f64) {
    let bytes = audio::wav_bytes(&sine(freq, from_rate, from_rate as usize), from_rate).unwrap();
    let clip: AudioClip = audio::decode_bytes(&bytes, "tone", audio::CANONICAL_RATE).unwrap();
    let n = clip.samples.len();
    // only bins near the tone need the slow transform
    let lo = (freq * 0.8) as usize;
    let hi = (freq * 1.2) as usize;
    let mut best = (0usize, 0.0f64);
    for k in lo..=hi {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &x) in clip.samples.iter().enumerate() {
            let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
            re += x as f64 * angle.cos();
            im += x as f64 * angle.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (k, p);
        }
    }
    (n, best.0 as f64 * audio::CANONICAL_RATE as f64 / n as f64)
}

// ------------------------------------------------------- segmentation

fn enumerate_windows(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + window <= len {
        starts.push(s);
        s += stride;
    }
    starts
}

/// Lengths 0..=200,000: every boundary neighbourhood plus a coarse sweep.
pub fn sample_lengths() -> Vec<usize> {
    let mut lens: Vec<usize> = (0..=200_000).step_by(211).collect();
    let mut k = 0;
    while 52_224 + k * 5_120 <= 200_001 {
        let edge: usize = 52_224 + k * 5_120;
        lens.extend(edge.saturating_sub(2)..=(edge + 2).min(200_000));
        k += 1;
    }
    lens.extend([0, 1, 1023, 1024, 1025, 200_000]);
    lens.sort_unstable();
    lens.dedup();
    lens
}

pub fn check_segmentation() -> Check {
    let cfg = FeatureConfig::default();
    let (window, stride) = (cfg.patch_samples(), cfg.patch_stride_samples());
    if (window, stride) != (52_224, 5_120) {
        return Err(format!("segment geometry {window}/{stride}"));
    }
    let lens = sample_lengths();
    for &len in &lens {
        let starts = enumerate_windows(len, window, stride);
        let clip = AudioClip {
            source_id: "v".into(),
            sample_rate: audio::CANONICAL_RATE,
            samples: vec![0.0; len],
        };
        let segs = audio::segment_clip(&clip, window, stride);
        let got: Vec<usize> = segs.iter().map(|s| s.start_sample).collect();
        if got != starts || audio::segment_count(len, window, stride) != starts.len() {
            return Err(format!("{len} samples: {} segments, brute force {}", got.len(), starts.len()));
        }
        let frames = enumerate_windows(len, cfg.fft_window, cfg.hop).len();
        if cfg.frame_count(len) != frames {
            return Err(format!("{len} samples: frame count {} vs {frames}", cfg.frame_count(len)));
        }
        // patch i lines up with segment i
        if frames > 0 && patch_count(frames, cfg.frames_per_patch, cfg.patch_stride_frames) != starts.len() {
            return Err(format!("{len} samples: patches and segments disagree"));
        }
    }
    for frames in 0..500 {
        let brute = enumerate_windows(frames, cfg.frames_per_patch, cfg.patch_stride_frames).len();
        if patch_count(frames, cfg.frames_per_patch, cfg.patch_stride_frames) != brute {
            return Err(format!("{frames} frames: patch count mismatch"));
        }
    }
    let extractor = FeatureExtractor::new(cfg.clone()).unwrap();
    let patches = extractor
        .clip_patches(&sine(1000.0, cfg.sample_rate, 52_224), "one")
        .map_err(|e| e.to_string())?;
    let shapes: Vec<_> = patches.iter().map(|p| p.values.dim()).collect();
    ensure(
        shapes == [(60, 101, 2)],
        format!("{} sample lengths and 500 frame counts agree; one segment gives {shapes:?}", lens.len()),
    )
}

// ------------------------------------------------------------ training

pub fn toy_data(seed: u64) -> DatasetPatches {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(dir.path(), &FixtureConfig::default()).unwrap();
    let entries = load_manifest(&manifest).unwrap();
    let splits = split_dataset(&entries, seed).unwrap();
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    featurize_dataset(&entries, &splits, &vocabulary(), &extractor).unwrap()
}

pub fn toy_run(data: &DatasetPatches, seed: u64, epochs: usize) -> (Vec<u8>, TrainLog, AccuracyReport) {
    let cfg = hearsay_core::cnn::TrainConfig {
        epochs,
        ..toy_train_config(seed)
    };
    let (model, log) = train::<f32>(&data.train, &data.val, &cfg, &toy_cnn_config(), &vocabulary(), data.norm_stats).unwrap();
    let acc = test_accuracy(&model, &data.test).unwrap();
    (model_to_bytes(&model), log, acc)
}

// ----------------------------------------------------------- evaluator

pub const CLASSES: [&str; 4] = ["dog", "cat", "cow", "hen"];

pub fn random_predictions(n: usize, seed: u64) -> Vec<ScoredSegment> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| ScoredSegment {
            segment_id: format!("seg{:04}", (i * 7919) % 10_000),
            classifier: DatasetId::Esc50,
            predicted_class: CLASSES[rng.random_range(0..CLASSES.len())].to_string(),
            // coarse grid so ties are common
            confidence: (rng.random_range(0..20) as f64) / 20.0,
        })
        .collect()
}

/// Full sort of the filtered list by (-confidence, id).
pub fn oracle_rank(preds: &[ScoredSegment], class: &str, k: usize) -> Vec<String> {
    let mut v: Vec<(f64, String)> = preds
        .iter()
        .filter(|p| p.predicted_class == class)
        .map(|p| (p.confidence, p.segment_id.clone()))
        .collect();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    v.into_iter().take(k).map(|x| x.1).collect()
}

pub fn random_query_gt(preds: &[ScoredSegment], seed: u64) -> HashMap<String, String> {
    let mut rng = seeded(seed);
    preds
        .iter()
        .map(|p| (p.segment_id.clone(), CLASSES[rng.random_range(0..CLASSES.len())].to_string()))
        .collect()
}

pub fn check_ranking_trials(trials: u64) -> Check {
    for trial in 0..trials {
        let preds = random_predictions(1 + (trial as usize * 13) % 200, trial);
        let gt = random_query_gt(&preds, trial + 10_000);
        let k = 1 + (trial as usize % 45);
        for class in CLASSES {
            let ranked = rank_segments(&preds, class, k);
            if ranked != oracle_rank(&preds, class, k) {
                return Err(format!("trial {trial}, class {class}: ranking differs"));
            }
            let p = precision_at_k(&ranked, &GroundTruth::Query(&gt), class).map_err(|e| e.to_string())?;
            let hits = ranked.iter().filter(|id| gt[*id] == class).count();
            let expected = if ranked.is_empty() { 0.0 } else { hits as f64 / ranked.len() as f64 };
            if p != expected {
                return Err(format!("trial {trial}, class {class}: precision {p} vs {expected}"));
            }
        }
    }
    Ok(format!("{trials} randomized fixtures match"))
}

/// Weighted average against `(50 a + 10 b + 18 c) / 78`.
pub fn weighted_hand_error() -> f64 {
    let vocabs: Vec<LabelVocabulary> = DatasetId::PUBLIC_DATASETS.iter().map(|&d| LabelVocabulary::builtin(d)).collect();
    let refs: Vec<&LabelVocabulary> = vocabs.iter().collect();
    let w = class_count_weights(&refs);
    let curve = |p: f64| PrecisionCurve {
        points: vec![CurvePoint { k: 1, precision: p }, CurvePoint { k: 2, precision: p / 2.0 }],
        gt_mode: GtMode::Human,
    };
    let avg = weighted_average_curve(&[curve(0.9), curve(0.3), curve(0.6)], &w).unwrap();
    let hand = (50.0 * 0.9 + 10.0 * 0.3 + 18.0 * 0.6) / 78.0;
    let weight_err = [50.0 / 78.0, 10.0 / 78.0, 18.0 / 78.0]
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    weight_err
        .max((avg.points[0].precision - hand).abs())
        .max((avg.points[1].precision - hand / 2.0).abs())
}

pub fn check_evaluator() -> Check {
    let trials = check_ranking_trials(1000)?;
    let err = weighted_hand_error();
    ensure(err < 1e-12, format!("{trials}; weighted average off by {err:.1e} (limit 1e-12)"))
}

pub fn balanced_corpus(per_class: usize, classes: usize) -> (Vec<String>, HashMap<String, String>) {
    let mut ids = Vec::new();
    let mut gt = HashMap::new();
    for c in 0..classes {
        for i in 0..per_class {
            let id = format!("c{c}v{i}");
            gt.insert(id.clone(), format!("class{c}"));
            ids.push(id);
        }
    }
    (ids, gt)
}

/// Corpus precision of the query-label predictor and of a uniform random
/// one, with the 3-sigma band around 1/C.
pub fn query_gt_plumbing(classes: usize, per_class: usize, seed: u64) -> (f64, f64, f64, f64) {
    let (ids, gt) = balanced_corpus(per_class, classes);
    let scored = |class: String, confidence: f64, id: &String| ScoredSegment {
        segment_id: id.clone(),
        classifier: DatasetId::Us8k,
        predicted_class: class,
        confidence,
    };
    let oracle: Vec<ScoredSegment> = ids.iter().map(|id| scored(gt[id].clone(), 0.5, id)).collect();
    let mut rng = seeded(seed);
    let random: Vec<ScoredSegment> = ids
        .iter()
        .map(|id| scored(format!("class{}", rng.random_range(0..classes)), unit_f64(&mut rng), id))
        .collect();
    let q = 1.0 / classes as f64;
    let sigma = (q * (1.0 - q) / ids.len() as f64).sqrt();
    (
        corpus_precision(&oracle, &gt).unwrap(),
        corpus_precision(&random, &gt).unwrap(),
        q,
        3.0 * sigma,
    )
}

pub fn check_query_gt() -> Check {
    let (oracle, random, q, band) = query_gt_plumbing(10, 1000, 2024);
    ensure(
        oracle == 1.0 && (random - q).abs() <= band,
        format!("query-label predictor {oracle}; uniform random {random:.4} vs {q} +- {band:.4}"),
    )
}

// ------------------------------------------------------------ feedback

/// Written out case by case rather than computed.
pub fn truth_table(correct: usize, incorrect: usize) -> Judgment {
    match (correct, incorrect) {
        (c, i) if c + i < 3 => Judgment::Pending,
        (3, 0) | (2, 1) | (4, 0) | (3, 1) | (5, 0) | (4, 1) | (3, 2) => Judgment::Correct,
        (0, 3) | (1, 2) | (0, 4) | (1, 3) | (2, 2) | (0, 5) | (1, 4) | (2, 3) => Judgment::Incorrect,
        other => panic!("outside table: {other:?}"),
    }
}

pub fn check_majority_vote() -> Check {
    let mut cases = 0;
    for total in 0..=5usize {
        for correct in 0..=total {
            let mut votes = vec![Verdict::Correct; correct];
            votes.extend(vec![Verdict::Incorrect; total - correct]);
            let agg = aggregate_votes("s", &votes, 3);
            if agg.verdict != truth_table(correct, total - correct) {
                return Err(format!("{correct} Correct of {total}: got {:?}", agg.verdict));
            }
            cases += 1;
        }
    }

    // quorum and duplicates through the stateful path
    let segs = vec!["s0".to_string()];
    let evals: Vec<String> = (0..4).map(|i| format!("e{i}")).collect();
    let assignments = assign(&segs, &evals, 3, 1).map_err(|e| e.to_string())?;
    let mut state = FeedbackState::new(assignments.clone(), 3).map_err(|e| e.to_string())?;
    let vote = |evaluator: &str| VoteRecord {
        segment_id: "s0".into(),
        evaluator_id: evaluator.into(),
        verdict: Verdict::Correct,
        ts: 0,
    };
    let first = &assignments[0].evaluator_id;
    state.apply(vote(first)).map_err(|e| e.to_string())?;
    let dup = matches!(state.apply(vote(first)), Err(FeedbackError::DuplicateVote { .. }));
    let pending_after_two = {
        state.apply(vote(&assignments[1].evaluator_id)).map_err(|e| e.to_string())?;
        state.aggregate("s0").verdict == Judgment::Pending
    };
    state.apply(vote(&assignments[2].evaluator_id)).map_err(|e| e.to_string())?;
    let decided = state.aggregate("s0").verdict == Judgment::Correct;
    let unassigned = evals.iter().find(|e| !assignments.iter().any(|a| &a.evaluator_id == *e)).unwrap();
    let rejected = state.apply(vote(unassigned)).is_err();
    ensure(
        dup && pending_after_two && decided && rejected && state.votes().len() == 3,
        format!(
            "{cases} multisets match; duplicate rejected {dup}, pending below quorum {pending_after_two}, \
             decided at quorum {decided}, unassigned rejected {rejected}"
        ),
    )
}
