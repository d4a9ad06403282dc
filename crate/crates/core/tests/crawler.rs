use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use hearsay_core::audio::{wav_bytes, wav_duration, write_wav_file};
use hearsay_core::crawler::{
    build_queries, crawl, query_ground_truth, read_inventory, CrawlError, FetchedAudio, FetchedItem, Fetcher,
    HttpManifestFetcher, LocalDirFetcher, QueryRecord, INVENTORY_FILE,
};
use hearsay_core::dataset::{DatasetId, LabelVocabulary};
use proptest::prelude::*;

fn tone(seconds: f64, rate: u32) -> Vec<f32> {
    let n = (seconds * rate as f64).round() as usize;
    (0..n)
        .map(|i| 0.3 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / rate as f32).sin())
        .collect()
}

fn synthetic_queries() -> Vec<QueryRecord> {
    build_queries(&LabelVocabulary::builtin(DatasetId::Synthetic))
}

#[test]
fn local_directory_crawl_filters_and_stores() {
    let corpus = tempfile::tempdir().unwrap();
    let dir = corpus.path().join("low_tone");
    fs::create_dir_all(&dir).unwrap();
    for (name, secs, rate) in [("a", 1.0, 22_050), ("b", 3.0, 22_050), ("c", 4.0, 44_100), ("d", 2.5, 16_000), ("e", 5.0, 8_000)] {
        write_wav_file(&dir.join(format!("{name}.wav")), &tone(secs, rate), rate).unwrap();
    }
    fs::write(dir.join("notes.txt"), "ignored").unwrap();

    // oracle: list the directory and apply the bounds by hand
    let mut expected: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .filter(|p| {
            let d = wav_duration(p).unwrap();
            (3.0..=600.0).contains(&d)
        })
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    expected.sort();

    let store = tempfile::tempdir().unwrap();
    let report = crawl(&synthetic_queries(), &LocalDirFetcher::new(corpus.path()), 100, store.path(), 44_100).unwrap();
    let got: Vec<&str> = report.videos.iter().map(|v| v.video_id.as_str()).collect();
    assert_eq!(got, expected);
    assert_eq!(report.rejected_duration, 2);
    assert!(report.failures.is_empty());

    for v in &report.videos {
        assert_eq!(query_ground_truth(v), "low tone");
        let reader = hound::WavReader::open(&v.audio_path).unwrap();
        assert_eq!(reader.spec().channels, 1);
        assert_eq!(reader.spec().sample_rate, 44_100);
        assert_eq!(reader.spec().bits_per_sample, 16);
        assert!((wav_duration(&v.audio_path).unwrap() - v.duration_s).abs() < 1e-3);
    }

    let inventory = read_inventory(&store.path().join(INVENTORY_FILE)).unwrap();
    assert_eq!(inventory, report.videos);
}

#[test]
fn recrawl_is_idempotent() {
    let corpus = tempfile::tempdir().unwrap();
    for label in ["low tone", "high tone"] {
        let dir = corpus.path().join(label);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..3 {
            write_wav_file(&dir.join(format!("v{i}.wav")), &tone(3.0 + i as f64, 22_050), 22_050).unwrap();
        }
    }
    let store = tempfile::tempdir().unwrap();
    let fetcher = LocalDirFetcher::new(corpus.path());
    crawl(&synthetic_queries(), &fetcher, 10, store.path(), 44_100).unwrap();
    let first = fs::read(store.path().join(INVENTORY_FILE)).unwrap();
    let audio_first = fs::read(store.path().join("audio/synthetic/high_tone/v1.wav")).unwrap();
    crawl(&synthetic_queries(), &fetcher, 10, store.path(), 44_100).unwrap();
    assert_eq!(fs::read(store.path().join(INVENTORY_FILE)).unwrap(), first);
    assert_eq!(fs::read(store.path().join("audio/synthetic/high_tone/v1.wav")).unwrap(), audio_first);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("video_id,query_label,dataset_id,duration_s,audio_path\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn limit_per_query_is_respected() {
    let corpus = tempfile::tempdir().unwrap();
    let dir = corpus.path().join("mid tone");
    fs::create_dir_all(&dir).unwrap();
    for i in 0..4 {
        write_wav_file(&dir.join(format!("m{i}.wav")), &tone(3.5, 8_000), 8_000).unwrap();
    }
    let store = tempfile::tempdir().unwrap();
    let report = crawl(&synthetic_queries(), &LocalDirFetcher::new(corpus.path()), 2, store.path(), 44_100).unwrap();
    let ids: Vec<&str> = report.videos.iter().map(|v| v.video_id.as_str()).collect();
    assert_eq!(ids, ["m0", "m1"]);
}

#[test]
fn corrupt_files_are_skipped_and_reported() {
    let corpus = tempfile::tempdir().unwrap();
    let dir = corpus.path().join("low tone");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("bad.wav"), b"not a wav file at all").unwrap();
    write_wav_file(&dir.join("good.wav"), &tone(3.0, 8_000), 8_000).unwrap();
    let store = tempfile::tempdir().unwrap();
    let report = crawl(&synthetic_queries(), &LocalDirFetcher::new(corpus.path()), 10, store.path(), 44_100).unwrap();
    assert_eq!(report.videos.len(), 1);
    assert_eq!(report.failures.len(), 1);
    assert!(report.failures[0].1.contains("bad"));
}

#[test]
fn missing_corpus_root_is_unavailable() {
    let store = tempfile::tempdir().unwrap();
    let fetcher = LocalDirFetcher::new(store.path().join("nope"));
    let err = crawl(&synthetic_queries(), &fetcher, 10, store.path(), 44_100).unwrap_err();
    assert!(matches!(err, CrawlError::FetcherUnavailable(_)));
}

/// Replays scripted (video id, duration) pairs with a short WAV body.
struct ScriptedFetcher {
    items: Vec<(String, f64)>,
}

impl Fetcher for ScriptedFetcher {
    fn fetch(&self, _query: &QueryRecord, limit: usize) -> Result<Vec<Result<FetchedItem, CrawlError>>, CrawlError> {
        let body = wav_bytes(&tone(0.01, 8_000), 8_000).unwrap();
        Ok(self
            .items
            .iter()
            .take(limit)
            .map(|(id, d)| {
                Ok(FetchedItem {
                    video_id: id.clone(),
                    duration_s: *d,
                    audio: FetchedAudio::Bytes(body.clone()),
                })
            })
            .collect())
    }
}

#[test]
fn scripted_boundary_durations() {
    let fetcher = ScriptedFetcher {
        items: [2.9, 3.0, 600.0, 600.1].iter().enumerate().map(|(i, &d)| (format!("v{i}"), d)).collect(),
    };
    let store = tempfile::tempdir().unwrap();
    let q = [QueryRecord::new("dog", DatasetId::Esc50)];
    let report = crawl(&q, &fetcher, 10, store.path(), 44_100).unwrap();
    let kept: Vec<f64> = report.videos.iter().map(|v| v.duration_s).collect();
    assert_eq!(kept, [3.0, 600.0]);
}

#[test]
fn empty_fetcher_gives_empty_corpus() {
    let store = tempfile::tempdir().unwrap();
    let report = crawl(&synthetic_queries(), &ScriptedFetcher { items: vec![] }, 10, store.path(), 44_100).unwrap();
    assert!(report.videos.is_empty() && report.failures.is_empty());
    assert_eq!(read_inventory(&store.path().join(INVENTORY_FILE)).unwrap(), vec![]);
}

#[test]
fn video_under_two_queries_gets_two_entries() {
    let fetcher = ScriptedFetcher {
        items: vec![("shared".into(), 10.0)],
    };
    let store = tempfile::tempdir().unwrap();
    let queries = [QueryRecord::new("dog", DatasetId::Esc50), QueryRecord::new("dog bark", DatasetId::Us8k)];
    let report = crawl(&queries, &fetcher, 10, store.path(), 44_100).unwrap();
    assert_eq!(report.videos.len(), 2);
    assert_ne!(report.videos[0].entry_id(), report.videos[1].entry_id());
    assert_ne!(report.videos[0].audio_path, report.videos[1].audio_path);
    let labels: Vec<&str> = report.videos.iter().map(query_ground_truth).collect();
    assert_eq!(labels, ["dog", "dog bark"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn accepted_videos_respect_bounds(durations in prop::collection::vec(0.0f64..700.0, 0..12)) {
        let fetcher = ScriptedFetcher {
            items: durations.iter().enumerate().map(|(i, &d)| (format!("v{i:02}"), d)).collect(),
        };
        let store = tempfile::tempdir().unwrap();
        let q = [QueryRecord::new("siren", DatasetId::Us8k)];
        let report = crawl(&q, &fetcher, 100, store.path(), 44_100).unwrap();
        let expected = durations.iter().filter(|&&d| (3.0..=600.0).contains(&d)).count();
        prop_assert_eq!(report.videos.len(), expected);
        prop_assert_eq!(report.rejected_duration, durations.len() - expected);
        for v in &report.videos {
            prop_assert!(v.duration_s >= 3.0 && v.duration_s <= 600.0);
        }
    }
}

/// Serves `routes` (path -> body) over plain HTTP/1.1 for `requests` requests.
fn serve(routes: Vec<(String, Vec<u8>)>, requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let (status, body) = match routes.iter().find(|(p, _)| *p == path) {
                Some((_, b)) => ("200 OK", b.clone()),
                None => ("404 Not Found", Vec::new()),
            };
            write!(stream, "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
            stream.write_all(&body).unwrap();
        }
    });
    format!("http://{addr}")
}

#[test]
fn http_manifest_fetcher_downloads_listed_audio() {
    let wav = wav_bytes(&tone(3.2, 22_050), 22_050).unwrap();
    let url = serve(vec![("/a.wav".into(), wav.clone()), ("/b.wav".into(), wav)], 2);
    let manifest = format!(
        "query_label,video_id,duration_s,url\nlow tone,a,3.2,{url}/a.wav\nhigh tone,x,3.2,{url}/x.wav\nlow tone,b,1.0,{url}/b.wav\nLow Tone,c,3.2,{url}/missing.wav\n"
    );
    let manifest_url = serve(vec![("/manifest.csv".into(), manifest.into_bytes())], 1);
    let fetcher = HttpManifestFetcher::new(format!("{manifest_url}/manifest.csv"));
    let q = [QueryRecord::new("low tone", DatasetId::Synthetic)];
    let items = fetcher.fetch(&q[0], 10).unwrap();
    assert_eq!(items.len(), 3);
    let a = items[0].as_ref().unwrap();
    assert_eq!((a.video_id.as_str(), a.duration_s), ("a", 3.2));
    assert!(matches!(&a.audio, FetchedAudio::Bytes(b) if b.len() > 44));
    assert!(items[1].is_ok());
    assert!(matches!(&items[2], Err(CrawlError::FetchFailed { video_id, .. }) if video_id == "c"));
}

#[test]
fn unreachable_manifest_is_unavailable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let fetcher = HttpManifestFetcher::new(format!("http://{addr}/manifest.csv"));
    let err = fetcher.fetch(&QueryRecord::new("dog", DatasetId::Esc50), 5).unwrap_err();
    assert!(matches!(err, CrawlError::FetcherUnavailable(_)));
}
