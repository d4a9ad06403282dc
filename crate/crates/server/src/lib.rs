//! HTTP service for collecting human verdicts on ranked segments.
//!
//! Evaluators only ever see a segment id, the predicted label and an audio
//! URL; titles, source URLs and other video metadata never leave the server.
//! All vote mutations go through one mutex-guarded [`FeedbackStore`], which
//! appends to the on-disk log before updating its in-memory state.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use hearsay_core::audio::wav_bytes;
use hearsay_core::dataset::{DatasetId, LabelVocabulary};
use hearsay_core::evaluator::{evaluate_classifiers, k_grid, GroundTruth, GtMode, PrecisionCurve, ScoredSegment};
use hearsay_core::feedback::{AggregatedJudgment, FeedbackError, FeedbackStore, Progress, Verdict, VoteRecord};
use hearsay_core::pipeline::{segment_samples, SegmentRef};

/// Largest `kmax` a precision request may ask for.
pub const MAX_KMAX: usize = 10_000;

/// Everything the service reads but never changes.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub segments: BTreeMap<String, SegmentRef>,
    pub predictions: Vec<ScoredSegment>,
    /// Vocabularies of the classifiers whose predictions are loaded.
    pub vocabularies: Vec<LabelVocabulary>,
    pub sample_rate: u32,
    pub default_kmax: usize,
}

pub struct AppState {
    corpus: Corpus,
    predicted: HashMap<String, usize>,
    query_gt: HashMap<String, String>,
    store: Mutex<FeedbackStore>,
}

impl AppState {
    pub fn new(corpus: Corpus, store: FeedbackStore) -> Arc<Self> {
        let predicted = corpus
            .predictions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.segment_id.clone(), i))
            .collect();
        let query_gt = corpus
            .segments
            .iter()
            .map(|(id, s)| (id.clone(), s.query_label.clone()))
            .collect();
        Arc::new(Self {
            corpus,
            predicted,
            query_gt,
            store: Mutex::new(store),
        })
    }

    fn store(&self) -> MutexGuard<'_, FeedbackStore> {
        // a panic while holding the lock cannot leave the store half-written:
        // the log append happens before any state change
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/assignments", get(next_task))
        .route("/api/segments/{id}/audio", get(segment_audio))
        .route("/api/votes", post(post_vote))
        .route("/api/results/precision", get(precision))
        .route("/api/progress", get(progress))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: &'static str,
    message: String,
}

fn error(status: StatusCode, code: &'static str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ApiError {
            error: code,
            message: message.into(),
        }),
    )
        .into_response()
}

/// Percent-encodes everything outside the URL unreserved set.
pub fn encode_path_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn audio_url(segment_id: &str) -> String {
    format!("/api/segments/{}/audio", encode_path_segment(segment_id))
}

#[derive(Debug, Deserialize)]
struct AssignmentQuery {
    evaluator: Option<String>,
}

/// What an evaluator is shown. Deliberately nothing about the source video.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskView {
    pub segment_id: String,
    pub predicted_label: String,
    pub audio_url: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskProgress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskResponse {
    pub evaluator_id: String,
    pub task: Option<TaskView>,
    pub progress: TaskProgress,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<AssignmentQuery>) -> Response {
    let Some(evaluator) = q.evaluator.filter(|e| !e.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing_evaluator", "query parameter evaluator is required");
    };
    let store = state.store();
    let st = store.state();
    let task = st.next_pending(&evaluator).map(|a| TaskView {
        segment_id: a.segment_id.clone(),
        predicted_label: state
            .predicted
            .get(&a.segment_id)
            .map(|&i| state.corpus.predictions[i].predicted_class.clone())
            .unwrap_or_default(),
        audio_url: audio_url(&a.segment_id),
    });
    let (done, total) = st
        .assignments()
        .iter()
        .filter(|a| a.evaluator_id == evaluator)
        .fold((0, 0), |(d, t), a| {
            (d + (a.status == hearsay_core::feedback::AssignmentStatus::Done) as usize, t + 1)
        });
    Json(TaskResponse {
        evaluator_id: evaluator,
        task,
        progress: TaskProgress { done, total },
    })
    .into_response()
}

async fn segment_audio(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(seg) = state.corpus.segments.get(&id).cloned() else {
        return error(StatusCode::NOT_FOUND, "unknown_segment", format!("no segment {id}"));
    };
    let rate = state.corpus.sample_rate;
    let bytes = tokio::task::spawn_blocking(move || {
        let samples = segment_samples(&seg, rate).map_err(|e| e.to_string())?;
        wav_bytes(&samples, rate).map_err(|e| e.to_string())
    })
    .await;
    match bytes {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "audio_unavailable", e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "audio_unavailable", e.to_string()),
    }
}

/// Vote body. `ts` defaults to the server clock.
#[derive(Debug, Deserialize)]
struct VoteInput {
    segment_id: String,
    evaluator_id: String,
    verdict: Verdict,
    ts: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VoteAck {
    pub status: String,
    pub judgment: AggregatedJudgment,
}

async fn post_vote(State(state): State<Arc<AppState>>, body: Result<Json<VoteInput>, JsonRejection>) -> Response {
    let input = match body {
        Ok(Json(v)) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed_body", e.body_text()),
    };
    if input.evaluator_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "malformed_body", "evaluator_id must not be empty");
    }
    let ts = input.ts.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let vote = VoteRecord {
        segment_id: input.segment_id,
        evaluator_id: input.evaluator_id,
        verdict: input.verdict,
        ts,
    };
    let mut store = state.store();
    if !store.state().is_assigned_segment(&vote.segment_id) {
        return error(
            StatusCode::NOT_FOUND,
            "unknown_segment",
            format!("segment {} is not up for evaluation", vote.segment_id),
        );
    }
    match store.record_vote(vote) {
        Ok(judgment) => (
            StatusCode::CREATED,
            Json(VoteAck {
                status: "recorded".into(),
                judgment,
            }),
        )
            .into_response(),
        Err(e @ FeedbackError::DuplicateVote { .. }) => error(StatusCode::CONFLICT, "duplicate_vote", e.to_string()),
        Err(e @ FeedbackError::UnknownAssignment { .. }) => {
            error(StatusCode::NOT_FOUND, "unknown_assignment", e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct PrecisionQuery {
    gt: Option<String>,
    classifier: Option<String>,
    kmax: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CurveResponse {
    pub classifier: String,
    #[serde(flatten)]
    pub curve: PrecisionCurve,
}

async fn precision(State(state): State<Arc<AppState>>, Query(q): Query<PrecisionQuery>) -> Response {
    let gt_mode = match q.gt.as_deref().unwrap_or("query").parse::<GtMode>() {
        Ok(m) => m,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_gt", e),
    };
    let kmax = q.kmax.unwrap_or(state.corpus.default_kmax);
    if kmax == 0 || kmax > MAX_KMAX {
        return error(StatusCode::BAD_REQUEST, "bad_kmax", format!("kmax must be in 1..={MAX_KMAX}"));
    }
    let wanted = match q.classifier.as_deref() {
        None | Some("weighted") | Some("all") => None,
        Some(name) => match name.parse::<DatasetId>() {
            Ok(d) => Some(d),
            Err(_) => return error(StatusCode::BAD_REQUEST, "bad_classifier", format!("unknown classifier {name:?}")),
        },
    };
    let judgments = state.store().state().judgments();
    let gt = match gt_mode {
        GtMode::Query => GroundTruth::Query(&state.query_gt),
        GtMode::Human => GroundTruth::Human(&judgments),
    };
    let by_classifier: Vec<(&LabelVocabulary, Vec<ScoredSegment>)> = state
        .corpus
        .vocabularies
        .iter()
        .filter(|v| wanted.is_none_or(|d| d == v.dataset_id))
        .map(|v| {
            let preds = state
                .corpus
                .predictions
                .iter()
                .filter(|p| p.classifier == v.dataset_id)
                .cloned()
                .collect();
            (v, preds)
        })
        .collect();
    let groups: Vec<(&LabelVocabulary, &[ScoredSegment])> =
        by_classifier.iter().map(|(v, p)| (*v, p.as_slice())).collect();
    let set = match evaluate_classifiers(&groups, &gt, &k_grid(kmax)) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "evaluation_failed", e.to_string()),
    };
    let (name, curve) = match wanted {
        None => ("weighted".to_string(), set.weighted),
        Some(d) => (d.as_str().to_string(), set.classifiers.into_iter().next().map(|c| c.curve)),
    };
    match curve {
        Some(curve) => Json(CurveResponse { classifier: name, curve }).into_response(),
        None => error(
            StatusCode::NOT_FOUND,
            "no_rankings",
            format!("no ranked segments for {name} under {gt_mode} ground truth"),
        ),
    }
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<Progress> {
    Json(state.store().state().progress())
}
