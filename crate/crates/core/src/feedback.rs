//! Human-feedback bookkeeping: selecting segments for review, assigning them
//! to evaluators, recording votes and aggregating majority verdicts.
//!
//! Votes are event-sourced. The append-only JSON-Lines log is the only
//! mutable record; [`FeedbackState`] is rebuilt from the assignment table and
//! the log on load, and every accepted vote is written to the log before the
//! in-memory state changes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{rank_segments, ScoredSegment};
use crate::rng::{seeded, shuffle};

pub const DEFAULT_MIN_VOTES: usize = 3;
pub const DEFAULT_K_PER_CLASS: usize = 40;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("{available} evaluators cannot give {needed} distinct votes per segment")]
    NotEnoughEvaluators { needed: usize, available: usize },
    #[error("no assignment of segment {segment_id} to evaluator {evaluator_id}")]
    UnknownAssignment { segment_id: String, evaluator_id: String },
    #[error("evaluator {evaluator_id} already voted on segment {segment_id}")]
    DuplicateVote { segment_id: String, evaluator_id: String },
    #[error("invalid feedback setup: {0}")]
    InvalidConfig(String),
    #[error("vote log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
}

/// Aggregated outcome for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Judgment {
    Correct,
    Incorrect,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub segment_id: String,
    pub evaluator_id: String,
    pub verdict: Verdict,
    /// UTC seconds since the Unix epoch.
    pub ts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub segment_id: String,
    pub evaluator_id: String,
    pub status: AssignmentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedJudgment {
    pub segment_id: String,
    pub correct_votes: usize,
    pub incorrect_votes: usize,
    pub verdict: Judgment,
}

/// Top `k_per_class` segments of every (classifier, predicted class) pair,
/// grouped in sorted order and deduplicated.
pub fn select_evaluation_set(predictions: &[ScoredSegment], k_per_class: usize) -> Vec<String> {
    let mut groups: BTreeMap<(&str, &str), Vec<ScoredSegment>> = BTreeMap::new();
    for p in predictions {
        groups
            .entry((p.classifier.as_str(), p.predicted_class.as_str()))
            .or_default()
            .push(p.clone());
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ((_, class), preds) in &groups {
        for id in rank_segments(preds, class, k_per_class) {
            if seen.insert(id.clone()) {
                out.push(id);
            }
        }
    }
    out
}

/// Gives every segment `min_votes` distinct evaluators.
///
/// Segments and evaluators are both put in seeded random order, then the
/// `segments * min_votes` slots are dealt round-robin over the evaluators, so
/// loads differ by at most one and no evaluator sees a segment twice.
pub fn assign(
    segments: &[String],
    evaluators: &[String],
    min_votes: usize,
    seed: u64,
) -> Result<Vec<Assignment>, FeedbackError> {
    if min_votes == 0 {
        return Err(FeedbackError::InvalidConfig("min_votes must be at least 1".into()));
    }
    let distinct: HashSet<&String> = evaluators.iter().collect();
    if distinct.len() != evaluators.len() {
        return Err(FeedbackError::InvalidConfig("duplicate evaluator id".into()));
    }
    if evaluators.len() < min_votes {
        return Err(FeedbackError::NotEnoughEvaluators {
            needed: min_votes,
            available: evaluators.len(),
        });
    }
    let distinct: HashSet<&String> = segments.iter().collect();
    if distinct.len() != segments.len() {
        return Err(FeedbackError::InvalidConfig("duplicate segment id".into()));
    }
    let mut rng = seeded(seed);
    let mut seg_order: Vec<&String> = segments.iter().collect();
    shuffle(&mut seg_order, &mut rng);
    let mut eval_order: Vec<&String> = evaluators.iter().collect();
    shuffle(&mut eval_order, &mut rng);

    let mut out = Vec::with_capacity(segments.len() * min_votes);
    let mut slot = 0;
    for seg in seg_order {
        for _ in 0..min_votes {
            out.push(Assignment {
                segment_id: seg.clone(),
                evaluator_id: eval_order[slot % eval_order.len()].clone(),
                status: AssignmentStatus::Pending,
            });
            slot += 1;
        }
    }
    Ok(out)
}

/// Majority verdict once at least `min_votes` votes are in. A tie is not a
/// majority for Correct and resolves to Incorrect.
pub fn aggregate_votes(segment_id: &str, verdicts: &[Verdict], min_votes: usize) -> AggregatedJudgment {
    let correct_votes = verdicts.iter().filter(|v| **v == Verdict::Correct).count();
    let incorrect_votes = verdicts.len() - correct_votes;
    let verdict = if verdicts.len() < min_votes {
        Judgment::Pending
    } else if correct_votes > incorrect_votes {
        Judgment::Correct
    } else {
        Judgment::Incorrect
    };
    AggregatedJudgment {
        segment_id: segment_id.to_string(),
        correct_votes,
        incorrect_votes,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatorProgress {
    pub evaluator_id: String,
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub evaluators: Vec<EvaluatorProgress>,
    pub votes_done: usize,
    pub votes_total: usize,
    pub segments_judged: usize,
    pub segments_total: usize,
}

/// In-memory assignment and vote state.
#[derive(Debug, Clone)]
pub struct FeedbackState {
    min_votes: usize,
    assignments: Vec<Assignment>,
    index: HashMap<(String, String), usize>,
    votes: BTreeMap<String, Vec<Verdict>>,
    log: Vec<VoteRecord>,
}

impl FeedbackState {
    pub fn new(assignments: Vec<Assignment>, min_votes: usize) -> Result<Self, FeedbackError> {
        if min_votes == 0 {
            return Err(FeedbackError::InvalidConfig("min_votes must be at least 1".into()));
        }
        let mut index = HashMap::new();
        let mut votes = BTreeMap::new();
        let mut assignments = assignments;
        for (i, a) in assignments.iter_mut().enumerate() {
            a.status = AssignmentStatus::Pending;
            if index.insert((a.segment_id.clone(), a.evaluator_id.clone()), i).is_some() {
                return Err(FeedbackError::InvalidConfig(format!(
                    "segment {} assigned twice to {}",
                    a.segment_id, a.evaluator_id
                )));
            }
            votes.entry(a.segment_id.clone()).or_insert_with(Vec::new);
        }
        Ok(Self {
            min_votes,
            assignments,
            index,
            votes,
            log: Vec::new(),
        })
    }

    /// Rebuilds state by applying `votes` in order.
    pub fn replay<I>(assignments: Vec<Assignment>, min_votes: usize, votes: I) -> Result<Self, FeedbackError>
    where
        I: IntoIterator<Item = VoteRecord>,
    {
        let mut state = Self::new(assignments, min_votes)?;
        for v in votes {
            state.apply(v)?;
        }
        Ok(state)
    }

    pub fn min_votes(&self) -> usize {
        self.min_votes
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.log
    }

    pub fn is_assigned_segment(&self, segment_id: &str) -> bool {
        self.votes.contains_key(segment_id)
    }

    /// Checks a vote against the assignment table without applying it.
    pub fn validate(&self, vote: &VoteRecord) -> Result<usize, FeedbackError> {
        let key = (vote.segment_id.clone(), vote.evaluator_id.clone());
        let &i = self.index.get(&key).ok_or_else(|| FeedbackError::UnknownAssignment {
            segment_id: vote.segment_id.clone(),
            evaluator_id: vote.evaluator_id.clone(),
        })?;
        if self.assignments[i].status == AssignmentStatus::Done {
            return Err(FeedbackError::DuplicateVote {
                segment_id: vote.segment_id.clone(),
                evaluator_id: vote.evaluator_id.clone(),
            });
        }
        Ok(i)
    }

    /// Applies a vote: marks the assignment done and updates the tally.
    pub fn apply(&mut self, vote: VoteRecord) -> Result<(), FeedbackError> {
        let i = self.validate(&vote)?;
        self.assignments[i].status = AssignmentStatus::Done;
        self.votes.get_mut(&vote.segment_id).unwrap().push(vote.verdict);
        self.log.push(vote);
        Ok(())
    }

    pub fn aggregate(&self, segment_id: &str) -> AggregatedJudgment {
        let verdicts = self.votes.get(segment_id).map(Vec::as_slice).unwrap_or(&[]);
        aggregate_votes(segment_id, verdicts, self.min_votes)
    }

    /// Aggregates of every assigned segment, in segment id order.
    pub fn aggregates(&self) -> Vec<AggregatedJudgment> {
        self.votes
            .iter()
            .map(|(id, v)| aggregate_votes(id, v, self.min_votes))
            .collect()
    }

    pub fn judgments(&self) -> HashMap<String, Judgment> {
        self.aggregates().into_iter().map(|a| (a.segment_id, a.verdict)).collect()
    }

    /// First pending assignment of `evaluator_id` in assignment order.
    pub fn next_pending(&self, evaluator_id: &str) -> Option<&Assignment> {
        self.assignments
            .iter()
            .find(|a| a.evaluator_id == evaluator_id && a.status == AssignmentStatus::Pending)
    }

    pub fn progress(&self) -> Progress {
        let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for a in &self.assignments {
            let e = per.entry(&a.evaluator_id).or_default();
            e.1 += 1;
            if a.status == AssignmentStatus::Done {
                e.0 += 1;
            }
        }
        let segments_judged = self
            .aggregates()
            .iter()
            .filter(|a| a.verdict != Judgment::Pending)
            .count();
        Progress {
            evaluators: per
                .into_iter()
                .map(|(id, (done, total))| EvaluatorProgress {
                    evaluator_id: id.to_string(),
                    done,
                    total,
                })
                .collect(),
            votes_done: self.log.len(),
            votes_total: self.assignments.len(),
            segments_judged,
            segments_total: self.votes.len(),
        }
    }
}

/// [`FeedbackState`] backed by an append-only vote log on disk.
#[derive(Debug)]
pub struct FeedbackStore {
    state: FeedbackState,
    log: File,
    log_path: PathBuf,
}

impl FeedbackStore {
    /// Opens (creating if needed) the vote log and replays it.
    pub fn open(assignments: Vec<Assignment>, min_votes: usize, log_path: &Path) -> Result<Self, FeedbackError> {
        let votes = if log_path.exists() {
            read_vote_log(File::open(log_path)?)?
        } else {
            Vec::new()
        };
        let state = FeedbackState::replay(assignments, min_votes, votes)?;
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(Self {
            state,
            log,
            log_path: log_path.to_path_buf(),
        })
    }

    pub fn state(&self) -> &FeedbackState {
        &self.state
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    /// Validates, appends to the log, then applies.
    pub fn record_vote(&mut self, vote: VoteRecord) -> Result<AggregatedJudgment, FeedbackError> {
        self.state.validate(&vote)?;
        let mut line = serde_json::to_string(&vote).expect("vote serialises");
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        let segment_id = vote.segment_id.clone();
        self.state.apply(vote)?;
        Ok(self.state.aggregate(&segment_id))
    }
}

pub fn read_vote_log<R: Read>(input: R) -> Result<Vec<VoteRecord>, FeedbackError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FeedbackError::CorruptLog {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    segment_id: String,
    evaluator_id: String,
}

/// Writes the assignment table (`segment_id,evaluator_id`). Status is not
/// stored; it follows from the vote log.
pub fn write_assignments<W: Write>(out: W, assignments: &[Assignment]) -> Result<(), FeedbackError> {
    let mut writer = csv::Writer::from_writer(out);
    for a in assignments {
        writer.serialize(AssignmentRow {
            segment_id: a.segment_id.clone(),
            evaluator_id: a.evaluator_id.clone(),
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_assignments<R: Read>(input: R) -> Result<Vec<Assignment>, FeedbackError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .deserialize()
        .map(|row| {
            let row: AssignmentRow = row?;
            Ok(Assignment {
                segment_id: row.segment_id,
                evaluator_id: row.evaluator_id,
                status: AssignmentStatus::Pending,
            })
        })
        .collect()
}
