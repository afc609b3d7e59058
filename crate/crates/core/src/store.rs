//! Durable experiment records: sessions, generated pairs and ratings.
//!
//! Everything lives in one append-only JSON-lines journal. Each write is
//! validated, appended and fsynced before it is acknowledged; opening the
//! store replays the journal. A torn final line (a crash mid-append) is
//! dropped on replay since it was never acknowledged.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::mood::{parse_mood, MoodCategory};
use crate::pipeline::{Arm, PresentationOrder, RecommendationPair};

pub const EXPORT_HEADER: [&str; 7] = [
    "session_id",
    "pair_id",
    "arm",
    "mood",
    "rating",
    "comment",
    "rated_at",
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt journal at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("unknown session {0}")]
    UnknownSession(Uuid),
    #[error("pair {0} does not belong to this session")]
    UnknownPair(Uuid),
    #[error("pair {0} already recorded")]
    DuplicatePair(Uuid),
    #[error("this item of pair {0} has already been rated")]
    DuplicateRating(Uuid),
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("export parse error at line {line}: {message}")]
    ExportParse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    Live,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSession {
    pub session_id: Uuid,
    pub participant_pseudonym: String,
    pub created_at: DateTime<Utc>,
    pub mode: SessionMode,
}

/// A generated pair as kept for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPair {
    pub pair_id: Uuid,
    pub session_id: Uuid,
    pub mood: MoodCategory,
    pub presentation_order: PresentationOrder,
    pub control_id: String,
    pub treatment_id: String,
    pub created_at: DateTime<Utc>,
}

impl StoredPair {
    pub fn from_pair(session_id: Uuid, pair: &RecommendationPair) -> Self {
        Self {
            pair_id: pair.pair_id,
            session_id,
            mood: pair.mood,
            presentation_order: pair.presentation_order,
            control_id: pair.control.canonical_id.clone(),
            treatment_id: pair.treatment.canonical_id.clone(),
            created_at: now_millis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub pair_id: Uuid,
    pub arm: Arm,
    pub rating: u8,
    pub mood: MoodCategory,
    pub comment: Option<String>,
    pub rated_at: DateTime<Utc>,
}

/// One exported rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub session_id: Uuid,
    pub pair_id: Uuid,
    pub arm: Arm,
    pub mood: MoodCategory,
    pub rating: u8,
    pub comment: Option<String>,
    pub rated_at: DateTime<Utc>,
    /// Both arms of the pair are rated. Not part of the CSV columns.
    #[serde(skip)]
    pub pair_complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportFilter {
    pub session_id: Option<Uuid>,
    pub mood: Option<MoodCategory>,
    pub rated_from: Option<DateTime<Utc>>,
    pub rated_until: Option<DateTime<Utc>>,
    pub complete_only: bool,
}

impl ExportFilter {
    fn admits(&self, row: &ExportRow) -> bool {
        self.session_id.is_none_or(|s| s == row.session_id)
            && self.mood.is_none_or(|m| m == row.mood)
            && self.rated_from.is_none_or(|t| row.rated_at >= t)
            && self.rated_until.is_none_or(|t| row.rated_at <= t)
            && (!self.complete_only || row.pair_complete)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Entry {
    Session(ExperimentSession),
    Pair(StoredPair),
    Rating {
        session_id: Uuid,
        #[serde(flatten)]
        record: RatingRecord,
    },
}

#[derive(Default)]
struct State {
    sessions: HashMap<Uuid, ExperimentSession>,
    pairs: HashMap<Uuid, StoredPair>,
    ratings: Vec<(Uuid, RatingRecord)>,
    rated: HashSet<(Uuid, Arm)>,
}

impl State {
    fn check(&self, entry: &Entry) -> Result<(), StoreError> {
        match entry {
            Entry::Session(s) => {
                if s.participant_pseudonym.trim().is_empty() {
                    return Err(StoreError::Validation("participant pseudonym is empty".into()));
                }
                if self.sessions.contains_key(&s.session_id) {
                    return Err(StoreError::Validation(format!("session {} exists", s.session_id)));
                }
            }
            Entry::Pair(p) => {
                if !self.sessions.contains_key(&p.session_id) {
                    return Err(StoreError::UnknownSession(p.session_id));
                }
                if self.pairs.contains_key(&p.pair_id) {
                    return Err(StoreError::DuplicatePair(p.pair_id));
                }
            }
            Entry::Rating { session_id, record } => {
                if !(1..=5).contains(&record.rating) {
                    return Err(StoreError::RatingOutOfRange(record.rating.into()));
                }
                if !self.sessions.contains_key(session_id) {
                    return Err(StoreError::UnknownSession(*session_id));
                }
                match self.pairs.get(&record.pair_id) {
                    Some(p) if p.session_id == *session_id => {}
                    _ => return Err(StoreError::UnknownPair(record.pair_id)),
                }
                if self.rated.contains(&(record.pair_id, record.arm)) {
                    return Err(StoreError::DuplicateRating(record.pair_id));
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, entry: Entry) {
        match entry {
            Entry::Session(s) => {
                self.sessions.insert(s.session_id, s);
            }
            Entry::Pair(p) => {
                self.pairs.insert(p.pair_id, p);
            }
            Entry::Rating { session_id, record } => {
                self.rated.insert((record.pair_id, record.arm));
                self.ratings.push((session_id, record));
            }
        }
    }
}

pub struct ExperimentStore {
    state: RwLock<State>,
    /// Single writer; `None` for an in-memory store.
    writer: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

fn now_millis() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

impl ExperimentStore {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens or creates the journal at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;

        let mut state = State::default();
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Entry>(line) {
                Ok(entry) => state.apply(entry),
                Err(_) if i + 1 == lines.len() && !complete => {
                    tracing::warn!(line = i + 1, "dropping torn final journal entry");
                }
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        if !complete && !text.is_empty() {
            // Cut the torn line so the next append starts clean.
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64)?;
            file.sync_data()?;
        }
        Ok(Self {
            state: RwLock::new(state),
            writer: Mutex::new(Some(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn commit(&self, entry: Entry) -> Result<(), StoreError> {
        let mut writer = self.writer.lock().expect("store writer poisoned");
        self.state.read().expect("store state poisoned").check(&entry)?;
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("journal entries serialize");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.state.write().expect("store state poisoned").apply(entry);
        Ok(())
    }

    pub fn create_session(
        &self,
        participant_pseudonym: &str,
        mode: SessionMode,
    ) -> Result<ExperimentSession, StoreError> {
        let session = ExperimentSession {
            session_id: Uuid::new_v4(),
            participant_pseudonym: participant_pseudonym.trim().to_string(),
            created_at: now_millis(),
            mode,
        };
        self.commit(Entry::Session(session.clone()))?;
        Ok(session)
    }

    pub fn session(&self, session_id: Uuid) -> Option<ExperimentSession> {
        self.state.read().unwrap().sessions.get(&session_id).cloned()
    }

    pub fn record_pair(&self, session_id: Uuid, pair: &RecommendationPair) -> Result<StoredPair, StoreError> {
        let stored = StoredPair::from_pair(session_id, pair);
        self.commit(Entry::Pair(stored.clone()))?;
        Ok(stored)
    }

    pub fn pair(&self, pair_id: Uuid) -> Option<StoredPair> {
        self.state.read().unwrap().pairs.get(&pair_id).cloned()
    }

    pub fn pairs_for_session(&self, session_id: Uuid) -> Vec<StoredPair> {
        let mut pairs: Vec<_> = self
            .state
            .read()
            .unwrap()
            .pairs
            .values()
            .filter(|p| p.session_id == session_id)
            .cloned()
            .collect();
        pairs.sort_by_key(|p| p.created_at);
        pairs
    }

    pub fn is_rated(&self, pair_id: Uuid, arm: Arm) -> bool {
        self.state.read().unwrap().rated.contains(&(pair_id, arm))
    }

    /// Persists one rating. Timestamps are kept at millisecond precision.
    pub fn record_rating(&self, session_id: Uuid, record: RatingRecord) -> Result<(), StoreError> {
        let record = RatingRecord {
            rated_at: record.rated_at.trunc_subsecs(3),
            comment: record.comment.filter(|c| !c.is_empty()),
            ..record
        };
        self.commit(Entry::Rating { session_id, record })
    }

    pub fn export_ratings(&self, filter: &ExportFilter) -> Vec<ExportRow> {
        let state = self.state.read().unwrap();
        state
            .ratings
            .iter()
            .map(|(session_id, r)| ExportRow {
                session_id: *session_id,
                pair_id: r.pair_id,
                arm: r.arm,
                mood: r.mood,
                rating: r.rating,
                comment: r.comment.clone(),
                rated_at: r.rated_at,
                pair_complete: state.rated.contains(&(r.pair_id, Arm::Control))
                    && state.rated.contains(&(r.pair_id, Arm::Treatment)),
            })
            .filter(|row| filter.admits(row))
            .collect()
    }
}

fn quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

/// Writes rows as CSV with the fixed header. Comments are always quoted.
pub fn write_export<W: Write>(rows: &[ExportRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", EXPORT_HEADER.join(","))?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.session_id,
            row.pair_id,
            row.arm.as_str(),
            row.mood.label(),
            row.rating,
            quote(row.comment.as_deref().unwrap_or("")),
            row.rated_at.to_rfc3339_opts(SecondsFormat::Millis, true),
        )?;
    }
    Ok(())
}

pub fn export_csv(rows: &[ExportRow]) -> String {
    let mut buf = Vec::new();
    write_export(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("export is UTF-8")
}

/// Parses an export back into rows. `pair_complete` is recomputed from the
/// rows present.
pub fn read_export<R: Read>(input: R) -> Result<Vec<ExportRow>, StoreError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| StoreError::ExportParse { line: 1, message: e.to_string() })?
        .clone();
    if header.iter().collect::<Vec<_>>() != EXPORT_HEADER {
        return Err(StoreError::ExportParse {
            line: 1,
            message: format!("expected header {}", EXPORT_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| StoreError::ExportParse { line, message };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let arm = match field(2) {
            "control" => Arm::Control,
            "treatment" => Arm::Treatment,
            other => return Err(bad(format!("unknown arm {other:?}"))),
        };
        let rating: i64 = field(4).parse().map_err(|_| bad(format!("bad rating {:?}", field(4))))?;
        if !(1..=5).contains(&rating) {
            return Err(bad(format!("rating {rating} outside 1..=5")));
        }
        rows.push(ExportRow {
            session_id: field(0).parse().map_err(|_| bad("bad session_id".into()))?,
            pair_id: field(1).parse().map_err(|_| bad("bad pair_id".into()))?,
            arm,
            mood: parse_mood(field(3)).map_err(|e| bad(e.to_string()))?,
            rating: rating as u8,
            comment: Some(field(5).to_string()).filter(|c| !c.is_empty()),
            rated_at: DateTime::parse_from_rfc3339(field(6))
                .map_err(|e| bad(format!("bad rated_at: {e}")))?
                .with_timezone(&Utc),
            pair_complete: false,
        });
    }
    let arms: HashSet<(Uuid, Arm)> = rows.iter().map(|r| (r.pair_id, r.arm)).collect();
    for row in &mut rows {
        row.pair_complete =
            arms.contains(&(row.pair_id, Arm::Control)) && arms.contains(&(row.pair_id, Arm::Treatment));
    }
    Ok(rows)
}
