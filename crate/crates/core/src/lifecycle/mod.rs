//! Event-sourced workflow for asset candidates: manager routing, author
//! validation, registration, archival and exposure.
//!
//! A [`LifecycleRecord`] is never mutated directly; it is the fold of its
//! event history under [`apply_event`].

mod clock;
mod engine;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::codemeta::{CodeMetaRecord, build_codemeta};
use crate::extract::Component;
use crate::resolve::AssetCandidate;
use crate::swhid::{ArchivalError, Swhid};

pub use clock::{Clock, FixedClock, SystemClock};
pub use engine::{
    Amendments, AuthorDecision, EngineConfig, LifecycleEngine, NotificationMessage, read_event_log, record_id_for,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleState {
    Extracted,
    PendingManagerApproval,
    PendingAuthorValidation,
    Validated,
    Rejected,
    RegistrationRequested,
    Archived,
    Exposed,
}

impl LifecycleState {
    pub fn is_terminal(self) -> bool {
        matches!(self, LifecycleState::Rejected | LifecycleState::Exposed)
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    System,
    Manager,
    Author,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    RoutedToManager,
    ManagerApproved,
    ManagerRejected,
    ValidationIssued,
    AuthorConfirmed,
    AuthorAmendedConfirmed,
    AuthorRejected,
    RegistrationSent,
    ArchivalFailed,
    ArchivalCompleted,
    Exposed,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::Created,
        EventKind::RoutedToManager,
        EventKind::ManagerApproved,
        EventKind::ManagerRejected,
        EventKind::ValidationIssued,
        EventKind::AuthorConfirmed,
        EventKind::AuthorAmendedConfirmed,
        EventKind::AuthorRejected,
        EventKind::RegistrationSent,
        EventKind::ArchivalFailed,
        EventKind::ArchivalCompleted,
        EventKind::Exposed,
    ];

    pub fn actor(self) -> Actor {
        match self {
            EventKind::ManagerApproved | EventKind::ManagerRejected => Actor::Manager,
            EventKind::AuthorConfirmed | EventKind::AuthorAmendedConfirmed | EventKind::AuthorRejected => {
                Actor::Author
            }
            _ => Actor::System,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or_default())
    }
}

/// UTC instants serialized with microsecond precision so that a persisted
/// event re-serializes to identical bytes.
pub mod timestamp {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer, de::Error};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::Micros, true)
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(D::Error::custom)
    }
}

pub type Payload = BTreeMap<String, Value>;

/// One line of the event log. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub record_id: String,
    pub seq: u64,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Payload,
}

/// A mention as shown to the author, with byte offsets relative to its
/// sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpan {
    pub component: Component,
    pub start_byte: usize,
    pub end_byte: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionContext {
    pub sentence: String,
    pub mentions: Vec<ContextSpan>,
}

/// What the record is about, frozen at creation and changed only by author
/// amendments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSnapshot {
    pub candidate: AssetCandidate,
    pub paper_title: Option<String>,
    pub contact: Option<String>,
    pub contexts: Vec<MentionContext>,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationToken {
    pub token: String,
    pub record_id: String,
    #[serde(with = "timestamp")]
    pub expiry: DateTime<Utc>,
}

impl ValidationToken {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now >= self.expiry
    }
}

// the token is a credential: keep it out of debug output and logs
impl fmt::Debug for ValidationToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValidationToken")
            .field("token", &"<redacted>")
            .field("record_id", &self.record_id)
            .field("expiry", &self.expiry)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleRecord {
    pub record_id: String,
    pub paper_id: String,
    pub candidate_id: String,
    pub state: LifecycleState,
    pub asset: AssetSnapshot,
    #[serde(skip_serializing, default)]
    pub validation_token: Option<ValidationToken>,
    pub swhid: Option<Swhid>,
    /// Reason of the latest failed archival attempt, cleared on success.
    pub archival_failure: Option<String>,
    pub history: Vec<Event>,
}

impl LifecycleRecord {
    pub fn last_seq(&self) -> u64 {
        self.history.last().map_or(0, |e| e.seq)
    }

    pub fn name(&self) -> &str {
        &self.asset.candidate.canonical_name
    }

    /// CodeMeta description of the asset, identified by its SWHID once
    /// archived.
    pub fn codemeta(&self) -> CodeMetaRecord {
        let mut record = build_codemeta(&self.asset.candidate, &self.paper_id);
        record.identifier = self.swhid.clone();
        record
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifecycleError {
    #[error("event `{kind}` not allowed in state {state}")]
    IllegalTransition { state: LifecycleState, kind: EventKind },
    #[error("event `{kind}` must be performed by {expected:?}, not {actual:?}")]
    WrongActor {
        kind: EventKind,
        expected: Actor,
        actual: Actor,
    },
    #[error("expected seq {expected}, got {actual}")]
    SequenceError { expected: u64, actual: u64 },
    #[error("event for record `{actual}` applied to `{expected}`")]
    RecordMismatch { expected: String, actual: String },
    #[error("a record's history must begin with `created`")]
    EmptyHistory,
    #[error("bad `{kind}` payload: {reason}")]
    InvalidPayload { kind: EventKind, reason: String },
    #[error("validation token is unknown, expired or already used")]
    InvalidToken,
    #[error("no record `{0}`")]
    NotFound(String),
    #[error("record `{0}` was modified concurrently")]
    Conflict(String),
    #[error("event log: {0}")]
    Storage(String),
    #[error(transparent)]
    Archival(#[from] ArchivalError),
}

fn payload_err(kind: EventKind, reason: impl Into<String>) -> LifecycleError {
    LifecycleError::InvalidPayload {
        kind,
        reason: reason.into(),
    }
}

fn payload_str<'a>(event: &'a Event, key: &str) -> Result<&'a str, LifecycleError> {
    event
        .payload
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| payload_err(event.kind, format!("missing string `{key}`")))
}

fn optional_str<'a>(event: &'a Event, key: &str) -> Result<Option<&'a str>, LifecycleError> {
    match event.payload.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(payload_err(event.kind, format!("`{key}` must be a string"))),
    }
}

/// Target state of `kind` from `state`, or `None` if the pair is illegal.
pub fn transition(state: LifecycleState, kind: EventKind) -> Option<LifecycleState> {
    use EventKind as K;
    use LifecycleState as S;
    Some(match (state, kind) {
        (S::Extracted, K::RoutedToManager) => S::PendingManagerApproval,
        (S::PendingManagerApproval, K::ManagerApproved) => S::PendingAuthorValidation,
        (S::PendingManagerApproval, K::ManagerRejected) => S::Rejected,
        (S::PendingAuthorValidation, K::ValidationIssued) => S::PendingAuthorValidation,
        (S::PendingAuthorValidation, K::AuthorConfirmed | K::AuthorAmendedConfirmed) => S::Validated,
        (S::PendingAuthorValidation, K::AuthorRejected) => S::Rejected,
        (S::Validated, K::RegistrationSent) => S::RegistrationRequested,
        // a failed attempt may be retried
        (S::RegistrationRequested, K::RegistrationSent | K::ArchivalFailed) => S::RegistrationRequested,
        (S::RegistrationRequested, K::ArchivalCompleted) => S::Archived,
        (S::Archived, K::Exposed) => S::Exposed,
        _ => return None,
    })
}

fn check_actor(event: &Event) -> Result<(), LifecycleError> {
    let expected = event.kind.actor();
    if event.actor != expected {
        return Err(LifecycleError::WrongActor {
            kind: event.kind,
            expected,
            actual: event.actor,
        });
    }
    Ok(())
}

/// Starts a record from its `created` event.
pub fn genesis(event: &Event) -> Result<LifecycleRecord, LifecycleError> {
    if event.kind != EventKind::Created {
        return Err(LifecycleError::EmptyHistory);
    }
    if event.seq != 1 {
        return Err(LifecycleError::SequenceError {
            expected: 1,
            actual: event.seq,
        });
    }
    check_actor(event)?;
    let asset: AssetSnapshot = serde_json::from_value(
        event
            .payload
            .get("asset")
            .cloned()
            .ok_or_else(|| payload_err(event.kind, "missing `asset`"))?,
    )
    .map_err(|e| payload_err(event.kind, e.to_string()))?;
    Ok(LifecycleRecord {
        record_id: event.record_id.clone(),
        paper_id: payload_str(event, "paper_id")?.to_string(),
        candidate_id: asset.candidate.candidate_id.clone(),
        state: LifecycleState::Extracted,
        asset,
        validation_token: None,
        swhid: None,
        archival_failure: None,
        history: vec![event.clone()],
    })
}

/// Applies one event, returning the next record. The input is untouched.
pub fn apply_event(record: &LifecycleRecord, event: &Event) -> Result<LifecycleRecord, LifecycleError> {
    if event.record_id != record.record_id {
        return Err(LifecycleError::RecordMismatch {
            expected: record.record_id.clone(),
            actual: event.record_id.clone(),
        });
    }
    let expected = record.last_seq() + 1;
    if event.seq != expected {
        return Err(LifecycleError::SequenceError {
            expected,
            actual: event.seq,
        });
    }
    let illegal = || LifecycleError::IllegalTransition {
        state: record.state,
        kind: event.kind,
    };
    let next = transition(record.state, event.kind).ok_or_else(illegal)?;
    check_actor(event)?;

    let mut out = record.clone();
    match event.kind {
        EventKind::ValidationIssued => {
            let expiry = DateTime::parse_from_rfc3339(payload_str(event, "expiry")?)
                .map_err(|e| payload_err(event.kind, e.to_string()))?
                .with_timezone(&Utc);
            out.validation_token = Some(ValidationToken {
                token: payload_str(event, "token")?.to_string(),
                record_id: record.record_id.clone(),
                expiry,
            });
        }
        EventKind::AuthorConfirmed | EventKind::AuthorAmendedConfirmed | EventKind::AuthorRejected => {
            // decisions need an issued token, which they consume
            if record.validation_token.is_none() {
                return Err(illegal());
            }
            out.validation_token = None;
            if event.kind == EventKind::AuthorAmendedConfirmed {
                amend(&mut out.asset.candidate, event)?;
            }
        }
        EventKind::ArchivalFailed => {
            out.archival_failure = Some(optional_str(event, "reason")?.unwrap_or("unknown").to_string());
        }
        EventKind::ArchivalCompleted => {
            let swhid: Swhid = payload_str(event, "swhid")?
                .parse()
                .map_err(|e: crate::swhid::SwhidError| payload_err(event.kind, e.to_string()))?;
            out.swhid = Some(swhid);
            out.archival_failure = None;
        }
        _ => {}
    }
    out.state = next;
    out.history.push(event.clone());
    Ok(out)
}

fn amend(candidate: &mut AssetCandidate, event: &Event) -> Result<(), LifecycleError> {
    if let Some(name) = optional_str(event, "name")? {
        let name = name.trim();
        if name.is_empty() {
            return Err(payload_err(event.kind, "empty name"));
        }
        candidate.canonical_name = name.to_string();
        candidate.aliases.insert(name.to_string());
    }
    if let Some(url) = optional_str(event, "url")? {
        let url = Url::parse(url).map_err(|e| payload_err(event.kind, format!("url: {e}")))?;
        candidate.urls = [url].into();
    }
    if let Some(version) = optional_str(event, "version")? {
        candidate.versions = [version.trim().to_string()].into();
    }
    Ok(())
}

/// Rebuilds a record from its full history.
pub fn replay(events: &[Event]) -> Result<LifecycleRecord, LifecycleError> {
    let (first, rest) = events.split_first().ok_or(LifecycleError::EmptyHistory)?;
    rest.iter().try_fold(genesis(first)?, |record, e| apply_event(&record, e))
}

#[cfg(test)]
mod tests;
