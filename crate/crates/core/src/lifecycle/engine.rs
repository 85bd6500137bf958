use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use base64::Engine;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use chrono::Duration;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};
use sha2::{Digest, Sha256};

use super::{
    AssetSnapshot, Clock, Event, EventKind, LifecycleError, LifecycleRecord, LifecycleState, Payload, SystemClock,
    ValidationToken, apply_event, genesis, replay, timestamp,
};
use crate::codemeta::{build_codemeta, serialize_jsonld};
use crate::swhid::{
    ArchivalClient, ArchivalError, ArchivalReceipt, ArchivalRequest, ArchivalStatus, DirectoryTree, TreeEntry,
};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Validation links are this base followed by `/<token>`.
    pub validation_base_url: String,
    pub token_ttl: Duration,
    /// Recipient used when the paper carries no author address.
    pub fallback_contact: String,
    pub request_attempts: u32,
    pub max_polls: u32,
    pub poll_interval: std::time::Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            validation_base_url: "http://localhost:8080/validate".into(),
            token_ttl: Duration::days(30),
            fallback_contact: "repository-manager@localhost".into(),
            request_attempts: 3,
            max_polls: 10,
            poll_interval: std::time::Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationMessage {
    pub record_id: String,
    pub to: String,
    pub subject: String,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amendments {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthorDecision {
    Confirm,
    Amend(Amendments),
    Reject { reason: Option<String> },
}

pub fn record_id_for(paper_id: &str, candidate_id: &str) -> String {
    let digest = Sha256::new()
        .chain_update(paper_id.as_bytes())
        .chain_update([0])
        .chain_update(candidate_id.as_bytes())
        .finalize();
    format!("rec-{}", hex::encode(&digest[..8]))
}

fn new_token() -> String {
    URL_SAFE_NO_PAD.encode(rand::random::<[u8; 16]>())
}

fn storage(e: impl std::fmt::Display) -> LifecycleError {
    LifecycleError::Storage(e.to_string())
}

fn append_jsonl<T: Serialize>(file: &mut File, items: &[T]) -> Result<(), LifecycleError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(storage)?;
        buf.push(b'\n');
    }
    file.write_all(&buf).map_err(storage)?;
    file.flush().map_err(storage)
}

fn open_append(path: &Path) -> Result<File, LifecycleError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| storage(format!("{}: {e}", path.display())))
}

#[derive(Default)]
struct Outbox {
    file: Option<File>,
    sent: Vec<NotificationMessage>,
}

/// Holds every record as an immutable snapshot and serializes writes per
/// record by comparing sequence numbers. Every accepted event is appended
/// to the event log before the new snapshot becomes visible.
pub struct LifecycleEngine {
    records: RwLock<BTreeMap<String, Arc<LifecycleRecord>>>,
    tokens: RwLock<HashMap<String, String>>,
    log: Mutex<Option<File>>,
    log_path: Option<PathBuf>,
    outbox: Mutex<Outbox>,
    clock: Arc<dyn Clock>,
    config: EngineConfig,
}

impl LifecycleEngine {
    pub fn in_memory(clock: Arc<dyn Clock>, config: EngineConfig) -> Self {
        LifecycleEngine {
            records: RwLock::default(),
            tokens: RwLock::default(),
            log: Mutex::new(None),
            log_path: None,
            outbox: Mutex::default(),
            clock,
            config,
        }
    }

    /// Opens (or creates) an event log and outbox, rebuilding every record
    /// by replaying the log.
    pub fn open(
        log_path: &Path,
        outbox_path: &Path,
        clock: Arc<dyn Clock>,
        config: EngineConfig,
    ) -> Result<Self, LifecycleError> {
        let events = read_event_log(log_path)?;
        let mut grouped: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for e in events {
            grouped.entry(e.record_id.clone()).or_default().push(e);
        }
        let mut records = BTreeMap::new();
        let mut tokens = HashMap::new();
        for (id, history) in grouped {
            let record = replay(&history)?;
            if let Some(t) = &record.validation_token {
                tokens.insert(t.token.clone(), id.clone());
            }
            records.insert(id, Arc::new(record));
        }
        let sent = read_jsonl(outbox_path)?;
        Ok(LifecycleEngine {
            records: RwLock::new(records),
            tokens: RwLock::new(tokens),
            log: Mutex::new(Some(open_append(log_path)?)),
            log_path: Some(log_path.to_path_buf()),
            outbox: Mutex::new(Outbox {
                file: Some(open_append(outbox_path)?),
                sent,
            }),
            clock,
            config,
        })
    }

    pub fn with_system_clock(log_path: &Path, outbox_path: &Path, config: EngineConfig) -> Result<Self, LifecycleError> {
        Self::open(log_path, outbox_path, Arc::new(SystemClock), config)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn get(&self, record_id: &str) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        self.records
            .read()
            .unwrap()
            .get(record_id)
            .cloned()
            .ok_or_else(|| LifecycleError::NotFound(record_id.to_string()))
    }

    pub fn records(&self) -> Vec<Arc<LifecycleRecord>> {
        self.records.read().unwrap().values().cloned().collect()
    }

    pub fn in_state(&self, state: LifecycleState) -> Vec<Arc<LifecycleRecord>> {
        self.records().into_iter().filter(|r| r.state == state).collect()
    }

    pub fn pending(&self) -> Vec<Arc<LifecycleRecord>> {
        self.in_state(LifecycleState::PendingManagerApproval)
    }

    pub fn for_paper(&self, paper_id: &str) -> Vec<Arc<LifecycleRecord>> {
        self.records().into_iter().filter(|r| r.paper_id == paper_id).collect()
    }

    pub fn outbox(&self) -> Vec<NotificationMessage> {
        self.outbox.lock().unwrap().sent.clone()
    }

    fn event(&self, record_id: &str, seq: u64, kind: EventKind, payload: Payload) -> Event {
        Event {
            record_id: record_id.to_string(),
            seq,
            timestamp: self.clock.now(),
            actor: kind.actor(),
            kind,
            payload,
        }
    }

    fn persist(&self, events: &[Event]) -> Result<(), LifecycleError> {
        match self.log.lock().unwrap().as_mut() {
            Some(file) => append_jsonl(file, events),
            None => Ok(()),
        }
    }

    fn reindex_tokens(&self, before: Option<&LifecycleRecord>, after: &LifecycleRecord) {
        let old = before.and_then(|r| r.validation_token.as_ref());
        let new = after.validation_token.as_ref();
        if old.map(|t| &t.token) == new.map(|t| &t.token) {
            return;
        }
        let mut tokens = self.tokens.write().unwrap();
        if let Some(t) = old {
            tokens.remove(&t.token);
        }
        if let Some(t) = new {
            tokens.insert(t.token.clone(), after.record_id.clone());
        }
    }

    /// Appends events to a record whose last seq is still `base_seq`.
    pub(super) fn commit(
        &self,
        record_id: &str,
        base_seq: u64,
        events: Vec<(EventKind, Payload)>,
    ) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let mut records = self.records.write().unwrap();
        let current = records
            .get(record_id)
            .cloned()
            .ok_or_else(|| LifecycleError::NotFound(record_id.to_string()))?;
        if current.last_seq() != base_seq {
            return Err(LifecycleError::Conflict(record_id.to_string()));
        }
        let mut next = (*current).clone();
        let mut applied = Vec::new();
        for (kind, payload) in events {
            let event = self.event(record_id, next.last_seq() + 1, kind, payload);
            next = apply_event(&next, &event)?;
            applied.push(event);
        }
        self.persist(&applied)?;
        self.reindex_tokens(Some(&current), &next);
        let next = Arc::new(next);
        records.insert(record_id.to_string(), next.clone());
        Ok(next)
    }

    /// Creates the record for an asset seen in a paper and routes it to the
    /// repository manager. Returns the existing record if there is one.
    pub fn create_record(&self, paper_id: &str, asset: AssetSnapshot) -> Result<(Arc<LifecycleRecord>, bool), LifecycleError> {
        let record_id = record_id_for(paper_id, &asset.candidate.candidate_id);
        let mut records = self.records.write().unwrap();
        if let Some(existing) = records.get(&record_id) {
            return Ok((existing.clone(), false));
        }
        let asset_json = serde_json::to_value(&asset).map_err(storage)?;
        let created = self.event(
            &record_id,
            1,
            EventKind::Created,
            [
                ("paper_id".to_string(), json!(paper_id)),
                ("candidate_id".to_string(), json!(asset.candidate.candidate_id)),
                ("asset".to_string(), asset_json),
            ]
            .into(),
        );
        let record = genesis(&created)?;
        let routed = self.event(&record_id, 2, EventKind::RoutedToManager, Payload::new());
        let record = apply_event(&record, &routed)?;
        self.persist(&[created, routed])?;
        let record = Arc::new(record);
        records.insert(record_id, record.clone());
        Ok((record, true))
    }

    fn validation_url(&self, token: &str) -> String {
        format!("{}/{}", self.config.validation_base_url.trim_end_matches('/'), token)
    }

    fn notification(&self, record: &LifecycleRecord, token: &ValidationToken) -> NotificationMessage {
        let asset = &record.asset;
        let title = asset.paper_title.as_deref().unwrap_or(&record.paper_id);
        let version = asset
            .candidate
            .versions
            .iter()
            .max_by(|a, b| crate::codemeta::compare_versions(a, b))
            .map(|v| format!(" {v}"))
            .unwrap_or_default();
        let body = format!(
            "Dear author,\n\n\
             Software was identified in your paper \"{title}\": {name}{version}.\n\
             Please confirm, correct or reject this record:\n\
             {url}\n\n\
             This link can be used once and expires on {expiry}.\n",
            name = record.name(),
            url = self.validation_url(&token.token),
            expiry = token.expiry.format("%Y-%m-%d"),
        );
        NotificationMessage {
            record_id: record.record_id.clone(),
            to: asset.contact.clone().unwrap_or_else(|| self.config.fallback_contact.clone()),
            subject: format!("Please validate software mentioned in \"{title}\""),
            body,
        }
    }

    fn send(&self, message: &NotificationMessage) -> Result<(), LifecycleError> {
        let mut outbox = self.outbox.lock().unwrap();
        if let Some(file) = outbox.file.as_mut() {
            append_jsonl(file, std::slice::from_ref(message))?;
        }
        outbox.sent.push(message.clone());
        Ok(())
    }

    fn issue_events(&self, record_id: &str) -> (EventKind, Payload) {
        let expiry = self.clock.now() + self.config.token_ttl;
        (
            EventKind::ValidationIssued,
            [
                ("token".to_string(), json!(new_token())),
                ("expiry".to_string(), json!(timestamp::format(&expiry))),
                ("record_id".to_string(), json!(record_id)),
            ]
            .into(),
        )
    }

    fn finish_issue(&self, record: Arc<LifecycleRecord>) -> Result<(Arc<LifecycleRecord>, ValidationToken, NotificationMessage), LifecycleError> {
        let token = record.validation_token.clone().expect("validation_issued sets the token");
        let message = self.notification(&record, &token);
        self.send(&message)?;
        Ok((record, token, message))
    }

    /// Approves routing to the author; records `manager_approved` and
    /// `validation_issued` together and queues the notification.
    pub fn manager_approve(
        &self,
        record_id: &str,
    ) -> Result<(Arc<LifecycleRecord>, ValidationToken, NotificationMessage), LifecycleError> {
        let current = self.get(record_id)?;
        let record = self.commit(
            record_id,
            current.last_seq(),
            vec![(EventKind::ManagerApproved, Payload::new()), self.issue_events(record_id)],
        )?;
        self.finish_issue(record)
    }

    pub fn manager_reject(&self, record_id: &str, reason: Option<&str>) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let current = self.get(record_id)?;
        let mut payload = Payload::new();
        if let Some(r) = reason {
            payload.insert("reason".into(), json!(r));
        }
        self.commit(record_id, current.last_seq(), vec![(EventKind::ManagerRejected, payload)])
    }

    /// Returns the record's live token, issuing a fresh one (and a new
    /// notification) only when none is live. The message is `None` when an
    /// existing token is returned.
    pub fn issue_validation(
        &self,
        record_id: &str,
    ) -> Result<(Arc<LifecycleRecord>, ValidationToken, Option<NotificationMessage>), LifecycleError> {
        let current = self.get(record_id)?;
        if current.state != LifecycleState::PendingAuthorValidation {
            return Err(LifecycleError::IllegalTransition {
                state: current.state,
                kind: EventKind::ValidationIssued,
            });
        }
        if let Some(t) = current.validation_token.as_ref().filter(|t| !t.is_expired(self.clock.now())) {
            let t = t.clone();
            return Ok((current, t, None));
        }
        let record = self.commit(record_id, current.last_seq(), vec![self.issue_events(record_id)])?;
        let (record, token, message) = self.finish_issue(record)?;
        Ok((record, token, Some(message)))
    }

    /// The record a live, unexpired token grants access to.
    pub fn resolve_token(&self, token: &str) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let record_id = self
            .tokens
            .read()
            .unwrap()
            .get(token)
            .cloned()
            .ok_or(LifecycleError::InvalidToken)?;
        let record = self.get(&record_id).map_err(|_| LifecycleError::InvalidToken)?;
        let live = record.state == LifecycleState::PendingAuthorValidation
            && record
                .validation_token
                .as_ref()
                .is_some_and(|t| t.token == token && !t.is_expired(self.clock.now()));
        if !live {
            return Err(LifecycleError::InvalidToken);
        }
        Ok(record)
    }

    pub fn author_decision(&self, token: &str, decision: AuthorDecision) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let record = self.resolve_token(token)?;
        let (kind, payload) = match decision {
            AuthorDecision::Confirm => (EventKind::AuthorConfirmed, Payload::new()),
            AuthorDecision::Amend(a) => {
                let payload = match serde_json::to_value(&a).map_err(storage)? {
                    Value::Object(map) => map.into_iter().collect(),
                    _ => Payload::new(),
                };
                (EventKind::AuthorAmendedConfirmed, payload)
            }
            AuthorDecision::Reject { reason } => {
                let mut payload = Payload::new();
                if let Some(r) = reason {
                    payload.insert("reason".into(), json!(r));
                }
                (EventKind::AuthorRejected, payload)
            }
        };
        match self.commit(&record.record_id, record.last_seq(), vec![(kind, payload)]) {
            // a concurrent decision consumed the token first
            Err(LifecycleError::Conflict(_)) => Err(LifecycleError::InvalidToken),
            other => other,
        }
    }

    /// What gets archived: the declared code repository when there is one,
    /// otherwise a bundle holding the record's CodeMeta description.
    pub fn archival_request(record: &LifecycleRecord) -> Result<ArchivalRequest, LifecycleError> {
        if let Some(url) = record.asset.candidate.urls.first() {
            return Ok(ArchivalRequest::Origin(url.clone()));
        }
        let codemeta = serialize_jsonld(&build_codemeta(&record.asset.candidate, &record.paper_id))
            .map_err(storage)?;
        let tree = DirectoryTree::new()
            .with("codemeta.json", TreeEntry::File(codemeta))
            .map_err(ArchivalError::from)?;
        Ok(ArchivalRequest::Bundle(tree))
    }

    fn request_with_retry(&self, client: &dyn ArchivalClient, request: &ArchivalRequest) -> Result<ArchivalReceipt, ArchivalError> {
        let mut last = None;
        for attempt in 0..self.config.request_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.config.poll_interval);
            }
            match client.request_archival(request) {
                Err(ArchivalError::Retryable(e)) => {
                    log::warn!("archival request attempt {} failed: {e}", attempt + 1);
                    last = Some(ArchivalError::Retryable(e));
                }
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Sends the registration, waits for the archive and records the
    /// outcome. A failed or unfinished archival leaves the record in
    /// `RegistrationRequested` with the failure recorded; calling again
    /// retries.
    pub fn register_and_archive(
        &self,
        record_id: &str,
        client: &dyn ArchivalClient,
    ) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let current = self.get(record_id)?;
        let request = Self::archival_request(&current)?;
        let request_id = request.request_id().map_err(ArchivalError::from)?;
        let mut payload: Payload = [("request_id".to_string(), json!(request_id))].into();
        if let ArchivalRequest::Origin(url) = &request {
            payload.insert("origin".into(), json!(url.as_str()));
        }
        let sent = self.commit(record_id, current.last_seq(), vec![(EventKind::RegistrationSent, payload)])?;

        let failed = |reason: String, base: &LifecycleRecord| {
            log::warn!("archival of {record_id} failed: {reason}");
            self.commit(
                record_id,
                base.last_seq(),
                vec![(
                    EventKind::ArchivalFailed,
                    [
                        ("request_id".to_string(), json!(request_id)),
                        ("reason".to_string(), json!(reason)),
                    ]
                    .into(),
                )],
            )
        };

        let mut receipt = match self.request_with_retry(client, &request) {
            Ok(r) => r,
            Err(e) => return failed(e.to_string(), &sent),
        };
        let mut polls = 0;
        while receipt.status == ArchivalStatus::Pending && polls < self.config.max_polls {
            if polls > 0 {
                std::thread::sleep(self.config.poll_interval);
            }
            polls += 1;
            receipt = match client.poll_archival(&receipt) {
                Ok(r) => r,
                Err(ArchivalError::Retryable(e)) => {
                    log::warn!("archival poll failed: {e}");
                    continue;
                }
                Err(e) => return failed(e.to_string(), &sent),
            };
        }
        match (receipt.status, receipt.swhid) {
            (ArchivalStatus::Done, Some(swhid)) => self.commit(
                record_id,
                sent.last_seq(),
                vec![(
                    EventKind::ArchivalCompleted,
                    [
                        ("request_id".to_string(), json!(request_id)),
                        ("swhid".to_string(), json!(swhid.to_string())),
                    ]
                    .into(),
                )],
            ),
            (ArchivalStatus::Done, None) => failed("archive reported done without an identifier".into(), &sent),
            (ArchivalStatus::Failed, _) => failed(receipt.reason.unwrap_or_else(|| "archival failed".into()), &sent),
            (ArchivalStatus::Pending, _) => failed(format!("still pending after {polls} polls"), &sent),
        }
    }

    pub fn expose(&self, record_id: &str) -> Result<Arc<LifecycleRecord>, LifecycleError> {
        let current = self.get(record_id)?;
        self.commit(record_id, current.last_seq(), vec![(EventKind::Exposed, Payload::new())])
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LifecycleError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(storage(format!("{}: {e}", path.display()))),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(storage)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| storage(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

/// Reads every event of a log file, in file order.
pub fn read_event_log(path: &Path) -> Result<Vec<Event>, LifecycleError> {
    read_jsonl(path)
}
