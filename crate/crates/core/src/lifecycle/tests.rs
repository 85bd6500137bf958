use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use serde_json::json;
use url::Url;

use super::*;
use crate::swhid::{ArchivalRequest, DirectoryTree, MockArchivalClient, MockBehaviour, TreeEntry, directory_swhid};

fn candidate(name: &str, url: Option<&str>) -> AssetCandidate {
    AssetCandidate {
        candidate_id: format!("cand-{name}"),
        canonical_name: name.into(),
        aliases: [name.to_string()].into(),
        urls: url.map(|u| Url::parse(u).unwrap()).into_iter().collect(),
        publishers: BTreeSet::new(),
        versions: ["21".to_string()].into(),
        member_groups: ["d#g0".to_string()].into(),
        catalog_match: None,
    }
}

fn snapshot(name: &str, url: Option<&str>) -> AssetSnapshot {
    AssetSnapshot {
        candidate: candidate(name, url),
        paper_title: Some("A study".into()),
        contact: Some("author@example.org".into()),
        contexts: vec![MentionContext {
            sentence: format!("We used {name}."),
            mentions: vec![ContextSpan {
                component: Component::SoftwareName,
                start_byte: 8,
                end_byte: 8 + name.len(),
                surface: name.into(),
            }],
        }],
    }
}

fn clock() -> Arc<FixedClock> {
    Arc::new(FixedClock::new(Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap()))
}

fn engine(clock: Arc<FixedClock>) -> LifecycleEngine {
    LifecycleEngine::in_memory(clock, EngineConfig::default())
}

fn event(record: &LifecycleRecord, kind: EventKind, payload: Payload) -> Event {
    Event {
        record_id: record.record_id.clone(),
        seq: record.last_seq() + 1,
        timestamp: Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
        actor: kind.actor(),
        kind,
        payload,
    }
}

fn created(record_id: &str) -> Event {
    Event {
        record_id: record_id.into(),
        seq: 1,
        timestamp: Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
        actor: Actor::System,
        kind: EventKind::Created,
        payload: [
            ("paper_id".to_string(), json!("p1")),
            ("asset".to_string(), serde_json::to_value(snapshot("SPSS", None)).unwrap()),
        ]
        .into(),
    }
}

fn payload_for(kind: EventKind) -> Payload {
    match kind {
        EventKind::ValidationIssued => [
            ("token".to_string(), json!("tok")),
            ("expiry".to_string(), json!("2026-02-01T00:00:00.000000Z")),
        ]
        .into(),
        EventKind::ArchivalCompleted => {
            [("swhid".to_string(), json!("swh:1:dir:4b825dc642cb6eb9a060e54bf8d69288fbee4904"))].into()
        }
        _ => Payload::new(),
    }
}

fn step(record: &LifecycleRecord, kind: EventKind) -> Result<LifecycleRecord, LifecycleError> {
    apply_event(record, &event(record, kind, payload_for(kind)))
}

#[test]
fn transition_examples() {
    let r = genesis(&created("r")).unwrap();
    assert_eq!(r.state, LifecycleState::Extracted);
    let r = step(&r, EventKind::RoutedToManager).unwrap();
    assert_eq!(r.state, LifecycleState::PendingManagerApproval);
    let r = step(&r, EventKind::ManagerApproved).unwrap();
    // decisions need an issued token
    assert!(matches!(step(&r, EventKind::AuthorConfirmed), Err(LifecycleError::IllegalTransition { .. })));
    let r = step(&r, EventKind::ValidationIssued).unwrap();
    let r = step(&r, EventKind::AuthorConfirmed).unwrap();
    assert_eq!(r.state, LifecycleState::Validated);
    assert!(r.validation_token.is_none());

    let fresh = genesis(&created("r")).unwrap();
    assert_eq!(
        step(&fresh, EventKind::ArchivalCompleted),
        Err(LifecycleError::IllegalTransition {
            state: LifecycleState::Extracted,
            kind: EventKind::ArchivalCompleted
        })
    );
}

#[test]
fn guards() {
    let r = genesis(&created("r")).unwrap();
    let mut e = event(&r, EventKind::RoutedToManager, Payload::new());
    e.seq = 3;
    assert_eq!(apply_event(&r, &e), Err(LifecycleError::SequenceError { expected: 2, actual: 3 }));
    let mut e = event(&r, EventKind::RoutedToManager, Payload::new());
    e.actor = Actor::Author;
    assert!(matches!(apply_event(&r, &e), Err(LifecycleError::WrongActor { .. })));
    let mut e = event(&r, EventKind::RoutedToManager, Payload::new());
    e.record_id = "other".into();
    assert!(matches!(apply_event(&r, &e), Err(LifecycleError::RecordMismatch { .. })));

    let mut r = step(&r, EventKind::RoutedToManager).unwrap();
    for kind in [EventKind::ManagerApproved, EventKind::ValidationIssued, EventKind::AuthorConfirmed, EventKind::RegistrationSent] {
        r = step(&r, kind).unwrap();
    }
    let bad = event(&r, EventKind::ArchivalCompleted, [("swhid".to_string(), json!("swh:1:dir:nope"))].into());
    assert!(matches!(apply_event(&r, &bad), Err(LifecycleError::InvalidPayload { .. })));
}

#[test]
fn replay_rules() {
    assert_eq!(replay(&[]), Err(LifecycleError::EmptyHistory));
    let mut r = genesis(&created("r")).unwrap();
    for kind in [
        EventKind::RoutedToManager,
        EventKind::ManagerApproved,
        EventKind::ValidationIssued,
        EventKind::AuthorConfirmed,
        EventKind::RegistrationSent,
        EventKind::ArchivalFailed,
        EventKind::RegistrationSent,
        EventKind::ArchivalCompleted,
        EventKind::Exposed,
    ] {
        r = step(&r, kind).unwrap();
    }
    assert_eq!(r.state, LifecycleState::Exposed);
    assert!(r.swhid.is_some() && r.archival_failure.is_none());
    assert_eq!(replay(&r.history).unwrap(), r);
    assert_eq!(replay(&r.history).unwrap(), replay(&r.history).unwrap());

    let mut gapped = r.history.clone();
    gapped.remove(3);
    assert!(matches!(replay(&gapped), Err(LifecycleError::SequenceError { .. })));
    assert_eq!(replay(&r.history[1..]), Err(LifecycleError::EmptyHistory));
}

#[test]
fn approval_issues_one_notification() {
    let clock = clock();
    let engine = engine(clock.clone());
    let (rec, new) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    assert!(new);
    assert_eq!(rec.state, LifecycleState::PendingManagerApproval);
    assert!(!engine.create_record("p1", snapshot("SPSS", None)).unwrap().1);
    assert_eq!(engine.pending().len(), 1);

    let (rec, token, message) = engine.manager_approve(&rec.record_id).unwrap();
    assert_eq!(rec.state, LifecycleState::PendingAuthorValidation);
    assert_eq!(token.expiry, clock.now() + Duration::days(30));
    assert_eq!(URL_SAFE_LEN, token.token.len());
    assert_eq!(message.to, "author@example.org");
    assert!(message.body.contains(&format!("http://localhost:8080/validate/{}", token.token)));
    assert_eq!(engine.outbox().len(), 1);

    let (_, again, message) = engine.issue_validation(&rec.record_id).unwrap();
    assert_eq!(again, token);
    assert!(message.is_none());
    assert_eq!(engine.outbox().len(), 1);

    assert!(matches!(
        engine.manager_approve(&rec.record_id),
        Err(LifecycleError::IllegalTransition { .. })
    ));
    let (other, _) = engine.create_record("p1", snapshot("Stata", None)).unwrap();
    assert!(matches!(
        engine.issue_validation(&other.record_id),
        Err(LifecycleError::IllegalTransition { .. })
    ));
}

// 16 random bytes, unpadded URL-safe base64
const URL_SAFE_LEN: usize = 22;

#[test]
fn tokens_are_single_use() {
    let engine = engine(clock());
    let (rec, _) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    assert!(!format!("{token:?}").contains(&token.token));
    let rec = engine.author_decision(&token.token, AuthorDecision::Confirm).unwrap();
    assert_eq!(rec.state, LifecycleState::Validated);
    assert_eq!(
        engine.author_decision(&token.token, AuthorDecision::Confirm),
        Err(LifecycleError::InvalidToken)
    );
    assert_eq!(engine.resolve_token(&token.token), Err(LifecycleError::InvalidToken));
    assert_eq!(engine.resolve_token("made-up"), Err(LifecycleError::InvalidToken));
}

#[test]
fn expired_tokens_are_refused_and_reissued() {
    let clock = clock();
    let engine = engine(clock.clone());
    let (rec, _) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    clock.advance(Duration::days(30));
    assert_eq!(engine.resolve_token(&token.token), Err(LifecycleError::InvalidToken));
    let (_, fresh, message) = engine.issue_validation(&rec.record_id).unwrap();
    assert_ne!(fresh.token, token.token);
    assert!(message.is_some());
    assert_eq!(engine.resolve_token(&token.token), Err(LifecycleError::InvalidToken));
    assert!(engine.resolve_token(&fresh.token).is_ok());
}

#[test]
fn amend_and_reject() {
    let engine = engine(clock());
    let (rec, _) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    let amended = engine
        .author_decision(
            &token.token,
            AuthorDecision::Amend(Amendments {
                url: Some("https://www.ibm.com/spss".into()),
                ..Default::default()
            }),
        )
        .unwrap();
    assert_eq!(amended.state, LifecycleState::Validated);
    assert_eq!(amended.history.last().unwrap().kind, EventKind::AuthorAmendedConfirmed);
    assert_eq!(amended.history.last().unwrap().actor, Actor::Author);
    let urls: Vec<&str> = amended.asset.candidate.urls.iter().map(Url::as_str).collect();
    assert_eq!(urls, ["https://www.ibm.com/spss"]);

    let (rec, _) = engine.create_record("p2", snapshot("Stata", None)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    let bad = engine.author_decision(
        &token.token,
        AuthorDecision::Amend(Amendments {
            url: Some("not a url".into()),
            ..Default::default()
        }),
    );
    assert!(matches!(bad, Err(LifecycleError::InvalidPayload { .. })));
    let rejected = engine
        .author_decision(&token.token, AuthorDecision::Reject { reason: None })
        .unwrap();
    assert_eq!(rejected.state, LifecycleState::Rejected);
    assert!(matches!(
        engine.register_and_archive(&rejected.record_id, &MockArchivalClient::default()),
        Err(LifecycleError::IllegalTransition { .. })
    ));
}

fn validated(engine: &LifecycleEngine, name: &str, url: Option<&str>) -> String {
    let (rec, _) = engine.create_record("p1", snapshot(name, url)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    engine.author_decision(&token.token, AuthorDecision::Confirm).unwrap();
    rec.record_id.clone()
}

#[test]
fn archival_happy_path() {
    let engine = engine(clock());
    let origin = Url::parse("https://github.com/example/tool").unwrap();
    let tree = DirectoryTree::new()
        .with("README", TreeEntry::File(b"tool\n".to_vec()))
        .unwrap();
    let expected = directory_swhid(&tree).unwrap();
    let client = MockArchivalClient::default().with_origin(&origin, tree);
    let id = validated(&engine, "Tool", Some(origin.as_str()));
    let rec = engine.register_and_archive(&id, &client).unwrap();
    assert_eq!(rec.state, LifecycleState::Archived);
    assert_eq!(rec.swhid.as_ref(), Some(&expected));
    assert_eq!(rec.codemeta().identifier, Some(expected));
    let rec = engine.expose(&id).unwrap();
    assert_eq!(rec.state, LifecycleState::Exposed);
    assert!(engine.expose(&id).is_err());
}

#[test]
fn archival_without_repository_archives_codemeta() {
    let engine = engine(clock());
    let id = validated(&engine, "SPSS", None);
    let record = engine.get(&id).unwrap();
    let ArchivalRequest::Bundle(tree) = LifecycleEngine::archival_request(&record).unwrap() else {
        panic!("expected a bundle");
    };
    let rec = engine.register_and_archive(&id, &MockArchivalClient::default()).unwrap();
    assert_eq!(rec.swhid, Some(directory_swhid(&tree).unwrap()));
}

#[test]
fn archival_failure_is_recorded_and_retryable() {
    let engine = engine(clock());
    let id = validated(&engine, "SPSS", None);
    let broken = MockArchivalClient::new(MockBehaviour {
        permanent_failure: true,
        ..MockBehaviour::default()
    });
    let rec = engine.register_and_archive(&id, &broken).unwrap();
    assert_eq!(rec.state, LifecycleState::RegistrationRequested);
    assert!(rec.archival_failure.is_some());
    assert!(rec.swhid.is_none());
    assert_eq!(rec.history.last().unwrap().kind, EventKind::ArchivalFailed);

    let flaky = MockArchivalClient::new(MockBehaviour {
        transient_failures: 1,
        ..MockBehaviour::default()
    });
    let rec = engine.register_and_archive(&id, &flaky).unwrap();
    assert_eq!(rec.state, LifecycleState::Archived);
    assert!(rec.archival_failure.is_none());
}

#[test]
fn stale_writes_conflict() {
    let engine = engine(clock());
    let (rec, _) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    engine.manager_reject(&rec.record_id, Some("not software")).unwrap();
    assert!(matches!(
        engine.commit(&rec.record_id, rec.last_seq(), vec![(EventKind::ManagerApproved, Payload::new())]),
        Err(LifecycleError::Conflict(_))
    ));
}

#[test]
fn concurrent_decisions_consume_the_token_once() {
    let engine = Arc::new(engine(clock()));
    let (rec, _) = engine.create_record("p1", snapshot("SPSS", None)).unwrap();
    let (_, token, _) = engine.manager_approve(&rec.record_id).unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let engine = engine.clone();
            let token = token.token.clone();
            std::thread::spawn(move || engine.author_decision(&token, AuthorDecision::Confirm).is_ok())
        })
        .collect();
    let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count();
    assert_eq!(wins, 1);
    assert_eq!(engine.get(&rec.record_id).unwrap().history.len(), 5);
}

#[test]
fn restart_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let (log, outbox) = (dir.path().join("events.jsonl"), dir.path().join("outbox.jsonl"));
    let before = {
        let engine = LifecycleEngine::open(&log, &outbox, clock(), EngineConfig::default()).unwrap();
        let id = validated(&engine, "SPSS", None);
        engine.register_and_archive(&id, &MockArchivalClient::default()).unwrap();
        let (pending, _) = engine.create_record("p2", snapshot("Stata", None)).unwrap();
        engine.manager_approve(&pending.record_id).unwrap();
        engine.records()
    };
    let engine = LifecycleEngine::open(&log, &outbox, clock(), EngineConfig::default()).unwrap();
    let after = engine.records();
    assert_eq!(before.len(), 2);
    assert_eq!(before, after);
    assert_eq!(engine.outbox().len(), 2);

    // the live token survives the restart
    let pending = after.iter().find(|r| r.state == LifecycleState::PendingAuthorValidation).unwrap();
    let token = pending.validation_token.clone().unwrap();
    assert!(engine.resolve_token(&token.token).is_ok());

    // every log line re-serializes to the same bytes
    let text = std::fs::read_to_string(&log).unwrap();
    for line in text.lines() {
        let e: Event = serde_json::from_str(line).unwrap();
        assert_eq!(serde_json::to_string(&e).unwrap(), line);
    }
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["actor", "kind", "payload", "record_id", "seq", "timestamp"]);
    assert!(text.lines().next().unwrap().starts_with("{\"record_id\":"));
}

#[test]
fn corrupt_log_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    std::fs::write(&log, "{\"record_id\": 1}\n").unwrap();
    assert!(matches!(
        LifecycleEngine::open(&log, &dir.path().join("o"), clock(), EngineConfig::default()),
        Err(LifecycleError::Storage(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn archived_only_after_author_confirmation(kinds in prop::collection::vec(0..EventKind::ALL.len(), 0..40)) {
        let mut record = genesis(&created("r")).unwrap();
        for k in kinds {
            let kind = EventKind::ALL[k];
            if let Ok(next) = step(&record, kind) {
                record = next;
            }
            let confirmed = record.history.iter().any(|e| matches!(
                e.kind,
                EventKind::AuthorConfirmed | EventKind::AuthorAmendedConfirmed
            ));
            if matches!(record.state, LifecycleState::Archived | LifecycleState::Exposed) {
                prop_assert!(confirmed);
            }
            prop_assert_eq!(
                record.swhid.is_some(),
                matches!(record.state, LifecycleState::Archived | LifecycleState::Exposed)
            );
        }
        prop_assert_eq!(replay(&record.history).unwrap(), record);
    }
}
