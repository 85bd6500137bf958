use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use softlink_core::harvest::{DirectoryFetcher, HttpFetcher, HttpResponse};
use softlink_core::lifecycle::{EngineConfig, LifecycleEngine, LifecycleState};
use softlink_gateway::config::Config;
use softlink_gateway::demo::bundled_fixture;
use softlink_gateway::pipeline::{Stage, run_pipeline};
use url::Url;

fn demo_config(state: &Path) -> Config {
    let mut cfg = Config::load(&bundled_fixture().join("softlink.toml")).unwrap();
    cfg.storage.event_log = state.join("events.jsonl");
    cfg.storage.outbox = state.join("outbox.jsonl");
    cfg.repository.retry_backoff_ms = 1;
    cfg
}

fn open(cfg: &Config) -> LifecycleEngine {
    cfg.prepare_storage().unwrap();
    LifecycleEngine::open(
        &cfg.storage.event_log,
        &cfg.storage.outbox,
        std::sync::Arc::new(softlink_core::lifecycle::SystemClock),
        EngineConfig::default(),
    )
    .unwrap()
}

/// Wraps the fixture, refusing selected URLs and counting requests.
struct Scripted {
    inner: DirectoryFetcher,
    refuse: Vec<(&'static str, u16)>,
    requests: AtomicU32,
}

impl Scripted {
    fn new(refuse: Vec<(&'static str, u16)>) -> Self {
        Scripted {
            inner: DirectoryFetcher::new(bundled_fixture().join("repo")),
            refuse,
            requests: AtomicU32::new(0),
        }
    }
}

impl HttpFetcher for Scripted {
    fn get(&self, url: &Url) -> Result<HttpResponse, String> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        for (needle, status) in &self.refuse {
            if url.as_str().contains(needle) {
                return Ok(HttpResponse::status(*status));
            }
        }
        self.inner.get(url)
    }
}

#[test]
fn demo_repository_end_to_end_and_rerun() {
    let state = tempfile::tempdir().unwrap();
    let cfg = demo_config(state.path());
    let engine = open(&cfg);
    let http = Scripted::new(vec![]);
    let report = run_pipeline(&cfg, &http, &engine).unwrap();
    assert_eq!(report.records_harvested, 25);
    assert_eq!((report.harvest_requests, report.harvest_pages), (3, 3));
    assert_eq!(report.documents_processed, 25);
    assert_eq!(report.documents_with_mentions, 20);
    assert_eq!(report.documents_skipped, 0);
    assert!(report.candidates >= 1);
    assert_eq!(report.records_created, engine.records().len());
    assert!(report.records_created >= 1);
    assert!(engine.records().iter().all(|r| r.state == LifecycleState::PendingManagerApproval));
    // every context span points at its surface
    for r in engine.records() {
        for c in &r.asset.contexts {
            for m in &c.mentions {
                assert_eq!(&c.sentence[m.start_byte..m.end_byte], m.surface);
            }
        }
    }
    let created = report.records_created;
    drop(engine);

    let engine = open(&cfg);
    let again = run_pipeline(&cfg, &Scripted::new(vec![]), &engine).unwrap();
    assert_eq!(again.records_created, 0);
    assert_eq!(again.records_existing, created);
    assert_eq!(engine.records().len(), created);
}

#[test]
fn unreachable_full_text_is_skipped() {
    let state = tempfile::tempdir().unwrap();
    let cfg = demo_config(state.path());
    let engine = open(&cfg);
    let http = Scripted::new(vec![("fulltext/paper-03.", 404)]);
    let report = run_pipeline(&cfg, &http, &engine).unwrap();
    assert_eq!(report.documents_processed, 24);
    assert_eq!(report.documents_skipped, 1);
    assert_eq!(report.skipped[0].oai_identifier, "oai:repo.example.org:paper-03");
    assert_eq!(report.skipped[0].stage, Stage::Fetch);
    assert!(engine.records().iter().all(|r| r.paper_id != "oai:repo.example.org:paper-03"));
}

#[test]
fn harvest_failure_aborts_with_its_stage() {
    let state = tempfile::tempdir().unwrap();
    let cfg = demo_config(state.path());
    let engine = open(&cfg);
    let http = Scripted::new(vec![("resumptionToken=page2", 503)]);
    let err = run_pipeline(&cfg, &http, &engine).unwrap_err();
    assert_eq!(err.stage, Stage::Harvest);
    assert!(err.to_string().starts_with("[harvest]"), "{err}");
    // first page plus three attempts at the second
    assert_eq!(http.requests.load(Ordering::SeqCst), 4);
    assert!(engine.records().is_empty());
}

#[test]
fn empty_repository_gives_an_empty_report() {
    let state = tempfile::tempdir().unwrap();
    let repo = state.path().join("repo/oai");
    fs::create_dir_all(&repo).unwrap();
    fs::write(
        repo.join("first.xml"),
        r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/"><responseDate>2024-03-01T00:00:00Z</responseDate>
<request verb="ListRecords">https://repo.example.org/oai</request><error code="noRecordsMatch">empty</error></OAI-PMH>"#,
    )
    .unwrap();
    let cfg = demo_config(state.path());
    let engine = open(&cfg);
    let report = run_pipeline(&cfg, &DirectoryFetcher::new(state.path().join("repo")), &engine).unwrap();
    assert_eq!(
        (report.records_harvested, report.documents_processed, report.candidates, report.records_created),
        (0, 0, 0, 0)
    );
}

#[test]
fn missing_gazetteer_fails_before_any_request() {
    let state = tempfile::tempdir().unwrap();
    let mut cfg = demo_config(state.path());
    cfg.extract.gazetteer = state.path().join("nope.tsv");
    assert!(cfg.validate().is_err());
    let http = Scripted::new(vec![]);
    let engine = LifecycleEngine::in_memory(
        std::sync::Arc::new(softlink_core::lifecycle::SystemClock),
        EngineConfig::default(),
    );
    let err = run_pipeline(&cfg, &http, &engine).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert_eq!(http.requests.load(Ordering::SeqCst), 0);
}
