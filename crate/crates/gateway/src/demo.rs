//! Scripted end-to-end run over the bundled fixture repository: harvest,
//! extraction, disambiguation, then manager approval, author validation,
//! archival and exposure through the HTTP API.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{Value, json};
use softlink_core::codemeta::parse_jsonld;
use softlink_core::expose::{LINKS_PREFIX, check_swhids, links_from_oai_response};
use softlink_core::harvest::DirectoryFetcher;
use softlink_core::lifecycle::{LifecycleEngine, LifecycleState};
use thiserror::Error;
use ureq::Agent;

use crate::config::Config;
use crate::pipeline::{PipelineReport, run_pipeline};
use crate::server::{BackgroundServer, app_state, open_engine};

#[derive(Debug, Error)]
#[error("demo failed at {step}: {message}")]
pub struct DemoError {
    pub step: &'static str,
    pub message: String,
}

fn fail(step: &'static str) -> impl Fn(String) -> DemoError {
    move |message| DemoError { step, message }
}

/// Software whose records the scripted author rejects, to exercise that
/// branch.
pub const REJECTED_BY_AUTHOR: &str = "FieldNotes";

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub pipeline: PipelineReport,
    pub records: usize,
    pub approved: usize,
    pub confirmed: usize,
    pub rejected: usize,
    pub archived: usize,
    pub exposed: usize,
    pub exposed_papers: usize,
    pub sample_paper: String,
    /// `Link` header returned for the sample paper.
    pub sample_link_header: String,
    /// OAI-PMH `GetRecord` response for the sample paper.
    pub sample_oai_record: String,
    pub sample_codemeta: String,
    pub state_dir: PathBuf,
    pub elapsed_ms: u128,
}

/// The fixture shipped with the crate.
pub fn bundled_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

struct Client {
    agent: Agent,
    base: String,
}

impl Client {
    fn call(&self, method: &str, path: &str, body: Option<&Value>) -> Result<(u16, String, Option<String>), String> {
        let url = format!("{}{path}", self.base);
        let result = match (method, body) {
            ("POST", Some(b)) => self.agent.post(&url).header("content-type", "application/json").send(b.to_string()),
            ("POST", None) => self.agent.post(&url).send_empty(),
            _ => self.agent.get(&url).call(),
        };
        let mut resp = result.map_err(|e| format!("{method} {url}: {e}"))?;
        let status = resp.status().as_u16();
        let link = resp
            .headers()
            .get("link")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let text = resp.body_mut().read_to_string().map_err(|e| format!("{method} {url}: {e}"))?;
        Ok((status, text, link))
    }

    fn json(&self, method: &str, path: &str, body: Option<&Value>, expect: u16) -> Result<Value, String> {
        let (status, text, _) = self.call(method, path, body)?;
        if status != expect {
            return Err(format!("{method} {path}: expected HTTP {expect}, got {status}: {text}"));
        }
        serde_json::from_str(&text).map_err(|e| format!("{method} {path}: {e}"))
    }
}

fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

fn token_from_body(body: &str, base: &str) -> Option<String> {
    let start = body.find(base)? + base.len() + 1;
    Some(body[start..].split_whitespace().next()?.to_string())
}

/// Runs the demo with the fixture's configuration, keeping all state in
/// `state_dir`.
pub fn run_demo(fixture_dir: &Path, state_dir: &Path) -> Result<DemoReport, DemoError> {
    let started = Instant::now();
    let mut cfg = Config::load(&fixture_dir.join("softlink.toml")).map_err(|e| fail("config")(e.to_string()))?;
    cfg.storage.event_log = state_dir.join("events.jsonl");
    cfg.storage.outbox = state_dir.join("outbox.jsonl");
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| fail("bind")(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| fail("bind")(e.to_string()))?;
    cfg.server.public_base = format!("http://{addr}");
    cfg.lifecycle.validation_base_url = None;
    cfg.validate().map_err(|e| fail("config")(e.to_string()))?;

    let engine = Arc::new(open_engine(&cfg).map_err(fail("storage"))?);
    let fixture_repo = cfg
        .repository
        .fixture_dir
        .clone()
        .ok_or_else(|| fail("config")("the demo configuration needs repository.fixture_dir".into()))?;
    let pipeline = run_pipeline(&cfg, &DirectoryFetcher::new(fixture_repo), &engine)
        .map_err(|e| fail("pipeline")(e.to_string()))?;

    let state = app_state(&cfg, engine.clone()).map_err(fail("archival"))?;
    let server = BackgroundServer::with_listener(listener, state, None).map_err(|e| fail("serve")(e.to_string()))?;
    let client = Client {
        agent: Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into(),
        base: server.base_url(),
    };
    let result = script(&client, &engine, &cfg);
    server.stop().map_err(|e| fail("serve")(e.to_string()))?;
    let mut report = result?;
    report.pipeline = pipeline;
    report.state_dir = state_dir.to_path_buf();
    report.elapsed_ms = started.elapsed().as_millis();
    Ok(report)
}

fn script(client: &Client, engine: &LifecycleEngine, cfg: &Config) -> Result<DemoReport, DemoError> {
    let pending = client.json("GET", "/api/pending", None, 200).map_err(fail("pending"))?;
    let pending: Vec<String> = pending
        .as_array()
        .map(|a| a.iter().filter_map(|r| r["record_id"].as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    let records = engine.records().len();

    for id in &pending {
        client
            .json("POST", &format!("/api/records/{id}/manager-approve"), None, 200)
            .map_err(fail("manager approval"))?;
    }

    // the author side only ever sees the notification
    let base = cfg.engine_config().validation_base_url;
    let (mut confirmed, mut rejected) = (Vec::new(), 0);
    for message in engine.outbox() {
        let token = token_from_body(&message.body, &base)
            .ok_or_else(|| fail("notification")(format!("no validation link for {}", message.record_id)))?;
        let view = client
            .json("GET", &format!("/api/validate/{token}"), None, 200)
            .map_err(fail("validation view"))?;
        let decision = if view["name"] == REJECTED_BY_AUTHOR {
            rejected += 1;
            json!({"decision": "reject", "reason": "not used in this study"})
        } else {
            confirmed.push(message.record_id.clone());
            json!({"decision": "confirm"})
        };
        client
            .json("POST", &format!("/api/validate/{token}"), Some(&decision), 200)
            .map_err(fail("author decision"))?;
        // tokens are single use
        let (status, _, _) = client
            .call("POST", &format!("/api/validate/{token}"), Some(&decision))
            .map_err(fail("token reuse"))?;
        if status != 410 {
            return Err(fail("token reuse")(format!("reused token answered HTTP {status}")));
        }
    }

    let mut archived = 0;
    for id in &confirmed {
        let record = client
            .json("POST", &format!("/api/records/{id}/register"), None, 200)
            .map_err(fail("registration"))?;
        if record["swhid"].is_string() {
            archived += 1;
            client
                .json("POST", &format!("/api/records/{id}/expose"), None, 200)
                .map_err(fail("exposure"))?;
        }
    }

    let (status, xml, _) = client
        .call("GET", &format!("/oai?verb=ListRecords&metadataPrefix={LINKS_PREFIX}"), None)
        .map_err(fail("oai"))?;
    if status != 200 {
        return Err(fail("oai")(format!("ListRecords answered HTTP {status}")));
    }
    let links = links_from_oai_response(xml.as_bytes()).map_err(|e| fail("oai")(e.to_string()))?;
    for link in &links {
        check_swhids(link).map_err(|e| fail("oai")(format!("{}: {e}", link.paper_id)))?;
    }

    let sample_paper = links
        .first()
        .map(|l| l.paper_id.clone())
        .ok_or_else(|| fail("oai")("nothing was exposed".into()))?;
    let (_, sample_oai_record, _) = client
        .call(
            "GET",
            &format!(
                "/oai?verb=GetRecord&metadataPrefix={LINKS_PREFIX}&identifier={}",
                encode(&sample_paper)
            ),
            None,
        )
        .map_err(fail("oai"))?;
    let (status, _, link_header) = client
        .call("GET", &format!("/api/papers/{}/links", encode(&sample_paper)), None)
        .map_err(fail("signposting"))?;
    let sample_link_header = match (status, link_header) {
        (200, Some(h)) => h,
        (s, _) => return Err(fail("signposting")(format!("links answered HTTP {s} without a Link header"))),
    };
    let sample_record = engine
        .for_paper(&sample_paper)
        .into_iter()
        .find(|r| r.state == LifecycleState::Exposed)
        .ok_or_else(|| fail("signposting")("sample paper has no exposed record".into()))?;
    let (status, sample_codemeta, _) = client
        .call("GET", &format!("/api/assets/{}/codemeta.json", sample_record.record_id), None)
        .map_err(fail("codemeta"))?;
    if status != 200 {
        return Err(fail("codemeta")(format!("HTTP {status}")));
    }
    parse_jsonld(sample_codemeta.as_bytes()).map_err(|e| fail("codemeta")(e.to_string()))?;

    Ok(DemoReport {
        pipeline: PipelineReport::default(),
        records,
        approved: pending.len(),
        confirmed: confirmed.len(),
        rejected,
        archived,
        exposed: engine.in_state(LifecycleState::Exposed).len(),
        exposed_papers: links.len(),
        sample_paper,
        sample_link_header,
        sample_oai_record,
        sample_codemeta,
        state_dir: PathBuf::new(),
        elapsed_ms: 0,
    })
}
