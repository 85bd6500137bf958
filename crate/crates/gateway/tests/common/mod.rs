#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use serde_json::Value;
use softlink_core::expose::ExposeConfig;
use softlink_core::extract::Component;
use softlink_core::lifecycle::{AssetSnapshot, ContextSpan, EngineConfig, FixedClock, LifecycleEngine, MentionContext};
use softlink_core::resolve::AssetCandidate;
use softlink_core::swhid::ArchivalClient;
use softlink_gateway::api::AppState;
use softlink_gateway::server::BackgroundServer;
use ureq::Agent;
use url::Url;

pub fn snapshot(name: &str, url: Option<&str>) -> AssetSnapshot {
    let sentence = format!("Images were segmented with {name} 2.1.");
    assert_eq!(&sentence[27..27 + name.len()], name);
    AssetSnapshot {
        candidate: AssetCandidate {
            candidate_id: format!("cand-{}", name.to_lowercase()),
            canonical_name: name.into(),
            aliases: [name.to_string()].into(),
            urls: url.map(|u| Url::parse(u).unwrap()).into_iter().collect(),
            publishers: BTreeSet::new(),
            versions: ["2.1".to_string()].into(),
            member_groups: ["paper-1#g0".to_string()].into(),
            catalog_match: None,
        },
        paper_title: Some("Counting trees from above".into()),
        contact: Some("ana@example.org".into()),
        contexts: vec![MentionContext {
            mentions: vec![
                ContextSpan {
                    component: Component::SoftwareName,
                    start_byte: 27,
                    end_byte: 27 + name.len(),
                    surface: name.into(),
                },
                ContextSpan {
                    component: Component::Version,
                    start_byte: 28 + name.len(),
                    end_byte: 31 + name.len(),
                    surface: "2.1".into(),
                },
            ],
            sentence,
        }],
    }
}

pub fn clock() -> Arc<FixedClock> {
    Arc::new(FixedClock::new(Utc.with_ymd_and_hms(2026, 4, 1, 8, 0, 0).unwrap()))
}

pub fn engine(clock: Arc<FixedClock>) -> Arc<LifecycleEngine> {
    Arc::new(LifecycleEngine::in_memory(clock, EngineConfig::default()))
}

pub fn start(engine: Arc<LifecycleEngine>, archival: Arc<dyn ArchivalClient>) -> BackgroundServer {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let state = Arc::new(AppState {
        engine,
        archival,
        expose: ExposeConfig {
            base_url: format!("{base}/oai"),
            public_base: base,
            ..ExposeConfig::default()
        },
        repo_metadata_dir: None,
    });
    BackgroundServer::with_listener(listener, state, None).unwrap()
}

pub struct Response {
    pub status: u16,
    pub content_type: Option<String>,
    pub link: Option<String>,
    pub body: String,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

pub struct Client {
    agent: Agent,
    base: String,
}

impl Client {
    pub fn new(server: &BackgroundServer) -> Self {
        Client {
            agent: Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(20)))
                .http_status_as_error(false)
                .build()
                .into(),
            base: server.base_url(),
        }
    }

    fn finish(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Response {
        let mut resp = result.unwrap();
        let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
        let (content_type, link) = (header("content-type"), header("link"));
        Response {
            status: resp.status().as_u16(),
            content_type,
            link,
            body: resp.body_mut().read_to_string().unwrap(),
        }
    }

    pub fn get(&self, path: &str) -> Response {
        Self::finish(self.agent.get(&format!("{}{path}", self.base)).call())
    }

    pub fn post(&self, path: &str, body: &str) -> Response {
        let url = format!("{}{path}", self.base);
        Self::finish(if body.is_empty() {
            self.agent.post(&url).send_empty()
        } else {
            self.agent.post(&url).header("content-type", "application/json").send(body)
        })
    }
}
