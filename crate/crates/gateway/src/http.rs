//! Network clients: an `HttpFetcher` for harvesting and an archival client
//! speaking a Software Heritage style save-request protocol.

use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use softlink_core::harvest::{HttpFetcher, HttpResponse};
use softlink_core::swhid::{
    ArchivalClient, ArchivalError, ArchivalReceipt, ArchivalRequest, ArchivalStatus, DirectoryTree,
    MockArchivalClient, MockBehaviour, Swhid, parse_swhid,
};
use ureq::Agent;
use url::Url;

use crate::config::ArchivalSettings;

const MAX_BODY: u64 = 64 * 1024 * 1024;

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .user_agent(concat!("softlink/", env!("CARGO_PKG_VERSION")))
        .build()
        .into()
}

/// Blocking fetcher over ureq. Non-2xx statuses are returned, not raised,
/// so the retry policy can look at them.
#[derive(Debug, Clone)]
pub struct UreqFetcher {
    agent: Agent,
}

impl UreqFetcher {
    pub fn new(timeout: Duration) -> Self {
        UreqFetcher { agent: agent(timeout) }
    }
}

impl HttpFetcher for UreqFetcher {
    fn get(&self, url: &Url) -> Result<HttpResponse, String> {
        let mut resp = self.agent.get(url.as_str()).call().map_err(|e| format!("{url}: {e}"))?;
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(|e| format!("{url}: {e}"))?;
        Ok(HttpResponse {
            status,
            content_type,
            body,
        })
    }
}

/// Archival over HTTP. A save request is `POST base + save_path` with the
/// origin URL substituted for `{origin}`; its status is polled with
/// `GET base + status_path`. Responses are either receipts
/// (`request_id`, `status`, `swhid`, `reason`) or Software Heritage save
/// request objects (`id`, `save_task_status`, `snapshot_swhid`).
#[derive(Debug, Clone)]
pub struct HttpArchivalClient {
    agent: Agent,
    base: String,
    save_path: String,
    status_path: String,
    auth_token: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireReceipt {
    request_id: Option<String>,
    id: Option<serde_json::Value>,
    status: Option<ArchivalStatus>,
    save_task_status: Option<String>,
    save_request_status: Option<String>,
    swhid: Option<String>,
    snapshot_swhid: Option<String>,
    reason: Option<String>,
    note: Option<String>,
}

impl WireReceipt {
    fn into_receipt(self) -> Result<ArchivalReceipt, ArchivalError> {
        let request_id = match (self.request_id, self.id) {
            (Some(id), _) => id,
            (None, Some(serde_json::Value::String(s))) => s,
            (None, Some(serde_json::Value::Number(n))) => n.to_string(),
            _ => return Err(ArchivalError::Protocol("response carries no request id".into())),
        };
        let status = match (self.status, self.save_task_status.as_deref(), self.save_request_status.as_deref()) {
            (Some(s), _, _) => s,
            (None, _, Some("rejected")) => ArchivalStatus::Failed,
            (None, Some("succeeded"), _) => ArchivalStatus::Done,
            (None, Some("failed"), _) => ArchivalStatus::Failed,
            (None, _, _) => ArchivalStatus::Pending,
        };
        let swhid: Option<Swhid> = self
            .swhid
            .or(self.snapshot_swhid)
            .filter(|s| !s.is_empty())
            .map(|s| parse_swhid(&s))
            .transpose()
            .map_err(|e| ArchivalError::Protocol(format!("bad identifier in response: {e}")))?;
        Ok(ArchivalReceipt {
            request_id,
            status,
            swhid,
            reason: self.reason.or(self.note),
        })
    }
}

impl HttpArchivalClient {
    pub fn new(settings: &ArchivalSettings, timeout: Duration) -> Self {
        HttpArchivalClient {
            agent: agent(timeout),
            base: settings.base_url.trim_end_matches('/').to_string(),
            save_path: settings.save_path.clone(),
            status_path: settings.status_path.clone(),
            auth_token: settings.auth_token.clone(),
        }
    }

    fn exchange(&self, method: &str, url: &str) -> Result<ArchivalReceipt, ArchivalError> {
        let result = match method {
            "POST" => {
                let mut req = self.agent.post(url);
                if let Some(t) = &self.auth_token {
                    req = req.header("Authorization", format!("Bearer {t}"));
                }
                req.send_empty()
            }
            _ => {
                let mut req = self.agent.get(url);
                if let Some(t) = &self.auth_token {
                    req = req.header("Authorization", format!("Bearer {t}"));
                }
                req.call()
            }
        };
        let mut resp = result.map_err(|e| ArchivalError::Retryable(format!("{method} {url}: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(|e| ArchivalError::Retryable(format!("{method} {url}: {e}")))?;
        match status {
            200..=299 => {}
            404 => return Err(ArchivalError::NotFound(url.to_string())),
            429 | 500.. => return Err(ArchivalError::Retryable(format!("{method} {url}: HTTP {status}"))),
            _ => {
                return Err(ArchivalError::Protocol(format!(
                    "{method} {url}: HTTP {status}: {}",
                    String::from_utf8_lossy(&body)
                )));
            }
        }
        let wire: WireReceipt = serde_json::from_slice(&body)
            .map_err(|e| ArchivalError::Protocol(format!("{method} {url}: bad JSON: {e}")))?;
        wire.into_receipt()
    }
}

fn encode_component(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

impl ArchivalClient for HttpArchivalClient {
    fn request_archival(&self, request: &ArchivalRequest) -> Result<ArchivalReceipt, ArchivalError> {
        let ArchivalRequest::Origin(origin) = request else {
            return Err(ArchivalError::Protocol(
                "the save-request protocol archives public origins only; this record has no repository URL".into(),
            ));
        };
        let path = self.save_path.replace("{origin}", &encode_component(origin.as_str()));
        self.exchange("POST", &format!("{}{path}", self.base))
    }

    fn poll_archival(&self, receipt: &ArchivalReceipt) -> Result<ArchivalReceipt, ArchivalError> {
        let path = self.status_path.replace("{request_id}", &encode_component(&receipt.request_id));
        self.exchange("GET", &format!("{}{path}", self.base))
    }
}

/// Directory holding an origin's files under `<root>/<host>/<path>`.
pub fn origin_dir(root: &Path, origin: &Url) -> Option<std::path::PathBuf> {
    let mut dir = root.join(origin.host_str()?);
    for segment in origin.path_segments()? {
        if segment.is_empty() || segment == "." || segment == ".." {
            continue;
        }
        dir.push(segment);
    }
    Some(dir)
}

/// Mock archive preloaded with every origin tree found under `root`
/// (directories two levels below a host directory, e.g.
/// `github.com/org/repo`).
pub fn mock_client(settings: &ArchivalSettings) -> std::io::Result<MockArchivalClient> {
    let mut client = MockArchivalClient::new(MockBehaviour {
        polls_to_done: settings.mock_polls_to_done,
        ..MockBehaviour::default()
    });
    if let Some(root) = &settings.origins_dir {
        for host in sorted_dirs(root)? {
            for owner in sorted_dirs(&host)? {
                for repo in sorted_dirs(&owner)? {
                    let name = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    let url = format!("https://{}/{}/{}", name(&host), name(&owner), name(&repo));
                    let Ok(url) = Url::parse(&url) else { continue };
                    client = client.with_origin(&url, DirectoryTree::from_path(&repo)?);
                }
            }
        }
    }
    Ok(client)
}

fn sorted_dirs(dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    let mut out: Vec<_> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}
