use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use super::{DirectoryTree, Swhid, SwhidError, TreeEntry, directory_swhid};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchivalError {
    #[error("transient archival failure: {0}")]
    Retryable(String),
    #[error("unknown archival request `{0}`")]
    NotFound(String),
    #[error("archival service protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Swhid(#[from] SwhidError),
}

/// What to archive: a public code origin, or a source bundle pushed directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchivalRequest {
    Origin(Url),
    Bundle(DirectoryTree),
}

impl ArchivalRequest {
    /// Deterministic request id: a pure function of the request content.
    pub fn request_id(&self) -> Result<String, SwhidError> {
        let mut hasher = Sha256::new();
        match self {
            ArchivalRequest::Origin(url) => {
                hasher.update(b"origin\0");
                hasher.update(url.as_str().as_bytes());
            }
            ArchivalRequest::Bundle(tree) => {
                hasher.update(b"bundle\0");
                hasher.update(directory_swhid(tree)?.digest());
            }
        }
        Ok(format!("req-{}", hex::encode(&hasher.finalize()[..16])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchivalStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchivalReceipt {
    pub request_id: String,
    pub status: ArchivalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swhid: Option<Swhid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ArchivalReceipt {
    pub fn pending(request_id: impl Into<String>) -> Self {
        ArchivalReceipt {
            request_id: request_id.into(),
            status: ArchivalStatus::Pending,
            swhid: None,
            reason: None,
        }
    }
}

/// Exchange with a Software Heritage-like archive.
pub trait ArchivalClient: Send + Sync {
    fn request_archival(&self, request: &ArchivalRequest) -> Result<ArchivalReceipt, ArchivalError>;
    fn poll_archival(&self, receipt: &ArchivalReceipt) -> Result<ArchivalReceipt, ArchivalError>;
}

/// Scripted behaviour of [`MockArchivalClient`].
#[derive(Debug, Clone)]
pub struct MockBehaviour {
    /// Polls needed before a pending job completes.
    pub polls_to_done: u32,
    /// Number of initial `request_archival` calls that fail transiently.
    pub transient_failures: u32,
    /// Jobs end in `failed` instead of `done`.
    pub permanent_failure: bool,
}

impl Default for MockBehaviour {
    fn default() -> Self {
        MockBehaviour {
            polls_to_done: 2,
            transient_failures: 0,
            permanent_failure: false,
        }
    }
}

#[derive(Debug)]
struct MockJob {
    target: Swhid,
    polls: u32,
    receipt: ArchivalReceipt,
}

#[derive(Debug, Default)]
struct MockState {
    jobs: HashMap<String, MockJob>,
    failures_left: u32,
}

/// In-process archive. Completed jobs carry the directory SWHID of the
/// archived bundle. Origins registered with [`MockArchivalClient::with_origin`]
/// archive their registered tree; any other origin archives a one-file tree
/// naming the origin URL.
#[derive(Debug)]
pub struct MockArchivalClient {
    behaviour: MockBehaviour,
    origins: HashMap<String, DirectoryTree>,
    state: Mutex<MockState>,
}

impl Default for MockArchivalClient {
    fn default() -> Self {
        Self::new(MockBehaviour::default())
    }
}

impl MockArchivalClient {
    pub fn new(behaviour: MockBehaviour) -> Self {
        let state = MockState {
            jobs: HashMap::new(),
            failures_left: behaviour.transient_failures,
        };
        MockArchivalClient {
            behaviour,
            origins: HashMap::new(),
            state: Mutex::new(state),
        }
    }

    pub fn with_origin(mut self, origin: &Url, tree: DirectoryTree) -> Self {
        self.origins.insert(origin.as_str().to_string(), tree);
        self
    }

    fn resolve_tree(&self, request: &ArchivalRequest) -> Result<DirectoryTree, SwhidError> {
        match request {
            ArchivalRequest::Bundle(tree) => Ok(tree.clone()),
            ArchivalRequest::Origin(url) => match self.origins.get(url.as_str()) {
                Some(tree) => Ok(tree.clone()),
                None => DirectoryTree::new().with(
                    "ORIGIN",
                    TreeEntry::File(format!("{url}\n").into_bytes()),
                ),
            },
        }
    }
}

impl ArchivalClient for MockArchivalClient {
    fn request_archival(&self, request: &ArchivalRequest) -> Result<ArchivalReceipt, ArchivalError> {
        let request_id = request.request_id()?;
        let mut state = self.state.lock().expect("mock archive lock poisoned");
        if state.failures_left > 0 {
            state.failures_left -= 1;
            return Err(ArchivalError::Retryable("scripted transient failure".into()));
        }
        if let Some(job) = state.jobs.get(&request_id) {
            return Ok(job.receipt.clone());
        }
        let target = directory_swhid(&self.resolve_tree(request)?)?;
        let receipt = ArchivalReceipt::pending(&request_id);
        state.jobs.insert(
            request_id,
            MockJob {
                target,
                polls: 0,
                receipt: receipt.clone(),
            },
        );
        Ok(receipt)
    }

    fn poll_archival(&self, receipt: &ArchivalReceipt) -> Result<ArchivalReceipt, ArchivalError> {
        let mut state = self.state.lock().expect("mock archive lock poisoned");
        let job = state
            .jobs
            .get_mut(&receipt.request_id)
            .ok_or_else(|| ArchivalError::NotFound(receipt.request_id.clone()))?;
        if job.receipt.status == ArchivalStatus::Pending {
            job.polls += 1;
            if job.polls >= self.behaviour.polls_to_done {
                if self.behaviour.permanent_failure {
                    job.receipt.status = ArchivalStatus::Failed;
                    job.receipt.reason = Some("origin could not be loaded".into());
                } else {
                    job.receipt.status = ArchivalStatus::Done;
                    job.receipt.swhid = Some(job.target.clone());
                }
            }
        }
        Ok(job.receipt.clone())
    }
}
