//! TOML configuration. Relative paths are resolved against the directory of
//! the configuration file and checked when the file is loaded.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use softlink_core::expose::{DEFAULT_RESOLVER, ExposeConfig};
use softlink_core::extract::ExtractConfig;
use softlink_core::harvest::{RepositoryEndpoint, RetryPolicy};
use softlink_core::lifecycle::EngineConfig;
use softlink_core::resolve::ResolveConfig;
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub repository: RepositorySettings,
    #[serde(default)]
    pub extract: ExtractSettings,
    #[serde(default)]
    pub resolve: ResolveSettings,
    #[serde(default)]
    pub archival: ArchivalSettings,
    pub storage: StorageSettings,
    #[serde(default)]
    pub server: ServerSettings,
    #[serde(default)]
    pub lifecycle: LifecycleSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepositorySettings {
    /// OAI-PMH base URL.
    pub endpoint: String,
    #[serde(default = "default_prefix")]
    pub metadata_prefix: String,
    #[serde(default)]
    pub set: Option<String>,
    /// Serve the repository from a directory of static files instead of
    /// the network (see `DirectoryFetcher`).
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_prefix() -> String {
    "oai_dc".into()
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSettings {
    pub gazetteer: PathBuf,
    pub min_confidence: f64,
    pub version_window: usize,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        let d = ExtractConfig::default();
        ExtractSettings {
            gazetteer: PathBuf::from("gazetteer.tsv"),
            min_confidence: d.min_confidence,
            version_window: d.version_window,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolveSettings {
    pub threshold: f64,
    pub catalog_threshold: f64,
    pub name_weight: f64,
    pub catalog: Option<PathBuf>,
}

impl Default for ResolveSettings {
    fn default() -> Self {
        let d = ResolveConfig::default();
        ResolveSettings {
            threshold: d.threshold,
            catalog_threshold: d.catalog_threshold,
            name_weight: d.name_weight,
            catalog: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchivalMode {
    Mock,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchivalSettings {
    pub mode: ArchivalMode,
    pub base_url: String,
    /// Path of the save request; `{origin}` is replaced by the encoded
    /// origin URL.
    pub save_path: String,
    /// Path polled for status; `{request_id}` is replaced by the id the
    /// archive returned.
    pub status_path: String,
    /// Bearer token sent with every request, if any.
    pub auth_token: Option<String>,
    /// Mock mode: origin trees laid out as `<dir>/<host>/<path>`.
    pub origins_dir: Option<PathBuf>,
    pub request_attempts: u32,
    pub max_polls: u32,
    pub poll_interval_ms: u64,
    pub mock_polls_to_done: u32,
}

impl Default for ArchivalSettings {
    fn default() -> Self {
        ArchivalSettings {
            mode: ArchivalMode::Mock,
            base_url: "https://archive.softwareheritage.org".into(),
            save_path: "/api/1/origin/save/git/url/{origin}/".into(),
            status_path: "/api/1/origin/save/{request_id}/".into(),
            auth_token: None,
            origins_dir: None,
            request_attempts: 3,
            max_polls: 10,
            poll_interval_ms: 0,
            mock_polls_to_done: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSettings {
    pub event_log: PathBuf,
    pub outbox: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerSettings {
    pub listen: SocketAddr,
    /// Externally visible base URL of this server.
    pub public_base: String,
    pub repository_name: String,
    pub admin_email: String,
    pub resolver_base: String,
    pub relation_type: String,
    /// Static files of the dashboard, served at `/`.
    pub dashboard_dir: Option<PathBuf>,
    /// Repository metadata (`codemeta.json` or `CITATION.cff`) laid out as
    /// `<dir>/<host>/<path>`, used to enrich CodeMeta documents.
    pub repo_metadata_dir: Option<PathBuf>,
}

impl Default for ServerSettings {
    fn default() -> Self {
        let d = ExposeConfig::default();
        ServerSettings {
            listen: ([127, 0, 0, 1], 8080).into(),
            public_base: d.public_base,
            repository_name: d.repository_name,
            admin_email: d.admin_email,
            resolver_base: DEFAULT_RESOLVER.into(),
            relation_type: d.relation_type,
            dashboard_dir: None,
            repo_metadata_dir: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifecycleSettings {
    pub token_ttl_days: i64,
    pub fallback_contact: String,
    /// Defaults to `<public_base>/validate`.
    pub validation_base_url: Option<String>,
}

impl Default for LifecycleSettings {
    fn default() -> Self {
        LifecycleSettings {
            token_ttl_days: 30,
            fallback_contact: EngineConfig::default().fallback_contact,
            validation_base_url: None,
        }
    }
}

fn in_unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn must_exist(name: &str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name}: {} does not exist", path.display())))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates a configuration whose relative paths are taken
    /// relative to `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        cfg.rebase(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.extract.gazetteer);
        join(&mut self.storage.event_log);
        join(&mut self.storage.outbox);
        for p in [
            &mut self.repository.fixture_dir,
            &mut self.resolve.catalog,
            &mut self.archival.origins_dir,
            &mut self.server.dashboard_dir,
            &mut self.server.repo_metadata_dir,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    /// Checks ranges, URLs and that every input path exists. Also run after
    /// command-line overrides.
    pub fn validate(&self) -> Result<(), ConfigError> {
        in_unit_interval("extract.min_confidence", self.extract.min_confidence)?;
        in_unit_interval("resolve.threshold", self.resolve.threshold)?;
        in_unit_interval("resolve.catalog_threshold", self.resolve.catalog_threshold)?;
        in_unit_interval("resolve.name_weight", self.resolve.name_weight)?;
        self.endpoint()?;
        Url::parse(&self.server.resolver_base)
            .map_err(|e| ConfigError::Invalid(format!("server.resolver_base: {e}")))?;
        Url::parse(&self.server.public_base).map_err(|e| ConfigError::Invalid(format!("server.public_base: {e}")))?;
        if self.archival.mode == ArchivalMode::Http {
            Url::parse(&self.archival.base_url)
                .map_err(|e| ConfigError::Invalid(format!("archival.base_url: {e}")))?;
            if !self.archival.save_path.contains("{origin}") {
                return Err(ConfigError::Invalid("archival.save_path must contain {origin}".into()));
            }
            if !self.archival.status_path.contains("{request_id}") {
                return Err(ConfigError::Invalid("archival.status_path must contain {request_id}".into()));
            }
        }
        if self.lifecycle.token_ttl_days <= 0 {
            return Err(ConfigError::Invalid("lifecycle.token_ttl_days must be positive".into()));
        }
        must_exist("extract.gazetteer", &self.extract.gazetteer)?;
        for (name, path) in [
            ("repository.fixture_dir", &self.repository.fixture_dir),
            ("resolve.catalog", &self.resolve.catalog),
            ("archival.origins_dir", &self.archival.origins_dir),
            ("server.dashboard_dir", &self.server.dashboard_dir),
            ("server.repo_metadata_dir", &self.server.repo_metadata_dir),
        ] {
            if let Some(p) = path {
                must_exist(name, p)?;
            }
        }
        for (name, path) in [("storage.event_log", &self.storage.event_log), ("storage.outbox", &self.storage.outbox)] {
            if path.is_dir() {
                return Err(ConfigError::Invalid(format!("{name}: {} is a directory", path.display())));
            }
        }
        Ok(())
    }

    /// Creates the directories holding the event log and outbox.
    pub fn prepare_storage(&self) -> Result<(), ConfigError> {
        for path in [&self.storage.event_log, &self.storage.outbox] {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|source| ConfigError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Result<RepositoryEndpoint, ConfigError> {
        RepositoryEndpoint::new(&self.repository.endpoint)
            .and_then(|e| e.with_metadata_prefix(&self.repository.metadata_prefix))
            .map(|e| e.with_set(self.repository.set.clone()))
            .map_err(|e| ConfigError::Invalid(format!("repository: {e}")))
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.repository.retry_attempts.max(1),
            initial_backoff: Duration::from_millis(self.repository.retry_backoff_ms),
        }
    }

    pub fn extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            min_confidence: self.extract.min_confidence,
            version_window: self.extract.version_window,
        }
    }

    pub fn resolve_config(&self) -> ResolveConfig {
        ResolveConfig {
            threshold: self.resolve.threshold,
            catalog_threshold: self.resolve.catalog_threshold,
            name_weight: self.resolve.name_weight,
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        let validation_base_url = self
            .lifecycle
            .validation_base_url
            .clone()
            .unwrap_or_else(|| format!("{}/validate", self.server.public_base.trim_end_matches('/')));
        EngineConfig {
            validation_base_url,
            token_ttl: chrono::Duration::days(self.lifecycle.token_ttl_days),
            fallback_contact: self.lifecycle.fallback_contact.clone(),
            request_attempts: self.archival.request_attempts.max(1),
            max_polls: self.archival.max_polls,
            poll_interval: Duration::from_millis(self.archival.poll_interval_ms),
        }
    }

    pub fn expose_config(&self) -> ExposeConfig {
        let public_base = self.server.public_base.trim_end_matches('/').to_string();
        ExposeConfig {
            repository_name: self.server.repository_name.clone(),
            base_url: format!("{public_base}/oai"),
            admin_email: self.server.admin_email.clone(),
            resolver_base: Url::parse(&self.server.resolver_base).expect("validated"),
            public_base,
            relation_type: self.server.relation_type.clone(),
        }
    }
}
