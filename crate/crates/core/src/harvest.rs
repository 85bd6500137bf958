//! OAI-PMH v2.0 harvesting client (Dublin Core subset) and full-text fetch.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use url::Url;

use crate::xml::{self, Element, XmlError};

pub const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarvestError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("not an OAI-PMH response: {0}")]
    NotOaiPmh(String),
    #[error("OAI-PMH error `{code}`: {message}")]
    Protocol { code: String, message: String },
    #[error("record is missing `{0}`")]
    MissingField(&'static str),
    #[error("bad datestamp `{0}`")]
    BadDatestamp(String),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("record `{0}` has no full text")]
    NoFulltext(String),
    #[error("unsupported full-text media type `{0}`")]
    UnsupportedFormat(String),
}

impl HarvestError {
    pub fn protocol_code(&self) -> Option<&str> {
        match self {
            HarvestError::Protocol { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryEndpoint {
    base_url: Url,
    metadata_prefix: String,
    set_spec: Option<String>,
}

impl RepositoryEndpoint {
    pub fn new(base_url: &str) -> Result<Self, HarvestError> {
        let base_url =
            Url::parse(base_url).map_err(|e| HarvestError::InvalidEndpoint(format!("{base_url}: {e}")))?;
        if !matches!(base_url.scheme(), "http" | "https") {
            return Err(HarvestError::InvalidEndpoint(format!(
                "{base_url}: scheme must be http or https"
            )));
        }
        Ok(RepositoryEndpoint {
            base_url,
            metadata_prefix: "oai_dc".to_string(),
            set_spec: None,
        })
    }

    pub fn with_metadata_prefix(mut self, prefix: &str) -> Result<Self, HarvestError> {
        if prefix.trim().is_empty() {
            return Err(HarvestError::InvalidEndpoint("empty metadataPrefix".into()));
        }
        self.metadata_prefix = prefix.to_string();
        Ok(self)
    }

    pub fn with_set(mut self, set_spec: Option<String>) -> Self {
        self.set_spec = set_spec.filter(|s| !s.is_empty());
        self
    }

    pub fn base_url(&self) -> &Url {
        &self.base_url
    }

    pub fn metadata_prefix(&self) -> &str {
        &self.metadata_prefix
    }

    pub fn set_spec(&self) -> Option<&str> {
        self.set_spec.as_deref()
    }

    /// ListRecords request URL. A resumption token excludes every other
    /// argument, as the protocol requires.
    pub fn list_records_url(&self, token: Option<&str>) -> Url {
        let mut url = self.base_url.clone();
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("verb", "ListRecords");
            match token {
                Some(token) => {
                    q.append_pair("resumptionToken", token);
                }
                None => {
                    q.append_pair("metadataPrefix", &self.metadata_prefix);
                    if let Some(set) = &self.set_spec {
                        q.append_pair("set", set);
                    }
                }
            }
        }
        url
    }

    pub fn identify_url(&self) -> Url {
        let mut url = self.base_url.clone();
        url.query_pairs_mut().append_pair("verb", "Identify");
        url
    }
}

/// OAI-PMH datestamps come at day or second granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Datestamp {
    Day(NaiveDate),
    Instant(DateTime<Utc>),
}

impl Datestamp {
    pub fn parse(text: &str) -> Result<Self, HarvestError> {
        let text = text.trim();
        if let Ok(day) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            return Ok(Datestamp::Day(day));
        }
        DateTime::parse_from_rfc3339(text)
            .map(|dt| Datestamp::Instant(dt.with_timezone(&Utc)))
            .map_err(|_| HarvestError::BadDatestamp(text.to_string()))
    }
}

impl fmt::Display for Datestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datestamp::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Datestamp::Instant(t) => f.write_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true)),
        }
    }
}

impl Serialize for Datestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Datestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Datestamp::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestRecord {
    pub oai_identifier: String,
    pub datestamp: Datestamp,
    pub deleted: bool,
    pub title: String,
    pub creators: Vec<String>,
    pub fulltext_link: Option<Url>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumptionToken {
    pub value: String,
    pub complete_list_size: Option<u64>,
    pub cursor: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListRecordsPage {
    pub records: Vec<HarvestRecord>,
    pub token: Option<ResumptionToken>,
}

/// Parses one ListRecords response page.
pub fn parse_list_records(xml_bytes: &[u8]) -> Result<ListRecordsPage, HarvestError> {
    let root = oai_root(xml_bytes)?;
    let list = root
        .child("ListRecords")
        .ok_or_else(|| HarvestError::NotOaiPmh("missing ListRecords element".into()))?;
    let records = list
        .children_named("record")
        .map(parse_record)
        .collect::<Result<Vec<_>, _>>()?;
    let token = list.child("resumptionToken").and_then(|t| {
        let value = t.text().trim().to_string();
        (!value.is_empty()).then(|| ResumptionToken {
            value,
            complete_list_size: t.attr("completeListSize").and_then(|v| v.parse().ok()),
            cursor: t.attr("cursor").and_then(|v| v.parse().ok()),
        })
    });
    Ok(ListRecordsPage { records, token })
}

/// Parses the root of any OAI-PMH response, surfacing `<error>` elements.
fn oai_root(xml_bytes: &[u8]) -> Result<Element, HarvestError> {
    let root = xml::parse(xml_bytes)?;
    if root.name != "OAI-PMH" || root.namespace.as_deref() != Some(OAI_NS) {
        return Err(HarvestError::NotOaiPmh(format!(
            "root element `{}` in namespace {:?}",
            root.name, root.namespace
        )));
    }
    if let Some(error) = root.child("error") {
        return Err(HarvestError::Protocol {
            code: error.attr("code").unwrap_or("unknown").to_string(),
            message: xml::normalize_ws(&error.text()),
        });
    }
    Ok(root)
}

fn parse_record(record: &Element) -> Result<HarvestRecord, HarvestError> {
    let header = record
        .child("header")
        .ok_or(HarvestError::MissingField("header"))?;
    let oai_identifier = header
        .child("identifier")
        .map(|e| e.text().trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or(HarvestError::MissingField("identifier"))?;
    let datestamp = header
        .child("datestamp")
        .ok_or(HarvestError::MissingField("datestamp"))
        .and_then(|e| Datestamp::parse(&e.text()))?;
    let deleted = header.attr("status") == Some("deleted");

    let dc = record
        .child("metadata")
        .and_then(|m| m.elements().next());
    let field = |name: &str| -> Vec<String> {
        dc.map(|dc| {
            dc.children_named(name)
                .map(|e| xml::normalize_ws(&e.text()))
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
    };
    let title = field("title").into_iter().next().unwrap_or_default();
    let creators = field("creator");
    let fulltext_link = if deleted {
        None
    } else {
        discover_fulltext(&field("identifier")).or_else(|| {
            field("fulltext_link")
                .iter()
                .find_map(|s| Url::parse(s).ok())
        })
    };
    Ok(HarvestRecord {
        oai_identifier,
        datestamp,
        deleted,
        title,
        creators,
        fulltext_link,
    })
}

/// First `dc:identifier` that is an http(s) URL whose path ends in `.xml` or
/// `.txt`.
fn discover_fulltext(identifiers: &[String]) -> Option<Url> {
    identifiers.iter().find_map(|id| {
        let url = Url::parse(id).ok()?;
        let path = url.path().to_ascii_lowercase();
        (matches!(url.scheme(), "http" | "https") && (path.ends_with(".xml") || path.ends_with(".txt")))
            .then_some(url)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn ok(content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status: 200,
            content_type: Some(content_type.to_string()),
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        HttpResponse {
            status,
            content_type: None,
            body: Vec::new(),
        }
    }

    fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    fn is_retryable(&self) -> bool {
        self.status >= 500 || self.status == 429
    }
}

/// Blocking HTTP GET, abstracted so tests and fixtures can stand in for
/// the network. `Err` means the request never produced a response.
pub trait HttpFetcher: Send + Sync {
    fn get(&self, url: &Url) -> Result<HttpResponse, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// GETs `url`, retrying transport failures and 5xx/429 responses with
    /// exponential backoff. Returns the response and the number of requests
    /// issued.
    pub fn get<F: HttpFetcher + ?Sized>(&self, http: &F, url: &Url) -> Result<(HttpResponse, u32), HarvestError> {
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(self.initial_backoff * 2u32.pow(attempt - 2));
            }
            match http.get(url) {
                Ok(resp) if resp.is_success() => return Ok((resp, attempt)),
                Ok(resp) if resp.is_retryable() => {
                    last = format!("HTTP {} from {url}", resp.status);
                    log::warn!("attempt {attempt}/{attempts}: {last}");
                }
                Ok(resp) => {
                    return Err(HarvestError::Transport {
                        attempts: attempt,
                        last: format!("HTTP {} from {url}", resp.status),
                    });
                }
                Err(e) => {
                    last = e;
                    log::warn!("attempt {attempt}/{attempts}: {last}");
                }
            }
        }
        Err(HarvestError::Transport { attempts, last })
    }
}

/// Streams every record of an endpoint, following resumption tokens.
pub struct Harvest<'a, F: HttpFetcher + ?Sized> {
    endpoint: &'a RepositoryEndpoint,
    http: &'a F,
    policy: RetryPolicy,
    buffered: VecDeque<HarvestRecord>,
    next_token: Option<String>,
    started: bool,
    finished: bool,
    seen: HashSet<String>,
    requests: u32,
    pages: u32,
}

pub fn harvest_all<'a, F: HttpFetcher + ?Sized>(endpoint: &'a RepositoryEndpoint, http: &'a F) -> Harvest<'a, F> {
    Harvest {
        endpoint,
        http,
        policy: RetryPolicy::default(),
        buffered: VecDeque::new(),
        next_token: None,
        started: false,
        finished: false,
        seen: HashSet::new(),
        requests: 0,
        pages: 0,
    }
}

impl<F: HttpFetcher + ?Sized> Harvest<'_, F> {
    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests(&self) -> u32 {
        self.requests
    }

    /// Pages successfully fetched so far.
    pub fn pages(&self) -> u32 {
        self.pages
    }

    fn fetch_page(&mut self) -> Result<(), HarvestError> {
        let url = self.endpoint.list_records_url(self.next_token.as_deref());
        self.started = true;
        let result = self.policy.get(self.http, &url);
        let (resp, issued) = match result {
            Ok(ok) => ok,
            Err(e) => {
                if let HarvestError::Transport { attempts, .. } = &e {
                    self.requests += attempts;
                }
                return Err(e);
            }
        };
        self.requests += issued;
        let page = match parse_list_records(&resp.body) {
            Ok(page) => page,
            Err(HarvestError::Protocol { code, .. }) if code == "noRecordsMatch" => ListRecordsPage {
                records: Vec::new(),
                token: None,
            },
            Err(e) => return Err(e),
        };
        self.pages += 1;
        for record in page.records {
            if self.seen.insert(record.oai_identifier.clone()) {
                self.buffered.push_back(record);
            } else {
                log::warn!("skipping duplicate record {}", record.oai_identifier);
            }
        }
        self.next_token = page.token.map(|t| t.value);
        Ok(())
    }
}

impl<F: HttpFetcher + ?Sized> Iterator for Harvest<'_, F> {
    type Item = Result<HarvestRecord, HarvestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(record) = self.buffered.pop_front() {
                return Some(Ok(record));
            }
            if self.finished || (self.started && self.next_token.is_none()) {
                return None;
            }
            if let Err(e) = self.fetch_page() {
                self.finished = true;
                return Some(Err(e));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "application/tei+xml")]
    TeiXml,
    #[serde(rename = "text/xml")]
    Xml,
    #[serde(rename = "text/plain")]
    PlainText,
}

impl MediaType {
    pub fn parse(content_type: &str) -> Option<Self> {
        let essence = content_type
            .split(';')
            .next()
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        match essence.as_str() {
            "application/tei+xml" => Some(MediaType::TeiXml),
            "text/xml" | "application/xml" => Some(MediaType::Xml),
            "text/plain" => Some(MediaType::PlainText),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::TeiXml => "application/tei+xml",
            MediaType::Xml => "text/xml",
            MediaType::PlainText => "text/plain",
        }
    }

    pub fn is_xml(self) -> bool {
        !matches!(self, MediaType::PlainText)
    }
}

/// Downloads a record's full text. Only TEI/XML and plain text are accepted.
pub fn fetch_fulltext<F: HttpFetcher + ?Sized>(
    record: &HarvestRecord,
    http: &F,
) -> Result<(Vec<u8>, MediaType), HarvestError> {
    let link = match (&record.fulltext_link, record.deleted) {
        (Some(link), false) => link,
        _ => return Err(HarvestError::NoFulltext(record.oai_identifier.clone())),
    };
    let resp = http.get(link).map_err(|last| HarvestError::Transport { attempts: 1, last })?;
    if !resp.is_success() {
        return Err(HarvestError::Transport {
            attempts: 1,
            last: format!("HTTP {} from {link}", resp.status),
        });
    }
    let declared = resp.content_type.unwrap_or_default();
    let media = MediaType::parse(&declared).ok_or(HarvestError::UnsupportedFormat(declared))?;
    Ok((resp.body, media))
}

/// Serves a repository from static files, whatever the request host:
///
/// * `verb=ListRecords` without a token reads `oai/first.xml`, with token
///   `T` reads `oai/T.xml`; `verb=Identify` reads `oai/Identify.xml`;
/// * any other URL reads the file at its path, typed by extension.
#[derive(Debug, Clone)]
pub struct DirectoryFetcher {
    root: PathBuf,
}

impl DirectoryFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirectoryFetcher { root: root.into() }
    }

    fn resolve(&self, url: &Url) -> Option<(PathBuf, &'static str)> {
        let verb = url.query_pairs().find(|(k, _)| k == "verb").map(|(_, v)| v.into_owned());
        if let Some(verb) = verb {
            let file = match verb.as_str() {
                "ListRecords" => match url.query_pairs().find(|(k, _)| k == "resumptionToken") {
                    Some((_, token)) => {
                        if token.is_empty()
                            || !token
                                .chars()
                                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                            || token.starts_with('.')
                        {
                            return None;
                        }
                        format!("{token}.xml")
                    }
                    None => "first.xml".to_string(),
                },
                "Identify" => "Identify.xml".to_string(),
                _ => return None,
            };
            return Some((self.root.join("oai").join(file), "text/xml"));
        }
        let mut path = self.root.clone();
        for segment in url.path_segments()? {
            if segment.is_empty() || segment == "." || segment == ".." {
                continue;
            }
            path.push(segment);
        }
        let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
        let media = if name.ends_with(".xml") {
            "application/tei+xml"
        } else if name.ends_with(".txt") {
            "text/plain; charset=utf-8"
        } else if name.ends_with(".pdf") {
            "application/pdf"
        } else {
            "application/octet-stream"
        };
        Some((path, media))
    }
}

impl HttpFetcher for DirectoryFetcher {
    fn get(&self, url: &Url) -> Result<HttpResponse, String> {
        let Some((path, media)) = self.resolve(url) else {
            return Ok(HttpResponse::status(404));
        };
        match fs::read(&path) {
            Ok(body) => Ok(HttpResponse::ok(media, body)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HttpResponse::status(404)),
            Err(e) => Err(format!("{}: {e}", path.display())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(records: &str, token: &str) -> String {
        format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">
 <responseDate>2024-06-03T10:00:00Z</responseDate>
 <request verb="ListRecords">https://repo.example.org/oai</request>
 <ListRecords>{records}{token}</ListRecords>
</OAI-PMH>"#
        )
    }

    fn record(id: &str, identifiers: &[&str]) -> String {
        let ids: String = identifiers
            .iter()
            .map(|i| format!("<dc:identifier>{i}</dc:identifier>"))
            .collect();
        format!(
            r#"<record><header><identifier>{id}</identifier><datestamp>2024-01-02</datestamp></header>
<metadata><oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/">
<dc:title>Paper {id}</dc:title><dc:creator>Doe, Jane</dc:creator><dc:creator>Roe, Rick</dc:creator>{ids}</oai_dc:dc></metadata></record>"#
        )
    }

    #[test]
    fn parses_records_and_token() {
        let xml = page(
            &(record("oai:x:1", &["https://repo.example.org/a.pdf", "https://repo.example.org/a.tei.xml"])
                + &record("oai:x:2", &["hal-02"])),
            r#"<resumptionToken completeListSize="25" cursor="0">page2</resumptionToken>"#,
        );
        let page = parse_list_records(xml.as_bytes()).unwrap();
        assert_eq!(page.records.len(), 2);
        let r = &page.records[0];
        assert_eq!(r.title, "Paper oai:x:1");
        assert_eq!(r.creators, ["Doe, Jane", "Roe, Rick"]);
        assert_eq!(r.datestamp, Datestamp::Day(NaiveDate::from_ymd_opt(2024, 1, 2).unwrap()));
        assert_eq!(r.fulltext_link.as_ref().unwrap().as_str(), "https://repo.example.org/a.tei.xml");
        assert_eq!(page.records[1].fulltext_link, None);
        let token = page.token.unwrap();
        assert_eq!(token.value, "page2");
        assert_eq!(token.complete_list_size, Some(25));
        assert_eq!(token.cursor, Some(0));
    }

    #[test]
    fn empty_token_ends_list() {
        let xml = page(&record("oai:x:1", &[]), r#"<resumptionToken completeListSize="1" cursor="0"/>"#);
        assert_eq!(parse_list_records(xml.as_bytes()).unwrap().token, None);
    }

    #[test]
    fn protocol_error() {
        let xml = r#"<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/"><responseDate>2024-01-01T00:00:00Z</responseDate>
<request>https://r/oai</request><error code="noRecordsMatch">nothing</error></OAI-PMH>"#;
        let err = parse_list_records(xml.as_bytes()).unwrap_err();
        assert_eq!(err.protocol_code(), Some("noRecordsMatch"));
    }

    #[test]
    fn deleted_records_have_no_link() {
        let xml = page(
            r#"<record><header status="deleted"><identifier>oai:x:9</identifier><datestamp>2024-02-03T04:05:06Z</datestamp></header></record>"#,
            "",
        );
        let page = parse_list_records(xml.as_bytes()).unwrap();
        assert!(page.records[0].deleted);
        assert_eq!(page.records[0].fulltext_link, None);
        assert_eq!(page.records[0].datestamp.to_string(), "2024-02-03T04:05:06Z");
    }

    #[test]
    fn rejects_foreign_xml() {
        assert!(matches!(parse_list_records(b"<foo/>"), Err(HarvestError::NotOaiPmh(_))));
        assert!(matches!(parse_list_records(b"<OAI-PMH"), Err(HarvestError::Xml(_))));
    }

    #[test]
    fn endpoint_urls() {
        let ep = RepositoryEndpoint::new("https://repo.example.org/oai")
            .unwrap()
            .with_set(Some("software".into()));
        assert_eq!(
            ep.list_records_url(None).as_str(),
            "https://repo.example.org/oai?verb=ListRecords&metadataPrefix=oai_dc&set=software"
        );
        assert_eq!(
            ep.list_records_url(Some("a b")).as_str(),
            "https://repo.example.org/oai?verb=ListRecords&resumptionToken=a+b"
        );
        assert!(RepositoryEndpoint::new("ftp://x/oai").is_err());
        assert!(RepositoryEndpoint::new("not a url").is_err());
        assert!(ep.with_metadata_prefix(" ").is_err());
    }

    #[test]
    fn media_types() {
        assert_eq!(MediaType::parse("text/plain; charset=utf-8"), Some(MediaType::PlainText));
        assert_eq!(MediaType::parse("application/TEI+xml"), Some(MediaType::TeiXml));
        assert_eq!(MediaType::parse("application/pdf"), None);
    }

    #[test]
    fn fulltext_requires_live_link() {
        let record = HarvestRecord {
            oai_identifier: "oai:x:1".into(),
            datestamp: Datestamp::parse("2024-01-01").unwrap(),
            deleted: true,
            title: String::new(),
            creators: vec![],
            fulltext_link: None,
        };
        let http = DirectoryFetcher::new("/nonexistent");
        assert_eq!(
            fetch_fulltext(&record, &http),
            Err(HarvestError::NoFulltext("oai:x:1".into()))
        );
    }
}
