//! Publishing paper-to-software links: an OAI-PMH data provider and
//! Signposting `Link` headers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, NaiveTime, SecondsFormat, Timelike, Utc};
use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::harvest::{Datestamp, OAI_NS};
use crate::lifecycle::{EventKind, LifecycleRecord, LifecycleState};
use crate::swhid::Swhid;
use crate::xml::{self, Element, XmlError};

pub const LINKS_PREFIX: &str = "sofair_links";
pub const LINKS_NS: &str = "urn:softlink:links:1.0";
pub const LINKS_SCHEMA: &str = "urn:softlink:links:1.0:schema";
pub const DATACITE_NS: &str = "http://datacite.org/schema/kernel-4";
pub const DEFAULT_RESOLVER: &str = "https://archive.softwareheritage.org/";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposeError {
    #[error("paper `{0}` has no archived software")]
    NoLinks(String),
    #[error("no exposed links for paper `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("unexpected link metadata: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelatedSoftware {
    pub swhid: String,
    pub relation_type: String,
    pub software_name: String,
    pub codemeta_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub paper_id: String,
    pub paper_title: Option<String>,
    pub related: Vec<RelatedSoftware>,
}

pub fn codemeta_path(record_id: &str) -> String {
    format!("/api/assets/{record_id}/codemeta.json")
}

/// Links from one paper to its archived software, one entry per distinct
/// SWHID, sorted by SWHID. Records that are not archived are ignored.
pub fn build_link_record<'a>(
    paper_id: &str,
    records: impl IntoIterator<Item = &'a LifecycleRecord>,
    relation_type: &str,
) -> Result<LinkRecord, ExposeError> {
    let mut title = None;
    let mut related: BTreeMap<String, RelatedSoftware> = BTreeMap::new();
    for r in records {
        if r.paper_id != paper_id || !matches!(r.state, LifecycleState::Archived | LifecycleState::Exposed) {
            continue;
        }
        let Some(swhid) = &r.swhid else { continue };
        title = title.or_else(|| r.asset.paper_title.clone());
        let swhid = swhid.to_string();
        // first record (by id) wins for duplicated identifiers
        related.entry(swhid.clone()).or_insert_with(|| RelatedSoftware {
            swhid,
            relation_type: relation_type.to_string(),
            software_name: r.name().to_string(),
            codemeta_ref: codemeta_path(&r.record_id),
        });
    }
    if related.is_empty() {
        return Err(ExposeError::NoLinks(paper_id.to_string()));
    }
    Ok(LinkRecord {
        paper_id: paper_id.to_string(),
        paper_title: title,
        related: related.into_values().collect(),
    })
}

#[derive(Debug, Clone)]
pub struct ExposeConfig {
    pub repository_name: String,
    /// Public URL of the OAI-PMH endpoint.
    pub base_url: String,
    pub admin_email: String,
    pub resolver_base: Url,
    /// Prefix for describedby targets, e.g. `http://host:8080`.
    pub public_base: String,
    pub relation_type: String,
}

impl Default for ExposeConfig {
    fn default() -> Self {
        ExposeConfig {
            repository_name: "Software link provider".into(),
            base_url: "http://localhost:8080/oai".into(),
            admin_email: "repository-manager@localhost".into(),
            resolver_base: Url::parse(DEFAULT_RESOLVER).unwrap(),
            public_base: "http://localhost:8080".into(),
            relation_type: "References".into(),
        }
    }
}

/// One exposed paper as seen by the provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposedPaper {
    pub link: LinkRecord,
    pub datestamp: DateTime<Utc>,
}

/// Papers with at least one record in `Exposed`, sorted by paper id. Only
/// exposed records contribute links.
pub fn exposed_papers<'a>(
    records: impl IntoIterator<Item = &'a LifecycleRecord>,
    relation_type: &str,
) -> Vec<ExposedPaper> {
    let mut by_paper: BTreeMap<&str, Vec<&LifecycleRecord>> = BTreeMap::new();
    for r in records {
        if r.state == LifecycleState::Exposed {
            by_paper.entry(&r.paper_id).or_default().push(r);
        }
    }
    by_paper
        .into_iter()
        .filter_map(|(paper, mut rs)| {
            rs.sort_by(|a, b| a.record_id.cmp(&b.record_id));
            let datestamp = rs
                .iter()
                .flat_map(|r| r.history.iter().filter(|e| e.kind == EventKind::Exposed))
                .map(|e| e.timestamp)
                .max()?;
            let link = build_link_record(paper, rs.iter().copied(), relation_type).ok()?;
            Some(ExposedPaper {
                link,
                // datestamps have second granularity
                datestamp: datestamp.with_nanosecond(0).unwrap_or(datestamp),
            })
        })
        .collect()
}

/// `Link` header values for a paper: `cite-as` per SWHID and `describedby`
/// per CodeMeta document.
pub fn signposting_headers(paper: Option<&ExposedPaper>, paper_id: &str, cfg: &ExposeConfig) -> Result<Vec<String>, ExposeError> {
    let paper = paper.ok_or_else(|| ExposeError::NotFound(paper_id.to_string()))?;
    let mut out = Vec::new();
    for r in &paper.link.related {
        let target = format!("{}{}", cfg.resolver_base, r.swhid);
        out.push(format!("<{target}>; rel=\"cite-as\""));
    }
    let describedby: BTreeSet<&str> = paper.link.related.iter().map(|r| r.codemeta_ref.as_str()).collect();
    for path in describedby {
        let target = format!("{}{}", cfg.public_base.trim_end_matches('/'), path);
        out.push(format!("<{target}>; rel=\"describedby\"; type=\"application/ld+json\""));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OaiErrorCode {
    BadArgument,
    BadResumptionToken,
    BadVerb,
    CannotDisseminateFormat,
    IdDoesNotExist,
    NoRecordsMatch,
    NoSetHierarchy,
}

impl OaiErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            OaiErrorCode::BadArgument => "badArgument",
            OaiErrorCode::BadResumptionToken => "badResumptionToken",
            OaiErrorCode::BadVerb => "badVerb",
            OaiErrorCode::CannotDisseminateFormat => "cannotDisseminateFormat",
            OaiErrorCode::IdDoesNotExist => "idDoesNotExist",
            OaiErrorCode::NoRecordsMatch => "noRecordsMatch",
            OaiErrorCode::NoSetHierarchy => "noSetHierarchy",
        }
    }
}

struct OaiError(OaiErrorCode, String);

const VERBS: [(&str, &[&str], &[&str]); 6] = [
    ("Identify", &[], &[]),
    ("ListMetadataFormats", &[], &["identifier"]),
    ("ListSets", &[], &["resumptionToken"]),
    ("ListIdentifiers", &["metadataPrefix"], &["from", "until", "set", "resumptionToken"]),
    ("ListRecords", &["metadataPrefix"], &["from", "until", "set", "resumptionToken"]),
    ("GetRecord", &["identifier", "metadataPrefix"], &[]),
];

fn esc(s: &str) -> std::borrow::Cow<'_, str> {
    escape(s)
}

fn secs(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// OAI-PMH v2.0 provider over the exposed papers. Protocol errors are
/// reported inside the response, as the protocol requires.
pub fn serve_oaipmh(params: &[(String, String)], papers: &[ExposedPaper], cfg: &ExposeConfig, now: DateTime<Utc>) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <OAI-PMH xmlns=\"{OAI_NS}\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"{OAI_NS} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd\">\n\
         <responseDate>{}</responseDate>\n",
        secs(&now)
    );
    match respond(params, papers, cfg) {
        Ok((verb, body)) => {
            let attrs: String = params
                .iter()
                .map(|(k, v)| format!(" {}=\"{}\"", esc(k), esc(v)))
                .collect();
            let _ = write!(out, "<request{attrs}>{}</request>\n<{verb}>\n{body}</{verb}>\n", esc(&cfg.base_url));
        }
        Err(OaiError(code, message)) => {
            // arguments are echoed only for well-formed requests
            let _ = write!(
                out,
                "<request>{}</request>\n<error code=\"{}\">{}</error>\n",
                esc(&cfg.base_url),
                code.as_str(),
                esc(&message)
            );
        }
    }
    out.push_str("</OAI-PMH>\n");
    out
}

fn respond(params: &[(String, String)], papers: &[ExposedPaper], cfg: &ExposeConfig) -> Result<(&'static str, String), OaiError> {
    let mut args: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in params {
        if args.insert(k, v).is_some() {
            return Err(OaiError(OaiErrorCode::BadArgument, format!("repeated argument {k}")));
        }
    }
    let verb = args
        .remove("verb")
        .ok_or_else(|| OaiError(OaiErrorCode::BadVerb, "missing verb".into()))?;
    let (verb, required, optional) = VERBS
        .iter()
        .find(|(v, _, _)| *v == verb)
        .copied()
        .ok_or_else(|| OaiError(OaiErrorCode::BadVerb, format!("illegal verb {verb}")))?;
    if args.contains_key("resumptionToken") {
        if args.len() > 1 {
            return Err(OaiError(OaiErrorCode::BadArgument, "resumptionToken is exclusive".into()));
        }
        return Err(OaiError(OaiErrorCode::BadResumptionToken, "this provider issues no resumption tokens".into()));
    }
    for k in args.keys() {
        if !required.contains(k) && !optional.contains(k) {
            return Err(OaiError(OaiErrorCode::BadArgument, format!("illegal argument {k}")));
        }
    }
    if let Some(missing) = required.iter().find(|k| !args.contains_key(*k)) {
        return Err(OaiError(OaiErrorCode::BadArgument, format!("missing argument {missing}")));
    }
    if let Some(prefix) = args.get("metadataPrefix").filter(|p| **p != LINKS_PREFIX) {
        return Err(OaiError(
            OaiErrorCode::CannotDisseminateFormat,
            format!("unsupported metadataPrefix {prefix}"),
        ));
    }
    let find = |id: &str| {
        papers
            .iter()
            .find(|p| p.link.paper_id == id)
            .ok_or_else(|| OaiError(OaiErrorCode::IdDoesNotExist, format!("unknown identifier {id}")))
    };

    let body = match verb {
        "Identify" => {
            let earliest = papers.iter().map(|p| p.datestamp).min().unwrap_or(DateTime::UNIX_EPOCH);
            format!(
                "<repositoryName>{}</repositoryName>\n<baseURL>{}</baseURL>\n<protocolVersion>2.0</protocolVersion>\n\
                 <adminEmail>{}</adminEmail>\n<earliestDatestamp>{}</earliestDatestamp>\n\
                 <deletedRecord>no</deletedRecord>\n<granularity>YYYY-MM-DDThh:mm:ssZ</granularity>\n",
                esc(&cfg.repository_name),
                esc(&cfg.base_url),
                esc(&cfg.admin_email),
                secs(&earliest)
            )
        }
        "ListMetadataFormats" => {
            if let Some(id) = args.get("identifier") {
                find(id)?;
            }
            format!(
                "<metadataFormat>\n<metadataPrefix>{LINKS_PREFIX}</metadataPrefix>\n<schema>{LINKS_SCHEMA}</schema>\n\
                 <metadataNamespace>{LINKS_NS}</metadataNamespace>\n</metadataFormat>\n"
            )
        }
        "ListSets" => return Err(OaiError(OaiErrorCode::NoSetHierarchy, "sets are not supported".into())),
        "GetRecord" => record_xml(find(args["identifier"])?, true),
        _ => {
            if args.contains_key("set") {
                return Err(OaiError(OaiErrorCode::NoSetHierarchy, "sets are not supported".into()));
            }
            let (from, until) = date_range(args.get("from").copied(), args.get("until").copied())?;
            let selected: Vec<&ExposedPaper> = papers
                .iter()
                .filter(|p| from.is_none_or(|f| p.datestamp >= f) && until.is_none_or(|u| p.datestamp <= u))
                .collect();
            if selected.is_empty() {
                return Err(OaiError(OaiErrorCode::NoRecordsMatch, "no records match".into()));
            }
            let full = verb == "ListRecords";
            selected.into_iter().map(|p| record_xml(p, full)).collect()
        }
    };
    Ok((verb, body))
}

fn date_range(from: Option<&str>, until: Option<&str>) -> Result<(Option<DateTime<Utc>>, Option<DateTime<Utc>>), OaiError> {
    let parse = |s: &str| {
        Datestamp::parse(s).map_err(|_| OaiError(OaiErrorCode::BadArgument, format!("bad datestamp {s}")))
    };
    let from = from.map(parse).transpose()?;
    let until = until.map(parse).transpose()?;
    if let (Some(f), Some(u)) = (from, until) {
        if std::mem::discriminant(&f) != std::mem::discriminant(&u) {
            return Err(OaiError(OaiErrorCode::BadArgument, "from and until differ in granularity".into()));
        }
        if f > u {
            return Err(OaiError(OaiErrorCode::BadArgument, "from is after until".into()));
        }
    }
    let start = from.map(|d| match d {
        Datestamp::Day(day) => day.and_time(NaiveTime::MIN).and_utc(),
        Datestamp::Instant(t) => t,
    });
    let end = until.map(|d| match d {
        Datestamp::Day(day) => day.and_hms_opt(23, 59, 59).unwrap().and_utc(),
        Datestamp::Instant(t) => t,
    });
    Ok((start, end))
}

fn record_xml(paper: &ExposedPaper, with_metadata: bool) -> String {
    let header = format!(
        "<header>\n<identifier>{}</identifier>\n<datestamp>{}</datestamp>\n</header>\n",
        esc(&paper.link.paper_id),
        secs(&paper.datestamp)
    );
    if !with_metadata {
        return header;
    }
    format!("<record>\n{header}<metadata>\n{}</metadata>\n</record>\n", links_xml(&paper.link))
}

/// The `sofair_links` metadata element for one paper.
pub fn links_xml(link: &LinkRecord) -> String {
    let mut out = format!(
        "<links xmlns=\"{LINKS_NS}\" xmlns:datacite=\"{DATACITE_NS}\">\n<paper identifier=\"{}\">",
        esc(&link.paper_id)
    );
    if let Some(t) = &link.paper_title {
        out.push_str(&esc(t));
    }
    out.push_str("</paper>\n");
    for r in &link.related {
        let _ = write!(
            out,
            "<software name=\"{}\" codemeta=\"{}\">\n\
             <datacite:relatedIdentifier relatedIdentifierType=\"SWHID\" relationType=\"{}\">{}</datacite:relatedIdentifier>\n\
             </software>\n",
            esc(&r.software_name),
            esc(&r.codemeta_ref),
            esc(&r.relation_type),
            esc(&r.swhid)
        );
    }
    out.push_str("</links>\n");
    out
}

fn link_from_element(links: &Element) -> Result<LinkRecord, ExposeError> {
    let malformed = |m: &str| ExposeError::Malformed(m.to_string());
    let paper = links.child("paper").ok_or_else(|| malformed("missing paper"))?;
    let paper_id = paper.attr("identifier").ok_or_else(|| malformed("paper without identifier"))?;
    let title = paper.text();
    let mut related = Vec::new();
    for s in links.children_named("software") {
        let id = s
            .child("relatedIdentifier")
            .filter(|e| e.namespace.as_deref() == Some(DATACITE_NS))
            .ok_or_else(|| malformed("software without relatedIdentifier"))?;
        if id.attr("relatedIdentifierType") != Some("SWHID") {
            return Err(malformed("relatedIdentifierType is not SWHID"));
        }
        related.push(RelatedSoftware {
            swhid: id.text(),
            relation_type: id.attr("relationType").ok_or_else(|| malformed("missing relationType"))?.to_string(),
            software_name: s.attr("name").unwrap_or_default().to_string(),
            codemeta_ref: s.attr("codemeta").unwrap_or_default().to_string(),
        });
    }
    Ok(LinkRecord {
        paper_id: paper_id.to_string(),
        paper_title: (!title.is_empty()).then_some(title),
        related,
    })
}

/// Link records carried by an OAI-PMH response (GetRecord or ListRecords).
pub fn links_from_oai_response(xml_bytes: &[u8]) -> Result<Vec<LinkRecord>, ExposeError> {
    let root = xml::parse(xml_bytes)?;
    if root.name != "OAI-PMH" || root.namespace.as_deref() != Some(OAI_NS) {
        return Err(ExposeError::Malformed("not an OAI-PMH response".into()));
    }
    let mut found = Vec::new();
    root.descendants_named("links", &mut found);
    found
        .into_iter()
        .filter(|e| e.namespace.as_deref() == Some(LINKS_NS))
        .map(link_from_element)
        .collect()
}

/// Every SWHID in a link record parses.
pub fn check_swhids(link: &LinkRecord) -> Result<Vec<Swhid>, crate::swhid::SwhidError> {
    link.related.iter().map(|r| r.swhid.parse()).collect()
}
