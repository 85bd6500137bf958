//! Harvest → full text → extraction → disambiguation → lifecycle records.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;

use serde::Serialize;
use softlink_core::docmodel::{DocError, Document, from_plaintext, from_tei};
use softlink_core::extract::{
    ExtractConfig, Gazetteer, MentionGroup, SoftwareMention, attach_attributes, extract_mentions,
};
use softlink_core::harvest::{HarvestRecord, HttpFetcher, MediaType, fetch_fulltext, harvest_all};
use softlink_core::lifecycle::{AssetSnapshot, ContextSpan, LifecycleEngine, MentionContext};
use softlink_core::resolve::{AssetCandidate, Catalog, cluster, resolve};
use thiserror::Error;

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Harvest,
    Fetch,
    Parse,
    Extract,
    Resolve,
    Lifecycle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Harvest => "harvest",
            Stage::Fetch => "fetch",
            Stage::Parse => "parse",
            Stage::Extract => "extract",
            Stage::Resolve => "resolve",
            Stage::Lifecycle => "lifecycle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedDocument {
    pub oai_identifier: String,
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineReport {
    pub harvest_requests: u32,
    pub harvest_pages: u32,
    pub records_harvested: usize,
    pub documents_processed: usize,
    pub documents_with_mentions: usize,
    pub documents_skipped: usize,
    pub skipped: Vec<SkippedDocument>,
    pub mentions: usize,
    pub groups: usize,
    pub candidates: usize,
    pub catalog_matches: usize,
    pub records_created: usize,
    pub records_existing: usize,
}

pub fn load_gazetteer(cfg: &Config) -> Result<Gazetteer, PipelineError> {
    let path = &cfg.extract.gazetteer;
    let text = fs::read_to_string(path).map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
    Gazetteer::from_tsv(&text).map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))
}

pub fn load_catalog(cfg: &Config) -> Result<Option<Catalog>, PipelineError> {
    let Some(path) = &cfg.resolve.catalog else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
    Catalog::from_tsv(&text)
        .map(Some)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))
}

/// Parses a full text according to its media type.
pub fn parse_fulltext(bytes: &[u8], media: MediaType, doc_id: &str) -> Result<Document, DocError> {
    if media.is_xml() {
        from_tei(bytes, doc_id)
    } else {
        let text = String::from_utf8_lossy(bytes);
        from_plaintext(&text, doc_id)
    }
}

/// Parses a local file, typed by extension (`.xml` is TEI, anything else
/// plain text).
pub fn parse_file(path: &std::path::Path, doc_id: &str) -> Result<Document, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let media = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
        MediaType::TeiXml
    } else {
        MediaType::PlainText
    };
    parse_fulltext(&bytes, media, doc_id).map_err(|e| format!("{}: {e}", path.display()))
}

/// Extraction output for one document, with what the lifecycle needs to
/// show each group to its author.
#[derive(Debug, Clone)]
pub struct ProcessedDocument {
    pub doc_id: String,
    pub title: Option<String>,
    pub contact: Option<String>,
    pub mentions: Vec<SoftwareMention>,
    pub groups: Vec<MentionGroup>,
    sentences: HashMap<usize, String>,
}

pub fn process_document(doc: &Document, gaz: &Gazetteer, cfg: &ExtractConfig) -> ProcessedDocument {
    let mentions = extract_mentions(doc, gaz, cfg);
    let groups = attach_attributes(&mentions, doc);
    let sentences = groups
        .iter()
        .filter_map(|g| {
            let i = g.name.sentence_index;
            doc.sentence_text(i).map(|s| (i, s.to_string()))
        })
        .collect();
    ProcessedDocument {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        contact: doc.author_emails.first().cloned(),
        mentions,
        groups,
        sentences,
    }
}

impl ProcessedDocument {
    /// Sentences holding the given groups, with every member mention's
    /// offsets made relative to its sentence.
    fn contexts<'a>(&self, groups: impl IntoIterator<Item = &'a MentionGroup>, doc: &Document) -> Vec<MentionContext> {
        let mut by_sentence: BTreeMap<usize, BTreeSet<(usize, usize, ContextKey)>> = BTreeMap::new();
        for g in groups {
            for m in g.members() {
                let Some(start) = doc.sentences.get(m.sentence_index).map(|s| s.start_byte) else {
                    continue;
                };
                by_sentence.entry(m.sentence_index).or_default().insert((
                    m.span.start_byte - start,
                    m.span.end_byte - start,
                    ContextKey(m.component, m.surface.clone()),
                ));
            }
        }
        by_sentence
            .into_iter()
            .filter_map(|(i, spans)| {
                Some(MentionContext {
                    sentence: self.sentences.get(&i)?.clone(),
                    mentions: spans
                        .into_iter()
                        .map(|(start_byte, end_byte, ContextKey(component, surface))| ContextSpan {
                            component,
                            start_byte,
                            end_byte,
                            surface,
                        })
                        .collect(),
                })
            })
            .collect()
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct ContextKey(softlink_core::extract::Component, String);

/// Runs the whole pipeline against the configured repository and creates
/// (or finds) one lifecycle record per paper and software candidate.
/// Documents that cannot be fetched or parsed are skipped and reported.
pub fn run_pipeline(cfg: &Config, http: &dyn HttpFetcher, engine: &LifecycleEngine) -> Result<PipelineReport, PipelineError> {
    let gaz = load_gazetteer(cfg)?;
    let catalog = load_catalog(cfg)?;
    let endpoint = cfg.endpoint().map_err(|e| PipelineError::new(Stage::Config, e))?;
    let extract_cfg = cfg.extract_config();
    let mut report = PipelineReport::default();

    let mut harvest = harvest_all(&endpoint, http).with_retry_policy(cfg.retry_policy());
    let mut records: Vec<HarvestRecord> = Vec::new();
    for item in harvest.by_ref() {
        records.push(item.map_err(|e| PipelineError::new(Stage::Harvest, e))?);
    }
    report.harvest_requests = harvest.requests();
    report.harvest_pages = harvest.pages();
    report.records_harvested = records.len();
    log::info!("harvested {} records in {} pages", records.len(), report.harvest_pages);

    let mut processed: Vec<(ProcessedDocument, Document)> = Vec::new();
    for record in &records {
        let skip = |stage, reason: String| SkippedDocument {
            oai_identifier: record.oai_identifier.clone(),
            stage,
            reason,
        };
        let (bytes, media) = match fetch_fulltext(record, http) {
            Ok(ok) => ok,
            Err(e) => {
                log::warn!("skipping {}: {e}", record.oai_identifier);
                report.skipped.push(skip(Stage::Fetch, e.to_string()));
                continue;
            }
        };
        let mut doc = match parse_fulltext(&bytes, media, &record.oai_identifier) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("skipping {}: {e}", record.oai_identifier);
                report.skipped.push(skip(Stage::Parse, e.to_string()));
                continue;
            }
        };
        if doc.title.is_none() && !record.title.is_empty() {
            doc.title = Some(record.title.clone());
        }
        let p = process_document(&doc, &gaz, &extract_cfg);
        report.documents_processed += 1;
        report.mentions += p.mentions.len();
        report.groups += p.groups.len();
        if !p.mentions.is_empty() {
            report.documents_with_mentions += 1;
        }
        processed.push((p, doc));
    }
    report.documents_skipped = report.skipped.len();

    let all_groups: Vec<MentionGroup> = processed.iter().flat_map(|(p, _)| p.groups.iter().cloned()).collect();
    let resolve_cfg = cfg.resolve_config();
    let candidates = match &catalog {
        Some(catalog) => resolve(&all_groups, catalog, &resolve_cfg),
        None => cluster(&all_groups, &resolve_cfg),
    }
    .map_err(|e| PipelineError::new(Stage::Resolve, e))?;
    report.candidates = candidates.len();
    report.catalog_matches = candidates.iter().filter(|c| c.catalog_match.is_some()).count();

    let group_index: HashMap<&str, (usize, &MentionGroup)> = processed
        .iter()
        .enumerate()
        .flat_map(|(i, (p, _))| p.groups.iter().map(move |g| (g.group_id.as_str(), (i, g))))
        .collect();
    for candidate in &candidates {
        for (paper, snapshot) in snapshots(candidate, &group_index, &processed) {
            let (_, created) = engine
                .create_record(&paper, snapshot)
                .map_err(|e| PipelineError::new(Stage::Lifecycle, e))?;
            if created {
                report.records_created += 1;
            } else {
                report.records_existing += 1;
            }
        }
    }
    log::info!(
        "{} candidates, {} new lifecycle records ({} already known)",
        report.candidates,
        report.records_created,
        report.records_existing
    );
    Ok(report)
}

fn snapshots(
    candidate: &AssetCandidate,
    group_index: &HashMap<&str, (usize, &MentionGroup)>,
    processed: &[(ProcessedDocument, Document)],
) -> Vec<(String, AssetSnapshot)> {
    let mut by_doc: BTreeMap<usize, Vec<&MentionGroup>> = BTreeMap::new();
    for gid in &candidate.member_groups {
        if let Some((i, g)) = group_index.get(gid.as_str()) {
            by_doc.entry(*i).or_default().push(g);
        }
    }
    by_doc
        .into_iter()
        .map(|(i, groups)| {
            let (p, doc) = &processed[i];
            let snapshot = AssetSnapshot {
                candidate: candidate.clone(),
                paper_title: p.title.clone(),
                contact: p.contact.clone(),
                contexts: p.contexts(groups, doc),
            };
            (p.doc_id.clone(), snapshot)
        })
        .collect()
}
