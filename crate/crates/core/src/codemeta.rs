//! CodeMeta 2.0 descriptions of software assets.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::resolve::AssetCandidate;
use crate::swhid::Swhid;

pub const CODEMETA_CONTEXT: &str = "https://doi.org/10.5063/schema/codemeta-2.0";
const SPDX_BASE: &str = "https://spdx.org/licenses/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid CodeMeta document: {0}")]
pub struct SchemaError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodeMetaRecord {
    pub name: String,
    pub code_repository: Option<Url>,
    pub version: Option<String>,
    pub publisher: Option<String>,
    pub description: Option<String>,
    /// SPDX identifier, e.g. `MIT`.
    pub license: Option<String>,
    pub identifier: Option<Swhid>,
    pub reference_publication: Vec<String>,
    pub keywords: Vec<String>,
}

impl CodeMetaRecord {
    pub fn new(name: impl Into<String>) -> Self {
        CodeMetaRecord {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.name.trim().is_empty() {
            return Err(SchemaError("name is empty".into()));
        }
        Ok(())
    }
}

/// Orders dotted versions numerically (`10.1` > `9.2`). Versions with a
/// non-numeric component sort below numeric ones and compare as text.
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    fn numeric(v: &str) -> Option<Vec<u64>> {
        let v = v.strip_prefix(['v', 'V']).unwrap_or(v);
        v.split('.').map(|p| p.parse().ok()).collect()
    }
    match (numeric(a), numeric(b)) {
        (Some(x), Some(y)) => {
            let len = x.len().max(y.len());
            let pad = |v: &[u64]| (0..len).map(|i| v.get(i).copied().unwrap_or(0)).collect::<Vec<_>>();
            pad(&x).cmp(&pad(&y)).then_with(|| a.cmp(b))
        }
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => a.cmp(b),
    }
}

pub fn build_codemeta(candidate: &AssetCandidate, paper_id: &str) -> CodeMetaRecord {
    let publisher = match candidate.publishers.len() {
        1 => candidate.publishers.first().cloned(),
        _ => None,
    };
    CodeMetaRecord {
        name: candidate.canonical_name.clone(),
        code_repository: candidate.urls.first().cloned(),
        version: candidate.versions.iter().max_by(|a, b| compare_versions(a, b)).cloned(),
        publisher,
        reference_publication: vec![paper_id.to_string()],
        ..Default::default()
    }
}

/// Flat metadata read from a repository's `codemeta.json` or
/// `CITATION.cff`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepoMetadata {
    pub description: Option<String>,
    pub license: Option<String>,
    pub version: Option<String>,
    pub authors: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("enrichment skipped: {reason}")]
pub struct EnrichmentSkipped {
    pub reason: String,
    /// The input record, unchanged.
    pub record: CodeMetaRecord,
}

fn spdx_id(license: &str) -> String {
    let id = license.trim();
    let id = id.strip_prefix(SPDX_BASE).unwrap_or(id);
    let id = id.strip_prefix("http://spdx.org/licenses/").unwrap_or(id);
    id.trim_end_matches(".html").trim_end_matches(".json").to_string()
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim().trim_matches(['"', '\'']).trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn person_name(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => non_empty(s),
        Value::Object(o) => {
            if let Some(Value::String(n)) = o.get("name") {
                return non_empty(n);
            }
            let given = o.get("givenName").and_then(Value::as_str).unwrap_or("");
            let family = o.get("familyName").and_then(Value::as_str).unwrap_or("");
            non_empty(&format!("{given} {family}"))
        }
        _ => None,
    }
}

impl RepoMetadata {
    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        let text = std::str::from_utf8(bytes).map_err(|e| format!("not UTF-8: {e}"))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_key_values(text)
        }
    }

    fn from_json(text: &str) -> Result<Self, String> {
        let doc: Value = serde_json::from_str(text).map_err(|e| format!("bad JSON: {e}"))?;
        let obj = doc.as_object().ok_or("top level is not an object")?;
        let string = |k: &str| obj.get(k).and_then(Value::as_str).and_then(non_empty);
        let license = match obj.get("license") {
            Some(Value::String(s)) => non_empty(s),
            Some(Value::Object(o)) => o.get("@id").or(o.get("url")).and_then(Value::as_str).and_then(non_empty),
            _ => None,
        };
        let authors = match obj.get("author") {
            Some(Value::Array(a)) => a.iter().filter_map(person_name).collect(),
            Some(v) => person_name(v).into_iter().collect(),
            None => Vec::new(),
        };
        Ok(RepoMetadata {
            description: string("description"),
            license: license.map(|l| spdx_id(&l)),
            version: string("version").or_else(|| string("softwareVersion")),
            authors,
        })
    }

    // top-level `key: value` lines as in CITATION.cff; nested author
    // entries contribute their name fields
    fn from_key_values(text: &str) -> Result<Self, String> {
        let mut meta = RepoMetadata::default();
        let mut in_authors = false;
        let mut pending_given: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let nested = line.starts_with([' ', '\t', '-']);
            let entry = trimmed.trim_start_matches('-').trim_start();
            let Some((key, value)) = entry.split_once(':') else {
                return Err(format!("line {}: expected `key: value`", i + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            if nested {
                if in_authors {
                    match key {
                        "given-names" => pending_given = non_empty(value),
                        "family-names" => {
                            let given = pending_given.take().unwrap_or_default();
                            meta.authors.extend(non_empty(&format!("{given} {value}")));
                        }
                        "name" => meta.authors.extend(non_empty(value)),
                        _ => {}
                    }
                }
                continue;
            }
            in_authors = false;
            match key {
                "description" | "abstract" => meta.description = meta.description.or(non_empty(value)),
                "license" => meta.license = non_empty(value).map(|l| spdx_id(&l)),
                "version" => meta.version = non_empty(value),
                "authors" | "author" => {
                    in_authors = true;
                    meta.authors.extend(non_empty(value));
                }
                _ => {}
            }
        }
        Ok(meta)
    }
}

/// Fills empty fields from repository metadata. Extracted values win,
/// except description and license, which the repository always supplies
/// when it has them.
pub fn enrich(record: &CodeMetaRecord, meta: &RepoMetadata) -> CodeMetaRecord {
    let mut out = record.clone();
    if meta.description.is_some() {
        out.description = meta.description.clone();
    }
    if meta.license.is_some() {
        out.license = meta.license.clone();
    }
    if out.version.is_none() {
        out.version = meta.version.clone();
    }
    out
}

pub fn enrich_from_repo(record: &CodeMetaRecord, repo_doc: &[u8]) -> Result<CodeMetaRecord, EnrichmentSkipped> {
    match RepoMetadata::parse(repo_doc) {
        Ok(meta) => Ok(enrich(record, &meta)),
        Err(reason) => Err(EnrichmentSkipped {
            reason,
            record: record.clone(),
        }),
    }
}

#[derive(Serialize)]
struct Organization<'a> {
    #[serde(rename = "@type")]
    kind: &'static str,
    name: &'a str,
}

// field order is the on-disk key order
#[derive(Serialize)]
struct JsonLd<'a> {
    #[serde(rename = "@context")]
    context: &'static str,
    #[serde(rename = "@type")]
    kind: &'static str,
    #[serde(rename = "codeRepository", skip_serializing_if = "Option::is_none")]
    code_repository: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    identifier: Option<String>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    keywords: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    license: Option<String>,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    publisher: Option<Organization<'a>>,
    #[serde(rename = "referencePublication", skip_serializing_if = "<[_]>::is_empty")]
    reference_publication: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    version: Option<&'a str>,
}

/// Pretty-printed JSON-LD with keys `@context`, `@type`, then the
/// properties in alphabetical order. Empty fields are omitted.
pub fn serialize_jsonld(record: &CodeMetaRecord) -> Result<Vec<u8>, SchemaError> {
    record.validate()?;
    let doc = JsonLd {
        context: CODEMETA_CONTEXT,
        kind: "SoftwareSourceCode",
        code_repository: record.code_repository.as_ref().map(Url::as_str),
        description: record.description.as_deref(),
        identifier: record.identifier.as_ref().map(Swhid::to_string),
        keywords: &record.keywords,
        license: record.license.as_ref().map(|l| format!("{SPDX_BASE}{l}")),
        name: &record.name,
        publisher: record.publisher.as_deref().map(|name| Organization {
            kind: "Organization",
            name,
        }),
        reference_publication: &record.reference_publication,
        version: record.version.as_deref(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| SchemaError(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn string_list(v: Option<&Value>, key: &str) -> Result<Vec<String>, SchemaError> {
    match v {
        None => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| SchemaError(format!("{key} entries must be strings")))
            })
            .collect(),
        Some(_) => Err(SchemaError(format!("{key} must be a string or list"))),
    }
}

pub fn parse_jsonld(bytes: &[u8]) -> Result<CodeMetaRecord, SchemaError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| SchemaError(e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| SchemaError("top level is not an object".into()))?;
    match obj.get("@context") {
        Some(Value::String(c)) if c == CODEMETA_CONTEXT => {}
        Some(other) => return Err(SchemaError(format!("unsupported @context {other}"))),
        None => return Err(SchemaError("missing @context".into())),
    }
    if let Some(t) = obj.get("@type").filter(|t| t.as_str() != Some("SoftwareSourceCode")) {
        return Err(SchemaError(format!("unexpected @type {t}")));
    }
    let string = |key: &str| -> Result<Option<String>, SchemaError> {
        match obj.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(SchemaError(format!("{key} must be a string"))),
        }
    };
    let name = string("name")?.ok_or_else(|| SchemaError("missing name".into()))?;
    let code_repository = string("codeRepository")?
        .map(|u| Url::parse(&u).map_err(|e| SchemaError(format!("codeRepository: {e}"))))
        .transpose()?;
    let identifier = string("identifier")?
        .map(|s| s.parse::<Swhid>().map_err(|e| SchemaError(format!("identifier: {e}"))))
        .transpose()?;
    let publisher = match obj.get("publisher") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Object(o)) => Some(
            o.get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| SchemaError("publisher without name".into()))?
                .to_string(),
        ),
        Some(_) => return Err(SchemaError("publisher must be a string or object".into())),
    };
    let record = CodeMetaRecord {
        name,
        code_repository,
        version: string("version")?,
        publisher,
        description: string("description")?,
        license: string("license")?.map(|l| spdx_id(&l)),
        identifier,
        reference_publication: string_list(obj.get("referencePublication"), "referencePublication")?,
        keywords: string_list(obj.get("keywords"), "keywords")?,
    };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swhid::content_swhid;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn candidate(name: &str, urls: &[&str], versions: &[&str], publishers: &[&str]) -> AssetCandidate {
        AssetCandidate {
            candidate_id: "c".into(),
            canonical_name: name.into(),
            aliases: [name.to_string()].into(),
            urls: urls.iter().map(|u| Url::parse(u).unwrap()).collect(),
            publishers: publishers.iter().map(|p| p.to_string()).collect(),
            versions: versions.iter().map(|v| v.to_string()).collect(),
            member_groups: ["g".to_string()].into(),
            catalog_match: None,
        }
    }

    #[test]
    fn build_from_candidate() {
        let r = build_codemeta(&candidate("SPSS", &[], &["21"], &[]), "paper-1");
        assert_eq!(r.name, "SPSS");
        assert_eq!(r.version.as_deref(), Some("21"));
        assert!(r.code_repository.is_none());
        assert_eq!(r.reference_publication, ["paper-1"]);

        let r = build_codemeta(
            &candidate("X", &["https://b.example/", "https://a.example/x"], &["9.2", "10.1", "v10.0"], &["A", "B"]),
            "p",
        );
        assert_eq!(r.code_repository.unwrap().as_str(), "https://a.example/x");
        assert_eq!(r.version.as_deref(), Some("10.1"));
        assert!(r.publisher.is_none());

        let minimal = build_codemeta(&candidate("R", &[], &[], &[]), "p");
        assert_eq!(minimal, CodeMetaRecord {
            name: "R".into(),
            reference_publication: vec!["p".into()],
            ..Default::default()
        });
    }

    #[test]
    fn version_order() {
        assert_eq!(compare_versions("10.1", "9.2"), Ordering::Greater);
        assert_eq!(compare_versions("1.2", "1.2.0"), Ordering::Less);
        assert_eq!(compare_versions("beta", "1"), Ordering::Less);
    }

    #[test]
    fn enrichment_precedence() {
        let mut r = CodeMetaRecord::new("SPSS");
        r.version = Some("21".into());
        r.description = Some("from paper".into());
        let e = enrich_from_repo(&r, b"license: MIT\nversion: 22\ndescription: Statistics\n").unwrap();
        assert_eq!(e.license.as_deref(), Some("MIT"));
        assert_eq!(e.version.as_deref(), Some("21"));
        assert_eq!(e.description.as_deref(), Some("Statistics"));
        assert_eq!(enrich_from_repo(&r, b"").unwrap(), r);
    }

    #[test]
    fn enrichment_from_codemeta_json() {
        let doc = br#"{"@context": "https://w3id.org/codemeta/3.0", "license": "https://spdx.org/licenses/Apache-2.0",
                       "version": "1.4", "author": [{"givenName": "Ada", "familyName": "L"}]}"#;
        let meta = RepoMetadata::parse(doc).unwrap();
        assert_eq!(meta.license.as_deref(), Some("Apache-2.0"));
        assert_eq!(meta.authors, ["Ada L"]);
        let e = enrich_from_repo(&CodeMetaRecord::new("x"), doc).unwrap();
        assert_eq!(e.version.as_deref(), Some("1.4"));
    }

    #[test]
    fn enrichment_from_citation_cff() {
        let doc = b"cff-version: 1.2.0\ntitle: QuPath\nauthors:\n  - family-names: Bankhead\n    given-names: Peter\n  - name: \"The QuPath team\"\nlicense: GPL-3.0\nabstract: Bioimage analysis\n";
        let meta = RepoMetadata::parse(doc).unwrap();
        assert_eq!(meta.license.as_deref(), Some("GPL-3.0"));
        assert_eq!(meta.description.as_deref(), Some("Bioimage analysis"));
        assert_eq!(meta.authors.len(), 2);
    }

    #[test]
    fn unparseable_repo_doc_is_skipped() {
        let r = CodeMetaRecord::new("x");
        let err = enrich_from_repo(&r, b"{not json").unwrap_err();
        assert_eq!(err.record, r);
        assert!(enrich_from_repo(&r, b"just words\n").is_err());
        assert!(enrich_from_repo(&r, &[0xff, 0xfe]).is_err());
    }

    #[test]
    fn jsonld_layout() {
        let mut r = CodeMetaRecord::new("SPSS");
        r.identifier = Some("swh:1:cnt:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391".parse().unwrap());
        r.license = Some("MIT".into());
        r.publisher = Some("IBM".into());
        r.reference_publication = vec!["oai:x:1".into()];
        let text = String::from_utf8(serialize_jsonld(&r).unwrap()).unwrap();
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        assert_eq!(keys, ["@context", "@type", "identifier", "license", "name", "publisher", "referencePublication"]);
        assert!(text.contains("\"swh:1:cnt:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391\""));
        assert!(text.contains("\"https://spdx.org/licenses/MIT\""));
        assert_eq!(parse_jsonld(text.as_bytes()).unwrap(), r);
    }

    #[test]
    fn schema_errors() {
        assert!(parse_jsonld(br#"{"@context": "https://doi.org/10.5063/schema/codemeta-2.0"}"#).is_err());
        assert!(parse_jsonld(br#"{"name": "x"}"#).is_err());
        assert!(parse_jsonld(br#"{"@context": "https://doi.org/10.5063/schema/codemeta-2.0", "name": "x", "identifier": "swh:1:cnt:zz"}"#).is_err());
        assert!(parse_jsonld(b"[]").is_err());
        assert!(serialize_jsonld(&CodeMetaRecord::new(" ")).is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 ,.\"\\\\é-]{1,20}"
    }

    prop_compose! {
        fn arb_record()(
            name in "[A-Za-z][A-Za-z0-9 +.-]{0,15}",
            repo in prop::option::of("[a-z]{1,8}"),
            version in prop::option::of("[0-9]{1,2}(\\.[0-9]{1,2}){0,2}"),
            publisher in prop::option::of(text()),
            description in prop::option::of(text()),
            license in prop::option::of(prop::sample::select(vec!["MIT", "Apache-2.0", "GPL-3.0-only", "BSD-3-Clause"])),
            content in prop::option::of(prop::collection::vec(any::<u8>(), 0..16)),
            refs in prop::collection::vec("oai:[a-z]{1,5}:[0-9]{1,3}", 0..3),
            keywords in prop::collection::vec(text(), 0..3),
        ) -> CodeMetaRecord {
            CodeMetaRecord {
                name,
                code_repository: repo.map(|r| Url::parse(&format!("https://{r}.example/{r}")).unwrap()),
                version,
                publisher,
                description,
                license: license.map(str::to_string),
                identifier: content.map(|c| content_swhid(&c)),
                reference_publication: refs,
                keywords,
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip(r in arb_record()) {
            let bytes = serialize_jsonld(&r).unwrap();
            let back = parse_jsonld(&bytes).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(serialize_jsonld(&back).unwrap(), bytes);
        }

        #[test]
        fn enrichment_keeps_extracted_fields(r in arb_record(), v in "[0-9]\\.[0-9]", lic in "[A-Z]{3}") {
            let meta = RepoMetadata { description: None, license: Some(lic), version: Some(v), authors: vec![] };
            let e = enrich(&r, &meta);
            prop_assert_eq!(&e.name, &r.name);
            prop_assert_eq!(&e.code_repository, &r.code_repository);
            prop_assert_eq!(&e.publisher, &r.publisher);
            prop_assert_eq!(&e.identifier, &r.identifier);
            prop_assert_eq!(&e.description, &r.description);
            if r.version.is_some() {
                prop_assert_eq!(&e.version, &r.version);
            }
            let fields: BTreeSet<_> = e.keywords.iter().collect();
            prop_assert_eq!(fields, r.keywords.iter().collect());
        }
    }
}
