//! Cross-document deduplication of mention groups into asset candidates.
//!
//! Each group or candidate is an entity node in a bipartite graph whose
//! attribute nodes are normalized URLs and publishers. Similarity mixes name
//! edit distance with attribute-neighbourhood overlap; candidates are the
//! single-linkage clusters above a threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::extract::MentionGroup;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolveError {
    #[error("surface `{0}` has no name left after normalization")]
    NotNormalizable(String),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("catalog line {line}: {reason}")]
    Catalog { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_version_like(token: &str) -> bool {
    let digits = token.strip_prefix(['v', 'V']).unwrap_or(token);
    !digits.is_empty()
        && digits.split('.').all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_digit()))
}

/// Lowercases, strips trademark signs and punctuation (keeping internal
/// hyphens), drops version tokens along with a dangling "version"/"v"
/// keyword, and collapses whitespace.
pub fn normalize_name(surface: &str) -> Result<CanonicalKey, ResolveError> {
    let cleaned: String = surface
        .chars()
        .filter(|c| !matches!(c, '™' | '®' | '©' | '℠'))
        .collect();
    let mut words: Vec<String> = Vec::new();
    for raw in cleaned.split_whitespace() {
        let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() || is_version_like(trimmed) {
            continue;
        }
        let word: String = trimmed
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '-')
            .flat_map(char::to_lowercase)
            .collect();
        words.push(word);
    }
    while words.last().is_some_and(|w| w == "version" || w == "v") && words.len() > 1 {
        words.pop();
    }
    if words.is_empty() {
        return Err(ResolveError::NotNormalizable(surface.to_string()));
    }
    Ok(CanonicalKey(words.join(" ")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttributeNode {
    Url(String),
    Publisher(String),
}

impl AttributeNode {
    pub fn url(url: &str) -> Self {
        AttributeNode::Url(url.trim().trim_end_matches('/').to_lowercase())
    }

    pub fn publisher(name: &str) -> Self {
        AttributeNode::Publisher(name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
    }
}

/// Anything that can sit on the entity side of the attribute graph.
pub trait Entity {
    fn canonical_key(&self) -> Result<CanonicalKey, ResolveError>;
    fn attribute_nodes(&self) -> BTreeSet<AttributeNode>;
}

impl Entity for MentionGroup {
    fn canonical_key(&self) -> Result<CanonicalKey, ResolveError> {
        normalize_name(&self.name.surface)
    }

    fn attribute_nodes(&self) -> BTreeSet<AttributeNode> {
        let url = self.url.iter().map(|m| AttributeNode::url(&m.surface));
        let publisher = self.publisher.iter().map(|m| AttributeNode::publisher(&m.surface));
        url.chain(publisher).collect()
    }
}

impl Entity for AssetCandidate {
    fn canonical_key(&self) -> Result<CanonicalKey, ResolveError> {
        normalize_name(&self.canonical_name)
    }

    fn attribute_nodes(&self) -> BTreeSet<AttributeNode> {
        let urls = self.urls.iter().map(|u| AttributeNode::url(u.as_str()));
        let publishers = self.publishers.iter().map(|p| AttributeNode::publisher(p));
        urls.chain(publishers).collect()
    }
}

impl Entity for CatalogEntry {
    fn canonical_key(&self) -> Result<CanonicalKey, ResolveError> {
        normalize_name(&self.name)
    }

    fn attribute_nodes(&self) -> BTreeSet<AttributeNode> {
        std::iter::once(AttributeNode::url(self.url.as_str()))
            .chain(self.publisher.iter().map(|p| AttributeNode::publisher(p)))
            .collect()
    }
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ca == cb {
                diagonal
            } else {
                1 + diagonal.min(above).min(row[j])
            };
            diagonal = above;
        }
    }
    row[b.len()]
}

pub fn name_similarity(a: &CanonicalKey, b: &CanonicalKey) -> f64 {
    let longest = a.0.chars().count().max(b.0.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a.0, &b.0) as f64 / longest as f64
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolveConfig {
    pub threshold: f64,
    pub catalog_threshold: f64,
    pub name_weight: f64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        ResolveConfig {
            threshold: 0.75,
            catalog_threshold: 0.8,
            name_weight: 0.6,
        }
    }
}

impl ResolveConfig {
    pub fn validate(&self) -> Result<(), ResolveError> {
        for t in [self.threshold, self.catalog_threshold, self.name_weight] {
            if !(0.0..=1.0).contains(&t) {
                return Err(ResolveError::BadThreshold(t));
            }
        }
        Ok(())
    }
}

struct Projection {
    key: CanonicalKey,
    attrs: BTreeSet<AttributeNode>,
}

impl Projection {
    fn of(entity: &impl Entity) -> Result<Self, ResolveError> {
        Ok(Projection {
            key: entity.canonical_key()?,
            attrs: entity.attribute_nodes(),
        })
    }

    fn score(&self, other: &Projection, name_weight: f64) -> f64 {
        let name = name_similarity(&self.key, &other.key);
        if self.attrs.is_empty() && other.attrs.is_empty() {
            return name;
        }
        name_weight * name + (1.0 - name_weight) * jaccard(&self.attrs, &other.attrs)
    }
}

/// Weighted name/attribute similarity with the default weights. Falls back
/// to name similarity alone when neither side has attributes.
pub fn similarity(a: &impl Entity, b: &impl Entity) -> Result<f64, ResolveError> {
    similarity_with(a, b, &ResolveConfig::default())
}

pub fn similarity_with(a: &impl Entity, b: &impl Entity, cfg: &ResolveConfig) -> Result<f64, ResolveError> {
    Ok(Projection::of(a)?.score(&Projection::of(b)?, cfg.name_weight))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub url: Url,
    pub publisher: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogMatch {
    pub entry: CatalogEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCandidate {
    pub candidate_id: String,
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
    pub urls: BTreeSet<Url>,
    pub publishers: BTreeSet<String>,
    pub versions: BTreeSet<String>,
    pub member_groups: BTreeSet<String>,
    pub catalog_match: Option<CatalogMatch>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes the root so the result is order-stable
            let (root, child) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[child] = root;
        }
    }
}

fn candidate_id(members: &BTreeSet<String>) -> String {
    let mut hasher = Sha256::new();
    for m in members {
        hasher.update(m.as_bytes());
        hasher.update(b"\n");
    }
    format!("cand-{}", hex::encode(&hasher.finalize()[..8]))
}

fn most_frequent(surfaces: &[&str]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in surfaces {
        *counts.entry(s).or_default() += 1;
    }
    // lexicographic iteration: the first surface wins ties
    let best = counts.iter().fold(None::<(&str, usize)>, |best, (s, n)| match best {
        Some((_, m)) if m >= *n => best,
        _ => Some((s, *n)),
    });
    best.map(|(s, _)| s.to_string()).unwrap_or_default()
}

/// Single-linkage clustering of mention groups. Groups whose name cannot be
/// normalized are skipped with a warning. Output is sorted by canonical name
/// and independent of input order.
pub fn cluster(groups: &[MentionGroup], cfg: &ResolveConfig) -> Result<Vec<AssetCandidate>, ResolveError> {
    cfg.validate()?;
    let mut sorted: Vec<(&MentionGroup, Projection)> = Vec::new();
    for g in groups {
        match Projection::of(g) {
            Ok(p) => sorted.push((g, p)),
            Err(e) => log::warn!("skipping group {}: {e}", g.group_id),
        }
    }
    sorted.sort_by(|a, b| a.0.group_id.cmp(&b.0.group_id));

    let mut uf = UnionFind::new(sorted.len());
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if sorted[i].1.score(&sorted[j].1, cfg.name_weight) >= cfg.threshold {
                uf.union(i, j);
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<&MentionGroup>> = BTreeMap::new();
    for i in 0..sorted.len() {
        let root = uf.find(i);
        clusters.entry(root).or_default().push(sorted[i].0);
    }
    let mut out: Vec<AssetCandidate> = clusters.into_values().map(|members| merge(&members)).collect();
    out.sort_by(|a, b| (&a.canonical_name, &a.candidate_id).cmp(&(&b.canonical_name, &b.candidate_id)));
    Ok(out)
}

fn merge(members: &[&MentionGroup]) -> AssetCandidate {
    let surfaces: Vec<&str> = members.iter().map(|g| g.name.surface.as_str()).collect();
    let member_groups: BTreeSet<String> = members.iter().map(|g| g.group_id.clone()).collect();
    AssetCandidate {
        candidate_id: candidate_id(&member_groups),
        canonical_name: most_frequent(&surfaces),
        aliases: surfaces.iter().map(|s| s.to_string()).collect(),
        urls: members
            .iter()
            .filter_map(|g| g.url.as_ref())
            .filter_map(|m| Url::parse(&m.surface).ok())
            .collect(),
        publishers: members
            .iter()
            .filter_map(|g| g.publisher.as_ref())
            .map(|m| m.surface.clone())
            .collect(),
        versions: members
            .iter()
            .filter_map(|g| g.version.as_ref())
            .map(|m| m.surface.clone())
            .collect(),
        member_groups,
        catalog_match: None,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, ResolveError> {
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.url.as_str()) {
                return Err(ResolveError::Catalog {
                    line: i + 1,
                    reason: format!("duplicate url {}", e.url),
                });
            }
        }
        Ok(Catalog { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// TSV with columns `name`, `url`, `publisher`; an optional header row
    /// and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, ResolveError> {
        let mut entries = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("name\t")) {
                continue;
            }
            let err = |reason: String| ResolveError::Catalog { line: line_no, reason };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(err(format!("expected 2 or 3 columns, found {}", cols.len())));
            }
            if cols[0].is_empty() {
                return Err(err("empty name".into()));
            }
            let url = Url::parse(cols[1]).map_err(|e| err(format!("bad url `{}`: {e}", cols[1])))?;
            if let Some(first) = seen.insert(url.to_string(), line_no) {
                return Err(err(format!("url {url} already listed on line {first}")));
            }
            entries.push(CatalogEntry {
                name: cols[0].to_string(),
                url,
                publisher: cols.get(2).filter(|p| !p.is_empty()).map(|p| p.to_string()),
            });
        }
        Ok(Catalog { entries })
    }
}

/// Best catalog entry for a candidate, accepted at or above the catalog
/// threshold. Equal scores go to the entry with the smaller url.
pub fn align_to_catalog(candidate: &AssetCandidate, catalog: &Catalog, cfg: &ResolveConfig) -> Option<CatalogMatch> {
    let projected = Projection::of(candidate).ok()?;
    let mut best: Option<(&CatalogEntry, f64)> = None;
    for entry in &catalog.entries {
        let Ok(p) = Projection::of(entry) else {
            continue;
        };
        let score = projected.score(&p, cfg.name_weight);
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && entry.url.as_str() < b.url.as_str()),
        };
        if better {
            best = Some((entry, score));
        }
    }
    best.filter(|(_, s)| *s >= cfg.catalog_threshold).map(|(entry, score)| CatalogMatch {
        entry: entry.clone(),
        score,
    })
}

/// Clusters, then aligns every candidate against the catalog.
pub fn resolve(
    groups: &[MentionGroup],
    catalog: &Catalog,
    cfg: &ResolveConfig,
) -> Result<Vec<AssetCandidate>, ResolveError> {
    let mut candidates = cluster(groups, cfg)?;
    for c in &mut candidates {
        c.catalog_match = align_to_catalog(c, catalog, cfg);
    }
    Ok(candidates)
}

pub fn write_candidates_jsonl(mut writer: impl Write, candidates: &[AssetCandidate]) -> std::io::Result<()> {
    for c in candidates {
        serde_json::to_writer(&mut writer, c)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_candidates_jsonl(reader: impl BufRead) -> std::io::Result<Vec<AssetCandidate>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docmodel::Span;
    use crate::extract::{Component, MentionStyle, SoftwareMention};
    use proptest::prelude::*;

    fn mention(component: Component, surface: &str) -> SoftwareMention {
        SoftwareMention {
            mention_id: String::new(),
            doc_id: "d".into(),
            component,
            span: Span::new(0, surface.len()),
            surface: surface.into(),
            sentence_index: 0,
            confidence: 1.0,
        }
    }

    fn group(id: &str, name: &str, url: Option<&str>, publisher: Option<&str>, version: Option<&str>) -> MentionGroup {
        MentionGroup {
            group_id: id.into(),
            name: mention(Component::SoftwareName, name),
            version: version.map(|v| mention(Component::Version, v)),
            publisher: publisher.map(|p| mention(Component::Publisher, p)),
            url: url.map(|u| mention(Component::Url, u)),
            style: MentionStyle::Informal,
        }
    }

    // textbook recursive definition, exponential but fine for short strings
    fn lev_oracle(a: &[char], b: &[char]) -> usize {
        match (a, b) {
            ([], _) => b.len(),
            (_, []) => a.len(),
            ([x, ra @ ..], [y, rb @ ..]) => {
                let sub = lev_oracle(ra, rb) + usize::from(x != y);
                sub.min(lev_oracle(ra, b) + 1).min(lev_oracle(a, rb) + 1)
            }
        }
    }

    fn key(s: &str) -> CanonicalKey {
        normalize_name(s).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(key("SPSS 21.0").as_str(), "spss");
        assert_eq!(key("R").as_str(), "r");
        assert_eq!(key("  GraphPad Prism® ").as_str(), "graphpad prism");
        assert_eq!(key("scikit-learn").as_str(), "scikit-learn");
        assert_eq!(key("SPSS version 21").as_str(), "spss");
        assert_eq!(key("ImageJ v1.53").as_str(), "imagej");
        assert_eq!(key("Node.js").as_str(), "nodejs");
        assert_eq!(key("3D Slicer").as_str(), "3d slicer");
        assert!(matches!(normalize_name(" 2.0 "), Err(ResolveError::NotNormalizable(_))));
        assert!(normalize_name("®").is_err());
    }

    #[test]
    fn levenshtein_matches_oracle() {
        for (a, b) in [("spss", "stata"), ("kitten", "sitting"), ("", "abc"), ("numpy", "scipy"), ("é", "e")] {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            assert_eq!(levenshtein(a, b), lev_oracle(&ca, &cb), "{a} / {b}");
        }
    }

    #[test]
    fn spss_vs_stata() {
        let a = group("a", "SPSS", None, Some("IBM"), None);
        let b = group("b", "Stata", None, Some("StataCorp"), None);
        let d = lev_oracle(&['s', 'p', 's', 's'], &['s', 't', 'a', 't', 'a']);
        let expected = 0.6 * (1.0 - d as f64 / 5.0);
        let got = similarity(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.12).abs() < 1e-12);
    }

    #[test]
    fn similarity_fallbacks() {
        let a = group("a", "SPSS", Some("https://ibm.com/spss"), Some("IBM"), None);
        assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        let plain = group("b", "SPSS", None, None, Some("21"));
        assert_eq!(similarity(&plain, &group("c", "spss", None, None, None)).unwrap(), 1.0);
        // one side has attributes: no fallback
        assert!((similarity(&a, &plain).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cluster_merges_attributes() {
        let groups = vec![
            group("d1#g0", "GraphPad Prism", Some("https://www.graphpad.com/"), Some("GraphPad Software"), Some("9")),
            group("d2#g0", "GraphPad Prism", Some("https://www.graphpad.com"), None, Some("8")),
        ];
        // name 1.0, attrs {url} vs {url, publisher}: 0.6 + 0.4 * 1/2 = 0.8
        assert!((similarity(&groups[0], &groups[1]).unwrap() - 0.8).abs() < 1e-12);
        let cands = cluster(&groups, &ResolveConfig::default()).unwrap();
        assert_eq!(cands.len(), 1);
        let c = &cands[0];
        assert_eq!(c.member_groups.len(), 2);
        assert_eq!(c.versions, ["8".to_string(), "9".to_string()].into());
        assert_eq!(c.publishers.len(), 1);
        assert_eq!(c.canonical_name, "GraphPad Prism");
    }

    #[test]
    fn single_linkage_is_transitive() {
        // names only: sim(ab) = 1 - 1/5, sim(bc) = 1 - 1/5, sim(ac) = 1 - 2/5
        let groups = vec![
            group("a", "abcde", None, None, None),
            group("b", "abcdx", None, None, None),
            group("c", "abcyx", None, None, None),
        ];
        assert!(similarity(&groups[0], &groups[2]).unwrap() < 0.75);
        let cands = cluster(&groups, &ResolveConfig::default()).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].member_groups.len(), 3);
    }

    #[test]
    fn canonical_name_ties_are_lexicographic() {
        let groups = vec![group("a", "spss", None, None, None), group("b", "SPSS", None, None, None)];
        let cands = cluster(&groups, &ResolveConfig::default()).unwrap();
        assert_eq!(cands[0].canonical_name, "SPSS");
        let groups = vec![
            group("a", "spss", None, None, None),
            group("b", "SPSS", None, None, None),
            group("c", "spss", None, None, None),
        ];
        assert_eq!(cluster(&groups, &ResolveConfig::default()).unwrap()[0].canonical_name, "spss");
    }

    #[test]
    fn unnormalizable_groups_are_skipped() {
        let groups = vec![group("a", "2.0", None, None, None), group("b", "R", None, None, None)];
        assert_eq!(cluster(&groups, &ResolveConfig::default()).unwrap().len(), 1);
        let bad = ResolveConfig {
            threshold: 1.5,
            ..ResolveConfig::default()
        };
        assert!(cluster(&groups, &bad).is_err());
    }

    fn candidate(name: &str, urls: &[&str]) -> AssetCandidate {
        let mut c = merge(&[&group("x", name, None, None, None)]);
        c.urls = urls.iter().map(|u| Url::parse(u).unwrap()).collect();
        c
    }

    #[test]
    fn catalog_alignment() {
        let catalog = Catalog::from_tsv(
            "name\turl\tpublisher\n\
             SPSS\thttps://www.ibm.com/spss\t\n\
             NumPy\thttps://numpy.org/\tNumFOCUS\n\
             SciPy\thttps://scipy.org/\tNumFOCUS\n",
        )
        .unwrap();
        let cfg = ResolveConfig::default();
        let m = align_to_catalog(&candidate("SPSS", &["https://www.ibm.com/spss"]), &catalog, &cfg).unwrap();
        assert_eq!((m.entry.name.as_str(), m.score), ("SPSS", 1.0));
        assert!(align_to_catalog(&candidate("numpy", &[]), &catalog, &cfg).is_none());
        assert!(align_to_catalog(&candidate("SPSS", &[]), &Catalog::default(), &cfg).is_none());
    }

    #[test]
    fn catalog_ties_go_to_smaller_url() {
        let catalog = Catalog::from_tsv("Foo\thttps://b.example/\nFoo\thttps://a.example/\n").unwrap();
        let cfg = ResolveConfig {
            catalog_threshold: 0.0,
            ..ResolveConfig::default()
        };
        let m = align_to_catalog(&candidate("Foo", &["https://c.example/"]), &catalog, &cfg).unwrap();
        assert_eq!(m.entry.url.as_str(), "https://a.example/");
    }

    #[test]
    fn catalog_rejects_duplicates() {
        assert!(Catalog::from_tsv("A\thttps://a.example/\nB\thttps://a.example/\n").is_err());
        assert!(Catalog::from_tsv("A\tnot-a-url\n").is_err());
        assert!(Catalog::from_tsv("A\n").is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let cands = cluster(
            &[group("a", "SPSS", Some("https://ibm.com/"), Some("IBM"), Some("21"))],
            &ResolveConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_candidates_jsonl(&mut buf, &cands).unwrap();
        assert_eq!(read_candidates_jsonl(&buf[..]).unwrap(), cands);
    }

    const NAMES: [&str; 6] = ["SPSS", "spss", "Stata", "STATA 17", "Prism", "GraphPad Prism"];
    const URLS: [&str; 3] = ["https://a.example/", "https://a.example", "https://b.example/"];
    const PUBS: [&str; 2] = ["IBM", "StataCorp"];

    fn arb_groups() -> impl Strategy<Value = Vec<MentionGroup>> {
        prop::collection::vec(
            (0..NAMES.len(), prop::option::of(0..URLS.len()), prop::option::of(0..PUBS.len())),
            1..8,
        )
        .prop_map(|specs| {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (n, u, p))| group(&format!("g{i:02}"), NAMES[n], u.map(|u| URLS[u]), p.map(|p| PUBS[p]), None))
                .collect()
        })
    }

    fn partition(cands: &[AssetCandidate]) -> BTreeSet<BTreeSet<String>> {
        cands.iter().map(|c| c.member_groups.clone()).collect()
    }

    proptest! {
        #[test]
        fn similarity_symmetric_bounded(groups in arb_groups()) {
            for a in &groups {
                prop_assert_eq!(similarity(a, a).unwrap(), 1.0);
                for b in &groups {
                    let s = similarity(a, b).unwrap();
                    prop_assert!((0.0..=1.0).contains(&s));
                    prop_assert_eq!(s, similarity(b, a).unwrap());
                }
            }
        }

        #[test]
        fn clustering_ignores_order(groups in arb_groups(), seed in any::<u64>()) {
            let mut shuffled = groups.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
            let cfg = ResolveConfig::default();
            prop_assert_eq!(cluster(&groups, &cfg).unwrap(), cluster(&shuffled, &cfg).unwrap());
        }

        #[test]
        fn threshold_extremes(groups in arb_groups()) {
            let zero = ResolveConfig { threshold: 0.0, ..ResolveConfig::default() };
            prop_assert_eq!(cluster(&groups, &zero).unwrap().len(), 1);

            let one = ResolveConfig { threshold: 1.0, ..ResolveConfig::default() };
            let cands = cluster(&groups, &one).unwrap();
            let by_id: HashMap<&str, &MentionGroup> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
            for c in &cands {
                let members: Vec<&MentionGroup> = c.member_groups.iter().map(|id| by_id[id.as_str()]).collect();
                for m in &members {
                    prop_assert_eq!(m.canonical_key().unwrap(), members[0].canonical_key().unwrap());
                    prop_assert_eq!(m.attribute_nodes(), members[0].attribute_nodes());
                }
            }
        }

        #[test]
        fn candidate_unions(groups in arb_groups()) {
            let cands = cluster(&groups, &ResolveConfig::default()).unwrap();
            let by_id: HashMap<&str, &MentionGroup> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
            let total: usize = cands.iter().map(|c| c.member_groups.len()).sum();
            prop_assert_eq!(total, groups.len());
            prop_assert_eq!(partition(&cands).len(), cands.len());
            for c in &cands {
                prop_assert!(c.aliases.contains(&c.canonical_name));
                let urls: BTreeSet<Url> = c.member_groups.iter()
                    .filter_map(|id| by_id[id.as_str()].url.as_ref())
                    .map(|m| Url::parse(&m.surface).unwrap())
                    .collect();
                prop_assert_eq!(&c.urls, &urls);
            }
        }
    }
}
