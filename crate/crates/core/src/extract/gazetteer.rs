use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::tokens::tokenize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GazetteerError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("empty software name")]
    EmptyName,
    #[error("alias `{alias}` maps to both `{first}` and `{second}`")]
    DuplicateAlias {
        alias: String,
        first: String,
        second: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub aliases: BTreeSet<String>,
    pub canonical_url: Option<Url>,
    pub publisher: Option<String>,
}

/// Dictionary of software names. Short all-caps surface forms (four
/// characters or fewer, e.g. `R`, `SAS`) match case-sensitively; every other
/// form matches case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, GazetteerEntry>,
    exact: HashMap<Vec<String>, String>,
    folded: HashMap<Vec<String>, String>,
    max_tokens: usize,
}

pub(crate) fn is_case_sensitive(surface: &str) -> bool {
    surface.chars().count() <= 4
        && surface.chars().any(char::is_alphabetic)
        && !surface.chars().any(char::is_lowercase)
}

fn fold(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<&GazetteerEntry> {
        self.entries.get(canonical)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &GazetteerEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Adds an entry. Nothing is modified if any surface form collides with
    /// another entry's.
    pub fn insert(&mut self, name: &str, entry: GazetteerEntry) -> Result<(), GazetteerError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(GazetteerError::EmptyName);
        }
        let mut keys = Vec::new();
        for surface in std::iter::once(name).chain(entry.aliases.iter().map(String::as_str)) {
            let tokens: Vec<String> = tokenize(surface).into_iter().map(|t| t.text.to_string()).collect();
            if tokens.is_empty() {
                return Err(GazetteerError::EmptyName);
            }
            let sensitive = is_case_sensitive(surface);
            let key = if sensitive { tokens.clone() } else { fold(&tokens) };
            let table = if sensitive { &self.exact } else { &self.folded };
            if let Some(existing) = table.get(&key).filter(|c| c.as_str() != name) {
                return Err(GazetteerError::DuplicateAlias {
                    alias: surface.to_string(),
                    first: existing.clone(),
                    second: name.to_string(),
                });
            }
            keys.push((sensitive, key));
        }
        if let Some(previous) = self.entries.get(name) {
            // replacing an entry: drop its old surface forms first
            let stale: Vec<String> = std::iter::once(name.to_string())
                .chain(previous.aliases.iter().cloned())
                .collect();
            for surface in stale {
                let tokens: Vec<String> = tokenize(&surface).into_iter().map(|t| t.text.to_string()).collect();
                self.exact.remove(&tokens);
                self.folded.remove(&fold(&tokens));
            }
        }
        for (sensitive, key) in keys {
            self.max_tokens = self.max_tokens.max(key.len());
            let table = if sensitive { &mut self.exact } else { &mut self.folded };
            table.insert(key, name.to_string());
        }
        self.entries.insert(name.to_string(), entry);
        Ok(())
    }

    /// Canonical name for a token sequence. Exact (case-sensitive) forms win
    /// over folded ones.
    pub(crate) fn lookup(&self, tokens: &[&str]) -> Option<&str> {
        let key: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
        if let Some(name) = self.exact.get(&key) {
            return Some(name);
        }
        self.folded.get(&fold(&key)).map(String::as_str)
    }

    /// Parses the TSV format: `name`, pipe-separated `aliases`,
    /// `canonical_url`, `publisher`. Blank lines and `#` comments are skipped,
    /// as is a leading header row starting with `name`.
    pub fn from_tsv(text: &str) -> Result<Self, GazetteerError> {
        let mut gaz = Gazetteer::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("name\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() > 4 {
                return Err(GazetteerError::Malformed {
                    line: line_no,
                    reason: format!("expected at most 4 columns, found {}", cols.len()),
                });
            }
            let col = |n: usize| cols.get(n).map(|s| s.trim()).unwrap_or("");
            let aliases = col(1)
                .split('|')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(str::to_string)
                .collect();
            let canonical_url = match col(2) {
                "" => None,
                u => Some(Url::parse(u).map_err(|e| GazetteerError::Malformed {
                    line: line_no,
                    reason: format!("bad url `{u}`: {e}"),
                })?),
            };
            let publisher = Some(col(3)).filter(|p| !p.is_empty()).map(str::to_string);
            gaz.insert(
                col(0),
                GazetteerEntry {
                    aliases,
                    canonical_url,
                    publisher,
                },
            )
            .map_err(|e| match e {
                GazetteerError::Malformed { .. } => e,
                other => GazetteerError::Malformed {
                    line: line_no,
                    reason: other.to_string(),
                },
            })?;
        }
        Ok(gaz)
    }
}
