//! Software Heritage persistent identifiers.
//!
//! Identifiers are computed with git-compatible object hashing: a content
//! object hashes exactly like a git blob and a directory object exactly like
//! a git tree. Only `cnt` and `dir` objects are computed here; `rev`, `rel`
//! and `snp` identifiers can be parsed and formatted but not built.

mod archival;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::{Digest, Sha1};
use thiserror::Error;

pub use archival::{
    ArchivalClient, ArchivalError, ArchivalReceipt, ArchivalRequest, ArchivalStatus,
    MockArchivalClient, MockBehaviour,
};
pub use tree::{DirectoryTree, TreeEntry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwhidError {
    #[error("unsupported SWHID scheme version `{0}`")]
    UnsupportedVersion(String),
    #[error("malformed SWHID `{text}`: {reason}")]
    MalformedSwhid { text: String, reason: String },
    #[error("invalid directory entry name {0:?}")]
    InvalidEntryName(String),
}

fn malformed(text: &str, reason: impl Into<String>) -> SwhidError {
    SwhidError::MalformedSwhid {
        text: text.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectType {
    Content,
    Directory,
    Revision,
    Release,
    Snapshot,
}

impl ObjectType {
    pub const ALL: [ObjectType; 5] = [
        ObjectType::Content,
        ObjectType::Directory,
        ObjectType::Revision,
        ObjectType::Release,
        ObjectType::Snapshot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Content => "cnt",
            ObjectType::Directory => "dir",
            ObjectType::Revision => "rev",
            ObjectType::Release => "rel",
            ObjectType::Snapshot => "snp",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == tag)
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Qualifier keys, declared in the order they must appear in a SWHID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualifierKey {
    Origin,
    Visit,
    Anchor,
    Path,
    Lines,
}

impl QualifierKey {
    pub const ALL: [QualifierKey; 5] = [
        QualifierKey::Origin,
        QualifierKey::Visit,
        QualifierKey::Anchor,
        QualifierKey::Path,
        QualifierKey::Lines,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualifierKey::Origin => "origin",
            QualifierKey::Visit => "visit",
            QualifierKey::Anchor => "anchor",
            QualifierKey::Path => "path",
            QualifierKey::Lines => "lines",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

/// A SWHID: `swh:1:<type>:<40 hex>` plus optional qualifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Swhid {
    object_type: ObjectType,
    digest: [u8; 20],
    qualifiers: Vec<(QualifierKey, String)>,
}

impl Swhid {
    pub const SCHEME_VERSION: u32 = 1;

    pub fn new(object_type: ObjectType, digest: [u8; 20]) -> Self {
        Swhid {
            object_type,
            digest,
            qualifiers: Vec::new(),
        }
    }

    /// Adds a qualifier, keeping the canonical key order. Replaces any
    /// existing value for the same key.
    pub fn with_qualifier(mut self, key: QualifierKey, value: impl Into<String>) -> Self {
        self.qualifiers.retain(|(k, _)| *k != key);
        self.qualifiers.push((key, value.into()));
        self.qualifiers.sort_by_key(|(k, _)| *k);
        self
    }

    pub fn object_type(&self) -> ObjectType {
        self.object_type
    }

    pub fn digest(&self) -> &[u8; 20] {
        &self.digest
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn qualifiers(&self) -> &[(QualifierKey, String)] {
        &self.qualifiers
    }

    pub fn qualifier(&self, key: QualifierKey) -> Option<&str> {
        self.qualifiers
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }

    /// The identifier without qualifiers.
    pub fn core(&self) -> Swhid {
        Swhid::new(self.object_type, self.digest)
    }
}

impl fmt::Display for Swhid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "swh:{}:{}:{}",
            Self::SCHEME_VERSION,
            self.object_type,
            self.digest_hex()
        )?;
        for (key, value) in &self.qualifiers {
            write!(f, ";{}={}", key.as_str(), value)?;
        }
        Ok(())
    }
}

impl FromStr for Swhid {
    type Err = SwhidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_swhid(s)
    }
}

impl Serialize for Swhid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Swhid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_swhid(&text).map_err(serde::de::Error::custom)
    }
}

pub fn format_swhid(swhid: &Swhid) -> String {
    swhid.to_string()
}

pub fn parse_swhid(text: &str) -> Result<Swhid, SwhidError> {
    let mut parts = text.split(';');
    let core = parts.next().unwrap_or_default();
    let fields: Vec<&str> = core.split(':').collect();
    if fields.len() != 4 {
        return Err(malformed(text, "expected swh:<version>:<type>:<digest>"));
    }
    if fields[0] != "swh" {
        return Err(malformed(text, "scheme must be `swh`"));
    }
    match fields[1].parse::<u32>() {
        Ok(Swhid::SCHEME_VERSION) => {}
        Ok(_) => return Err(SwhidError::UnsupportedVersion(fields[1].to_string())),
        Err(_) => return Err(malformed(text, "scheme version is not a number")),
    }
    let object_type = ObjectType::from_tag(fields[2])
        .ok_or_else(|| malformed(text, format!("unknown object type `{}`", fields[2])))?;
    let digest = parse_digest(fields[3]).ok_or_else(|| malformed(text, "digest must be 40 lowercase hex characters"))?;

    let mut swhid = Swhid::new(object_type, digest);
    let mut last_key: Option<QualifierKey> = None;
    for part in parts {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| malformed(text, format!("qualifier `{part}` lacks `=`")))?;
        let key = QualifierKey::from_name(name)
            .ok_or_else(|| malformed(text, format!("unknown qualifier `{name}`")))?;
        if last_key.is_some_and(|prev| prev >= key) {
            return Err(malformed(text, format!("qualifier `{name}` out of order or repeated")));
        }
        validate_qualifier(key, value).map_err(|reason| malformed(text, reason))?;
        last_key = Some(key);
        swhid.qualifiers.push((key, value.to_string()));
    }
    Ok(swhid)
}

fn parse_digest(hex_text: &str) -> Option<[u8; 20]> {
    if hex_text.len() != 40
        || !hex_text
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return None;
    }
    let mut digest = [0u8; 20];
    hex::decode_to_slice(hex_text, &mut digest).ok()?;
    Some(digest)
}

fn validate_qualifier(key: QualifierKey, value: &str) -> Result<(), String> {
    if value.is_empty() {
        return Err(format!("empty `{}` qualifier", key.as_str()));
    }
    match key {
        QualifierKey::Origin => Ok(()),
        QualifierKey::Visit => match parse_swhid(value) {
            Ok(s) if s.object_type == ObjectType::Snapshot && s.qualifiers.is_empty() => Ok(()),
            _ => Err("visit must be a core snp SWHID".into()),
        },
        QualifierKey::Anchor => match parse_swhid(value) {
            Ok(s) if s.object_type != ObjectType::Content && s.qualifiers.is_empty() => Ok(()),
            _ => Err("anchor must be a core dir, rev, rel or snp SWHID".into()),
        },
        QualifierKey::Path => {
            if value.starts_with('/') {
                Ok(())
            } else {
                Err("path must be absolute".into())
            }
        }
        QualifierKey::Lines => {
            let ok = match value.split_once('-') {
                Some((a, b)) => is_line_number(a) && is_line_number(b),
                None => is_line_number(value),
            };
            if ok {
                Ok(())
            } else {
                Err("lines must be N or N-M".into())
            }
        }
    }
}

fn is_line_number(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Hashes `payload` as a git object of the given kind (`"blob"`, `"tree"`).
pub(crate) fn git_object_digest(kind: &str, payload: &[u8]) -> [u8; 20] {
    let mut hasher = Sha1::new();
    hasher.update(kind.as_bytes());
    hasher.update(b" ");
    hasher.update(payload.len().to_string().as_bytes());
    hasher.update([0u8]);
    hasher.update(payload);
    hasher.finalize().into()
}

/// SWHID of a content object (git blob hashing).
pub fn content_swhid(bytes: &[u8]) -> Swhid {
    Swhid::new(ObjectType::Content, git_object_digest("blob", bytes))
}

/// SWHID of a directory object (recursive git tree hashing).
pub fn directory_swhid(tree: &DirectoryTree) -> Result<Swhid, SwhidError> {
    Ok(Swhid::new(ObjectType::Directory, tree.digest()?))
}
