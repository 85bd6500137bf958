use std::sync::LazyLock;

use regex::Regex;

use super::{Component, MentionGroup, MentionStyle, SoftwareMention};
use crate::docmodel::{Document, Reference, Span};

static NUMERIC_CITATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(\d+(?:\s*[,\u{2013}-]\s*\d+)*)\]").unwrap());
static PARENTHESIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());
static AUTHOR_YEAR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*([A-Z][\p{L}'\u{2019}-]+)(?:\s+et\s+al\.?|\s+(?:and|&)\s+[A-Z][\p{L}'\u{2019}-]+)?,?\s+(\d{4})[a-z]?\s*$")
        .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CitationMarker {
    Numeric(Vec<u32>),
    AuthorYear { surname: String, year: String },
}

impl CitationMarker {
    fn resolves(&self, references: &[Reference]) -> bool {
        match self {
            CitationMarker::Numeric(numbers) => numbers.iter().any(|&n| {
                (n >= 1 && n as usize <= references.len())
                    || references.iter().any(|r| r.ref_id == n.to_string())
            }),
            CitationMarker::AuthorYear { surname, year } => references
                .iter()
                .any(|r| r.raw_text.contains(surname.as_str()) && r.raw_text.contains(year.as_str())),
        }
    }
}

/// Citation markers in `text`: `[n]`, `[n, m]`, `[n-m]` and parenthesised
/// author-year citations such as `(Smith, 2020)` or
/// `(Doe et al., 2019; Roe 2018)`. Spans are byte ranges into `text`.
pub(crate) fn citation_markers(text: &str) -> Vec<(Span, CitationMarker)> {
    let mut out = Vec::new();
    for caps in NUMERIC_CITATION.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let mut numbers = Vec::new();
        let inner = &caps[1];
        for part in inner.split(',') {
            let bounds: Vec<u32> = part
                .split(['-', '\u{2013}'])
                .filter_map(|n| n.trim().parse().ok())
                .collect();
            match bounds[..] {
                [a, b] if a <= b && b - a < 100 => numbers.extend(a..=b),
                _ => numbers.extend(bounds),
            }
        }
        out.push((Span::new(whole.start(), whole.end()), CitationMarker::Numeric(numbers)));
    }
    for caps in PARENTHESIS.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let markers: Vec<CitationMarker> = caps[1]
            .split(';')
            .filter_map(|part| {
                AUTHOR_YEAR.captures(part).map(|c| CitationMarker::AuthorYear {
                    surname: c[1].to_string(),
                    year: c[2].to_string(),
                })
            })
            .collect();
        for marker in markers {
            out.push((Span::new(whole.start(), whole.end()), marker));
        }
    }
    out
}

/// A citation in the group's sentence that resolves to one of the
/// document's references makes the mention formal.
pub fn classify_style(group: &MentionGroup, doc: &Document) -> MentionStyle {
    let Some(sentence) = doc.sentence_text(group.name.sentence_index) else {
        return MentionStyle::Informal;
    };
    classify_sentence(sentence, &doc.references)
}

pub(crate) fn classify_sentence(sentence: &str, references: &[Reference]) -> MentionStyle {
    if citation_markers(sentence)
        .iter()
        .any(|(_, m)| m.resolves(references))
    {
        MentionStyle::FormalWithReference
    } else {
        MentionStyle::Informal
    }
}

/// Index into `names` of the name an attribute attaches to: the nearest
/// preceding name in the same sentence, else the nearest following one.
pub(crate) fn attachment_target(names: &[&SoftwareMention], attr: &SoftwareMention) -> Option<usize> {
    let same_sentence = || {
        names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.sentence_index == attr.sentence_index && n.doc_id == attr.doc_id)
    };
    same_sentence()
        .filter(|(_, n)| n.span.start_byte < attr.span.start_byte)
        .max_by_key(|(_, n)| n.span.start_byte)
        .or_else(|| {
            same_sentence()
                .filter(|(_, n)| n.span.start_byte > attr.span.start_byte)
                .min_by_key(|(_, n)| n.span.start_byte)
        })
        .map(|(i, _)| i)
}

/// Groups attribute mentions with their software names. Each name yields
/// exactly one group; when several attributes of one kind attach to the same
/// name the closest wins. Unattached attributes are dropped.
pub fn attach_attributes(mentions: &[SoftwareMention], doc: &Document) -> Vec<MentionGroup> {
    let names: Vec<&SoftwareMention> = mentions
        .iter()
        .filter(|m| m.component == Component::SoftwareName)
        .collect();
    let mut groups: Vec<MentionGroup> = names
        .iter()
        .enumerate()
        .map(|(i, name)| MentionGroup {
            group_id: format!("{}#g{}", name.doc_id, i),
            name: (*name).clone(),
            version: None,
            publisher: None,
            url: None,
            style: MentionStyle::Informal,
        })
        .collect();

    let distance = |a: &SoftwareMention, b: &SoftwareMention| a.span.start_byte.abs_diff(b.span.start_byte);
    for attr in mentions.iter().filter(|m| m.component != Component::SoftwareName) {
        let Some(target) = attachment_target(&names, attr) else {
            continue;
        };
        let group = &mut groups[target];
        let slot = match attr.component {
            Component::Version => &mut group.version,
            Component::Publisher => &mut group.publisher,
            Component::Url => &mut group.url,
            Component::SoftwareName => unreachable!(),
        };
        let closer = slot
            .as_ref()
            .is_none_or(|current| distance(attr, &group.name) < distance(current, &group.name));
        if closer {
            *slot = Some(attr.clone());
        }
    }
    for group in &mut groups {
        group.style = classify_style(group, doc);
    }
    groups
}
