//! Uniform document model over TEI XML or plain text.
//!
//! All offsets are UTF-8 byte offsets into [`Document::body`] and always fall
//! on code-point boundaries.

use std::collections::HashSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;
use url::Url;

use crate::xml::{self, Element, XmlError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("root element `{0}` is not a TEI document")]
    NotTei(String),
    #[error("document has no text")]
    EmptyDocument,
}

/// Half-open byte range `[start_byte, end_byte)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start_byte: usize,
    pub end_byte: usize,
}

impl Span {
    pub fn new(start_byte: usize, end_byte: usize) -> Self {
        debug_assert!(start_byte < end_byte);
        Span { start_byte, end_byte }
    }

    pub fn len(&self) -> usize {
        self.end_byte - self.start_byte
    }

    pub fn is_empty(&self) -> bool {
        self.start_byte >= self.end_byte
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start_byte <= other.start_byte && other.end_byte <= self.end_byte
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start_byte < other.end_byte && other.start_byte < self.end_byte
    }

    pub fn shift(self, offset: usize) -> Span {
        Span::new(self.start_byte + offset, self.end_byte + offset)
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start_byte..self.end_byte]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub ref_id: String,
    pub raw_text: String,
    pub target_url: Option<Url>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub body: String,
    pub paragraphs: Vec<Span>,
    pub sentences: Vec<Span>,
    pub references: Vec<Reference>,
    /// Title from the TEI header, when present.
    #[serde(default)]
    pub title: Option<String>,
    /// Author e-mail addresses from the TEI header.
    #[serde(default)]
    pub author_emails: Vec<String>,
}

impl Document {
    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        self.sentences.get(index).map(|s| s.slice(&self.body))
    }

    /// Index of the sentence containing `span`, if any.
    pub fn sentence_of(&self, span: &Span) -> Option<usize> {
        let idx = self
            .sentences
            .partition_point(|s| s.end_byte <= span.start_byte);
        self.sentences
            .get(idx)
            .filter(|s| s.contains(span))
            .map(|_| idx)
    }

    fn from_paragraph_spans(doc_id: &str, body: String, paragraphs: Vec<Span>) -> Result<Self, DocError> {
        if paragraphs.is_empty() {
            return Err(DocError::EmptyDocument);
        }
        let sentences = paragraphs
            .iter()
            .flat_map(|p| {
                segment_sentences(p.slice(&body))
                    .into_iter()
                    .map(move |s| s.shift(p.start_byte))
            })
            .collect();
        Ok(Document {
            doc_id: doc_id.to_string(),
            body,
            paragraphs,
            sentences,
            references: Vec::new(),
            title: None,
            author_emails: Vec::new(),
        })
    }
}

const TEI_NS: &str = "http://www.tei-c.org/ns/1.0";

static URL_IN_TEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"https?://[^\s<>"]+"#).unwrap());

/// Parses a TEI document (the GROBID output subset).
///
/// The body is the whitespace-normalised text of every `<p>` under
/// `<text>/<body>`, joined by single newlines. Bibliography entries
/// (`<biblStruct>`/`<bibl>`) anywhere in the document become references.
pub fn from_tei(xml_bytes: &[u8], doc_id: &str) -> Result<Document, DocError> {
    let root = xml::parse(xml_bytes)?;
    if !matches!(root.name.as_str(), "TEI" | "teiCorpus")
        || root.namespace.as_deref().is_some_and(|ns| ns != TEI_NS)
    {
        return Err(DocError::NotTei(root.name));
    }

    let mut paragraphs_text = Vec::new();
    let mut texts = Vec::new();
    root.descendants_named("text", &mut texts);
    for text in texts {
        for body in text.children_named("body") {
            let mut ps = Vec::new();
            body.descendants_named("p", &mut ps);
            paragraphs_text.extend(
                ps.into_iter()
                    .map(|p| xml::normalize_ws(&p.text()))
                    .filter(|t| !t.is_empty()),
            );
        }
    }

    let mut body = String::new();
    let mut paragraphs = Vec::new();
    for p in &paragraphs_text {
        if !body.is_empty() {
            body.push('\n');
        }
        let start = body.len();
        body.push_str(p);
        paragraphs.push(Span::new(start, body.len()));
    }

    let mut doc = Document::from_paragraph_spans(doc_id, body, paragraphs)?;
    doc.references = tei_references(&root);
    if let Some(header) = root.child("teiHeader") {
        doc.title = tei_title(header);
        let mut emails = Vec::new();
        header.descendants_named("email", &mut emails);
        doc.author_emails = emails
            .into_iter()
            .map(|e| xml::normalize_ws(&e.text()))
            .filter(|e| !e.is_empty())
            .collect();
    }
    Ok(doc)
}

fn tei_title(header: &Element) -> Option<String> {
    let mut titles = Vec::new();
    header.descendants_named("title", &mut titles);
    titles
        .iter()
        .find(|t| t.attr("type") == Some("main"))
        .or(titles.first())
        .map(|t| xml::normalize_ws(&t.text()))
        .filter(|t| !t.is_empty())
}

fn collect_bibls<'a>(el: &'a Element, out: &mut Vec<&'a Element>) {
    for child in el.elements() {
        if child.name == "biblStruct" || child.name == "bibl" {
            out.push(child);
        } else {
            collect_bibls(child, out);
        }
    }
}

fn tei_references(root: &Element) -> Vec<Reference> {
    let mut lists = Vec::new();
    root.descendants_named("listBibl", &mut lists);
    let mut bibls = Vec::new();
    for list in lists {
        collect_bibls(list, &mut bibls);
    }
    let mut seen = HashSet::new();
    let mut refs = Vec::new();
    for (i, bibl) in bibls.into_iter().enumerate() {
        let raw_text = xml::normalize_ws(&bibl.spaced_text());
        let mut ptrs = Vec::new();
        bibl.descendants_named("ptr", &mut ptrs);
        let target_url = ptrs
            .iter()
            .filter_map(|p| p.attr("target"))
            .chain(URL_IN_TEXT.find_iter(&raw_text).map(|m| m.as_str()))
            .find_map(|candidate| {
                Url::parse(candidate.trim_end_matches(['.', ',', ';', ')']))
                    .ok()
                    .filter(|u| matches!(u.scheme(), "http" | "https"))
            });
        let mut ref_id = bibl
            .attr("xml:id")
            .map(str::to_string)
            .unwrap_or_else(|| format!("ref{}", i + 1));
        if !seen.insert(ref_id.clone()) {
            ref_id = format!("ref{}", i + 1);
            seen.insert(ref_id.clone());
        }
        refs.push(Reference {
            ref_id,
            raw_text,
            target_url,
        });
    }
    refs
}

/// Builds a document from plain text. Paragraphs are separated by blank
/// lines; offsets point into the original text.
pub fn from_plaintext(text: &str, doc_id: &str) -> Result<Document, DocError> {
    let mut paragraphs = Vec::new();
    let mut para_start: Option<usize> = None;
    let mut para_end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            if let Some(start) = para_start.take() {
                paragraphs.push(trimmed_span(text, start, para_end));
            }
        } else {
            if para_start.is_none() {
                para_start = Some(offset);
            }
            para_end = offset + content.len();
        }
        offset += line.len();
    }
    if let Some(start) = para_start {
        paragraphs.push(trimmed_span(text, start, para_end));
    }
    Document::from_paragraph_spans(doc_id, text.to_string(), paragraphs.into_iter().flatten().collect())
}

fn trimmed_span(text: &str, start: usize, end: usize) -> Option<Span> {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    let (s, e) = (start + lead, end - trail);
    (s < e).then(|| Span::new(s, e))
}

const ABBREVIATIONS: [&str; 4] = ["e.g.", "i.e.", "Fig.", "vs."];
const CLOSERS: [char; 6] = [')', ']', '"', '\'', '\u{201d}', '\u{2019}'];
const OPENERS: [char; 6] = ['(', '[', '"', '\'', '\u{201c}', '\u{2018}'];

/// Splits text into sentences with a fixed rule set.
///
/// A boundary follows `.`, `!` or `?` (plus any closing quotes or brackets)
/// when the next characters are whitespace and then an uppercase letter or a
/// digit. Periods of `e.g.`, `i.e.`, `et al.`, `Fig.` and `vs.` never end a
/// sentence, nor does the period of an initial (a lone capital letter)
/// inside a name: one that follows a capitalised word or another initial,
/// or that precedes another initial and a capitalised word (`J. R. Smith`).
/// A lone capital after a lowercase word still ends a sentence, so
/// `We used R. It worked.` splits in two.
pub fn segment_sentences(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = k > j
            && k < chars.len()
            && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit())
            && !(c == '.' && j == i + 1 && is_non_terminal_period(text, start, pos, chars[k].0));
        if boundary {
            spans.extend(trimmed_span(text, start, end));
            start = end;
        }
        i = j;
    }
    if start < text.len() {
        spans.extend(trimmed_span(text, start, text.len()));
    }
    spans
}

/// `period` is the byte offset of a '.', `sentence_start` bounds the
/// look-back and `next_word` is where the following word begins.
fn is_non_terminal_period(text: &str, sentence_start: usize, period: usize, next_word: usize) -> bool {
    let before = &text[sentence_start..period];
    let mut words = before.split_whitespace().rev();
    let word = words.next().unwrap_or("").trim_start_matches(OPENERS);
    let dotted = format!("{word}.");
    if ABBREVIATIONS.contains(&dotted.as_str()) {
        return true;
    }
    let previous = words.next().map(|w| w.trim_start_matches(OPENERS));
    if word == "al" && previous == Some("et") {
        return true;
    }
    if is_initial(word) {
        let mut following = text[next_word..].split_whitespace();
        let next_is_initial = following
            .next()
            .and_then(|w| w.strip_suffix('.'))
            .is_some_and(is_initial);
        let then_capitalised = following
            .next()
            .and_then(|w| w.chars().next())
            .is_some_and(char::is_uppercase);
        let in_name = previous.is_some_and(|prev| {
            prev.chars().next().is_some_and(char::is_uppercase)
                || prev.strip_suffix('.').is_some_and(is_initial)
        });
        return in_name || (next_is_initial && then_capitalised);
    }
    false
}

fn is_initial(word: &str) -> bool {
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}
