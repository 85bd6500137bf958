//! Dictionary-and-rules software mention recognizer.
//!
//! Names come from longest gazetteer matches on token boundaries. Versions,
//! URLs and publishers found in the same sentence are emitted as attribute
//! mentions and later grouped with their name by [`attach_attributes`].

mod eval;
mod gazetteer;
mod group;
mod tokens;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::docmodel::{Document, Span};
use group::{attachment_target, citation_markers};
use tokens::{Token, is_token_char, tokenize};

pub use eval::{EvaluationReport, GoldMention, MentionKey, Scorable, Scores, evaluate, evaluate_corpus, read_gold_jsonl, write_gold_jsonl};
pub use gazetteer::{Gazetteer, GazetteerEntry, GazetteerError};
pub use group::{attach_attributes, classify_style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    SoftwareName,
    Version,
    Publisher,
    Url,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::SoftwareName,
        Component::Version,
        Component::Publisher,
        Component::Url,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareMention {
    pub mention_id: String,
    pub doc_id: String,
    pub component: Component,
    pub span: Span,
    pub surface: String,
    pub sentence_index: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionStyle {
    Informal,
    FormalWithReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionGroup {
    pub group_id: String,
    pub name: SoftwareMention,
    pub version: Option<SoftwareMention>,
    pub publisher: Option<SoftwareMention>,
    pub url: Option<SoftwareMention>,
    pub style: MentionStyle,
}

impl MentionGroup {
    pub fn members(&self) -> impl Iterator<Item = &SoftwareMention> {
        std::iter::once(&self.name)
            .chain(self.version.as_ref())
            .chain(self.publisher.as_ref())
            .chain(self.url.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub min_confidence: f64,
    /// How many tokens after a name a version may appear.
    pub version_window: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            min_confidence: 0.5,
            version_window: 10,
        }
    }
}

const BASE_CONFIDENCE: f64 = 0.6;
const CUE_BONUS: f64 = 0.2;
const ATTRIBUTE_BONUS: f64 = 0.2;
const CUE_WORDS: [&str; 6] = ["software", "package", "tool", "program", "version", "implemented"];

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"https?://[^\s<>"'()\[\]]+"#).unwrap());
static VERSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[vV]?\d+(?:\.\d+)*$").unwrap());

fn has_cue_word(tokens: &[Token<'_>]) -> bool {
    tokens.iter().any(|t| {
        let lower = t.text.to_lowercase();
        let singular = lower.strip_suffix('s').unwrap_or(&lower);
        CUE_WORDS.contains(&lower.as_str()) || CUE_WORDS.contains(&singular)
    })
}

fn url_spans(sentence: &str) -> Vec<Span> {
    URL.find_iter(sentence)
        .filter_map(|m| {
            let trimmed = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?']);
            (trimmed.len() > "https://".len()).then(|| Span::new(m.start(), m.start() + trimmed.len()))
        })
        .collect()
}

/// Finds `needle` in `haystack` on token boundaries.
fn find_on_boundaries(haystack: &str, needle: &str) -> Vec<Span> {
    let mut out = Vec::new();
    if needle.is_empty() {
        return out;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_token_char(c));
        let after = haystack[end..].chars().next();
        // a trailing '.' is sentence punctuation, not part of a token
        let after_ok = after.is_none_or(|c| !is_token_char(c) || (c == '.' && !haystack[end + 1..].starts_with(is_token_char)));
        if before_ok && after_ok {
            out.push(Span::new(start, end));
        }
        from = start + needle.chars().next().map_or(1, char::len_utf8);
    }
    out
}

struct NameHit<'g> {
    first_token: usize,
    last_token: usize,
    span: Span,
    canonical: &'g str,
}

/// Maximal gazetteer matches: at every token the longest hit is taken and
/// hits contained in another hit are discarded.
fn name_hits<'g>(tokens: &[Token<'_>], sentence: &str, gaz: &'g Gazetteer, masked: &[Span]) -> Vec<NameHit<'g>> {
    let mut hits: Vec<NameHit<'g>> = Vec::new();
    for i in 0..tokens.len() {
        let max_len = gaz.max_tokens().min(tokens.len() - i);
        for len in (1..=max_len).rev() {
            let window = &tokens[i..i + len];
            let separated_by_space = window
                .windows(2)
                .all(|w| sentence[w[0].end..w[1].start].chars().all(char::is_whitespace));
            if !separated_by_space {
                continue;
            }
            let span = Span::new(window[0].start, window[len - 1].end);
            if masked.iter().any(|m| m.overlaps(&span)) {
                continue;
            }
            let texts: Vec<&str> = window.iter().map(|t| t.text).collect();
            if let Some(canonical) = gaz.lookup(&texts) {
                hits.push(NameHit {
                    first_token: i,
                    last_token: i + len - 1,
                    span,
                    canonical,
                });
                break;
            }
        }
    }
    let spans: Vec<Span> = hits.iter().map(|h| h.span).collect();
    hits.retain(|h| !spans.iter().any(|s| *s != h.span && s.contains(&h.span)));
    hits
}

/// Recognizes software mentions in a document. Output is sorted by span
/// start and deterministic for a given input.
pub fn extract_mentions(doc: &Document, gaz: &Gazetteer, cfg: &ExtractConfig) -> Vec<SoftwareMention> {
    let mut out: Vec<SoftwareMention> = Vec::new();
    for (sentence_index, sentence_span) in doc.sentences.iter().enumerate() {
        let sentence = sentence_span.slice(&doc.body);
        let offset = sentence_span.start_byte;
        let tokens = tokenize(sentence);
        let urls = url_spans(sentence);
        let hits = name_hits(&tokens, sentence, gaz, &urls);
        if hits.is_empty() {
            continue;
        }
        let citations: Vec<Span> = citation_markers(sentence).into_iter().map(|(s, _)| s).collect();
        let occupied: Vec<Span> = hits.iter().map(|h| h.span).chain(urls.iter().copied()).collect();

        let make = |component, span: Span| SoftwareMention {
            mention_id: String::new(),
            doc_id: doc.doc_id.clone(),
            component,
            span: span.shift(offset),
            surface: span.slice(sentence).to_string(),
            sentence_index,
            confidence: 0.0,
        };
        let mut names: Vec<SoftwareMention> = hits.iter().map(|h| make(Component::SoftwareName, h.span)).collect();
        let mut attrs: Vec<SoftwareMention> = urls.iter().map(|s| make(Component::Url, *s)).collect();

        // first version-like token after each name, before the next name
        for (k, hit) in hits.iter().enumerate() {
            let stop = hits
                .get(k + 1)
                .map_or(tokens.len(), |next| next.first_token.max(hit.last_token + 1));
            let limit = stop.min(hit.last_token + 1 + cfg.version_window);
            let version = tokens[hit.last_token + 1..limit].iter().find(|t| {
                let span = Span::new(t.start, t.end);
                VERSION.is_match(t.text)
                    && !citations.iter().chain(&occupied).any(|m| m.overlaps(&span))
            });
            if let Some(t) = version {
                let span = Span::new(t.start, t.end);
                if !attrs.iter().any(|a| a.span == span.shift(offset)) {
                    attrs.push(make(Component::Version, span));
                }
            }
        }

        let publishers: BTreeSet<&str> = hits
            .iter()
            .filter_map(|h| gaz.get(h.canonical)?.publisher.as_deref())
            .collect();
        for publisher in publishers {
            let found = find_on_boundaries(sentence, publisher)
                .into_iter()
                .find(|s| !occupied.iter().any(|o| o.overlaps(s)));
            if let Some(span) = found {
                attrs.push(make(Component::Publisher, span));
            }
        }

        // confidence: base, cue word bonus, attached version/url bonus
        let cue = if has_cue_word(&tokens) { CUE_BONUS } else { 0.0 };
        let name_refs: Vec<&SoftwareMention> = names.iter().collect();
        let targets: Vec<Option<usize>> = attrs.iter().map(|a| attachment_target(&name_refs, a)).collect();
        for (idx, name) in names.iter_mut().enumerate() {
            let enriched = attrs.iter().zip(&targets).any(|(a, t)| {
                *t == Some(idx) && matches!(a.component, Component::Version | Component::Url)
            });
            let bonus = if enriched { ATTRIBUTE_BONUS } else { 0.0 };
            name.confidence = (BASE_CONFIDENCE + cue + bonus).min(1.0);
        }
        for (attr, target) in attrs.iter_mut().zip(&targets) {
            attr.confidence = target.map_or(0.0, |t| names[t].confidence);
        }
        let kept: Vec<bool> = names.iter().map(|n| n.confidence >= cfg.min_confidence).collect();
        out.extend(
            attrs
                .into_iter()
                .zip(targets)
                .filter(|(_, t)| t.is_some_and(|t| kept[t]))
                .map(|(a, _)| a),
        );
        out.extend(names.into_iter().filter(|n| n.confidence >= cfg.min_confidence));
    }
    out.sort_by(|a, b| {
        (a.span.start_byte, a.span.end_byte, a.component).cmp(&(b.span.start_byte, b.span.end_byte, b.component))
    });
    for (i, m) in out.iter_mut().enumerate() {
        m.mention_id = format!("{}#m{}", m.doc_id, i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docmodel::from_plaintext;

    fn gaz(rows: &str) -> Gazetteer {
        Gazetteer::from_tsv(rows).unwrap()
    }

    fn summary(ms: &[SoftwareMention]) -> Vec<(Component, &str, f64)> {
        ms.iter().map(|m| (m.component, m.surface.as_str(), m.confidence)).collect()
    }

    #[test]
    fn spss_version_21() {
        let doc = from_plaintext("We used SPSS version 21 for analysis.", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("SPSS\t\t\tIBM\n"), &ExtractConfig::default());
        // 0.6 base + 0.2 cue ("version") + 0.2 attached version
        assert_eq!(
            summary(&ms),
            [(Component::SoftwareName, "SPSS", 1.0), (Component::Version, "21", 1.0)]
        );
        for m in &ms {
            assert_eq!(m.span.slice(&doc.body), m.surface);
        }
    }

    #[test]
    fn no_hits() {
        let doc = from_plaintext("Cells were counted by hand.", "d").unwrap();
        assert!(extract_mentions(&doc, &gaz("SPSS\n"), &ExtractConfig::default()).is_empty());
    }

    #[test]
    fn short_caps_names_are_case_sensitive() {
        let doc = from_plaintext("The spss procedure ran.", "d").unwrap();
        assert!(extract_mentions(&doc, &gaz("SPSS\n"), &ExtractConfig::default()).is_empty());
        let doc = from_plaintext("We ran stata and STATA.", "d").unwrap();
        assert_eq!(extract_mentions(&doc, &gaz("Stata\n"), &ExtractConfig::default()).len(), 2);
    }

    #[test]
    fn token_boundaries() {
        let doc = from_plaintext("Rscript and SPSSX are not R or SPSS.", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("R\nSPSS\n"), &ExtractConfig::default());
        let surfaces: Vec<_> = ms.iter().map(|m| m.surface.as_str()).collect();
        assert_eq!(surfaces, ["R", "SPSS"]);
    }

    #[test]
    fn longest_match_wins() {
        let doc = from_plaintext("Plots were drawn in GraphPad Prism 9.", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("GraphPad Prism\nPrism\n"), &ExtractConfig::default());
        assert_eq!(
            summary(&ms),
            [(Component::SoftwareName, "GraphPad Prism", 0.8), (Component::Version, "9", 0.8)]
        );
    }

    #[test]
    fn url_and_publisher() {
        let doc = from_plaintext(
            "The tool QuPath (University of Edinburgh) is at https://qupath.github.io/.",
            "d",
        )
        .unwrap();
        let ms = extract_mentions(&doc, &gaz("QuPath\t\t\tUniversity of Edinburgh\n"), &ExtractConfig::default());
        assert_eq!(
            summary(&ms),
            [
                (Component::SoftwareName, "QuPath", 1.0),
                (Component::Publisher, "University of Edinburgh", 1.0),
                (Component::Url, "https://qupath.github.io/", 1.0),
            ]
        );
    }

    #[test]
    fn names_inside_urls_are_ignored() {
        let doc = from_plaintext("Code: https://github.com/numpy/numpy.", "d").unwrap();
        assert!(extract_mentions(&doc, &gaz("NumPy\n"), &ExtractConfig::default()).is_empty());
    }

    #[test]
    fn citation_numbers_are_not_versions() {
        let doc = from_plaintext("We used SPSS [3].", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("SPSS\n"), &ExtractConfig::default());
        assert_eq!(summary(&ms), [(Component::SoftwareName, "SPSS", 0.6)]);
    }

    #[test]
    fn version_window() {
        let doc = from_plaintext("We used SPSS a b c d e f g h i j 22 here.", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("SPSS\n"), &ExtractConfig::default());
        assert_eq!(ms.len(), 1);
        let doc = from_plaintext("We used SPSS a b c d e f g h i 22 here.", "d").unwrap();
        let ms = extract_mentions(&doc, &gaz("SPSS\n"), &ExtractConfig::default());
        assert_eq!(ms.len(), 2);
    }

    #[test]
    fn min_confidence_drops_names_and_their_attributes() {
        let doc = from_plaintext("We used SPSS 21. Also Stata.", "d").unwrap();
        let cfg = ExtractConfig {
            min_confidence: 0.7,
            ..ExtractConfig::default()
        };
        let ms = extract_mentions(&doc, &gaz("SPSS\nStata\n"), &cfg);
        assert_eq!(
            summary(&ms),
            [(Component::SoftwareName, "SPSS", 0.8), (Component::Version, "21", 0.8)]
        );
    }

    #[test]
    fn boundary_search() {
        assert_eq!(find_on_boundaries("IBM Corp. and IBMX", "IBM"), [Span::new(0, 3)]);
        assert_eq!(find_on_boundaries("by IBM.", "IBM"), [Span::new(3, 6)]);
        assert!(find_on_boundaries("IBM.x", "IBM").is_empty());
    }
}
