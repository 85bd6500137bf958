//! Exact-span precision, recall and F1 against gold annotations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Component, SoftwareMention};

/// Identity used for matching: a prediction is a true positive only when
/// document, component and byte span all agree with a gold mention.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MentionKey {
    pub doc_id: String,
    pub component: Component,
    pub start_byte: usize,
    pub end_byte: usize,
}

pub trait Scorable {
    fn key(&self) -> MentionKey;
}

impl Scorable for SoftwareMention {
    fn key(&self) -> MentionKey {
        MentionKey {
            doc_id: self.doc_id.clone(),
            component: self.component,
            start_byte: self.span.start_byte,
            end_byte: self.span.end_byte,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMention {
    pub doc_id: String,
    pub component: Component,
    pub start_byte: usize,
    pub end_byte: usize,
    pub surface: String,
}

impl Scorable for GoldMention {
    fn key(&self) -> MentionKey {
        MentionKey {
            doc_id: self.doc_id.clone(),
            component: self.component,
            start_byte: self.start_byte,
            end_byte: self.end_byte,
        }
    }
}

impl<T: Scorable> Scorable for &T {
    fn key(&self) -> MentionKey {
        (*self).key()
    }
}

pub fn read_gold_jsonl(reader: impl BufRead) -> std::io::Result<Vec<GoldMention>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let gold = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(gold);
    }
    Ok(out)
}

pub fn write_gold_jsonl(mut writer: impl Write, gold: &[GoldMention]) -> std::io::Result<()> {
    for g in gold {
        serde_json::to_writer(&mut writer, g)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_component: BTreeMap<Component, Scores>,
    pub micro: Scores,
    pub docs_total: usize,
    pub docs_zero_mention: usize,
}

/// Scores predictions against gold. Duplicate keys are matched one-to-one,
/// so a key predicted twice but annotated once counts one false positive.
pub fn evaluate<P: Scorable, G: Scorable>(predicted: &[P], gold: &[G]) -> EvaluationReport {
    let doc_ids: BTreeSet<String> = gold.iter().map(|g| g.key().doc_id).collect();
    evaluate_corpus(predicted, gold, &doc_ids.into_iter().collect::<Vec<_>>())
}

/// Like [`evaluate`], with the document list given explicitly so documents
/// without gold mentions are counted.
pub fn evaluate_corpus<P: Scorable, G: Scorable>(predicted: &[P], gold: &[G], doc_ids: &[String]) -> EvaluationReport {
    let mut remaining: HashMap<MentionKey, usize> = HashMap::new();
    for g in gold {
        *remaining.entry(g.key()).or_default() += 1;
    }
    let mut counts: BTreeMap<Component, (usize, usize, usize)> =
        Component::ALL.iter().map(|c| (*c, (0, 0, 0))).collect();
    for p in predicted {
        let key = p.key();
        let entry = counts.get_mut(&key.component).unwrap();
        match remaining.get_mut(&key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                entry.0 += 1;
            }
            _ => entry.1 += 1,
        }
    }
    for (key, n) in &remaining {
        counts.get_mut(&key.component).unwrap().2 += n;
    }

    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let with_gold: BTreeSet<String> = gold.iter().map(|g| g.key().doc_id).collect();
    let all_docs: BTreeSet<&String> = doc_ids.iter().collect();
    EvaluationReport {
        per_component: counts
            .into_iter()
            .map(|(c, (tp, fp, fn_))| (c, Scores::from_counts(tp, fp, fn_)))
            .collect(),
        micro: Scores::from_counts(tp, fp, fn_),
        docs_total: all_docs.len(),
        docs_zero_mention: all_docs.iter().filter(|d| !with_gold.contains(d.as_str())).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(doc: &str, component: Component, start: usize, end: usize) -> GoldMention {
        GoldMention {
            doc_id: doc.into(),
            component,
            start_byte: start,
            end_byte: end,
            surface: String::new(),
        }
    }

    // greedy one-to-one matcher over plain key lists
    fn oracle(pred: &[GoldMention], gold: &[GoldMention]) -> (usize, usize, usize) {
        let mut gold_left: Vec<MentionKey> = gold.iter().map(Scorable::key).collect();
        let mut tp = 0;
        for p in pred {
            if let Some(i) = gold_left.iter().position(|k| *k == p.key()) {
                gold_left.remove(i);
                tp += 1;
            }
        }
        (tp, pred.len() - tp, gold_left.len())
    }

    #[test]
    fn perfect_and_empty() {
        let gold = vec![g("a", Component::SoftwareName, 0, 4), g("a", Component::Version, 5, 7)];
        let r = evaluate(&gold, &gold);
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (1.0, 1.0, 1.0));
        let r = evaluate::<GoldMention, _>(&[], &gold);
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn partial() {
        let gold = vec![g("a", Component::SoftwareName, 0, 4), g("a", Component::SoftwareName, 10, 14)];
        let pred = vec![g("a", Component::SoftwareName, 0, 4), g("a", Component::SoftwareName, 20, 24)];
        let r = evaluate(&pred, &gold);
        assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_), (1, 1, 1));
        assert_eq!(r.micro.f1, 0.5);
        let pred = vec![g("a", Component::SoftwareName, 0, 4)];
        let r = evaluate(&pred, &gold);
        assert_eq!(r.micro.precision, 1.0);
        assert_eq!(r.micro.recall, 0.5);
        assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn off_by_one_span_is_a_miss() {
        let r = evaluate(&[g("a", Component::SoftwareName, 0, 3)], &[g("a", Component::SoftwareName, 0, 4)]);
        assert_eq!(r.micro.tp, 0);
    }

    #[test]
    fn zero_mention_documents() {
        let gold = vec![g("a", Component::SoftwareName, 0, 4)];
        let pred = vec![g("a", Component::SoftwareName, 0, 4), g("z", Component::SoftwareName, 0, 4)];
        let r = evaluate_corpus(&pred, &gold, &["a".into(), "z".into()]);
        assert_eq!((r.docs_total, r.docs_zero_mention), (2, 1));
        assert_eq!(r.micro.fp, 1);
    }

    #[test]
    fn gold_jsonl_roundtrip() {
        let gold = vec![g("a", Component::Url, 3, 9)];
        let mut buf = Vec::new();
        write_gold_jsonl(&mut buf, &gold).unwrap();
        assert_eq!(read_gold_jsonl(&buf[..]).unwrap(), gold);
        assert!(read_gold_jsonl(&b"{bad"[..]).is_err());
    }

    fn arb_mention() -> impl Strategy<Value = GoldMention> {
        (0..2u8, 0..4usize, 0..5usize, 1..3usize).prop_map(|(d, c, s, l)| {
            g(&format!("d{d}"), Component::ALL[c], s, s + l)
        })
    }

    proptest! {
        #[test]
        fn matches_oracle(pred in prop::collection::vec(arb_mention(), 0..12),
                          gold in prop::collection::vec(arb_mention(), 0..12)) {
            let r = evaluate(&pred, &gold);
            let (tp, fp, fn_) = oracle(&pred, &gold);
            prop_assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_), (tp, fp, fn_));
            for s in r.per_component.values().chain([&r.micro]) {
                prop_assert!((0.0..=1.0).contains(&s.precision));
                prop_assert!((0.0..=1.0).contains(&s.recall));
                prop_assert!((0.0..=1.0).contains(&s.f1));
            }
        }
    }
}
