use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Language};

use super::tokenize::DocTokens;

/// Counts behind the per-language distribution plots.
///
/// `entities` counts annotated mentions; `anonymized_entities` counts distinct
/// `(label, surface)` pairs, i.e. the placeholders the document needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub doc_id: String,
    pub language: Language,
    pub tokens: u64,
    pub anonymized_tokens: u64,
    pub entities: u64,
    pub anonymized_entities: u64,
}

pub fn document_counts(doc: &Document) -> DocumentCounts {
    let toks = DocTokens::new(doc);
    let gold = doc.gold().unwrap_or_default();
    let mut covered = vec![false; toks.len()];
    for e in gold {
        if let Some((a, b)) = toks.token_range(e.span) {
            covered[a..b].iter_mut().for_each(|c| *c = true);
        }
    }
    let distinct: BTreeSet<(&str, &str)> = gold.iter().map(|e| (e.label.as_str(), e.surface.as_str())).collect();
    DocumentCounts {
        doc_id: doc.id().to_string(),
        language: doc.language(),
        tokens: toks.len() as u64,
        anonymized_tokens: covered.iter().filter(|c| **c).count() as u64,
        entities: gold.len() as u64,
        anonymized_entities: distinct.len() as u64,
    }
}

/// Histogram over log10-spaced bin edges. Values below the first edge go to
/// `underflow`, values above the last to `overflow`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    /// Edges `10^lo, ..., 10^hi` with `bins_per_decade` bins per power of ten.
    pub fn log10(lo_exp: u32, hi_exp: u32, bins_per_decade: u32) -> Self {
        let steps = (hi_exp - lo_exp) * bins_per_decade;
        let bin_edges = (0..=steps)
            .map(|k| {
                if k % bins_per_decade == 0 {
                    10f64.powi((lo_exp + k / bins_per_decade) as i32)
                } else {
                    10f64.powf(lo_exp as f64 + k as f64 / bins_per_decade as f64)
                }
            })
            .collect();
        Self {
            bin_edges,
            counts: vec![0; steps as usize],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, value: u64) {
        let v = value as f64;
        let last = *self.bin_edges.last().expect("edges");
        if v < self.bin_edges[0] {
            self.underflow += 1;
        } else if v > last {
            self.overflow += 1;
        } else {
            let i = self.bin_edges.partition_point(|&e| e <= v);
            let bins = self.counts.len();
            self.counts[(i - 1).min(bins - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

pub const BINS_PER_DECADE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageHistograms {
    pub documents: u64,
    pub tokens: Histogram,
    pub anonymized_tokens: Histogram,
    pub entities: Histogram,
    pub anonymized_entities: Histogram,
}

impl Default for LanguageHistograms {
    fn default() -> Self {
        Self {
            documents: 0,
            tokens: Histogram::log10(1, 5, BINS_PER_DECADE),
            anonymized_tokens: Histogram::log10(0, 4, BINS_PER_DECADE),
            entities: Histogram::log10(1, 5, BINS_PER_DECADE),
            anonymized_entities: Histogram::log10(0, 4, BINS_PER_DECADE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: Vec<DocumentCounts>,
    pub languages: BTreeMap<Language, LanguageHistograms>,
}

pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    let mut documents: Vec<DocumentCounts> = docs.iter().map(document_counts).collect();
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut languages: BTreeMap<Language, LanguageHistograms> = Language::ALL
        .iter()
        .map(|&l| (l, LanguageHistograms::default()))
        .collect();
    for c in &documents {
        let h = languages.get_mut(&c.language).expect("all languages present");
        h.documents += 1;
        h.tokens.add(c.tokens);
        h.anonymized_tokens.add(c.anonymized_tokens);
        h.entities.add(c.entities);
        h.anonymized_entities.add(c.anonymized_entities);
    }
    CorpusStats { documents, languages }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharSpan, LabelTag};

    #[test]
    fn hand_counted_document() {
        let doc = Document::new("d", Language::De, "Hans Meier klagt heute .")
            .unwrap()
            .with_gold([(CharSpan::new(0, 10), LabelTag::new("PER").unwrap())])
            .unwrap();
        let c = document_counts(&doc);
        assert_eq!(
            (c.tokens, c.entities, c.anonymized_tokens, c.anonymized_entities),
            (5, 1, 2, 1)
        );
    }

    #[test]
    fn repeated_surface_is_one_anonymized_entity() {
        let doc = Document::new("d", Language::De, "Meier und Meier")
            .unwrap()
            .with_gold([
                (CharSpan::new(0, 5), LabelTag::new("PER").unwrap()),
                (CharSpan::new(10, 15), LabelTag::new("PER").unwrap()),
            ])
            .unwrap();
        let c = document_counts(&doc);
        assert_eq!((c.entities, c.anonymized_entities), (2, 1));
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let s = corpus_stats(&[]);
        assert!(s.documents.is_empty());
        assert_eq!(s.languages.len(), 3);
        assert!(s.languages.values().all(|h| h.documents == 0 && h.tokens.total() == 0));
    }

    #[test]
    fn languages_are_independent() {
        let de = Document::new(
            "a",
            Language::De,
            "Ein kurzer Satz mit zwölf Wörtern steht hier und endet dann hier .",
        )
        .unwrap();
        let fr = Document::new("b", Language::Fr, "Une phrase.").unwrap();
        let s = corpus_stats(&[de, fr]);
        assert_eq!(s.languages[&Language::De].documents, 1);
        assert_eq!(s.languages[&Language::Fr].documents, 1);
        assert_eq!(s.languages[&Language::It].documents, 0);
        assert_eq!(s.languages[&Language::De].tokens.counts.iter().sum::<u64>(), 1);
        assert_eq!(s.languages[&Language::Fr].tokens.underflow, 1);
    }

    #[test]
    fn log_edges_span_the_ranges() {
        let h = Histogram::log10(1, 5, 4);
        assert_eq!(h.bin_edges.first(), Some(&10.0));
        assert_eq!(h.bin_edges.last(), Some(&100000.0));
        assert_eq!(h.bin_edges[4], 100.0);
        assert_eq!(h.counts.len(), 16);
        let mut h = Histogram::log10(0, 4, 1);
        for v in [0, 1, 9, 10, 10000, 10001] {
            h.add(v);
        }
        assert_eq!(h.counts, [2, 1, 0, 1]);
        assert_eq!((h.underflow, h.overflow), (1, 1));
    }
}
