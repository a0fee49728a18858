//! Token-classification dataset preparation and corpus measures.

mod chunk;
mod iob2;
mod sample;
mod split;
mod stats;
mod tokenize;

pub use chunk::{chunk_windows, chunk_with, reconstruct, winning_window, Window, WindowGeometry};
pub use iob2::{to_iob2, Iob2Encoding};
pub use sample::{negative_quota, sample_negatives, sample_negatives_seeded};
pub use split::{split_corpus, split_sizes, CorpusSplit};
pub use stats::{corpus_stats, document_counts, CorpusStats, DocumentCounts, Histogram, LanguageHistograms};
pub use tokenize::{tokenize, DocTokens, Token};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharSpan, CorpusError, Document, EntitySpan, LabelSet, Language};
use crate::iob::Tag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrepError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("overlapping entities {first} and {second}")]
    Overlap { first: CharSpan, second: CharSpan },
    #[error("corpus has {0} documents, at least 3 are needed for a split")]
    InsufficientCorpus(usize),
    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<PrepError>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Whether the negative ratio is applied per language or over the whole split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeScope {
    #[default]
    PerLanguage,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub max_seq_len: usize,
    pub truncation_stride_ratio: f64,
    pub neg_to_pos_ratio: f64,
    pub split_fractions: [f64; 3],
    pub rng_seed: u64,
    #[serde(default)]
    pub negative_scope: NegativeScope,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            max_seq_len: 192,
            truncation_stride_ratio: 0.5,
            neg_to_pos_ratio: 1.5,
            split_fractions: [0.8, 0.1, 0.1],
            rng_seed: 42,
            negative_scope: NegativeScope::PerLanguage,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        let bad = |m: String| Err(PrepError::InvalidConfig(m));
        if self.max_seq_len < 2 {
            return bad(format!("max_seq_len must be at least 2, got {}", self.max_seq_len));
        }
        let r = self.truncation_stride_ratio;
        if !(r > 0.0 && r < 1.0) {
            return bad(format!("truncation_stride_ratio must lie in (0, 1), got {r}"));
        }
        if !(self.neg_to_pos_ratio >= 0.0 && self.neg_to_pos_ratio.is_finite()) {
            return bad(format!("neg_to_pos_ratio must be >= 0, got {}", self.neg_to_pos_ratio));
        }
        let f = self.split_fractions;
        if f.iter().any(|x| x.is_nan() || *x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must be >= 0 and sum to 1, got {f:?}"));
        }
        Ok(())
    }
}

/// One window of one sentence, IOB2-labelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub doc_id: String,
    pub sentence_index: usize,
    pub window: Window,
    pub tokens: Vec<String>,
    pub labels: Vec<Tag>,
}

impl TrainingExample {
    pub fn is_positive(&self) -> bool {
        self.labels.iter().any(|t| !t.is_outside())
    }
}

/// Counters for data quality issues met while preparing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepReport {
    pub dropped_cross_sentence: usize,
    pub snapped: usize,
    pub unaligned: usize,
    pub positives: usize,
    pub negatives_before: usize,
    pub negatives_after: usize,
}

/// All windows of every sentence in `doc`, in `(sentence, window)` order.
pub fn document_examples(
    doc: &Document,
    labels: &LabelSet,
    cfg: &PrepConfig,
    report: &mut PrepReport,
) -> Result<Vec<TrainingExample>, PrepError> {
    let geo = WindowGeometry::from_config(cfg)?;
    let gold = doc.gold().unwrap_or_default();
    for e in gold {
        labels.check(&e.label)?;
    }
    report.dropped_cross_sentence += gold.iter().filter(|e| e.cross_sentence).count();

    let mut out = Vec::new();
    for (si, sentence) in doc.sentences().iter().enumerate() {
        let text = doc.span_text(*sentence)?;
        let tokens = tokenize(text);
        let entities: Vec<EntitySpan> = gold
            .iter()
            .filter(|e| !e.cross_sentence && sentence.contains(&e.span))
            .map(|e| EntitySpan {
                span: CharSpan::new(e.span.start - sentence.start, e.span.end - sentence.start),
                ..e.clone()
            })
            .collect();
        let enc = to_iob2(&tokens, &entities)?;
        report.snapped += enc.snapped;
        report.unaligned += enc.unaligned;
        for w in chunk_with(tokens.len(), geo) {
            out.push(TrainingExample {
                doc_id: doc.id().to_string(),
                sentence_index: si,
                window: w,
                tokens: tokens[w.start..w.end].iter().map(|t| t.text.clone()).collect(),
                labels: enc.tags[w.start..w.end].to_vec(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct PreparedDataset {
    pub train: Vec<TrainingExample>,
    pub validation: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    pub report: PrepReport,
}

/// Splits the corpus by document, windows every sentence and subsamples
/// negative windows in each split.
pub fn prepare_corpus(docs: Vec<Document>, labels: &LabelSet, cfg: &PrepConfig) -> Result<PreparedDataset, PrepError> {
    let split = split_corpus(docs, cfg)?;
    let mut report = PrepReport::default();
    let mut build = |docs: Vec<Document>| -> Result<Vec<TrainingExample>, PrepError> {
        let mut docs = docs;
        docs.sort_by(|a, b| a.id().cmp(b.id()));
        let mut by_lang: BTreeMap<Language, Vec<TrainingExample>> = BTreeMap::new();
        let mut all = Vec::new();
        for doc in &docs {
            let ex = document_examples(doc, labels, cfg, &mut report).map_err(|e| PrepError::Document {
                doc_id: doc.id().to_string(),
                source: Box::new(e),
            })?;
            match cfg.negative_scope {
                NegativeScope::PerLanguage => by_lang.entry(doc.language()).or_default().extend(ex),
                NegativeScope::Global => all.extend(ex),
            }
        }
        let groups: Vec<(u64, Vec<TrainingExample>)> = match cfg.negative_scope {
            NegativeScope::Global => vec![(cfg.rng_seed, all)],
            NegativeScope::PerLanguage => by_lang
                .into_iter()
                .map(|(l, ex)| (cfg.rng_seed ^ language_salt(l), ex))
                .collect(),
        };
        let mut kept = Vec::new();
        for (seed, ex) in groups {
            let sampled = sample_negatives_seeded(&ex, cfg.neg_to_pos_ratio, seed);
            let pos = ex.iter().filter(|e| e.is_positive()).count();
            report.positives += pos;
            report.negatives_before += ex.len() - pos;
            report.negatives_after += sampled.len() - pos;
            kept.extend(sampled);
        }
        kept.sort_by(|a, b| (&a.doc_id, a.sentence_index, a.window).cmp(&(&b.doc_id, b.sentence_index, b.window)));
        Ok(kept)
    };
    let train = build(split.train)?;
    let validation = build(split.validation)?;
    let test = build(split.test)?;
    Ok(PreparedDataset {
        train,
        validation,
        test,
        report,
    })
}

fn language_salt(l: Language) -> u64 {
    match l {
        Language::De => 0x6465,
        Language::Fr => 0x6672,
        Language::It => 0x6974,
    }
}
