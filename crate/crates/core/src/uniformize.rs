//! Document-wide propagation of detected surfaces.
//!
//! Whatever was detected once is marked everywhere it occurs: every
//! occurrence of a detected surface gains a span with that surface's label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharSpan, Document, EntitySpan, LabelTag, Source};
use crate::detect::{keep_longest, IntervalSet};
use crate::prep::{tokenize, DocTokens};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UniformizeError {
    #[error("min_surface_len must be at least 1")]
    InvalidConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniformizeConfig {
    pub case_sensitive: bool,
    pub whole_token: bool,
    /// In characters; shorter surfaces are not propagated.
    pub min_surface_len: usize,
}

impl Default for UniformizeConfig {
    fn default() -> Self {
        Self {
            case_sensitive: true,
            whole_token: true,
            min_surface_len: 2,
        }
    }
}

impl UniformizeConfig {
    pub fn validate(&self) -> Result<(), UniformizeError> {
        if self.min_surface_len == 0 {
            return Err(UniformizeError::InvalidConfig);
        }
        Ok(())
    }
}

/// Token postings of one document. An n-gram is found by looking up its first
/// token and checking the tokens that follow.
#[derive(Debug, Clone, Default)]
pub struct SurfaceIndex {
    tokens: Vec<String>,
    postings: BTreeMap<String, Vec<usize>>,
}

impl SurfaceIndex {
    pub fn new(tokens: &DocTokens, case_sensitive: bool) -> Self {
        let texts: Vec<String> = tokens.tokens().iter().map(|t| fold(&t.text, case_sensitive)).collect();
        let mut postings: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in texts.iter().enumerate() {
            postings.entry(t.clone()).or_default().push(i);
        }
        Self {
            tokens: texts,
            postings,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token positions where the sequence `ngram` starts, ascending.
    pub fn occurrences<S: AsRef<str>>(&self, ngram: &[S]) -> Vec<usize> {
        let Some(first) = ngram.first() else { return Vec::new() };
        let Some(starts) = self.postings.get(first.as_ref()) else {
            return Vec::new();
        };
        starts
            .iter()
            .copied()
            .filter(|&i| {
                self.tokens
                    .get(i..i + ngram.len())
                    .is_some_and(|w| w.iter().zip(ngram).all(|(a, b)| a == b.as_ref()))
            })
            .collect()
    }
}

/// Case-sensitive index over the whole document.
pub fn surface_index(doc: &Document) -> SurfaceIndex {
    SurfaceIndex::new(&DocTokens::new(doc), true)
}

fn fold(s: &str, case_sensitive: bool) -> String {
    if case_sensitive {
        s.to_string()
    } else {
        s.to_lowercase()
    }
}

fn same_text(a: &str, b: &str, case_sensitive: bool) -> bool {
    if case_sensitive {
        a == b
    } else {
        a.chars().count() == b.chars().count()
            && a.chars()
                .zip(b.chars())
                .all(|(x, y)| x.to_lowercase().eq(y.to_lowercase()))
    }
}

struct Matcher<'a> {
    doc: &'a Document,
    cfg: &'a UniformizeConfig,
    tokens: DocTokens,
    index: SurfaceIndex,
    chars: Vec<char>,
}

impl<'a> Matcher<'a> {
    fn new(doc: &'a Document, cfg: &'a UniformizeConfig) -> Self {
        let tokens = DocTokens::new(doc);
        let index = SurfaceIndex::new(&tokens, cfg.case_sensitive);
        Self {
            doc,
            cfg,
            tokens,
            index,
            chars: doc.text().chars().collect(),
        }
    }

    fn find(&self, surface: &str) -> Vec<CharSpan> {
        if self.cfg.whole_token {
            let ngram: Vec<String> = tokenize(surface)
                .into_iter()
                .map(|t| fold(&t.text, self.cfg.case_sensitive))
                .collect();
            let toks = self.tokens.tokens();
            self.index
                .occurrences(&ngram)
                .into_iter()
                .map(|i| CharSpan::new(toks[i].span.start, toks[i + ngram.len() - 1].span.end))
                .filter(|&span| {
                    self.doc
                        .span_text(span)
                        .is_ok_and(|t| same_text(t, surface, self.cfg.case_sensitive))
                })
                .collect()
        } else {
            let needle: Vec<char> = surface.chars().collect();
            let eq = |a: &char, b: &char| {
                if self.cfg.case_sensitive {
                    a == b
                } else {
                    a.to_lowercase().eq(b.to_lowercase())
                }
            };
            if needle.is_empty() || needle.len() > self.chars.len() {
                return Vec::new();
            }
            (0..=self.chars.len() - needle.len())
                .filter(|&i| {
                    self.chars[i..i + needle.len()]
                        .iter()
                        .zip(&needle)
                        .all(|(a, b)| eq(a, b))
                })
                .map(|i| CharSpan::new(i, i + needle.len()))
                .collect()
        }
    }
}

/// Propagates every detected surface across `doc`.
///
/// The input spans are kept verbatim; new spans (source `uniformized`) fill
/// only positions no input span touches, longest surface first. The result
/// is sorted, a superset of the input, and idempotent.
pub fn uniformize(
    doc: &Document,
    spans: &[EntitySpan],
    cfg: &UniformizeConfig,
) -> Result<Vec<EntitySpan>, UniformizeError> {
    cfg.validate()?;
    let mut taken = IntervalSet::default();
    for e in spans {
        taken.try_insert(e.span);
    }
    // label and confidence of each surface come from its first detection
    let mut ordered: Vec<&EntitySpan> = spans.iter().collect();
    ordered.sort_by_key(|e| e.span);
    let mut surfaces: BTreeMap<&str, (&LabelTag, f64)> = BTreeMap::new();
    for e in ordered {
        if e.surface.chars().count() >= cfg.min_surface_len {
            surfaces.entry(e.surface.as_str()).or_insert((&e.label, e.confidence));
        }
    }
    let mut out: Vec<EntitySpan> = spans.to_vec();
    if !surfaces.is_empty() {
        let matcher = Matcher::new(doc, cfg);
        let mut candidates = Vec::new();
        for (surface, (label, confidence)) in &surfaces {
            for span in matcher.find(surface) {
                candidates.push(EntitySpan {
                    span,
                    label: (*label).clone(),
                    surface: doc.span_text(span).expect("match lies inside the document").to_string(),
                    source: Source::Uniformized,
                    confidence: *confidence,
                    cross_sentence: false,
                });
            }
        }
        out.extend(keep_longest(candidates, &mut taken));
    }
    out.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.label.cmp(&b.label)));
    Ok(out)
}
