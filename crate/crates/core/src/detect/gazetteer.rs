use std::collections::BTreeMap;

use crate::corpus::{CharSpan, Document, EntitySpan, LabelTag, Source};
use crate::prep::DocTokens;

use super::merge::{keep_longest, IntervalSet};

/// Every occurrence of `surface` that starts at a token start and ends at a
/// token end (case-sensitive, overlapping occurrences included).
pub fn find_whole_token(doc: &Document, tokens: &DocTokens, surface: &str) -> Vec<CharSpan> {
    let text = doc.text();
    let mut out = Vec::new();
    if surface.is_empty() {
        return out;
    }
    let mut from = 0;
    while let Some(rel) = text[from..].find(surface) {
        let bs = from + rel;
        let be = bs + surface.len();
        let span = CharSpan::new(doc.char_offset(bs), doc.char_offset(be));
        if tokens.is_aligned(span) {
            out.push(span);
        }
        from = bs + text[bs..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Whole-token exact matches of known surfaces; the longest surface wins on overlap.
pub fn detect_gazetteer(
    doc: &Document,
    gazetteer: &BTreeMap<LabelTag, Vec<String>>,
    confidence: f64,
) -> Vec<EntitySpan> {
    if gazetteer.values().all(Vec::is_empty) {
        return Vec::new();
    }
    let tokens = DocTokens::new(doc);
    let mut candidates = Vec::new();
    for (label, surfaces) in gazetteer {
        for surface in surfaces {
            for span in find_whole_token(doc, &tokens, surface) {
                candidates.push(EntitySpan {
                    span,
                    label: label.clone(),
                    surface: surface.clone(),
                    source: Source::Gazetteer,
                    confidence,
                    cross_sentence: false,
                });
            }
        }
    }
    keep_longest(candidates, &mut IntervalSet::default())
}
