use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, LabelSet, LabelTag};
use crate::iob::Tag;
use crate::prep::DocTokens;

use super::EvalError;

/// Entity over token indices `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    pub label: LabelTag,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize, label: LabelTag) -> Self {
        Self { start, end, label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedSpans {
    pub spans: Vec<TokenSpan>,
    /// `I-x` tags that had to start a new span.
    pub repairs: usize,
}

/// Decodes IOB2 tag strings, checking every label against `inventory`.
pub fn extract_spans<S: AsRef<str>>(labels: &[S], inventory: &LabelSet) -> Result<DecodedSpans, EvalError> {
    let tags = labels
        .iter()
        .map(|s| Tag::parse_in(s.as_ref(), inventory).map_err(|_| EvalError::UnknownLabel(s.as_ref().to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(decode_tags(&tags))
}

/// Maximal `B-x I-x*` runs become spans. An `I-x` that does not continue an
/// open `x` span starts a new one and is counted as a repair.
pub fn decode_tags(tags: &[Tag]) -> DecodedSpans {
    let mut out = DecodedSpans::default();
    let mut open: Option<(usize, &LabelTag)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => {
                if let Some((s, l)) = open.take() {
                    out.spans.push(TokenSpan::new(s, i, l.clone()));
                }
            }
            Tag::B(l) => {
                if let Some((s, prev)) = open.replace((i, l)) {
                    out.spans.push(TokenSpan::new(s, i, prev.clone()));
                }
            }
            Tag::I(l) => match open {
                Some((_, cur)) if cur == l => {}
                _ => {
                    out.repairs += 1;
                    if let Some((s, prev)) = open.replace((i, l)) {
                        out.spans.push(TokenSpan::new(s, i, prev.clone()));
                    }
                }
            },
        }
    }
    if let Some((s, l)) = open {
        out.spans.push(TokenSpan::new(s, tags.len(), l.clone()));
    }
    out
}

/// Maps char-offset detections onto token spans (outward snapping); spans
/// covering no token are skipped. Duplicates are collapsed.
pub fn to_token_spans(tokens: &DocTokens, spans: &[EntitySpan]) -> Vec<TokenSpan> {
    let mut out: Vec<TokenSpan> = spans
        .iter()
        .filter_map(|e| {
            tokens
                .token_range(e.span)
                .map(|(s, t)| TokenSpan::new(s, t, e.label.clone()))
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
