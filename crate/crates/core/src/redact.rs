//! Placeholder assignment and rendering of the anonymized ruling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharSpan, Document, EntitySpan, LabelTag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedactError {
    #[error("no replacement for surface {0:?}")]
    MissingReplacement(String),
    #[error("spans {0} and {1} overlap")]
    Overlap(CharSpan, CharSpan),
    #[error("span {0} does not match the document text")]
    SurfaceMismatch(CharSpan),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderPolicy {
    /// `A.________`, `B.________`, ..., `Z.________`, `AA.________`, ...
    #[default]
    Letters,
    /// `⟨PER_1⟩`, `⟨PER_2⟩`, `⟨LOC_1⟩`, ...
    LabelNumbered,
    /// Caller-chosen placeholders; unlisted surfaces fall back to letters.
    Custom(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub surface: String,
    pub placeholder: String,
    pub label: LabelTag,
}

/// Surface → placeholder, in order of first occurrence. Injective.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplacementMap {
    pub policy: PlaceholderPolicy,
    pub entries: Vec<Replacement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ReplacementMap {
    pub fn get(&self, surface: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|r| r.surface == surface)
            .map(|r| r.placeholder.as_str())
    }

    /// Index of `surface` in first-occurrence order.
    pub fn position(&self, surface: &str) -> Option<usize> {
        self.entries.iter().position(|r| r.surface == surface)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self) -> HashMap<&str, &str> {
        self.entries
            .iter()
            .map(|r| (r.surface.as_str(), r.placeholder.as_str()))
            .collect()
    }
}

/// Bijective base-26: 0 → A, 25 → Z, 26 → AA, 27 → AB, ...
pub fn letter_code(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn letter_placeholder(n: usize) -> String {
    format!("{}.________", letter_code(n))
}

fn with_suffix(p: &str, k: usize) -> String {
    if let Some(stem) = p.strip_suffix(".________") {
        format!("{stem}{k}.________")
    } else if let Some(stem) = p.strip_suffix('⟩') {
        format!("{stem}_{k}⟩")
    } else {
        format!("{p}{k}")
    }
}

/// Text outside `spans`, with a separator at every cut so a collision check
/// cannot match across a removed span.
fn remaining_text(doc: &Document, spans: &[&EntitySpan]) -> String {
    let text = doc.text();
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for e in spans {
        let b = doc.byte_offset(e.span.start);
        if b > at {
            out.push_str(&text[at..b]);
        }
        out.push('\0');
        at = at.max(doc.byte_offset(e.span.end));
    }
    out.push_str(&text[at..]);
    out
}

/// Gives every distinct accepted surface a placeholder, in order of first
/// occurrence. A placeholder that already occurs in the remaining document
/// text, or is already taken, gets a numeric suffix.
pub fn assign_placeholders(doc: &Document, accepted: &[EntitySpan], policy: &PlaceholderPolicy) -> ReplacementMap {
    assign_with_overrides(doc, accepted, policy, &BTreeMap::new())
}

/// Like [`assign_placeholders`], with explicit per-surface placeholders taking
/// precedence over the policy.
pub fn assign_with_overrides(
    doc: &Document,
    accepted: &[EntitySpan],
    policy: &PlaceholderPolicy,
    overrides: &BTreeMap<String, String>,
) -> ReplacementMap {
    let empty = BTreeMap::new();
    let table = match policy {
        PlaceholderPolicy::Custom(t) => t,
        _ => &empty,
    };
    let mut ordered: Vec<&EntitySpan> = accepted.iter().collect();
    ordered.sort_by_key(|e| e.span);
    let remaining = remaining_text(doc, &ordered);
    let mut map = ReplacementMap {
        policy: policy.clone(),
        ..Default::default()
    };
    let mut used: HashSet<String> = HashSet::new();
    let mut next_letter = 0;
    let mut per_label: BTreeMap<&LabelTag, usize> = BTreeMap::new();
    for e in ordered {
        if map.get(&e.surface).is_some() {
            continue;
        }
        let free = |p: &str, used: &HashSet<String>| !used.contains(p) && !remaining.contains(p);
        let base = match policy {
            _ if overrides.contains_key(&e.surface) || table.contains_key(&e.surface) => {
                let p = overrides.get(&e.surface).unwrap_or_else(|| &table[&e.surface]).clone();
                if used.contains(&p) {
                    map.warnings.push(format!(
                        "placeholder {p:?} requested for more than one surface; {:?} gets a distinct one",
                        e.surface
                    ));
                }
                p
            }
            PlaceholderPolicy::LabelNumbered => loop {
                let k = per_label.entry(&e.label).or_insert(0);
                *k += 1;
                let p = format!("⟨{}_{}⟩", e.label, k);
                if free(&p, &used) {
                    break p;
                }
            },
            _ => loop {
                let p = letter_placeholder(next_letter);
                next_letter += 1;
                if free(&p, &used) {
                    break p;
                }
            },
        };
        let mut placeholder = base.clone();
        let mut k = 2;
        while !free(&placeholder, &used) {
            placeholder = with_suffix(&base, k);
            k += 1;
        }
        used.insert(placeholder.clone());
        map.entries.push(Replacement {
            surface: e.surface.clone(),
            placeholder,
            label: e.label.clone(),
        });
    }
    map
}

/// One replaced span: where it was, and where its placeholder ended up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetMapping {
    pub original: CharSpan,
    pub replaced: CharSpan,
    pub surface: String,
    pub placeholder: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizedDocument {
    pub doc_id: String,
    pub text: String,
    pub mappings: Vec<OffsetMapping>,
}

/// Replaces every accepted span with its placeholder. Text between spans is
/// copied unchanged.
pub fn render(
    doc: &Document,
    accepted: &[EntitySpan],
    map: &ReplacementMap,
) -> Result<AnonymizedDocument, RedactError> {
    let mut spans: Vec<&EntitySpan> = accepted.iter().collect();
    spans.sort_by_key(|e| e.span);
    for w in spans.windows(2) {
        if w[0].span.overlaps(&w[1].span) {
            return Err(RedactError::Overlap(w[0].span, w[1].span));
        }
    }
    let lookup = map.lookup();
    let text = doc.text();
    let mut out = String::with_capacity(text.len());
    let mut out_chars = 0;
    let mut at = 0;
    let mut mappings = Vec::with_capacity(spans.len());
    for e in spans {
        if doc.span_text(e.span).ok() != Some(e.surface.as_str()) {
            return Err(RedactError::SurfaceMismatch(e.span));
        }
        let placeholder = *lookup
            .get(e.surface.as_str())
            .ok_or_else(|| RedactError::MissingReplacement(e.surface.clone()))?;
        out.push_str(&text[doc.byte_offset(at)..doc.byte_offset(e.span.start)]);
        out_chars += e.span.start - at;
        let len = placeholder.chars().count();
        out.push_str(placeholder);
        mappings.push(OffsetMapping {
            original: e.span,
            replaced: CharSpan::new(out_chars, out_chars + len),
            surface: e.surface.clone(),
            placeholder: placeholder.to_string(),
        });
        out_chars += len;
        at = e.span.end;
    }
    out.push_str(&text[doc.byte_offset(at)..]);
    Ok(AnonymizedDocument {
        doc_id: doc.id().to_string(),
        text: out,
        mappings,
    })
}

impl AnonymizedDocument {
    /// Puts the original surfaces back; yields the source text exactly.
    pub fn restore(&self) -> String {
        let chars: Vec<char> = self.text.chars().collect();
        let mut out = String::with_capacity(self.text.len());
        let mut at = 0;
        for m in &self.mappings {
            out.extend(&chars[at..m.replaced.start]);
            out.push_str(&m.surface);
            at = m.replaced.end;
        }
        out.extend(&chars[at..]);
        out
    }

    /// HTML export: replaced spans become `<mark>` elements carrying the
    /// surface id (its index in `map`) and a review status.
    pub fn to_html(&self, map: &ReplacementMap, status: impl Fn(&OffsetMapping) -> &'static str) -> String {
        let chars: Vec<char> = self.text.chars().collect();
        let mut out = String::from("<article class=\"ruling\">");
        let mut at = 0;
        for m in &self.mappings {
            push_escaped(
                &mut out,
                chars[at..m.replaced.start].iter().collect::<String>().as_str(),
            );
            let id = map
                .position(&m.surface)
                .map_or_else(|| "?".to_string(), |i| i.to_string());
            let _ = write!(out, "<mark data-surface-id=\"{id}\" data-status=\"{}\">", status(m));
            push_escaped(&mut out, &m.placeholder);
            out.push_str("</mark>");
            at = m.replaced.end;
        }
        push_escaped(&mut out, chars[at..].iter().collect::<String>().as_str());
        out.push_str("</article>\n");
        out
    }
}

fn push_escaped(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("<br>\n"),
            c => out.push(c),
        }
    }
}
