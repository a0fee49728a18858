//! Rubrum-driven party detection.
//!
//! Stage one cuts the rubrum: the document prefix that ends at the first
//! section marker ("Sachverhalt", "Faits", ...). Stage two looks for runs of
//! capitalized tokens next to a party-role cue ("Hans Meier, Beschwerdeführer")
//! inside the rubrum, then spans every whole-token occurrence of each found
//! surface across the document.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, EntitySpan, LabelTag, Language, Source};
use crate::prep::{DocTokens, Token};

use super::gazetteer::find_whole_token;
use super::merge::{keep_longest, IntervalSet};

const MAX_RUN: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConventionalConfig {
    pub rubrum_markers: BTreeMap<Language, Vec<String>>,
    pub party_cues: BTreeMap<Language, Vec<String>>,
    /// Tokens that turn a detected run into an organization.
    pub org_markers: Vec<String>,
    pub person_label: LabelTag,
    pub org_label: LabelTag,
    /// Rubrum length, as a fraction of the document, when no marker is found.
    pub fallback_fraction: f64,
    pub confidence: f64,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for ConventionalConfig {
    fn default() -> Self {
        Self {
            rubrum_markers: BTreeMap::from([
                (Language::De, strings(&["Sachverhalt", "Erwägungen"])),
                (Language::Fr, strings(&["Faits", "considérant"])),
                (Language::It, strings(&["Fatti", "Diritto"])),
            ]),
            party_cues: BTreeMap::from([
                (Language::De, strings(&["Beschwerdeführer", "Beschwerdegegner"])),
                (Language::Fr, strings(&["recourant", "intimé"])),
                (Language::It, strings(&["ricorrente", "opponente"])),
            ]),
            org_markers: strings(&[
                "AG",
                "SA",
                "GmbH",
                "Sàrl",
                "Sagl",
                "Group",
                "Holding",
                "Bank",
                "Banque",
                "Banca",
                "Versicherung",
                "Versicherungen",
                "Assurance",
                "Assurances",
                "Assicurazioni",
                "Insurance",
                "Stiftung",
                "Fondation",
                "Fondazione",
                "Verein",
                "Association",
                "Associazione",
                "Genossenschaft",
            ]),
            person_label: LabelTag::new("PER").expect("static label"),
            org_label: LabelTag::new("ORG").expect("static label"),
            fallback_fraction: 0.25,
            confidence: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConventionalOutcome {
    pub spans: Vec<EntitySpan>,
    pub rubrum: Option<CharSpan>,
    pub warnings: Vec<String>,
}

/// End offset (exclusive) of the rubrum, or `None` if no marker occurs.
pub fn rubrum_end(doc: &Document, tokens: &DocTokens, markers: &[String]) -> Option<usize> {
    markers
        .iter()
        .filter_map(|m| find_whole_token(doc, tokens, m).first().map(|s| s.start))
        .min()
}

pub fn detect_conventional(doc: &Document, cfg: &ConventionalConfig) -> ConventionalOutcome {
    let tokens = DocTokens::new(doc);
    let mut warnings = Vec::new();
    let markers = cfg
        .rubrum_markers
        .get(&doc.language())
        .map(Vec::as_slice)
        .unwrap_or_default();
    let end = match rubrum_end(doc, &tokens, markers) {
        Some(end) => end,
        None => {
            let end = (doc.char_len() as f64 * cfg.fallback_fraction).floor() as usize;
            warnings.push(format!(
                "no rubrum marker found in document {}; using the first {end} chars",
                doc.id()
            ));
            end
        }
    };
    let rubrum = CharSpan::try_new(0, end);
    let cues = cfg
        .party_cues
        .get(&doc.language())
        .map(Vec::as_slice)
        .unwrap_or_default();
    let lines = token_lines(doc.text(), tokens.tokens());
    let in_rubrum = tokens.tokens().partition_point(|t| t.span.end <= end);
    let rubrum_tokens = &tokens.tokens()[..in_rubrum];

    let mut surfaces: BTreeMap<String, LabelTag> = BTreeMap::new();
    for (i, tok) in rubrum_tokens.iter().enumerate() {
        if !is_cue(&tok.text, cues) {
            continue;
        }
        let runs = [
            run_before(rubrum_tokens, &lines, i, cues),
            run_after(rubrum_tokens, &lines, i, cues),
        ];
        for (a, b) in runs.into_iter().flatten() {
            let span = tokens.char_span(a, b);
            let Ok(surface) = doc.span_text(span) else { continue };
            if surface.chars().count() < 2 {
                continue;
            }
            let is_org = rubrum_tokens[a..b].iter().any(|t| cfg.org_markers.contains(&t.text));
            let label = if is_org { &cfg.org_label } else { &cfg.person_label };
            surfaces.entry(surface.to_string()).or_insert_with(|| label.clone());
        }
    }

    let mut candidates = Vec::new();
    for (surface, label) in &surfaces {
        for span in find_whole_token(doc, &tokens, surface) {
            candidates.push(EntitySpan {
                span,
                label: label.clone(),
                surface: surface.clone(),
                source: Source::Conventional,
                confidence: cfg.confidence,
                cross_sentence: false,
            });
        }
    }
    ConventionalOutcome {
        spans: keep_longest(candidates, &mut IntervalSet::default()),
        rubrum,
        warnings,
    }
}

fn is_cue(token: &str, cues: &[String]) -> bool {
    let lower = token.to_lowercase();
    cues.iter().any(|c| lower.starts_with(&c.to_lowercase()))
}

fn is_name_token(token: &Token, cues: &[String]) -> bool {
    let mut chars = token.text.chars();
    chars.next().is_some_and(char::is_uppercase)
        && token.text.chars().all(char::is_alphabetic)
        && !is_cue(&token.text, cues)
}

/// Line number of every token start.
fn token_lines(text: &str, tokens: &[Token]) -> Vec<usize> {
    let mut line_at = Vec::with_capacity(text.len());
    let mut line = 0;
    for c in text.chars() {
        line_at.push(line);
        if c == '\n' {
            line += 1;
        }
    }
    tokens.iter().map(|t| line_at[t.span.start]).collect()
}

/// `Hans Meier, Beschwerdeführer` / `Hans Meier (Beschwerdeführer)`.
fn run_before(tokens: &[Token], lines: &[usize], cue: usize, cues: &[String]) -> Option<(usize, usize)> {
    let line = lines[cue];
    let mut j = cue;
    while j > 0 && lines[j - 1] == line && matches!(tokens[j - 1].text.as_str(), "," | "(") {
        j -= 1;
    }
    let end = j;
    while j > 0 && end - j < MAX_RUN && lines[j - 1] == line && is_name_token(&tokens[j - 1], cues) {
        j -= 1;
    }
    (j < end).then_some((j, end))
}

/// `Beschwerdeführer: Hans Meier`.
fn run_after(tokens: &[Token], lines: &[usize], cue: usize, cues: &[String]) -> Option<(usize, usize)> {
    let line = lines[cue];
    let colon = cue + 1;
    if tokens.get(colon).is_none_or(|t| t.text != ":" || lines[colon] != line) {
        return None;
    }
    let start = colon + 1;
    let mut j = start;
    while j < tokens.len() && j - start < MAX_RUN && lines[j] == line && is_name_token(&tokens[j], cues) {
        j += 1;
    }
    (j > start).then_some((start, j))
}

/// Surfaces found by the heuristic, for reporting.
pub fn detected_surfaces(outcome: &ConventionalOutcome) -> BTreeSet<&str> {
    outcome.spans.iter().map(|e| e.surface.as_str()).collect()
}
