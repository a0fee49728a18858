//! Deterministic rule-based sentence splitter.
//!
//! A boundary is placed after `.`, `!`, `?` or `:` (plus any closing quotes or
//! brackets) when whitespace and then an uppercase letter or digit follow. For
//! `.` the boundary is suppressed when the preceding whitespace-delimited token
//! is a known abbreviation, a one- or two-digit ordinal, or an anonymized party
//! marker such as `A.` / `A.________`. A line break after the terminal always
//! keeps the boundary.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::corpus::{CharSpan, Language};

const TERMINALS: [char; 4] = ['.', '!', '?', ':'];
const CLOSERS: [char; 8] = ['"', '\'', ')', ']', '»', '’', '”', '›'];
const OPENERS: [char; 8] = ['"', '\'', '(', '[', '«', '‘', '“', '‹'];

#[derive(Debug, Clone, Default)]
pub struct AbbreviationTable(HashSet<String>);

impl AbbreviationTable {
    /// Parses one abbreviation per line; blank lines and `#` comments are ignored.
    pub fn parse(data: &str) -> Self {
        Self(
            data.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn builtin(language: Language) -> &'static AbbreviationTable {
        static DE: OnceLock<AbbreviationTable> = OnceLock::new();
        static FR: OnceLock<AbbreviationTable> = OnceLock::new();
        static IT: OnceLock<AbbreviationTable> = OnceLock::new();
        match language {
            Language::De => DE.get_or_init(|| Self::parse(include_str!("../data/abbreviations/de.txt"))),
            Language::Fr => FR.get_or_init(|| Self::parse(include_str!("../data/abbreviations/fr.txt"))),
            Language::It => IT.get_or_init(|| Self::parse(include_str!("../data/abbreviations/it.txt"))),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn insert(&mut self, token: impl Into<String>) {
        self.0.insert(token.into());
    }
}

pub fn segment_sentences(text: &str, language: Language) -> Vec<CharSpan> {
    segment_with(text, AbbreviationTable::builtin(language))
}

pub fn segment_with(text: &str, abbreviations: &AbbreviationTable) -> Vec<CharSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut ends = Vec::new();

    for i in 0..n {
        if !TERMINALS.contains(&chars[i]) {
            continue;
        }
        let mut j = i + 1;
        while j < n && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        if j >= n || !chars[j].is_whitespace() {
            continue;
        }
        let mut k = j;
        let mut line_break = false;
        while k < n && chars[k].is_whitespace() {
            line_break |= chars[k] == '\n';
            k += 1;
        }
        while k < n && OPENERS.contains(&chars[k]) {
            k += 1;
        }
        if k >= n || !(chars[k].is_uppercase() || chars[k].is_numeric()) {
            continue;
        }
        if chars[i] == '.' && !line_break {
            let mut s = i;
            while s > 0 && !chars[s - 1].is_whitespace() {
                s -= 1;
            }
            while s < i && OPENERS.contains(&chars[s]) {
                s += 1;
            }
            let token: String = chars[s..=i].iter().collect();
            if suppresses_boundary(&token, abbreviations) {
                continue;
            }
        }
        ends.push(j);
    }

    let mut spans = Vec::with_capacity(ends.len() + 1);
    let mut start = 0;
    for end in ends.into_iter().chain(std::iter::once(n)) {
        let mut s = start;
        while s < end && chars[s].is_whitespace() {
            s += 1;
        }
        let mut e = end;
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push(CharSpan::new(s, e));
        }
        start = end;
    }
    spans
}

fn suppresses_boundary(token: &str, abbreviations: &AbbreviationTable) -> bool {
    abbreviations.contains(token) || is_party_marker(token) || is_ordinal(token)
}

/// `[A-Z]\.(_{2,})?`, matched against a whole token.
pub(crate) fn is_party_marker(token: &str) -> bool {
    let mut it = token.chars();
    match (it.next(), it.next()) {
        (Some(c), Some('.')) if c.is_ascii_uppercase() => {
            let rest: Vec<char> = it.collect();
            rest.is_empty() || (rest.len() >= 2 && rest.iter().all(|&c| c == '_'))
        }
        _ => false,
    }
}

fn is_ordinal(token: &str) -> bool {
    token
        .strip_suffix('.')
        .is_some_and(|d| (1..=2).contains(&d.len()) && d.bytes().all(|b| b.is_ascii_digit()))
}
