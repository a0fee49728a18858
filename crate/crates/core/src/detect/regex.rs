use regex::Regex;
use regex_automata::{meta, Anchored, Input, MatchKind};
use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, EntitySpan, LabelTag, Source};

use super::DetectError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexRule {
    pub pattern: String,
    pub label: LabelTag,
    /// Inline flag letters (`i`, `m`, `s`, `x`, `U`).
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub flags: String,
}

impl RegexRule {
    pub fn new(pattern: impl Into<String>, label: LabelTag) -> Self {
        Self {
            pattern: pattern.into(),
            label,
            flags: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    first: Regex,
    longest: meta::Regex,
    label: LabelTag,
}

impl CompiledRule {
    pub fn compile(rule: &RegexRule) -> Result<Self, DetectError> {
        if let Some(bad) = rule.flags.chars().find(|c| !"imsxU".contains(*c)) {
            return Err(DetectError::InvalidConfig(format!(
                "unsupported regex flag {bad:?} in rule {:?}",
                rule.pattern
            )));
        }
        let source = if rule.flags.is_empty() {
            rule.pattern.clone()
        } else {
            format!("(?{}){}", rule.flags, rule.pattern)
        };
        let invalid = |e: String| DetectError::InvalidConfig(format!("rule {:?}: {e}", rule.pattern));
        let first = Regex::new(&source).map_err(|e| invalid(e.to_string()))?;
        let longest = meta::Regex::builder()
            .configure(meta::Config::new().match_kind(MatchKind::All))
            .build(&source)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            first,
            longest,
            label: rule.label.clone(),
        })
    }

    pub fn label(&self) -> &LabelTag {
        &self.label
    }

    /// Non-overlapping leftmost-longest matches as byte ranges.
    pub fn find_all(&self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos <= text.len() {
            let Some(m) = self.first.find_at(text, pos) else { break };
            let start = m.start();
            let input = Input::new(text).range(start..).anchored(Anchored::Yes);
            let end = self.longest.search(&input).map_or(m.end(), |l| l.end().max(m.end()));
            if end == start {
                pos = next_boundary(text, start);
                continue;
            }
            out.push((start, end));
            pos = end;
        }
        out
    }
}

fn next_boundary(text: &str, at: usize) -> usize {
    text[at..].chars().next().map_or(text.len() + 1, |c| at + c.len_utf8())
}

pub fn compile_rules(rules: &[RegexRule]) -> Result<Vec<CompiledRule>, DetectError> {
    rules.iter().map(CompiledRule::compile).collect()
}

/// Runs every rule independently; spans from different rules may overlap.
pub fn detect_regex(doc: &Document, rules: &[CompiledRule], confidence: f64) -> Vec<EntitySpan> {
    let mut out = Vec::new();
    for rule in rules {
        for (bs, be) in rule.find_all(doc.text()) {
            let span = CharSpan::new(doc.char_offset(bs), doc.char_offset(be));
            out.push(EntitySpan {
                span,
                label: rule.label.clone(),
                surface: doc.text()[bs..be].to_string(),
                source: Source::Regex,
                confidence,
                cross_sentence: false,
            });
        }
    }
    out.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.label.cmp(&b.label)));
    out
}
