use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, EntitySpan, Source};

/// Disjoint half-open intervals keyed by start.
#[derive(Debug, Clone, Default)]
pub(crate) struct IntervalSet(BTreeMap<usize, usize>);

impl IntervalSet {
    pub fn overlaps(&self, span: CharSpan) -> bool {
        self.0
            .range(..span.end)
            .next_back()
            .is_some_and(|(_, &end)| end > span.start)
    }

    /// Inserts `span` unless it overlaps a stored interval.
    pub fn try_insert(&mut self, span: CharSpan) -> bool {
        if self.overlaps(span) {
            return false;
        }
        self.0.insert(span.start, span.end);
        true
    }
}

/// Source precedence used when spans overlap; earlier wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePolicy {
    pub priority: Vec<Source>,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self {
            priority: vec![
                Source::Manual,
                Source::Gold,
                Source::Regex,
                Source::Model,
                Source::Conventional,
                Source::Gazetteer,
                Source::Uniformized,
            ],
        }
    }
}

impl MergePolicy {
    pub fn rank(&self, source: Source) -> usize {
        self.priority
            .iter()
            .position(|&s| s == source)
            .unwrap_or(self.priority.len())
    }
}

/// Resolves overlaps between detector outputs.
///
/// Spans are considered by source priority, then length (longer first), then
/// start; a span is kept if it does not overlap an already kept one. The
/// result is sorted and non-overlapping and does not depend on input order.
pub fn merge(results: &[Vec<EntitySpan>], policy: &MergePolicy) -> Vec<EntitySpan> {
    let mut all: Vec<&EntitySpan> = results.iter().flatten().collect();
    all.sort_by(|a, b| {
        let key = |e: &EntitySpan| (policy.rank(e.source), Reverse(e.span.len()), e.span.start, e.source);
        key(a)
            .cmp(&key(b))
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| b.confidence.total_cmp(&a.confidence))
    });
    let mut taken = IntervalSet::default();
    let mut out: Vec<EntitySpan> = all.into_iter().filter(|e| taken.try_insert(e.span)).cloned().collect();
    out.sort_by_key(|e| e.span);
    out
}

/// Greedy longest-first selection among candidates of equal standing.
pub(crate) fn keep_longest(mut candidates: Vec<EntitySpan>, taken: &mut IntervalSet) -> Vec<EntitySpan> {
    candidates.sort_by(|a, b| {
        (Reverse(a.span.len()), a.span.start, &a.label).cmp(&(Reverse(b.span.len()), b.span.start, &b.label))
    });
    let mut out: Vec<EntitySpan> = candidates.into_iter().filter(|e| taken.try_insert(e.span)).collect();
    out.sort_by_key(|e| e.span);
    out
}
