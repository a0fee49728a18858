use std::collections::{BTreeMap, BTreeSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelTag;

use super::TokenSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Percentage metrics, rounded to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `100 * num / den` rounded half away from zero to two decimals, exactly.
pub fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let hundredths = (20_000 * num + den) / (2 * den);
    hundredths as f64 / 100.0
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl Counts {
    pub fn scores(&self) -> Scores {
        Scores {
            precision: percent(self.tp, self.tp + self.fp),
            recall: percent(self.tp, self.tp + self.fn_),
            f1: percent(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
        }
    }

    fn raw(&self) -> (f64, f64, f64) {
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
        (
            ratio(self.tp, self.tp + self.fp),
            ratio(self.tp, self.tp + self.fn_),
            ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
        )
    }
}

/// Per-label exact-match counts of one aligned sequence (or corpus, when the
/// span type carries a document key). Duplicate spans count once.
pub fn count_matches<K: Ord>(gold: &[K], pred: &[K], label: impl Fn(&K) -> &LabelTag) -> BTreeMap<LabelTag, Counts> {
    let gold: BTreeSet<&K> = gold.iter().collect();
    let pred: BTreeSet<&K> = pred.iter().collect();
    let mut out: BTreeMap<LabelTag, Counts> = BTreeMap::new();
    for g in &gold {
        let c = out.entry(label(g).clone()).or_default();
        if pred.contains(g) {
            c.tp += 1;
        } else {
            c.fn_ += 1;
        }
    }
    for p in pred.difference(&gold) {
        out.entry(label(p).clone()).or_default().fp += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    #[default]
    Normal,
    Uniformized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    #[serde(flatten)]
    pub scores: Scores,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub documents: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    pub averaging: Averaging,
    pub overall: Scores,
    pub counts: Counts,
    pub per_label: BTreeMap<LabelTag, LabelReport>,
    pub meta: ReportMeta,
}

impl EvalReport {
    pub fn from_counts(condition: Condition, averaging: Averaging, per_label: BTreeMap<LabelTag, Counts>) -> Self {
        let mut total = Counts::default();
        for c in per_label.values() {
            total += *c;
        }
        let overall = match averaging {
            Averaging::Micro => total.scores(),
            Averaging::Macro if per_label.is_empty() => Scores::default(),
            Averaging::Macro => {
                let n = per_label.len() as f64;
                let (p, r, f) = per_label
                    .values()
                    .map(Counts::raw)
                    .fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
                Scores {
                    precision: round2(p / n),
                    recall: round2(r / n),
                    f1: round2(f / n),
                }
            }
        };
        Self {
            condition,
            averaging,
            overall,
            counts: total,
            per_label: per_label
                .into_iter()
                .map(|(l, c)| {
                    (
                        l,
                        LabelReport {
                            scores: c.scores(),
                            counts: c,
                        },
                    )
                })
                .collect(),
            meta: ReportMeta::default(),
        }
    }
}

/// Strict span-level scores of one tag sequence.
pub fn score(gold: &[TokenSpan], pred: &[TokenSpan]) -> EvalReport {
    EvalReport::from_counts(
        Condition::Normal,
        Averaging::Micro,
        count_matches(gold, pred, |s| &s.label),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize, l: &str) -> TokenSpan {
        TokenSpan::new(a, b, LabelTag::new(l).unwrap())
    }

    #[test]
    fn half_right() {
        let r = score(&[s(0, 2, "PER"), s(5, 6, "LOC")], &[s(0, 2, "PER"), s(8, 9, "LOC")]);
        assert_eq!(r.counts, Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(
            r.overall,
            Scores {
                precision: 50.0,
                recall: 50.0,
                f1: 50.0
            }
        );
    }

    #[test]
    fn identity_and_empty() {
        let g = [s(0, 2, "PER"), s(3, 4, "ORG")];
        assert_eq!(
            score(&g, &g).overall,
            Scores {
                precision: 100.0,
                recall: 100.0,
                f1: 100.0
            }
        );
        assert_eq!(score(&g, &[]).overall, Scores::default());
        assert_eq!(score(&[], &[]).overall, Scores::default());
    }

    #[test]
    fn label_mismatch_is_both_fp_and_fn() {
        let r = score(&[s(0, 2, "PER")], &[s(0, 2, "ORG")]);
        assert_eq!(r.counts, Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r.per_label[&LabelTag::new("ORG").unwrap()].counts.fp, 1);
    }

    #[test]
    fn exact_rounding() {
        assert_eq!(percent(1, 3), 33.33);
        assert_eq!(percent(2, 3), 66.67);
        assert_eq!(percent(1, 8), 12.5);
        assert_eq!(percent(1, 16), 6.25);
        assert_eq!(percent(1, 0), 0.0);
        // 6.25 hundredths
        assert_eq!(percent(1, 1600), 0.06);
        // 12.5 hundredths
        assert_eq!(percent(1, 800), 0.13);
    }

    #[test]
    fn macro_average() {
        let per = BTreeMap::from([
            (LabelTag::new("PER").unwrap(), Counts { tp: 1, fp: 0, fn_: 0 }),
            (LabelTag::new("LOC").unwrap(), Counts { tp: 0, fp: 1, fn_: 1 }),
        ]);
        let r = EvalReport::from_counts(Condition::Normal, Averaging::Macro, per);
        assert_eq!(
            r.overall,
            Scores {
                precision: 50.0,
                recall: 50.0,
                f1: 50.0
            }
        );
    }
}
