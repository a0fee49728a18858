use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntitySpan, LabelTag};
use crate::detect::Pipeline;
use crate::prep::DocTokens;
use crate::uniformize::{uniformize, UniformizeConfig};

use super::{count_matches, to_token_spans, Averaging, Condition, Counts, EvalError, EvalReport, Scores, TokenSpan};

/// Uniformized minus normal, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Delta {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Delta {
    fn between(normal: &Scores, uniformized: &Scores) -> Self {
        let d = |a: f64, b: f64| super::round2(b - a);
        Self {
            precision: d(normal.precision, uniformized.precision),
            recall: d(normal.recall, uniformized.recall),
            f1: d(normal.f1, uniformized.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub normal: EvalReport,
    pub uniformized: EvalReport,
    pub delta: Delta,
}

type Keyed = (usize, TokenSpan);

fn keyed(doc: usize, spans: Vec<TokenSpan>) -> impl Iterator<Item = Keyed> {
    spans.into_iter().map(move |s| (doc, s))
}

fn keyed_label(k: &Keyed) -> &LabelTag {
    &k.1.label
}

/// Scores given detections (one list per document) against the documents'
/// gold spans, as-is and after uniformization.
pub fn evaluate_detections(
    docs: &[Document],
    detections: &[Vec<EntitySpan>],
    ucfg: &UniformizeConfig,
    averaging: Averaging,
) -> Result<ConditionReport, EvalError> {
    if docs.len() != detections.len() {
        return Err(EvalError::LengthMismatch(docs.len(), detections.len()));
    }
    ucfg.validate().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    let mut gold = Vec::new();
    let mut normal = Vec::new();
    let mut uniform = Vec::new();
    for (i, (doc, det)) in docs.iter().zip(detections).enumerate() {
        let g = doc.gold().ok_or_else(|| EvalError::MissingGold(doc.id().to_string()))?;
        let tokens = DocTokens::new(doc);
        gold.extend(keyed(i, to_token_spans(&tokens, g)));
        normal.extend(keyed(i, to_token_spans(&tokens, det)));
        let u = uniformize(doc, det, ucfg).map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        uniform.extend(keyed(i, to_token_spans(&tokens, &u)));
    }
    let report = |condition, pred: &[Keyed]| {
        let mut r = EvalReport::from_counts(condition, averaging, count_matches(&gold, pred, keyed_label));
        r.meta.documents = docs.len();
        r
    };
    let normal = report(Condition::Normal, &normal);
    let uniformized = report(Condition::Uniformized, &uniform);
    Ok(ConditionReport {
        delta: Delta::between(&normal.overall, &uniformized.overall),
        normal,
        uniformized,
    })
}

/// Runs `pipeline` over the corpus and scores both conditions. Detector
/// failures do not abort the run; they become report warnings.
pub fn evaluate_conditions(
    docs: &[Document],
    pipeline: &Pipeline,
    ucfg: &UniformizeConfig,
    averaging: Averaging,
) -> Result<ConditionReport, EvalError> {
    let mut warnings = Vec::new();
    let detections: Vec<Vec<EntitySpan>> = docs
        .iter()
        .map(|doc| {
            let r = pipeline.run(doc);
            for f in &r.failures {
                warnings.push(format!("{}: {} detector: {}", doc.id(), f.detector, f.error));
            }
            r.spans
        })
        .collect();
    let mut report = evaluate_detections(docs, &detections, ucfg, averaging)?;
    report.normal.meta.warnings = warnings.clone();
    report.uniformized.meta.warnings = warnings;
    Ok(report)
}

/// Plain-text table: one row per configuration, P/R/F1 under Normal and Uniformizing.
pub fn render_table(rows: &[(&str, &ConditionReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(["Configuration".len()])
        .max()
        .unwrap_or(0);
    let group = |a: &str, b: &str, c: &str| format!("{a:>7} {b:>7} {c:>7}");
    let nums = |s: &Scores| {
        group(
            &format!("{:.2}", s.precision),
            &format!("{:.2}", s.recall),
            &format!("{:.2}", s.f1),
        )
    };
    let mut out = String::new();
    out.push_str(&format!(
        "{:name_w$} | {:^23} | {:^23}\n",
        "Configuration", "Normal", "Uniformizing"
    ));
    out.push_str(&format!(
        "{:name_w$} | {} | {}\n",
        "",
        group("P", "R", "F1"),
        group("P", "R", "F1")
    ));
    out.push_str(&format!(
        "{}-+-{}-+-{}\n",
        "-".repeat(name_w),
        "-".repeat(23),
        "-".repeat(23)
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{name:name_w$} | {} | {}\n",
            nums(&r.normal.overall),
            nums(&r.uniformized.overall)
        ));
    }
    out
}

/// Label → counts, summed over reports (e.g. to pool several runs).
pub fn pooled_counts<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> BTreeMap<LabelTag, Counts> {
    let mut out: BTreeMap<LabelTag, Counts> = BTreeMap::new();
    for r in reports {
        for (l, lr) in &r.per_label {
            *out.entry(l.clone()).or_default() += lr.counts;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharSpan, Language, Source};

    fn gold_doc(id: &str, text: &str, surface: &str) -> Document {
        let spans: Vec<(CharSpan, LabelTag)> = text
            .match_indices(surface)
            .map(|(b, _)| {
                let s = text[..b].chars().count();
                (
                    CharSpan::new(s, s + surface.chars().count()),
                    LabelTag::new("PER").unwrap(),
                )
            })
            .collect();
        Document::new(id, Language::De, text).unwrap().with_gold(spans).unwrap()
    }

    fn first_only(doc: &Document) -> Vec<EntitySpan> {
        let g = &doc.gold().unwrap()[0];
        vec![EntitySpan {
            source: Source::Model,
            ..g.clone()
        }]
    }

    #[test]
    fn perfect_detector() {
        let docs = vec![gold_doc("a", "Meier klagt. Meier zahlt.", "Meier")];
        let det: Vec<Vec<EntitySpan>> = docs.iter().map(|d| d.gold().unwrap().to_vec()).collect();
        let r = evaluate_detections(&docs, &det, &UniformizeConfig::default(), Averaging::Micro).unwrap();
        let full = Scores {
            precision: 100.0,
            recall: 100.0,
            f1: 100.0,
        };
        assert_eq!((r.normal.overall, r.uniformized.overall), (full, full));
        assert_eq!(r.delta, Delta::default());
    }

    #[test]
    fn uniformizing_recovers_missed_occurrences() {
        let docs = vec![
            gold_doc("a", "Meier klagt. Meier zahlt. Meier geht.", "Meier"),
            gold_doc("b", "Huber klagt. Huber zahlt. Huber geht.", "Huber"),
        ];
        let det: Vec<Vec<EntitySpan>> = docs.iter().map(first_only).collect();
        let r = evaluate_detections(&docs, &det, &UniformizeConfig::default(), Averaging::Micro).unwrap();
        assert_eq!(r.normal.overall.recall, 33.33);
        assert_eq!(r.normal.overall.precision, 100.0);
        assert_eq!(r.uniformized.overall.recall, 100.0);
        assert_eq!(r.delta.recall, 66.67);
        assert_eq!(r.normal.meta.documents, 2);
    }

    #[test]
    fn errors() {
        let docs = vec![gold_doc("a", "Meier klagt.", "Meier")];
        assert_eq!(
            evaluate_detections(&docs, &[], &UniformizeConfig::default(), Averaging::Micro),
            Err(EvalError::LengthMismatch(1, 0))
        );
        let bare = vec![Document::new("x", Language::De, "Meier klagt.").unwrap()];
        assert!(matches!(
            evaluate_detections(&bare, &[vec![]], &UniformizeConfig::default(), Averaging::Micro),
            Err(EvalError::MissingGold(_))
        ));
    }

    #[test]
    fn table_shape() {
        let docs = vec![gold_doc("a", "Meier klagt. Meier zahlt. Meier geht.", "Meier")];
        let det: Vec<Vec<EntitySpan>> = docs.iter().map(first_only).collect();
        let r = evaluate_detections(&docs, &det, &UniformizeConfig::default(), Averaging::Micro).unwrap();
        let t = render_table(&[("first-mention", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("Normal") && lines[0].contains("Uniformizing"));
        assert!(lines[3].starts_with("first-mention | ") && lines[3].contains("33.33") && lines[3].contains("100.00"));
        assert!(lines.iter().all(|l| l.chars().count() == lines[0].chars().count()));
    }
}
