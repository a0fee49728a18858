//! Strict span-level scoring.

mod conditions;
mod score;
mod spans;

use thiserror::Error;

pub use conditions::{evaluate_conditions, evaluate_detections, pooled_counts, render_table, ConditionReport, Delta};
pub use score::{
    count_matches, percent, round2, score, Averaging, Condition, Counts, EvalReport, LabelReport, ReportMeta, Scores,
};
pub use spans::{decode_tags, extract_spans, to_token_spans, DecodedSpans, TokenSpan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("{0} documents but {1} prediction lists")]
    LengthMismatch(usize, usize),
    #[error("document {0} has no gold annotation")]
    MissingGold(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
