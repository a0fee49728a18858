//! Anonymization engine for court rulings.
//!
//! Documents are segmented and tokenized ([`corpus`], [`prep`]), candidate
//! spans come from pluggable [`detect`]ors, get propagated document-wide by
//! [`uniformize`], are reviewed through a [`store::Project`] and rendered by
//! [`redact`]. [`eval`] scores detections with strict span matching.

pub mod corpus;
pub mod detect;
pub mod eval;
pub mod iob;
pub mod prep;
pub mod redact;
pub mod segment;
pub mod store;
pub mod uniformize;

pub use corpus::{ingest_text, CharSpan, CorpusError, Document, EntitySpan, LabelSet, LabelTag, Language, Source};
pub use iob::Tag;
