//! Canonical document representation.
//!
//! All offsets are Unicode scalar value (char) offsets into [`Document::text`];
//! the service, the review UI and the wire formats agree on this unit.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::segment::segment_sentences;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("span [{start}, {end}) is out of bounds for a text of {len} chars")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("invalid label {0:?}: labels must be non-empty and contain no whitespace")]
    InvalidLabel(String),
    #[error("label {0:?} is not part of the configured inventory")]
    UnknownLabel(String),
    #[error("invalid sentence segmentation: {0}")]
    InvalidSentences(String),
    #[error("surface mismatch at [{start}, {end}): expected {expected:?}, found {found:?}")]
    SurfaceMismatch {
        start: usize,
        end: usize,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    De,
    Fr,
    It,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::De, Language::Fr, Language::It];

    pub fn code(self) -> &'static str {
        match self {
            Language::De => "de",
            Language::Fr => "fr",
            Language::It => "it",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "de" => Ok(Language::De),
            "fr" => Ok(Language::Fr),
            "it" => Ok(Language::It),
            other => Err(format!("unsupported language {other:?} (expected de, fr or it)")),
        }
    }
}

/// Half-open `[start, end)` interval of char offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    /// Panics if `start >= end`; use [`CharSpan::try_new`] for untrusted input.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start < end, "empty or inverted span [{start}, {end})");
        Self { start, end }
    }

    pub fn try_new(start: usize, end: usize) -> Option<Self> {
        (start < end).then_some(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn shift(&self, by: usize) -> CharSpan {
        CharSpan {
            start: self.start + by,
            end: self.end + by,
        }
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(s: CharSpan) -> Self {
        [s.start, s.end]
    }
}

impl TryFrom<[usize; 2]> for CharSpan {
    type Error = String;

    fn try_from([start, end]: [usize; 2]) -> Result<Self, Self::Error> {
        CharSpan::try_new(start, end).ok_or_else(|| format!("span [{start}, {end}) is empty or inverted"))
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LabelTag(String);

impl LabelTag {
    pub fn new(name: impl Into<String>) -> Result<Self, CorpusError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidLabel(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LabelTag {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        LabelTag::new(value)
    }
}

impl From<LabelTag> for String {
    fn from(l: LabelTag) -> Self {
        l.0
    }
}

impl fmt::Display for LabelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LabelTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelTag::new(s)
    }
}

/// Closed label inventory of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet(BTreeSet<LabelTag>);

impl LabelSet {
    pub fn new<I, S>(names: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set = names
            .into_iter()
            .map(LabelTag::new)
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(Self(set))
    }

    /// Single-label inventory for pure anonymization corpora.
    pub fn anon() -> Self {
        Self::new(["ANON"]).expect("static label")
    }

    pub fn contains(&self, label: &LabelTag) -> bool {
        self.0.contains(label)
    }

    pub fn get(&self, name: &str) -> Option<&LabelTag> {
        self.0.iter().find(|l| l.as_str() == name)
    }

    pub fn check(&self, label: &LabelTag) -> Result<(), CorpusError> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(CorpusError::UnknownLabel(label.to_string()))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelTag> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::new(["PER", "LOC", "ORG", "MISC"]).expect("static labels")
    }
}

/// Which component produced a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gold,
    Regex,
    Gazetteer,
    Conventional,
    Model,
    Manual,
    Uniformized,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Gold => "gold",
            Source::Regex => "regex",
            Source::Gazetteer => "gazetteer",
            Source::Conventional => "conventional",
            Source::Model => "model",
            Source::Manual => "manual",
            Source::Uniformized => "uniformized",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gold" => Source::Gold,
            "regex" => Source::Regex,
            "gazetteer" => Source::Gazetteer,
            "conventional" => Source::Conventional,
            "model" => Source::Model,
            "manual" => Source::Manual,
            "uniformized" => Source::Uniformized,
            other => return Err(format!("unknown span source {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub span: CharSpan,
    pub label: LabelTag,
    pub surface: String,
    pub source: Source,
    pub confidence: f64,
    /// Gold span that crosses a sentence boundary.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cross_sentence: bool,
}

impl EntitySpan {
    /// Builds a span over `doc`, reading the surface from the document text.
    pub fn from_doc(
        doc: &Document,
        span: CharSpan,
        label: LabelTag,
        source: Source,
        confidence: f64,
    ) -> Result<Self, CorpusError> {
        let surface = doc.span_text(span)?.to_string();
        Ok(Self {
            span,
            label,
            surface,
            source,
            confidence,
            cross_sentence: false,
        })
    }
}

/// One ruling. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    id: String,
    language: Language,
    text: String,
    sentences: Vec<CharSpan>,
    gold: Option<Vec<EntitySpan>>,
    /// Byte offset of every char, plus `text.len()` as the final entry.
    byte_offsets: Vec<usize>,
}

/// Normalizes line endings and builds a segmented document with a content-hash id.
pub fn ingest_text(raw: &str, language: Language) -> Result<Document, CorpusError> {
    let text = raw.replace("\r\n", "\n").replace('\r', "\n");
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let id = content_id(language, &text);
    Document::new(id, language, text)
}

/// First 16 hex digits of SHA-256 over `language NUL text`.
pub fn content_id(language: Language, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(language.code().as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl Document {
    /// Segments `text` with the built-in splitter.
    pub fn new(id: impl Into<String>, language: Language, text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument);
        }
        let sentences = segment_sentences(&text, language);
        Ok(Self::assemble(id.into(), language, text, sentences))
    }

    /// Uses a caller-supplied segmentation after validating it.
    pub fn with_sentences(
        id: impl Into<String>,
        language: Language,
        text: impl Into<String>,
        sentences: Vec<CharSpan>,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument);
        }
        let doc = Self::assemble(id.into(), language, text, sentences);
        let len = doc.char_len();
        let mut prev_end = 0;
        for (i, s) in doc.sentences.iter().enumerate() {
            if s.end > len {
                return Err(CorpusError::SpanOutOfBounds {
                    start: s.start,
                    end: s.end,
                    len,
                });
            }
            if i > 0 && s.start < prev_end {
                return Err(CorpusError::InvalidSentences(format!(
                    "sentence {i} {s} overlaps or precedes its predecessor"
                )));
            }
            prev_end = s.end;
        }
        Ok(doc)
    }

    fn assemble(id: String, language: Language, text: String, sentences: Vec<CharSpan>) -> Self {
        let mut byte_offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_offsets.push(text.len());
        Self {
            id,
            language,
            text,
            sentences,
            gold: None,
            byte_offsets,
        }
    }

    /// Attaches gold annotations given as `(span, label)` pairs. Surfaces are
    /// read from the text and spans crossing a sentence boundary are flagged.
    pub fn with_gold<I>(mut self, gold: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (CharSpan, LabelTag)>,
    {
        let mut spans = Vec::new();
        for (span, label) in gold {
            let mut e = EntitySpan::from_doc(&self, span, label, Source::Gold, 1.0)?;
            e.cross_sentence = self.sentence_containing(span).is_none();
            spans.push(e);
        }
        spans.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.label.cmp(&b.label)));
        self.gold = Some(spans);
        Ok(self)
    }

    pub fn without_gold(mut self) -> Self {
        self.gold = None;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn sentences(&self) -> &[CharSpan] {
        &self.sentences
    }

    pub fn gold(&self) -> Option<&[EntitySpan]> {
        self.gold.as_deref()
    }

    pub fn char_len(&self) -> usize {
        self.byte_offsets.len() - 1
    }

    pub fn span_text(&self, span: CharSpan) -> Result<&str, CorpusError> {
        let len = self.char_len();
        if span.start >= span.end || span.end > len {
            return Err(CorpusError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len,
            });
        }
        Ok(&self.text[self.byte_offsets[span.start]..self.byte_offsets[span.end]])
    }

    /// Byte offset of the char at `char_offset` (`char_len()` maps to `text.len()`).
    pub fn byte_offset(&self, char_offset: usize) -> usize {
        self.byte_offsets[char_offset]
    }

    /// Char offset of a byte offset that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> usize {
        match self.byte_offsets.binary_search(&byte_offset) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Index of the sentence fully containing `span`.
    pub fn sentence_containing(&self, span: CharSpan) -> Option<usize> {
        let idx = self.sentences.partition_point(|s| s.end <= span.start);
        self.sentences.get(idx).filter(|s| s.contains(&span)).map(|_| idx)
    }

    /// Checks the offset discipline for a span attached to this document.
    pub fn verify_span(&self, e: &EntitySpan) -> Result<(), CorpusError> {
        let found = self.span_text(e.span)?;
        if found != e.surface {
            return Err(CorpusError::SurfaceMismatch {
                start: e.span.start,
                end: e.span.end,
                expected: e.surface.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub start: usize,
    pub end: usize,
    pub label: LabelTag,
}

/// JSONL interchange form of a [`Document`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub language: Language,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<CharSpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<GoldRecord>>,
}

impl From<&Document> for DocumentRecord {
    fn from(doc: &Document) -> Self {
        Self {
            id: Some(doc.id.clone()),
            language: doc.language,
            text: doc.text.clone(),
            sentences: Some(doc.sentences.clone()),
            gold: doc.gold.as_ref().map(|g| {
                g.iter()
                    .map(|e| GoldRecord {
                        start: e.span.start,
                        end: e.span.end,
                        label: e.label.clone(),
                    })
                    .collect()
            }),
        }
    }
}

impl TryFrom<DocumentRecord> for Document {
    type Error = CorpusError;

    fn try_from(rec: DocumentRecord) -> Result<Self, Self::Error> {
        let id = rec.id.unwrap_or_else(|| content_id(rec.language, &rec.text));
        let doc = match rec.sentences {
            Some(s) if !s.is_empty() => Document::with_sentences(id, rec.language, rec.text, s)?,
            _ => Document::new(id, rec.language, rec.text)?,
        };
        match rec.gold {
            Some(gold) => {
                let pairs = gold
                    .into_iter()
                    .map(|g| {
                        CharSpan::try_new(g.start, g.end)
                            .map(|s| (s, g.label))
                            .ok_or(CorpusError::SpanOutOfBounds {
                                start: g.start,
                                end: g.end,
                                len: doc.char_len(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                doc.with_gold(pairs)
            }
            None => Ok(doc),
        }
    }
}

impl Serialize for Document {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DocumentRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rec = DocumentRecord::deserialize(deserializer)?;
        Document::try_from(rec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(s: usize, e: usize) -> CharSpan {
        CharSpan::new(s, e)
    }

    #[test]
    fn ingest_two_plain_sentences() {
        let doc = ingest_text("Das Gericht tagt. Es urteilt.", Language::De).unwrap();
        assert_eq!(doc.sentences(), &[span(0, 17), span(18, 29)]);
    }

    #[test]
    fn ingest_empty_is_an_error() {
        assert_eq!(ingest_text("", Language::De), Err(CorpusError::EmptyDocument));
        assert_eq!(ingest_text(" \n\t", Language::De), Err(CorpusError::EmptyDocument));
    }

    #[test]
    fn ingest_abbreviations_ordinals_and_parties_do_not_split() {
        let text = "Urteil vom 1. Jan. 2020. Die Partei A. erscheint.";
        let doc = ingest_text(text, Language::De).unwrap();
        let sentences: Vec<&str> = doc.sentences().iter().map(|s| doc.span_text(*s).unwrap()).collect();
        assert_eq!(sentences, ["Urteil vom 1. Jan. 2020.", "Die Partei A. erscheint."]);
    }

    #[test]
    fn ingest_normalizes_line_endings_and_hashes_content() {
        let a = ingest_text("Ein Satz.\r\nNoch einer.", Language::De).unwrap();
        let b = ingest_text("Ein Satz.\nNoch einer.", Language::De).unwrap();
        assert_eq!(a.text(), "Ein Satz.\nNoch einer.");
        assert_eq!(a.id(), b.id());
        assert_eq!(a.id().len(), 16);
        let c = ingest_text("Ein Satz.\nNoch einer.", Language::Fr).unwrap();
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn span_text_contract() {
        let doc = Document::new("d", Language::De, "abcdef").unwrap();
        assert_eq!(doc.span_text(span(1, 3)).unwrap(), "bc");
        let doc = Document::new("d", Language::De, "abc").unwrap();
        assert_eq!(doc.span_text(span(0, 3)).unwrap(), "abc");
        assert_eq!(
            doc.span_text(CharSpan { start: 2, end: 5 }),
            Err(CorpusError::SpanOutOfBounds {
                start: 2,
                end: 5,
                len: 3
            })
        );
    }

    #[test]
    fn offsets_are_chars_not_bytes() {
        let doc = Document::new("d", Language::De, "Zürich Öl").unwrap();
        assert_eq!(doc.span_text(span(0, 6)).unwrap(), "Zürich");
        assert_eq!(doc.span_text(span(7, 9)).unwrap(), "Öl");
        assert_eq!(doc.char_offset(doc.byte_offset(7)), 7);
    }

    #[test]
    fn gold_crossing_sentences_is_flagged() {
        let doc = Document::new("d", Language::De, "Hans Meier klagt. Anna Huber nicht.")
            .unwrap()
            .with_gold([
                (span(0, 10), LabelTag::new("PER").unwrap()),
                (span(11, 22), LabelTag::new("PER").unwrap()),
            ])
            .unwrap();
        let gold = doc.gold().unwrap();
        assert!(!gold[0].cross_sentence);
        assert!(gold[1].cross_sentence);
        assert_eq!(gold[0].surface, "Hans Meier");
    }

    #[test]
    fn label_validation() {
        assert!(LabelTag::new("PER").is_ok());
        assert!(LabelTag::new("").is_err());
        assert!(LabelTag::new("P ER").is_err());
        let set = LabelSet::default();
        assert!(set.check(&LabelTag::new("ORG").unwrap()).is_ok());
        assert!(set.check(&LabelTag::new("ANON").unwrap()).is_err());
        assert!(LabelSet::anon().check(&LabelTag::new("ANON").unwrap()).is_ok());
    }

    #[test]
    fn record_round_trip_and_validation() {
        let line =
            r#"{"id":"x","language":"de","text":"Hans Meier klagt.","gold":[{"start":0,"end":10,"label":"PER"}]}"#;
        let doc: Document = serde_json::from_str(line).unwrap();
        assert_eq!(doc.sentences(), &[span(0, 17)]);
        assert_eq!(doc.gold().unwrap()[0].surface, "Hans Meier");
        let back = serde_json::to_string(&doc).unwrap();
        assert_eq!(
            back,
            r#"{"id":"x","language":"de","text":"Hans Meier klagt.","sentences":[[0,17]],"gold":[{"start":0,"end":10,"label":"PER"}]}"#
        );
        let bad = r#"{"language":"de","text":"abc","gold":[{"start":1,"end":9,"label":"PER"}]}"#;
        assert!(serde_json::from_str::<Document>(bad).is_err());
        let overlapping = r#"{"language":"de","text":"abc def","sentences":[[0,5],[3,7]]}"#;
        assert!(serde_json::from_str::<Document>(overlapping).is_err());
    }
}
