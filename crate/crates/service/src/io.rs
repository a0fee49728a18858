//! JSONL input and output with errors that name the file and line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use anon_core::{CharSpan, Document, EntitySpan, LabelTag, Source};

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl InputError {
    pub fn is_io(&self) -> bool {
        matches!(self, InputError::Io { .. })
    }
}

pub fn read_to_string(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, InputError> {
    let text = read_to_string(path)?;
    parse_jsonl(path, &text)
}

pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>, InputError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| InputError::Invalid {
                path: path.to_path_buf(),
                line: i + 1,
                // serde reports the offending field; its own line number is always 1 here
                message: e.to_string().replace(" at line 1 column", " at column"),
            })
        })
        .collect()
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>, InputError> {
    read_jsonl(path)
}

/// Writes one compact JSON value per line to `path`, or stdout for `None`.
pub fn write_jsonl<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<(), InputError> {
    let mut out = open_out(path)?;
    let io = |source| InputError::Io {
        path: path.map_or_else(|| PathBuf::from("-"), Path::to_path_buf),
        source,
    };
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), InputError> {
    let mut out = open_out(path)?;
    let io = |source| InputError::Io {
        path: path.map_or_else(|| PathBuf::from("-"), Path::to_path_buf),
        source,
    };
    out.write_all(text.as_bytes()).map_err(io)?;
    out.flush().map_err(io)
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), InputError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, InputError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|source| {
            InputError::Io {
                path: p.to_path_buf(),
                source,
            }
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Detections of one document, as written by `detect` and read by `eval` and `uniformize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanFile {
    pub doc_id: String,
    pub spans: Vec<SpanRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// An [`EntitySpan`] whose surface is re-read from the document; source and
/// confidence are optional on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub span: CharSpan,
    pub label: LabelTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl From<&EntitySpan> for SpanRecord {
    fn from(e: &EntitySpan) -> Self {
        Self {
            span: e.span,
            label: e.label.clone(),
            surface: Some(e.surface.clone()),
            source: Some(e.source),
            confidence: Some(e.confidence),
        }
    }
}

impl SpanRecord {
    pub fn to_entity(&self, doc: &Document) -> Result<EntitySpan, anon_core::CorpusError> {
        let e = EntitySpan::from_doc(
            doc,
            self.span,
            self.label.clone(),
            self.source.unwrap_or(Source::Model),
            self.confidence.unwrap_or(1.0),
        )?;
        if let Some(s) = &self.surface {
            if *s != e.surface {
                return Err(anon_core::CorpusError::SurfaceMismatch {
                    start: self.span.start,
                    end: self.span.end,
                    expected: e.surface,
                    found: s.clone(),
                });
            }
        }
        Ok(e)
    }
}

impl SpanFile {
    pub fn new(doc_id: &str, spans: &[EntitySpan], warnings: Vec<String>) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            spans: spans.iter().map(SpanRecord::from).collect(),
            warnings,
        }
    }
}
