//! Client side of the NER inference protocol.
//!
//! `POST {endpoint}/v1/label` with `{language, sentences: [{tokens}]}`; the
//! server answers `{sentences: [{labels, confidences}]}` with one IOB2 label
//! per token. Sentences longer than the window width are sent as overlapping
//! windows and stitched back with the center-wins rule.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntitySpan, LabelSet, Language, Source};
use crate::eval::decode_tags;
use crate::iob::Tag;
use crate::prep::{chunk_with, reconstruct, DocTokens, Token, Window, WindowGeometry};

use super::DetectError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub language: Language,
    pub sentences: Vec<RequestSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSentence {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub sentences: Vec<ResponseSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSentence {
    pub labels: Vec<String>,
    /// Per-token confidences; when absent every token counts as 1.0.
    #[serde(default)]
    pub confidences: Vec<f64>,
}

/// Anything that can label token sequences: the HTTP client, or a stub in tests.
pub trait LabelService: Send + Sync {
    fn label(&self, request: &LabelRequest) -> Result<LabelResponse, DetectError>;
}

pub struct HttpLabelClient {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpLabelClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, DetectError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DetectError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            url: format!("{}/v1/label", endpoint.trim_end_matches('/')),
            client,
        })
    }
}

impl LabelService for HttpLabelClient {
    fn label(&self, request: &LabelRequest) -> Result<LabelResponse, DetectError> {
        let unavailable = |e: reqwest::Error| DetectError::DetectorUnavailable(format!("{}: {e}", self.url));
        let resp = self.client.post(&self.url).json(request).send().map_err(unavailable)?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(DetectError::DetectorUnavailable(format!("{}: HTTP {status}", self.url)));
        }
        if !status.is_success() {
            return Err(DetectError::ProtocolViolation(format!("{}: HTTP {status}", self.url)));
        }
        let body = resp.bytes().map_err(unavailable)?;
        serde_json::from_slice(&body).map_err(|e| DetectError::ProtocolViolation(format!("malformed response: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    pub labels: LabelSet,
    pub geometry: WindowGeometry,
    /// Windows per request.
    pub batch_size: usize,
    pub min_confidence: f64,
}

/// One request unit: a window of one sentence.
struct Unit {
    sentence: usize,
    window: Window,
}

/// Labels every sentence of `doc` through `service`.
pub fn detect_model(
    doc: &Document,
    service: &dyn LabelService,
    opts: &ModelOptions,
) -> Result<Vec<EntitySpan>, DetectError> {
    if opts.batch_size == 0 {
        return Err(DetectError::InvalidConfig("batch_size must be at least 1".into()));
    }
    let tokens = DocTokens::new(doc);
    let sentences: Vec<&[Token]> = doc
        .sentences()
        .iter()
        .map(|s| {
            let all = tokens.tokens();
            let a = all.partition_point(|t| t.span.start < s.start);
            let b = all.partition_point(|t| t.span.start < s.end);
            &all[a..b]
        })
        .collect();
    let windows: Vec<Vec<Window>> = sentences.iter().map(|s| chunk_with(s.len(), opts.geometry)).collect();
    let units: Vec<Unit> = windows
        .iter()
        .enumerate()
        .flat_map(|(sentence, ws)| ws.iter().map(move |&window| Unit { sentence, window }))
        .collect();

    // per sentence, per window: (tag, confidence) for each token
    let mut outputs: Vec<Vec<Vec<(Tag, f64)>>> = windows.iter().map(|ws| Vec::with_capacity(ws.len())).collect();
    for batch in units.chunks(opts.batch_size) {
        let request = LabelRequest {
            language: doc.language(),
            sentences: batch
                .iter()
                .map(|u| RequestSentence {
                    tokens: sentences[u.sentence][u.window.start..u.window.end]
                        .iter()
                        .map(|t| t.text.clone())
                        .collect(),
                })
                .collect(),
        };
        let response = service.label(&request)?;
        let decoded = validate(&request, response, &opts.labels)?;
        for (unit, tags) in batch.iter().zip(decoded) {
            outputs[unit.sentence].push(tags);
        }
    }

    let mut out = Vec::new();
    for (s, sent_tokens) in sentences.iter().enumerate() {
        if sent_tokens.is_empty() {
            continue;
        }
        let per_token = reconstruct(sent_tokens.len(), &windows[s], &outputs[s]);
        let tags: Vec<Tag> = per_token.iter().map(|(t, _)| t.clone()).collect();
        for ts in decode_tags(&tags).spans {
            let confs = &per_token[ts.start..ts.end];
            let confidence = confs.iter().map(|(_, c)| c).sum::<f64>() / confs.len() as f64;
            if confidence < opts.min_confidence {
                continue;
            }
            let span = crate::corpus::CharSpan::new(sent_tokens[ts.start].span.start, sent_tokens[ts.end - 1].span.end);
            out.push(EntitySpan::from_doc(doc, span, ts.label, Source::Model, confidence)?);
        }
    }
    Ok(out)
}

fn validate(
    request: &LabelRequest,
    response: LabelResponse,
    labels: &LabelSet,
) -> Result<Vec<Vec<(Tag, f64)>>, DetectError> {
    let violation = DetectError::ProtocolViolation;
    if response.sentences.len() != request.sentences.len() {
        return Err(violation(format!(
            "sent {} sentences, got {} back",
            request.sentences.len(),
            response.sentences.len()
        )));
    }
    let mut out = Vec::with_capacity(request.sentences.len());
    for (i, (req, resp)) in request.sentences.iter().zip(response.sentences).enumerate() {
        let n = req.tokens.len();
        if resp.labels.len() != n {
            return Err(violation(format!(
                "sentence {i}: {} labels for {n} tokens",
                resp.labels.len()
            )));
        }
        if !resp.confidences.is_empty() && resp.confidences.len() != n {
            return Err(violation(format!(
                "sentence {i}: {} confidences for {n} tokens",
                resp.confidences.len()
            )));
        }
        if let Some(c) = resp.confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(violation(format!("sentence {i}: confidence {c} outside [0, 1]")));
        }
        let mut tags = Vec::with_capacity(n);
        for (j, label) in resp.labels.iter().enumerate() {
            let tag = Tag::parse_in(label, labels)
                .map_err(|_| violation(format!("sentence {i}: unknown label {label:?}")))?;
            tags.push((tag, resp.confidences.get(j).copied().unwrap_or(1.0)));
        }
        out.push(tags);
    }
    Ok(out)
}
