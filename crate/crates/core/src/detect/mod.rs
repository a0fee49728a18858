//! Candidate-span detectors and the pipeline that runs and merges them.

mod conventional;
mod gazetteer;
mod merge;
mod model;
mod regex;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Document, EntitySpan, LabelSet, LabelTag};
use crate::prep::WindowGeometry;

pub use conventional::{detect_conventional, detected_surfaces, rubrum_end, ConventionalConfig, ConventionalOutcome};
pub use gazetteer::{detect_gazetteer, find_whole_token};
pub(crate) use merge::{keep_longest, IntervalSet};
pub use merge::{merge, MergePolicy};
pub use model::{
    detect_model, HttpLabelClient, LabelRequest, LabelResponse, LabelService, ModelOptions, RequestSentence,
    ResponseSentence,
};
pub use regex::{compile_rules, detect_regex, CompiledRule, RegexRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("inference protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub labels: LabelSet,
    pub regex_rules: Vec<RegexRule>,
    pub gazetteer: BTreeMap<LabelTag, Vec<String>>,
    #[serde(flatten)]
    pub conventional: ConventionalConfig,
    pub model_endpoint: Option<String>,
    /// Per-request timeout of the model client, in milliseconds.
    pub timeout: u64,
    pub min_confidence: f64,
    pub regex_confidence: f64,
    pub gazetteer_confidence: f64,
    pub max_seq_len: usize,
    pub truncation_stride_ratio: f64,
    pub batch_size: usize,
    /// Detectors running at once; 0 means one thread per detector.
    pub parallelism: usize,
    pub merge: MergePolicy,
}

fn misc() -> LabelTag {
    LabelTag::new("MISC").expect("static label")
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            labels: LabelSet::default(),
            regex_rules: vec![
                // Swiss IBAN
                RegexRule::new(r"CH\d{2}(\s?\d{4}){4}(\s?\d)?", misc()),
                // AHV / social security number
                RegexRule::new(r"756\.\d{4}\.\d{4}\.\d{2}", misc()),
                RegexRule::new(r"[\w.+-]+@[\w-]+(\.[\w-]+)+", misc()),
            ],
            gazetteer: BTreeMap::new(),
            conventional: ConventionalConfig::default(),
            model_endpoint: None,
            timeout: 10_000,
            min_confidence: 0.0,
            regex_confidence: 1.0,
            gazetteer_confidence: 0.9,
            max_seq_len: 192,
            truncation_stride_ratio: 0.5,
            batch_size: 16,
            parallelism: 0,
            merge: MergePolicy::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidConfig(m));
        compile_rules(&self.regex_rules)?;
        for lang in crate::corpus::Language::ALL {
            if self.conventional.rubrum_markers.get(&lang).is_none_or(Vec::is_empty) {
                return bad(format!("no rubrum markers for language {}", lang.code()));
            }
        }
        for (name, c) in [
            ("min_confidence", self.min_confidence),
            ("regex_confidence", self.regex_confidence),
            ("gazetteer_confidence", self.gazetteer_confidence),
            ("confidence", self.conventional.confidence),
        ] {
            if !(0.0..=1.0).contains(&c) {
                return bad(format!("{name} must lie in [0, 1], got {c}"));
            }
        }
        for label in self.gazetteer.keys().chain(self.regex_rules.iter().map(|r| &r.label)) {
            self.labels.check(label)?;
        }
        self.geometry()?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<WindowGeometry, DetectError> {
        let cfg = crate::prep::PrepConfig {
            max_seq_len: self.max_seq_len,
            truncation_stride_ratio: self.truncation_stride_ratio,
            ..Default::default()
        };
        WindowGeometry::from_config(&cfg).map_err(|e| DetectError::InvalidConfig(e.to_string()))
    }

    pub fn model_options(&self) -> Result<ModelOptions, DetectError> {
        Ok(ModelOptions {
            labels: self.labels.clone(),
            geometry: self.geometry()?,
            batch_size: self.batch_size,
            min_confidence: self.min_confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Regex,
    Gazetteer,
    Conventional,
    Model,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [Self::Regex, Self::Gazetteer, Self::Conventional, Self::Model];

    pub fn name(self) -> &'static str {
        match self {
            Self::Regex => "regex",
            Self::Gazetteer => "gazetteer",
            Self::Conventional => "conventional",
            Self::Model => "model",
        }
    }

    /// Parses `"regex,conventional"`; duplicates are dropped.
    pub fn parse_list(s: &str) -> Result<Vec<DetectorKind>, DetectError> {
        let mut out: Vec<DetectorKind> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DetectError::InvalidConfig(format!("unknown detector {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorStats {
    pub detector: DetectorKind,
    pub spans: usize,
    pub millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFailure {
    pub detector: DetectorKind,
    pub error: String,
    /// Timeout or unreachable endpoint, as opposed to a bad response.
    pub unavailable: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Merged, sorted, non-overlapping.
    pub spans: Vec<EntitySpan>,
    pub stats: Vec<DetectorStats>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<DetectorFailure>,
}

impl DetectionResult {
    /// Some detector failed; `spans` holds what the others found.
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn unavailable(&self) -> bool {
        self.failures.iter().any(|f| f.unavailable)
    }
}

/// A configured set of detectors.
#[derive(Clone)]
pub struct Pipeline {
    cfg: DetectorConfig,
    kinds: Vec<DetectorKind>,
    rules: Vec<CompiledRule>,
    model: Option<Arc<dyn LabelService>>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("kinds", &self.kinds)
            .field("model", &self.model.is_some())
            .finish()
    }
}

impl Pipeline {
    pub fn new(cfg: DetectorConfig, kinds: &[DetectorKind]) -> Result<Self, DetectError> {
        cfg.validate()?;
        let mut kinds = kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        let model: Option<Arc<dyn LabelService>> = match (&cfg.model_endpoint, kinds.contains(&DetectorKind::Model)) {
            (Some(url), true) => Some(Arc::new(HttpLabelClient::new(url, Duration::from_millis(cfg.timeout))?)),
            _ => None,
        };
        Ok(Self {
            rules: compile_rules(&cfg.regex_rules)?,
            cfg,
            kinds,
            model,
        })
    }

    /// Replaces the HTTP client (e.g. with an in-process model).
    pub fn with_label_service(mut self, service: Arc<dyn LabelService>) -> Self {
        self.model = Some(service);
        if !self.kinds.contains(&DetectorKind::Model) {
            self.kinds.push(DetectorKind::Model);
            self.kinds.sort();
        }
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn kinds(&self) -> &[DetectorKind] {
        &self.kinds
    }

    fn run_one(&self, kind: DetectorKind, doc: &Document) -> (Result<Vec<EntitySpan>, DetectError>, Vec<String>) {
        let cfg = &self.cfg;
        match kind {
            DetectorKind::Regex => (Ok(detect_regex(doc, &self.rules, cfg.regex_confidence)), vec![]),
            DetectorKind::Gazetteer => (
                Ok(detect_gazetteer(doc, &cfg.gazetteer, cfg.gazetteer_confidence)),
                vec![],
            ),
            DetectorKind::Conventional => {
                let out = detect_conventional(doc, &cfg.conventional);
                (Ok(out.spans), out.warnings)
            }
            DetectorKind::Model => {
                let Some(service) = &self.model else {
                    return (
                        Err(DetectError::DetectorUnavailable("no model endpoint configured".into())),
                        vec![],
                    );
                };
                let result = cfg
                    .model_options()
                    .and_then(|o| detect_model(doc, service.as_ref(), &o));
                (result, vec![])
            }
        }
    }

    /// Runs every detector on `doc` and merges the results. A failing
    /// detector does not stop the others; it is reported in `failures`.
    pub fn run(&self, doc: &Document) -> DetectionResult {
        let width = match self.cfg.parallelism {
            0 => self.kinds.len().max(1),
            n => n,
        };
        let mut outcomes = Vec::with_capacity(self.kinds.len());
        for group in self.kinds.chunks(width) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|&kind| {
                        scope.spawn(move || {
                            let t0 = Instant::now();
                            let (res, warnings) = self.run_one(kind, doc);
                            (kind, res, warnings, t0.elapsed())
                        })
                    })
                    .collect();
                // joined in detector order, so the result never depends on completion order
                for h in handles {
                    outcomes.push(h.join().expect("detector thread panicked"));
                }
            });
        }

        let mut result = DetectionResult::default();
        let mut lists = Vec::new();
        for (kind, res, warnings, elapsed) in outcomes {
            result.warnings.extend(warnings);
            let millis = elapsed.as_millis() as u64;
            match res {
                Ok(spans) => {
                    result.stats.push(DetectorStats {
                        detector: kind,
                        spans: spans.len(),
                        millis,
                        error: None,
                    });
                    lists.push(spans);
                }
                Err(error) => {
                    result
                        .warnings
                        .push(format!("{kind} detector failed on {}: {error}", doc.id()));
                    result.stats.push(DetectorStats {
                        detector: kind,
                        spans: 0,
                        millis,
                        error: Some(error.to_string()),
                    });
                    result.failures.push(DetectorFailure {
                        detector: kind,
                        error: error.to_string(),
                        unavailable: matches!(error, DetectError::DetectorUnavailable(_)),
                    });
                }
            }
        }
        result.spans = merge(&lists, &self.cfg.merge);
        result
    }
}
