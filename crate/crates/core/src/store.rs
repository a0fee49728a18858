//! Review projects: one ruling, its suggestions and decisions, persisted as a
//! checksummed canonical JSON file.
//!
//! Every mutation appends one audit event and bumps the version; replaying the
//! audit log from a fresh project reproduces the current state.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CharSpan, CorpusError, Document, EntitySpan, LabelTag, Source};
use crate::detect::IntervalSet;
use crate::eval::{count_matches, to_token_spans, Averaging, Condition, EvalReport};
use crate::prep::DocTokens;
use crate::redact::{
    assign_with_overrides, render, AnonymizedDocument, PlaceholderPolicy, RedactError, ReplacementMap,
};
use crate::uniformize::{uniformize, UniformizeConfig, UniformizeError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("project {0} already exists")]
    AlreadyExists(String),
    #[error("span {span} overlaps accepted suggestion {with}")]
    OverlapConflict { span: CharSpan, with: String },
    #[error("version conflict: request is based on version {expected}, project is at {found}")]
    VersionConflict { expected: u64, found: u64 },
    #[error("suggestion {id} is already {status}")]
    InvalidTransition { id: String, status: Status },
    #[error("integrity check failed: {0}")]
    IntegrityError(String),
    #[error("invalid project id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Redact(#[from] RedactError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pending => "pending",
            Status::Accepted => "accepted",
            Status::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub entity: EntitySpan,
    pub replacement: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SuggestionsAdded {
        spans: Vec<EntitySpan>,
    },
    Decided {
        suggestion_id: String,
        decision: Decision,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<String>,
    },
    ManualAdded {
        span: CharSpan,
        label: LabelTag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replacement: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<String>,
    },
    ReplacementSet {
        surface: String,
        replacement: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    /// Project version after this event.
    pub version: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub version: u64,
    pub document: Document,
    pub policy: PlaceholderPolicy,
    pub suggestions: Vec<Suggestion>,
    /// Explicit surface → replacement choices, overriding the policy.
    pub overrides: BTreeMap<String, String>,
    pub replacement_map: ReplacementMap,
    pub audit: Vec<AuditEvent>,
    /// Suggestions ever created; ids are never reused.
    pub next_id: u64,
}

/// What `SuggestionsAdded` did.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AddOutcome {
    pub added: Vec<String>,
    /// Already present with the same span and label.
    pub duplicates: usize,
    /// Overlapping an accepted suggestion.
    pub blocked: usize,
}

impl Project {
    pub fn new(document: Document, policy: PlaceholderPolicy) -> Self {
        Self {
            version: 0,
            document,
            policy,
            suggestions: Vec::new(),
            overrides: BTreeMap::new(),
            replacement_map: ReplacementMap::default(),
            audit: Vec::new(),
            next_id: 0,
        }
    }

    pub fn id(&self) -> &str {
        self.document.id()
    }

    pub fn suggestion(&self, id: &str) -> Option<&Suggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }

    pub fn accepted(&self) -> Vec<EntitySpan> {
        self.suggestions
            .iter()
            .filter(|s| s.status == Status::Accepted)
            .map(|s| s.entity.clone())
            .collect()
    }

    fn accepted_overlap(&self, span: CharSpan, except: Option<&str>) -> Option<&Suggestion> {
        self.suggestions
            .iter()
            .find(|s| s.status == Status::Accepted && Some(s.id.as_str()) != except && s.entity.span.overlaps(&span))
    }

    /// Checks `event` against the current state and applies it; the project
    /// is untouched on error.
    pub fn apply(&mut self, event: Event, at: DateTime<Utc>) -> Result<AddOutcome, StoreError> {
        let mut next = self.clone();
        let outcome = next.apply_event(&event, at)?;
        next.version += 1;
        next.audit.push(AuditEvent {
            version: next.version,
            at,
            event,
        });
        next.refresh_replacements();
        *self = next;
        Ok(outcome)
    }

    fn apply_event(&mut self, event: &Event, at: DateTime<Utc>) -> Result<AddOutcome, StoreError> {
        let mut outcome = AddOutcome::default();
        match event {
            Event::SuggestionsAdded { spans } => {
                for e in spans {
                    self.document.verify_span(e)?;
                    if self
                        .suggestions
                        .iter()
                        .any(|s| s.entity.span == e.span && s.entity.label == e.label)
                    {
                        outcome.duplicates += 1;
                    } else if self.accepted_overlap(e.span, None).is_some() {
                        outcome.blocked += 1;
                    } else {
                        let id = self.push(e.clone(), Status::Pending, None, None);
                        outcome.added.push(id);
                    }
                }
            }
            Event::Decided {
                suggestion_id,
                decision,
                actor,
            } => {
                let s = self
                    .suggestion(suggestion_id)
                    .ok_or_else(|| StoreError::NotFound(format!("suggestion {suggestion_id}")))?;
                let target = match decision {
                    Decision::Accept => Status::Accepted,
                    Decision::Reject => Status::Rejected,
                };
                if s.status == target {
                    return Err(StoreError::InvalidTransition {
                        id: suggestion_id.clone(),
                        status: s.status,
                    });
                }
                if target == Status::Accepted {
                    if let Some(other) = self.accepted_overlap(s.entity.span, Some(suggestion_id)) {
                        return Err(StoreError::OverlapConflict {
                            span: s.entity.span,
                            with: other.id.clone(),
                        });
                    }
                }
                let s = self
                    .suggestions
                    .iter_mut()
                    .find(|s| &s.id == suggestion_id)
                    .expect("checked above");
                s.status = target;
                s.decided_by = actor.clone();
                s.decided_at = Some(at);
            }
            Event::ManualAdded {
                span,
                label,
                replacement,
                actor,
            } => {
                if let Some(other) = self.accepted_overlap(*span, None) {
                    return Err(StoreError::OverlapConflict {
                        span: *span,
                        with: other.id.clone(),
                    });
                }
                let entity = EntitySpan::from_doc(&self.document, *span, label.clone(), Source::Manual, 1.0)?;
                if let Some(r) = replacement.as_deref().filter(|r| !r.is_empty()) {
                    self.overrides.insert(entity.surface.clone(), r.to_string());
                }
                let id = self.push(entity, Status::Accepted, actor.clone(), Some(at));
                outcome.added.push(id);
            }
            Event::ReplacementSet { surface, replacement } => {
                if replacement.is_empty() {
                    return Err(StoreError::IntegrityError("replacement must not be empty".into()));
                }
                if !self.suggestions.iter().any(|s| &s.entity.surface == surface) {
                    return Err(StoreError::NotFound(format!("surface {surface:?}")));
                }
                self.overrides.insert(surface.clone(), replacement.clone());
            }
        }
        Ok(outcome)
    }

    fn push(&mut self, entity: EntitySpan, status: Status, actor: Option<String>, at: Option<DateTime<Utc>>) -> String {
        let id = format!("{}-{:04}", self.document.id(), self.next_id);
        self.next_id += 1;
        let pos = self
            .suggestions
            .partition_point(|s| (s.entity.span, &s.entity.label) <= (entity.span, &entity.label));
        self.suggestions.insert(
            pos,
            Suggestion {
                id: id.clone(),
                entity,
                replacement: String::new(),
                status,
                decided_by: actor,
                decided_at: at,
            },
        );
        id
    }

    /// Recomputes placeholders for every suggestion still in play.
    fn refresh_replacements(&mut self) {
        let live: Vec<EntitySpan> = self
            .suggestions
            .iter()
            .filter(|s| s.status != Status::Rejected)
            .map(|s| s.entity.clone())
            .collect();
        self.replacement_map = assign_with_overrides(&self.document, &live, &self.policy, &self.overrides);
        for s in &mut self.suggestions {
            s.replacement = self
                .replacement_map
                .get(&s.entity.surface)
                .unwrap_or_default()
                .to_string();
        }
    }

    /// Rebuilds the project from its document and audit log.
    pub fn replay(document: Document, policy: PlaceholderPolicy, audit: &[AuditEvent]) -> Result<Self, StoreError> {
        let mut p = Project::new(document, policy);
        for ev in audit {
            p.apply(ev.event.clone(), ev.at)?;
            if p.version != ev.version {
                return Err(StoreError::IntegrityError(format!(
                    "audit event numbered {} replayed as version {}",
                    ev.version, p.version
                )));
            }
        }
        Ok(p)
    }

    /// New `uniformized` spans propagating every live (non-rejected)
    /// suggestion. Accepted suggestions take precedence where live ones overlap.
    pub fn propagation(&self, cfg: &UniformizeConfig) -> Result<Vec<EntitySpan>, UniformizeError> {
        let mut live: Vec<&Suggestion> = self
            .suggestions
            .iter()
            .filter(|s| s.status != Status::Rejected)
            .collect();
        live.sort_by_key(|s| (s.status != Status::Accepted, s.entity.span));
        let mut taken = IntervalSet::default();
        let base: Vec<EntitySpan> = live
            .into_iter()
            .filter(|s| taken.try_insert(s.entity.span))
            .map(|s| s.entity.clone())
            .collect();
        let out = uniformize(&self.document, &base, cfg)?;
        Ok(out
            .into_iter()
            .filter(|e| e.source == Source::Uniformized && !base.contains(e))
            .collect())
    }

    pub fn anonymize(&self) -> Result<AnonymizedDocument, StoreError> {
        Ok(render(&self.document, &self.accepted(), &self.replacement_map)?)
    }

    pub fn export_html(&self) -> Result<String, StoreError> {
        let anon = self.anonymize()?;
        Ok(anon.to_html(&self.replacement_map, |m| {
            let manual = self
                .suggestions
                .iter()
                .any(|s| s.entity.span == m.original && s.entity.source == Source::Manual);
            if manual {
                "manual"
            } else {
                "accepted"
            }
        }))
    }

    pub fn report(&self) -> ProjectReport {
        let mut by_status: BTreeMap<String, usize> = BTreeMap::new();
        let mut by_source: BTreeMap<String, usize> = BTreeMap::new();
        for s in &self.suggestions {
            *by_status.entry(s.status.to_string()).or_default() += 1;
            *by_source.entry(s.entity.source.to_string()).or_default() += 1;
        }
        let evaluation = self.document.gold().map(|gold| {
            let tokens = DocTokens::new(&self.document);
            let g = to_token_spans(&tokens, gold);
            let p = to_token_spans(&tokens, &self.accepted());
            EvalReport::from_counts(Condition::Normal, Averaging::Micro, count_matches(&g, &p, |s| &s.label))
        });
        ProjectReport {
            id: self.id().to_string(),
            version: self.version,
            suggestions: self.suggestions.len(),
            by_status,
            by_source,
            placeholders: self.replacement_map.len(),
            evaluation,
        }
    }
}

/// Summary of a review project; scores the accepted spans when the ruling has gold annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub id: String,
    pub version: u64,
    pub suggestions: usize,
    pub by_status: BTreeMap<String, usize>,
    pub by_source: BTreeMap<String, usize>,
    pub placeholders: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalReport>,
}

const CHECKSUM: &str = "checksum";

fn canonical(value: &Value) -> Vec<u8> {
    // serde_json's map is ordered, so keys come out sorted at every level
    let mut bytes = serde_json::to_vec(value).expect("json value serializes");
    bytes.push(b'\n');
    bytes
}

fn digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Canonical file bytes: compact JSON with sorted keys, LF-terminated, with
/// a checksum over the same form without the checksum field.
pub fn to_canonical_bytes(project: &Project) -> Vec<u8> {
    let mut value = serde_json::to_value(project).expect("project serializes");
    let sum = digest(&canonical(&value));
    value
        .as_object_mut()
        .expect("project is an object")
        .insert(CHECKSUM.into(), Value::String(sum));
    canonical(&value)
}

pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Project, StoreError> {
    let mut value: Value = serde_json::from_slice(bytes)
        .map_err(|e| StoreError::IntegrityError(format!("unreadable project file: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| StoreError::IntegrityError("project file is not an object".into()))?;
    let stored = match obj.remove(CHECKSUM) {
        Some(Value::String(s)) => s,
        _ => return Err(StoreError::IntegrityError("missing checksum".into())),
    };
    let actual = digest(&canonical(&value));
    if stored != actual {
        return Err(StoreError::IntegrityError(format!(
            "checksum mismatch: stored {stored}, computed {actual}"
        )));
    }
    let project: Project =
        serde_json::from_value(value).map_err(|e| StoreError::IntegrityError(format!("invalid project: {e}")))?;
    if project.version != project.audit.len() as u64 {
        return Err(StoreError::IntegrityError(format!(
            "version {} but {} audit events",
            project.version,
            project.audit.len()
        )));
    }
    Ok(project)
}

pub fn save(project: &Project, path: &Path) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("json.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&to_canonical_bytes(project)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path) -> Result<Project, StoreError> {
    let bytes = fs::read(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => StoreError::NotFound(path.display().to_string()),
        _ => StoreError::Io {
            path: path.to_path_buf(),
            source,
        },
    })?;
    from_canonical_bytes(&bytes)
}

/// A directory of project files, one per ruling. Mutations on one project are
/// serialized; distinct projects proceed independently.
#[derive(Debug)]
pub struct ProjectStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ProjectStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    pub fn create(&self, document: Document, policy: PlaceholderPolicy) -> Result<Project, StoreError> {
        let id = document.id().to_string();
        let path = self.path(&id)?;
        let lock = self.lock(&id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            return Err(StoreError::AlreadyExists(id));
        }
        let project = Project::new(document, policy);
        save(&project, &path)?;
        Ok(project)
    }

    pub fn get(&self, id: &str) -> Result<Project, StoreError> {
        let path = self.path(id)?;
        load(&path).map_err(|e| match e {
            StoreError::NotFound(_) => StoreError::NotFound(format!("document {id}")),
            e => e,
        })
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let io = |source| StoreError::Io {
            path: self.dir.clone(),
            source,
        };
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io)? {
            let name = entry.map_err(io)?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Applies `event` if the project is still at `base_version`
    /// (`None` skips the check).
    pub fn mutate(
        &self,
        id: &str,
        base_version: Option<u64>,
        event: Event,
        at: DateTime<Utc>,
    ) -> Result<(Project, AddOutcome), StoreError> {
        let path = self.path(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut project = self.get(id)?;
        if let Some(expected) = base_version {
            if expected != project.version {
                return Err(StoreError::VersionConflict {
                    expected,
                    found: project.version,
                });
            }
        }
        let outcome = project.apply(event, at)?;
        save(&project, &path)?;
        Ok((project, outcome))
    }
}

/// Project id of a suggestion id (`{doc_id}-{n}`).
pub fn project_of(suggestion_id: &str) -> Option<&str> {
    suggestion_id.rsplit_once('-').map(|(p, _)| p).filter(|p| !p.is_empty())
}
