//! IOB2 tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, LabelSet, LabelTag};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Tag {
    O,
    B(LabelTag),
    I(LabelTag),
}

impl Tag {
    pub fn label(&self) -> Option<&LabelTag> {
        match self {
            Tag::O => None,
            Tag::B(l) | Tag::I(l) => Some(l),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::O)
    }

    /// Parses a tag and checks its label against `labels`.
    pub fn parse_in(s: &str, labels: &LabelSet) -> Result<Tag, CorpusError> {
        let tag: Tag = s.parse()?;
        if let Some(l) = tag.label() {
            labels.check(l)?;
        }
        Ok(tag)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(l) => write!(f, "B-{l}"),
            Tag::I(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        match s.split_once('-') {
            Some(("B", l)) => Ok(Tag::B(LabelTag::new(l)?)),
            Some(("I", l)) => Ok(Tag::I(LabelTag::new(l)?)),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

impl TryFrom<String> for Tag {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> Self {
        t.to_string()
    }
}
