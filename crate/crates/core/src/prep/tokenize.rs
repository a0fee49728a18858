use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: CharSpan,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || ('\u{300}'..='\u{36f}').contains(&c)
}

/// Whitespace and punctuation word tokenizer.
///
/// Alphanumeric runs form one token and every other non-whitespace char is a
/// token of its own, except party markers (`A.`, `A.________`) which stay whole.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if let Some(len) = party_marker_len(&chars, i) {
            i += len;
        } else if is_word_char(c) {
            while i < n && is_word_char(chars[i]) {
                i += 1;
            }
        } else {
            i += 1;
        }
        tokens.push(Token {
            text: chars[start..i].iter().collect(),
            span: CharSpan::new(start, i),
        });
    }
    tokens
}

fn party_marker_len(chars: &[char], i: usize) -> Option<usize> {
    let c = *chars.get(i)?;
    if !c.is_ascii_uppercase() || chars.get(i + 1) != Some(&'.') {
        return None;
    }
    if i > 0 && is_word_char(chars[i - 1]) {
        return None;
    }
    let underscores = chars[i + 2..].iter().take_while(|&&c| c == '_').count();
    let len = if underscores >= 2 { 2 + underscores } else { 2 };
    match chars.get(i + len) {
        Some(&next) if is_word_char(next) => None,
        _ => Some(len),
    }
}

/// Tokens of a whole document together with boundary lookups.
///
/// Sentence boundaries always fall on whitespace, so this equals the
/// concatenation of per-sentence tokenizations.
#[derive(Debug, Clone)]
pub struct DocTokens {
    tokens: Vec<Token>,
}

impl DocTokens {
    pub fn new(doc: &Document) -> Self {
        Self::from_text(doc.text())
    }

    pub fn from_text(text: &str) -> Self {
        Self { tokens: tokenize(text) }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_token_start(&self, offset: usize) -> bool {
        self.tokens.binary_search_by_key(&offset, |t| t.span.start).is_ok()
    }

    pub fn is_token_end(&self, offset: usize) -> bool {
        self.tokens.binary_search_by_key(&offset, |t| t.span.end).is_ok()
    }

    /// True when `span` starts at a token start and ends at a token end.
    pub fn is_aligned(&self, span: CharSpan) -> bool {
        self.is_token_start(span.start) && self.is_token_end(span.end)
    }

    /// Token index range `[first, last + 1)` of the tokens overlapping `span`
    /// (outward snapping), or `None` if the span covers only whitespace.
    pub fn token_range(&self, span: CharSpan) -> Option<(usize, usize)> {
        token_range(&self.tokens, span)
    }

    /// Char span covered by the token range `[start, end)`.
    pub fn char_span(&self, start: usize, end: usize) -> CharSpan {
        CharSpan::new(self.tokens[start].span.start, self.tokens[end - 1].span.end)
    }
}

pub(crate) fn token_range(tokens: &[Token], span: CharSpan) -> Option<(usize, usize)> {
    let first = tokens.partition_point(|t| t.span.end <= span.start);
    let last = tokens.partition_point(|t| t.span.start < span.end);
    (first < last).then_some((first, last))
}
