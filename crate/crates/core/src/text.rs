//! Code-point offsets and word splitting shared by the parsers and tokenizers.

use serde::{Deserialize, Serialize};

/// Half-open range of Unicode code-point offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn with_len(start: usize, len: usize) -> Self {
        Self::new(start, start + len)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }

    pub fn shift(&self, by: usize) -> CharSpan {
        CharSpan::new(self.start + by, self.end + by)
    }
}

impl std::fmt::Display for CharSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Maps code-point offsets to byte offsets for one string.
#[derive(Debug, Clone)]
pub struct CharIndex {
    byte_of: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut byte_of: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_of.push(text.len());
        Self { byte_of }
    }

    pub fn char_count(&self) -> usize {
        self.byte_of.len() - 1
    }

    pub fn byte(&self, char_offset: usize) -> Option<usize> {
        self.byte_of.get(char_offset).copied()
    }

    pub fn slice<'t>(&self, text: &'t str, span: CharSpan) -> Option<&'t str> {
        let a = self.byte(span.start)?;
        let b = self.byte(span.end)?;
        text.get(a..b)
    }
}

/// Substring by code-point range; `None` when the range leaves the text.
pub fn char_slice(text: &str, span: CharSpan) -> Option<&str> {
    CharIndex::new(text).slice(text, span)
}

/// Basic word split: maximal alphanumeric runs, every other non-space
/// character is a word on its own.
pub fn words(text: &str) -> Vec<(&str, CharSpan)> {
    let mut out = Vec::new();
    let mut run_start: Option<(usize, usize)> = None; // (char, byte)
    let mut char_pos = 0;
    for (byte_pos, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some((char_pos, byte_pos));
            }
        } else {
            if let Some((cs, bs)) = run_start.take() {
                out.push((&text[bs..byte_pos], CharSpan::new(cs, char_pos)));
            }
            if !ch.is_whitespace() {
                let end = byte_pos + ch.len_utf8();
                out.push((&text[byte_pos..end], CharSpan::new(char_pos, char_pos + 1)));
            }
        }
        char_pos += 1;
    }
    if let Some((cs, bs)) = run_start {
        out.push((&text[bs..], CharSpan::new(cs, char_pos)));
    }
    out
}
