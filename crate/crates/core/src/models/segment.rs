//! Four-segment input construction for the fine-tuned classifier.
//!
//! Words are packed greedily into four segments of at most `budget` pieces
//! each. When the text needs more room, packing starts a little before the
//! pronoun so that the pronoun always lands in one of the first segments.
//! Every segment is wrapped in `[CLS] … [SEP]`, so the result is the piece
//! count plus eight markers.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::embedding_bank::tokenizer::{PieceTokenizer, CLS_ID, SEP_ID};
use crate::gap_data::{GapExample, Mention};
use crate::text::{words, CharSpan};

pub const SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedInput {
    pub example_id: String,
    pub ids: Vec<u32>,
    /// `[start, end)` of each segment in `ids`, markers included.
    pub segments: [(usize, usize); SEGMENTS],
    /// Source span of every position (`None` for markers).
    pub spans: Vec<Option<CharSpan>>,
    pub pronoun: Vec<usize>,
    /// Empty when the candidate fell outside the kept words.
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl SegmentedInput {
    pub fn positions(&self, m: Mention) -> &[usize] {
        match m {
            Mention::Pronoun => &self.pronoun,
            Mention::A => &self.a,
            Mention::B => &self.b,
        }
    }
}

/// Pieces of each word, in text order.
fn word_pieces(tok: &PieceTokenizer, text: &str) -> Vec<Vec<(u32, CharSpan)>> {
    let pieces = tok.tokenize(text);
    let mut out: Vec<Vec<(u32, CharSpan)>> = Vec::new();
    let mut k = 0;
    for (_, span) in words(text) {
        let mut w = Vec::new();
        while k < pieces.len() && pieces[k].span.is_some_and(|s| s.start < span.end) {
            w.push((pieces[k].id, pieces[k].span.expect("text pieces have spans")));
            k += 1;
        }
        out.push(w);
    }
    out
}

/// Greedy packing from word `start`; returns the word ranges of the four
/// segments (a word longer than `budget` is truncated inside its segment).
fn pack(words: &[Vec<(u32, CharSpan)>], start: usize, budget: usize) -> [(usize, usize); SEGMENTS] {
    let mut segs = [(start, start); SEGMENTS];
    let mut w = start;
    for seg in &mut segs {
        seg.0 = w;
        let mut used = 0;
        while w < words.len() {
            let len = words[w].len();
            if used > 0 && used + len > budget {
                break;
            }
            used += len;
            w += 1;
            if used >= budget {
                break;
            }
        }
        seg.1 = w;
    }
    segs
}

pub fn segment_preprocess(example: &GapExample, tok: &PieceTokenizer, budget: usize) -> Result<SegmentedInput, ModelError> {
    if budget == 0 {
        return Err(ModelError::Spec("segment budget must be positive".into()));
    }
    let words = word_pieces(tok, &example.text);
    let p_span = example.span(Mention::Pronoun);
    let p_word = words
        .iter()
        .position(|w| w.iter().any(|(_, s)| s.overlaps(&p_span)))
        .ok_or_else(|| ModelError::PronounLost {
            id: example.id.clone(),
        })?;
    let mut segs = pack(&words, 0, budget);
    if segs[SEGMENTS - 1].1 < words.len() {
        // Overflow: start roughly one and a half segments before the pronoun.
        let mut start = p_word;
        let mut before = 0;
        while start > 0 && before + words[start - 1].len() <= budget + budget / 2 {
            before += words[start - 1].len();
            start -= 1;
        }
        segs = pack(&words, start, budget);
    }

    let mut ids = Vec::new();
    let mut spans = Vec::new();
    let mut bounds = [(0, 0); SEGMENTS];
    for (k, &(from, to)) in segs.iter().enumerate() {
        let begin = ids.len();
        ids.push(CLS_ID);
        spans.push(None);
        let mut used = 0;
        for w in &words[from..to] {
            for &(id, span) in w {
                if used == budget {
                    break;
                }
                ids.push(id);
                spans.push(Some(span));
                used += 1;
            }
        }
        ids.push(SEP_ID);
        spans.push(None);
        bounds[k] = (begin, ids.len());
    }
    let find = |m: Mention| -> Vec<usize> {
        let span = example.span(m);
        spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some_and(|s| s.overlaps(&span)))
            .map(|(i, _)| i)
            .collect()
    };
    let pronoun = find(Mention::Pronoun);
    if pronoun.is_empty() {
        return Err(ModelError::PronounLost {
            id: example.id.clone(),
        });
    }
    Ok(SegmentedInput {
        example_id: example.id.clone(),
        a: find(Mention::A),
        b: find(Mention::B),
        pronoun,
        ids,
        segments: bounds,
        spans,
    })
}
