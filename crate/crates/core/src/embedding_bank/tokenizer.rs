//! Deterministic hashed word-piece tokenizer for the desk-scale encoders.
//!
//! Words come from [`crate::text::words`]. Short words are a single piece;
//! longer words are cut into fixed-width chunks with `##`-prefixed
//! continuations. Piece ids are an FNV-1a hash folded into the vocabulary,
//! so no vocabulary file is needed and ids are stable across platforms.

use serde::{Deserialize, Serialize};

use crate::text::{words, CharSpan};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
const RESERVED: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub piece: String,
    pub id: u32,
    /// Source span; `None` for marker tokens.
    pub span: Option<CharSpan>,
}

impl Token {
    pub fn marker(id: u32) -> Self {
        let piece = match id {
            CLS_ID => "[CLS]",
            SEP_ID => "[SEP]",
            PAD_ID => "[PAD]",
            _ => "[UNK]",
        };
        Self {
            piece: piece.to_string(),
            id,
            span: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceTokenizer {
    pub vocab_size: u32,
    pub lowercase: bool,
    /// Words up to this many chars stay whole.
    pub max_word_chars: usize,
    /// Chunk width for longer words.
    pub chunk_chars: usize,
}

impl PieceTokenizer {
    pub fn new(vocab_size: u32, lowercase: bool) -> Self {
        assert!(vocab_size > RESERVED, "vocabulary too small");
        Self {
            vocab_size,
            lowercase,
            max_word_chars: 6,
            chunk_chars: 4,
        }
    }

    pub fn piece_id(&self, piece: &str) -> u32 {
        let normalised;
        let key = if self.lowercase {
            normalised = piece.to_lowercase();
            normalised.as_str()
        } else {
            piece
        };
        RESERVED + (fnv1a(key.as_bytes()) % u64::from(self.vocab_size - RESERVED)) as u32
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        for (word, span) in words(text) {
            let chars: Vec<char> = word.chars().collect();
            if chars.len() <= self.max_word_chars {
                out.push(Token {
                    piece: word.to_string(),
                    id: self.piece_id(word),
                    span: Some(span),
                });
                continue;
            }
            for (i, chunk) in chars.chunks(self.chunk_chars).enumerate() {
                let body: String = chunk.iter().collect();
                let piece = if i == 0 { body } else { format!("##{body}") };
                let start = span.start + i * self.chunk_chars;
                out.push(Token {
                    id: self.piece_id(&piece),
                    piece,
                    span: Some(CharSpan::new(start, start + chunk.len())),
                });
            }
        }
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_words_split_into_pieces() {
        let t = PieceTokenizer::new(1000, false);
        let toks = t.tokenize("Mary Hendriks");
        let pieces: Vec<_> = toks.iter().map(|t| t.piece.as_str()).collect();
        assert_eq!(pieces, ["Mary", "Hend", "##riks"]);
        assert_eq!(toks[2].span, Some(CharSpan::new(9, 13)));
    }

    #[test]
    fn casing_changes_ids_only_when_cased() {
        let cased = PieceTokenizer::new(1000, false);
        let uncased = PieceTokenizer::new(1000, true);
        assert_ne!(cased.piece_id("She"), cased.piece_id("she"));
        assert_eq!(uncased.piece_id("She"), uncased.piece_id("she"));
        assert!(cased.piece_id("x") >= 4 && cased.piece_id("x") < 1000);
    }
}
