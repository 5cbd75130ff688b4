//! The Parallelism and URL heuristics from the GAP baselines.

use serde::{Deserialize, Serialize};

use super::parse::{ParseView, Role};
use super::{locate, FeatureError};
use crate::gap_data::{GapExample, Mention};
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CueChoice {
    A,
    B,
    None,
}

impl CueChoice {
    /// `(is_A, is_B)`.
    pub fn encode(self) -> [f64; 2] {
        match self {
            CueChoice::A => [1.0, 0.0],
            CueChoice::B => [0.0, 1.0],
            CueChoice::None => [0.0, 0.0],
        }
    }

    pub fn or(self, fallback: CueChoice) -> CueChoice {
        if self == CueChoice::None {
            fallback
        } else {
            self
        }
    }
}

/// Picks among the eligible candidates the one with the smaller distance;
/// equal distances go to A.
fn nearest(a: Option<u64>, b: Option<u64>) -> CueChoice {
    match (a, b) {
        (Some(da), Some(db)) => {
            if db < da {
                CueChoice::B
            } else {
                CueChoice::A
            }
        }
        (Some(_), None) => CueChoice::A,
        (None, Some(_)) => CueChoice::B,
        (None, None) => CueChoice::None,
    }
}

/// Closest candidate sharing the pronoun's role, when that role is subject
/// or direct object.
pub fn parallelism_cue(example: &GapExample, parse: &ParseView) -> Result<CueChoice, FeatureError> {
    let p = locate(example, parse, Mention::Pronoun)?;
    if !matches!(p.role, Role::Subject | Role::DirectObject) {
        return Ok(CueChoice::None);
    }
    let dist = |m: Mention| -> Result<Option<u64>, FeatureError> {
        let c = locate(example, parse, m)?;
        Ok((c.role == p.role).then(|| (p.first as i64 - c.first as i64).unsigned_abs()))
    };
    Ok(nearest(dist(Mention::A)?, dist(Mention::B)?))
}

fn normalise(token: &str) -> String {
    token.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Title tokens from the last path segment of a Wikipedia-style URL.
pub fn url_title_tokens(url: &str) -> Vec<String> {
    let segment = url.trim_end_matches('/').rsplit('/').next().unwrap_or("");
    segment
        .split('_')
        .map(normalise)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Candidate overlapping the page title, nearest the pronoun by character
/// distance between span starts.
pub fn url_cue(example: &GapExample) -> CueChoice {
    let title = url_title_tokens(&example.url);
    if title.is_empty() {
        return CueChoice::None;
    }
    let overlap_dist = |m: Mention| {
        let (surface, offset) = example.mention(m);
        let hit = words(surface).iter().any(|(w, _)| title.contains(&normalise(w)));
        hit.then(|| (example.pronoun_offset as i64 - offset as i64).unsigned_abs())
    };
    nearest(overlap_dist(Mention::A), overlap_dist(Mention::B))
}

/// Parallelism when it fires, otherwise the URL cue.
pub fn combined_cue(example: &GapExample, parse: &ParseView) -> Result<CueChoice, FeatureError> {
    Ok(parallelism_cue(example, parse)?.or(url_cue(example)))
}
