//! The 69-column hand-crafted feature vector.
//!
//! Column order is fixed by [`FeatureRegistry::v1`]: external prediction
//! sources, syntactic roles, entity types, GAP cues, then the positional and
//! frequency block. Each entry records whether it is tied to candidate A or
//! B so that swapping the candidates maps to a known column permutation.

pub mod cues;
pub mod parse;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{self, EnsembleError};
use crate::gap_data::{GapExample, Mention};
use crate::text::words;
pub use cues::{combined_cue, parallelism_cue, url_cue, CueChoice};
pub use parse::{NerTag, ParseView, Role, RuleBasedParser, SyntaxProvider};

/// Tolerance for external triples on the simplex.
pub const EXTERNAL_SIMPLEX_TOL: f64 = 1e-6;

/// External sources, in column order. The last one stands in for an
/// ELMo-based classifier.
pub const EXTERNAL_SOURCES: [&str; 4] = ["e2e_coref", "corenlp", "neuralcoref", "elmo_mlp"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{id}: {mention} span {span} is not covered by any parsed token")]
    MentionNotFound { id: String, mention: String, span: String },
    #[error("malformed parse: {0}")]
    BadParse(String),
    #[error("{id}: source {source_name} triple {triple:?} is not on the simplex")]
    OffSimplex {
        id: String,
        source_name: String,
        triple: [f64; 3],
    },
    #[error("unknown external source {0:?} (expected one of {EXTERNAL_SOURCES:?})")]
    UnknownSource(String),
    #[error("{id}: column {column} = {value} breaks its declared range")]
    OutOfRange { id: String, column: String, value: f64 },
    #[error(transparent)]
    Predictions(#[from] EnsembleError),
    #[error("feature file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureGroup {
    ExternalPred,
    SyntaxRole,
    Positional,
    Ner,
    GapCue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Boolean,
    Probability,
    Real,
}

/// How a column behaves when candidates A and B are exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapTag {
    /// Unchanged by the swap.
    Invariant,
    /// Takes the value of the named partner column.
    Paired(&'static str),
    /// Changes in a way that is not a column permutation.
    Asymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub group: FeatureGroup,
    pub kind: FeatureKind,
    pub default: f64,
    pub swap: SwapTag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRegistry {
    pub version: &'static str,
    pub entries: Vec<FeatureSpec>,
}

use FeatureGroup as G;
use FeatureKind as K;
use SwapTag as S;

const fn spec(name: &'static str, group: FeatureGroup, kind: FeatureKind, swap: SwapTag) -> FeatureSpec {
    FeatureSpec {
        name,
        group,
        kind,
        default: 0.0,
        swap,
    }
}

const EXTERNAL_NAMES: [[&str; 4]; 4] = [
    ["e2e_coref_p_a", "e2e_coref_p_b", "e2e_coref_p_n", "e2e_coref_missing"],
    ["corenlp_p_a", "corenlp_p_b", "corenlp_p_n", "corenlp_missing"],
    ["neuralcoref_p_a", "neuralcoref_p_b", "neuralcoref_p_n", "neuralcoref_missing"],
    ["elmo_mlp_p_a", "elmo_mlp_p_b", "elmo_mlp_p_n", "elmo_mlp_missing"],
];

const ROLE_NAMES: [[&str; 4]; 3] = [
    ["role_p_subj", "role_p_dobj", "role_p_attr", "role_p_other"],
    ["role_a_subj", "role_a_dobj", "role_a_attr", "role_a_other"],
    ["role_b_subj", "role_b_dobj", "role_b_attr", "role_b_other"],
];

const NER_NAMES: [[&str; 4]; 2] = [
    ["ner_a_person", "ner_a_org", "ner_a_gpe", "ner_a_other"],
    ["ner_b_person", "ner_b_org", "ner_b_gpe", "ner_b_other"],
];

const CUE_NAMES: [[&str; 2]; 3] = [
    ["cue_parallel_is_a", "cue_parallel_is_b"],
    ["cue_url_is_a", "cue_url_is_b"],
    ["cue_parallel_url_is_a", "cue_parallel_url_is_b"],
];

/// The positional and frequency block, in emission order.
pub const POSITIONAL: [(&str, FeatureKind, SwapTag); 27] = [
    ("char_dist_p_a", K::Real, S::Paired("char_dist_p_b")),
    ("char_dist_p_b", K::Real, S::Paired("char_dist_p_a")),
    ("log_char_dist_p_a", K::Real, S::Paired("log_char_dist_p_b")),
    ("log_char_dist_p_b", K::Real, S::Paired("log_char_dist_p_a")),
    ("tok_dist_p_a", K::Real, S::Paired("tok_dist_p_b")),
    ("tok_dist_p_b", K::Real, S::Paired("tok_dist_p_a")),
    ("log_tok_dist_p_a", K::Real, S::Paired("log_tok_dist_p_b")),
    ("log_tok_dist_p_b", K::Real, S::Paired("log_tok_dist_p_a")),
    ("sent_dist_p_a", K::Real, S::Paired("sent_dist_p_b")),
    ("sent_dist_p_b", K::Real, S::Paired("sent_dist_p_a")),
    ("same_sent_p_a", K::Boolean, S::Paired("same_sent_p_b")),
    ("same_sent_p_b", K::Boolean, S::Paired("same_sent_p_a")),
    ("p_next_sent_after_a", K::Boolean, S::Paired("p_next_sent_after_b")),
    ("p_next_sent_after_b", K::Boolean, S::Paired("p_next_sent_after_a")),
    ("a_before_p", K::Boolean, S::Paired("b_before_p")),
    ("b_before_p", K::Boolean, S::Paired("a_before_p")),
    ("a_count", K::Real, S::Paired("b_count")),
    ("b_count", K::Real, S::Paired("a_count")),
    ("a_last_word_count", K::Real, S::Paired("b_last_word_count")),
    ("b_last_word_count", K::Real, S::Paired("a_last_word_count")),
    ("a_len_tokens", K::Real, S::Paired("b_len_tokens")),
    ("b_len_tokens", K::Real, S::Paired("a_len_tokens")),
    ("a_nearer_chars", K::Boolean, S::Asymmetric),
    ("a_nearer_tokens", K::Boolean, S::Asymmetric),
    ("a_before_b", K::Boolean, S::Asymmetric),
    ("p_sent_index", K::Real, S::Invariant),
    ("log_text_tokens", K::Real, S::Invariant),
];

fn partner<const N: usize>(names: &[[&'static str; N]], row: usize, col: usize, rows: [usize; 2]) -> SwapTag {
    if row == rows[0] {
        S::Paired(names[rows[1]][col])
    } else if row == rows[1] {
        S::Paired(names[rows[0]][col])
    } else {
        S::Invariant
    }
}

impl FeatureRegistry {
    pub fn v1() -> Self {
        let mut entries = Vec::with_capacity(69);
        for names in &EXTERNAL_NAMES {
            entries.push(FeatureSpec {
                default: 1.0 / 3.0,
                ..spec(names[0], G::ExternalPred, K::Probability, S::Paired(names[1]))
            });
            entries.push(FeatureSpec {
                default: 1.0 / 3.0,
                ..spec(names[1], G::ExternalPred, K::Probability, S::Paired(names[0]))
            });
            entries.push(FeatureSpec {
                default: 1.0 / 3.0,
                ..spec(names[2], G::ExternalPred, K::Probability, S::Invariant)
            });
            entries.push(FeatureSpec {
                default: 1.0,
                ..spec(names[3], G::ExternalPred, K::Boolean, S::Invariant)
            });
        }
        for (r, row) in ROLE_NAMES.iter().enumerate() {
            for (c, name) in row.iter().enumerate() {
                entries.push(spec(name, G::SyntaxRole, K::Boolean, partner(&ROLE_NAMES, r, c, [1, 2])));
            }
        }
        for (r, row) in NER_NAMES.iter().enumerate() {
            for (c, name) in row.iter().enumerate() {
                entries.push(spec(name, G::Ner, K::Boolean, partner(&NER_NAMES, r, c, [0, 1])));
            }
        }
        for row in &CUE_NAMES {
            entries.push(spec(row[0], G::GapCue, K::Boolean, S::Paired(row[1])));
            entries.push(spec(row[1], G::GapCue, K::Boolean, S::Paired(row[0])));
        }
        for (name, kind, swap) in POSITIONAL {
            entries.push(spec(name, G::Positional, kind, swap));
        }
        Self {
            version: "v1",
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// For each column, the column whose value it takes after an A/B swap
    /// (itself for invariant columns, `None` for asymmetric ones).
    pub fn swap_permutation(&self) -> Vec<Option<usize>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| match e.swap {
                S::Invariant => Some(i),
                S::Paired(other) => Some(self.index_of(other).expect("registry partner exists")),
                S::Asymmetric => None,
            })
            .collect()
    }

    /// Checks length, finiteness and per-kind ranges.
    pub fn check(&self, v: &FeatureVector) -> Result<(), FeatureError> {
        if v.values.len() != self.len() {
            return Err(FeatureError::Format(format!(
                "{}: {} values for a {}-column registry",
                v.example_id,
                v.values.len(),
                self.len()
            )));
        }
        for (e, &x) in self.entries.iter().zip(&v.values) {
            let ok = x.is_finite()
                && match e.kind {
                    K::Boolean => x == 0.0 || x == 1.0,
                    K::Probability => (0.0..=1.0).contains(&x),
                    K::Real => true,
                };
            if !ok {
                return Err(FeatureError::OutOfRange {
                    id: v.example_id.clone(),
                    column: e.name.to_string(),
                    value: x,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub example_id: String,
    pub values: Vec<f64>,
}

/// Where a mention sits in a parse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MentionLocation {
    pub first: usize,
    pub last: usize,
    pub sentence: usize,
    pub role: Role,
    pub ner: NerTag,
}

/// Locates `mention` in `parse`; its role and entity tag are the first
/// non-`Other` values among the covering tokens.
pub fn locate(example: &GapExample, parse: &ParseView, mention: Mention) -> Result<MentionLocation, FeatureError> {
    let span = example.span(mention);
    let idx = parse.covering(span);
    let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
        return Err(FeatureError::MentionNotFound {
            id: example.id.clone(),
            mention: format!("{mention:?}"),
            span: span.to_string(),
        });
    };
    let toks = &parse.tokens[first..=last];
    Ok(MentionLocation {
        first,
        last,
        sentence: parse.tokens[first].sentence,
        role: toks.iter().map(|t| t.role).find(|r| *r != Role::Other).unwrap_or(Role::Other),
        ner: toks.iter().map(|t| t.ner).find(|n| *n != NerTag::Other).unwrap_or(NerTag::Other),
    })
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn log_abs(d: f64) -> f64 {
    d.abs().ln_1p()
}

/// The 27-column positional block, aligned with [`POSITIONAL`].
pub fn positional_features(example: &GapExample, parse: &ParseView) -> Result<Vec<f64>, FeatureError> {
    let p = locate(example, parse, Mention::Pronoun)?;
    let a = locate(example, parse, Mention::A)?;
    let b = locate(example, parse, Mention::B)?;
    let char_pa = example.pronoun_offset as f64 - example.a_offset as f64;
    let char_pb = example.pronoun_offset as f64 - example.b_offset as f64;
    let tok_pa = p.first as f64 - a.first as f64;
    let tok_pb = p.first as f64 - b.first as f64;
    let sent_pa = p.sentence as f64 - a.sentence as f64;
    let sent_pb = p.sentence as f64 - b.sentence as f64;
    let count = |surface: &str| example.text.matches(surface).count() as f64;
    let last_word_count = |surface: &str| {
        let last = words(surface).last().map(|(w, _)| *w).unwrap_or(surface);
        parse.tokens.iter().filter(|t| t.text == last).count() as f64
    };
    let out = vec![
        char_pa,
        char_pb,
        log_abs(char_pa),
        log_abs(char_pb),
        tok_pa,
        tok_pb,
        log_abs(tok_pa),
        log_abs(tok_pb),
        sent_pa,
        sent_pb,
        flag(p.sentence == a.sentence),
        flag(p.sentence == b.sentence),
        flag(p.sentence == a.sentence + 1),
        flag(p.sentence == b.sentence + 1),
        flag(example.a_offset < example.pronoun_offset),
        flag(example.b_offset < example.pronoun_offset),
        count(&example.a_text),
        count(&example.b_text),
        last_word_count(&example.a_text),
        last_word_count(&example.b_text),
        (a.last - a.first + 1) as f64,
        (b.last - b.first + 1) as f64,
        flag(char_pa.abs() <= char_pb.abs()),
        flag(tok_pa.abs() <= tok_pb.abs()),
        flag(example.a_offset < example.b_offset),
        p.sentence as f64,
        (parse.tokens.len() as f64).ln_1p(),
    ];
    debug_assert_eq!(out.len(), POSITIONAL.len());
    Ok(out)
}

/// One-hot roles for P, A and B (12 columns).
pub fn syntax_features(example: &GapExample, parse: &ParseView) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(12);
    for m in [Mention::Pronoun, Mention::A, Mention::B] {
        out.extend(locate(example, parse, m)?.role.one_hot());
    }
    Ok(out)
}

/// One-hot entity types for A and B (8 columns).
pub fn ner_features(example: &GapExample, parse: &ParseView) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(8);
    for m in [Mention::A, Mention::B] {
        out.extend(locate(example, parse, m)?.ner.one_hot());
    }
    Ok(out)
}

/// Parallelism, URL and combined cues as `(is_A, is_B)` pairs (6 columns).
pub fn cue_features(example: &GapExample, parse: &ParseView) -> Result<Vec<f64>, FeatureError> {
    let par = parallelism_cue(example, parse)?;
    let url = url_cue(example);
    Ok([par, url, par.or(url)].iter().flat_map(|c| c.encode()).collect())
}

/// Per-source predictions keyed by example id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalSources {
    by_source: BTreeMap<String, HashMap<String, [f64; 3]>>,
}

impl ExternalSources {
    pub fn insert(&mut self, source: &str, id: &str, triple: [f64; 3]) -> Result<(), FeatureError> {
        if !EXTERNAL_SOURCES.contains(&source) {
            return Err(FeatureError::UnknownSource(source.to_string()));
        }
        self.by_source
            .entry(source.to_string())
            .or_default()
            .insert(id.to_string(), triple);
        Ok(())
    }

    /// Loads a source from an `ID,A,B,NEITHER` file.
    pub fn load_source(&mut self, source: &str, path: &Path) -> Result<(), FeatureError> {
        for (id, t) in ensemble::load_predictions(path, EXTERNAL_SIMPLEX_TOL)? {
            self.insert(source, &id, t.to_array())?;
        }
        Ok(())
    }

    pub fn get(&self, source: &str, id: &str) -> Option<[f64; 3]> {
        self.by_source.get(source).and_then(|m| m.get(id)).copied()
    }

    /// The same sources with A and B probabilities exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for m in out.by_source.values_mut() {
            for t in m.values_mut() {
                t.swap(0, 1);
            }
        }
        out
    }
}

/// Three probabilities and a missing flag per source (16 columns).
pub fn external_prediction_features(example: &GapExample, sources: &ExternalSources) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(16);
    for source in EXTERNAL_SOURCES {
        match sources.get(source, &example.id) {
            Some(t) => {
                let on_simplex = t.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
                    && (t.iter().sum::<f64>() - 1.0).abs() <= EXTERNAL_SIMPLEX_TOL;
                if !on_simplex {
                    return Err(FeatureError::OffSimplex {
                        id: example.id.clone(),
                        source_name: source.to_string(),
                        triple: t,
                    });
                }
                out.extend(t);
                out.push(0.0);
            }
            None => out.extend([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]),
        }
    }
    Ok(out)
}

/// All 69 columns in registry order.
pub fn featurize(example: &GapExample, parse: &ParseView, sources: &ExternalSources) -> Result<FeatureVector, FeatureError> {
    parse.validate()?;
    let mut values = external_prediction_features(example, sources)?;
    values.extend(syntax_features(example, parse)?);
    values.extend(ner_features(example, parse)?);
    values.extend(cue_features(example, parse)?);
    values.extend(positional_features(example, parse)?);
    Ok(FeatureVector {
        example_id: example.id.clone(),
        values,
    })
}

/// Parses and featurizes every example, in input order.
pub fn featurize_dataset(
    examples: &[GapExample],
    provider: &dyn SyntaxProvider,
    sources: &ExternalSources,
) -> Result<Vec<FeatureVector>, FeatureError> {
    examples
        .par_iter()
        .map(|ex| featurize(ex, &provider.parse(&ex.text)?, sources))
        .collect()
}

/// Writes an `ID` column followed by one column per registry name.
pub fn write_feature_csv<W: Write>(w: W, registry: &FeatureRegistry, rows: &[FeatureVector]) -> Result<(), FeatureError> {
    let err = |e: csv::Error| FeatureError::Format(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["ID"];
    header.extend(registry.names());
    wr.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.example_id.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| err(e.into()))
}

pub fn read_feature_csv<R: Read>(r: R, registry: &FeatureRegistry) -> Result<Vec<FeatureVector>, FeatureError> {
    let err = |e: csv::Error| FeatureError::Format(e.to_string());
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(err)?.clone();
    let expected: Vec<&str> = std::iter::once("ID").chain(registry.names()).collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(FeatureError::Format(format!(
            "header does not match registry {}",
            registry.version
        )));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(err)?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| FeatureError::Format(format!("{}: {e}", &rec[0]))))
            .collect::<Result<Vec<_>, _>>()?;
        let fv = FeatureVector {
            example_id: rec[0].to_string(),
            values,
        };
        registry.check(&fv)?;
        out.push(fv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn snippet() -> GapExample {
        GapExample {
            id: "snippet".into(),
            text: "John entered the room and saw Julia. She was talking to Mary Hendriks and looked so extremely gorgeous.".into(),
            pronoun: "She".into(),
            pronoun_offset: 37,
            a_text: "Julia".into(),
            a_offset: 30,
            b_text: "Mary Hendriks".into(),
            b_offset: 56,
            url: "http://en.wikipedia.org/wiki/Julia_Roberts".into(),
            gold: None,
        }
    }

    fn value(v: &FeatureVector, name: &str) -> f64 {
        v.values[FeatureRegistry::v1().index_of(name).unwrap()]
    }

    fn feats(ex: &GapExample) -> FeatureVector {
        featurize(ex, &RuleBasedParser.parse(&ex.text).unwrap(), &ExternalSources::default()).unwrap()
    }

    #[test]
    fn registry_shape() {
        let r = FeatureRegistry::v1();
        assert_eq!(r.len(), 69);
        let names: HashSet<_> = r.names().into_iter().collect();
        assert_eq!(names.len(), 69);
        let count = |g| r.entries.iter().filter(|e| e.group == g).count();
        assert_eq!(count(G::ExternalPred), 16);
        assert_eq!(count(G::SyntaxRole), 12);
        assert_eq!(count(G::Ner), 8);
        assert_eq!(count(G::GapCue), 6);
        assert_eq!(count(G::Positional), 27);
        // The swap permutation is an involution on the columns it covers.
        let perm = r.swap_permutation();
        for (i, p) in perm.iter().enumerate() {
            if let Some(j) = p {
                assert_eq!(perm[*j], Some(i));
            }
        }
    }

    #[test]
    fn snippet_features() {
        let v = feats(&snippet());
        assert_eq!(v.values.len(), 69);
        FeatureRegistry::v1().check(&v).unwrap();
        assert_eq!(value(&v, "same_sent_p_a"), 0.0);
        assert_eq!(value(&v, "same_sent_p_b"), 1.0);
        assert_eq!(value(&v, "p_next_sent_after_a"), 1.0);
        assert_eq!(value(&v, "char_dist_p_a"), 7.0);
        assert_eq!(value(&v, "char_dist_p_b"), -19.0);
        assert_eq!(value(&v, "b_len_tokens"), 2.0);
        assert_eq!(value(&v, "cue_url_is_a"), 1.0);
        assert_eq!(value(&v, "role_p_subj"), 1.0);
        assert_eq!(value(&v, "ner_b_person"), 1.0);
        assert_eq!(value(&v, "e2e_coref_missing"), 1.0);
    }

    #[test]
    fn adjacent_mentions() {
        let ex = GapExample {
            id: "adj".into(),
            text: "Anna she".into(),
            pronoun: "she".into(),
            pronoun_offset: 5,
            a_text: "Anna".into(),
            a_offset: 0,
            b_text: "she".into(),
            b_offset: 5,
            url: String::new(),
            gold: None,
        };
        let parse = RuleBasedParser.parse(&ex.text).unwrap();
        let pos = positional_features(&ex, &parse).unwrap();
        assert_eq!(pos[4], 1.0);
        assert_eq!(pos[10], 1.0);
    }

    #[test]
    fn offsets_give_signed_char_distance() {
        let text = format!("{}Alice{}she", " ".repeat(30), " ".repeat(15));
        let ex = GapExample {
            id: "d".into(),
            text: format!("{text} Bob"),
            pronoun: "she".into(),
            pronoun_offset: 50,
            a_text: "Alice".into(),
            a_offset: 30,
            b_text: "Bob".into(),
            b_offset: 54,
            url: String::new(),
            gold: None,
        };
        assert!(ex.violations().is_empty());
        assert_eq!(value(&feats(&ex), "char_dist_p_a"), 20.0);
    }

    #[test]
    fn external_sources() {
        let ex = snippet();
        let mut s = ExternalSources::default();
        s.insert("corenlp", "snippet", [0.7, 0.2, 0.1]).unwrap();
        let cols = external_prediction_features(&ex, &s).unwrap();
        assert_eq!(&cols[4..8], &[0.7, 0.2, 0.1, 0.0]);
        assert_eq!(&cols[0..4], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
        s.insert("corenlp", "snippet", [0.5, 0.3, 0.1]).unwrap();
        assert!(matches!(external_prediction_features(&ex, &s), Err(FeatureError::OffSimplex { .. })));
        assert!(matches!(s.insert("spacy", "x", [1.0, 0.0, 0.0]), Err(FeatureError::UnknownSource(_))));
    }

    #[test]
    fn role_one_hots() {
        let text = "Alice praised Bob.";
        let ex = GapExample {
            id: "r".into(),
            text: format!("{text} She left."),
            pronoun: "She".into(),
            pronoun_offset: 19,
            a_text: "Alice".into(),
            a_offset: 0,
            b_text: "Bob".into(),
            b_offset: 14,
            url: String::new(),
            gold: None,
        };
        let parse = RuleBasedParser.parse(&ex.text).unwrap();
        let roles = syntax_features(&ex, &parse).unwrap();
        assert_eq!(&roles[0..4], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&roles[4..8], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&roles[8..12], &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_mention_is_an_error() {
        let ex = snippet();
        let mut parse = RuleBasedParser.parse(&ex.text).unwrap();
        parse.tokens.retain(|t| t.text != "Julia");
        assert!(matches!(featurize(&ex, &parse, &ExternalSources::default()), Err(FeatureError::MentionNotFound { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let r = FeatureRegistry::v1();
        let rows = vec![feats(&snippet())];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &r, &rows).unwrap();
        assert_eq!(read_feature_csv(buf.as_slice(), &r).unwrap(), rows);
    }

    fn swap_check(ex: &GapExample, sources: &ExternalSources) {
        let r = FeatureRegistry::v1();
        let parse = RuleBasedParser.parse(&ex.text).unwrap();
        let base = featurize(ex, &parse, sources).unwrap();
        let swapped = featurize(&ex.swap_candidates(), &parse, &sources.swapped()).unwrap();
        for (i, p) in r.swap_permutation().into_iter().enumerate() {
            if let Some(j) = p {
                assert_eq!(swapped.values[i], base.values[j], "column {}", r.entries[i].name);
            }
        }
    }

    #[test]
    fn swap_permutes_paired_columns() {
        let mut s = ExternalSources::default();
        s.insert("neuralcoref", "snippet", [0.6, 0.3, 0.1]).unwrap();
        swap_check(&snippet(), &s);
    }

    const NAMES: [&str; 6] = ["Anna", "Maria", "Clara", "Ruth", "Elena", "Sofia"];
    const VERBS: [&str; 4] = ["praised", "thanked", "visited", "called"];

    proptest! {
        #[test]
        fn symmetric_constructions_swap_cleanly(
            a in 0usize..6, b in 0usize..6, v1 in 0usize..4, v2 in 0usize..4, pronoun_first in any::<bool>()
        ) {
            prop_assume!(a != b);
            let (na, nb) = (NAMES[a], NAMES[b]);
            let text = if pronoun_first {
                format!("Later she {} {na}, and {nb} {} the crowd.", VERBS[v1], VERBS[v2])
            } else {
                format!("{na} {} {nb} because she was kind.", VERBS[v1])
            };
            let find = |w: &str| text[..text.find(w).unwrap()].chars().count();
            let ex = GapExample {
                id: "sym".into(),
                pronoun: "she".into(),
                pronoun_offset: find(" she ") + 1,
                a_text: na.into(),
                a_offset: find(na),
                b_text: nb.into(),
                b_offset: find(nb),
                url: format!("http://en.wikipedia.org/wiki/{na}_{nb}"),
                gold: None,
                text: text.clone(),
            };
            prop_assert!(ex.violations().is_empty());
            swap_check(&ex, &ExternalSources::default());
            let v = feats(&ex);
            prop_assert!(FeatureRegistry::v1().check(&v).is_ok());
            prop_assert_eq!(v, feats(&ex));
        }
    }
}
