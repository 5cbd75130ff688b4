//! GAP-format datasets: loading, validation, label corrections and gender tags.
//!
//! Files are tab-separated with a header row. The labelled variant carries
//! `A-coref` / `B-coref` boolean columns; the unlabelled variant omits them.
//! All offsets are Unicode code-point offsets into `Text`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{CharIndex, CharSpan};

pub const GOLD_COLUMNS: [&str; 11] = [
    "ID",
    "Text",
    "Pronoun",
    "Pronoun-offset",
    "A",
    "A-offset",
    "A-coref",
    "B",
    "B-offset",
    "B-coref",
    "URL",
];

pub const UNLABELED_COLUMNS: [&str; 9] = [
    "ID",
    "Text",
    "Pronoun",
    "Pronoun-offset",
    "A",
    "A-offset",
    "B",
    "B-offset",
    "URL",
];

#[derive(Debug, Error)]
pub enum GapError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: example {id} marks both A-coref and B-coref TRUE")]
    Integrity { line: u64, id: String },
    #[error("{} validation violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),
    #[error("unrecognised pronoun {0:?} (expected he/him/his/she/her/hers)")]
    UnknownPronoun(String),
    #[error("corrections ledger references id {0} which is not in the dataset")]
    UnknownId(String),
    #[error("example {0} has no gold label")]
    MissingGold(String),
    #[error("invalid label {0:?} (expected A, B or NEITHER)")]
    BadLabel(String),
}

/// One failed invariant on one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.message)
    }
}

/// Coreference class of the pronoun.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    #[serde(rename = "NEITHER")]
    Neither,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::A, Label::B, Label::Neither];

    pub fn index(self) -> usize {
        match self {
            Label::A => 0,
            Label::B => 1,
            Label::Neither => 2,
        }
    }

    pub fn from_index(i: usize) -> Label {
        Label::ALL[i]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::A => "A",
            Label::B => "B",
            Label::Neither => "NEITHER",
        })
    }
}

impl FromStr for Label {
    type Err = GapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Label::A),
            "B" => Ok(Label::B),
            "NEITHER" => Ok(Label::Neither),
            _ => Err(GapError::BadLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Masculine,
    Feminine,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Masculine => "M",
            Gender::Feminine => "F",
        })
    }
}

/// Which of the three annotated mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mention {
    Pronoun,
    A,
    B,
}

/// One annotated snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapExample {
    pub id: String,
    pub text: String,
    pub pronoun: String,
    pub pronoun_offset: usize,
    pub a_text: String,
    pub a_offset: usize,
    pub b_text: String,
    pub b_offset: usize,
    pub url: String,
    pub gold: Option<Label>,
}

impl GapExample {
    pub fn span(&self, mention: Mention) -> CharSpan {
        let (text, offset) = self.mention(mention);
        CharSpan::with_len(offset, text.chars().count())
    }

    pub fn mention(&self, mention: Mention) -> (&str, usize) {
        match mention {
            Mention::Pronoun => (&self.pronoun, self.pronoun_offset),
            Mention::A => (&self.a_text, self.a_offset),
            Mention::B => (&self.b_text, self.b_offset),
        }
    }

    /// The same example with candidates A and B exchanged (gold swapped too).
    pub fn swap_candidates(&self) -> GapExample {
        let mut out = self.clone();
        std::mem::swap(&mut out.a_text, &mut out.b_text);
        std::mem::swap(&mut out.a_offset, &mut out.b_offset);
        out.gold = self.gold.map(|g| match g {
            Label::A => Label::B,
            Label::B => Label::A,
            Label::Neither => Label::Neither,
        });
        out
    }

    /// Checks the per-example invariants; an empty result means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("empty id".to_string());
        }
        if self.text.contains(['\t', '\n', '\r']) {
            out.push("text contains a tab or line break".to_string());
        }
        let index = CharIndex::new(&self.text);
        for (name, m) in [("Pronoun", Mention::Pronoun), ("A", Mention::A), ("B", Mention::B)] {
            let (surface, offset) = self.mention(m);
            if surface.is_empty() {
                out.push(format!("{name} is empty"));
                continue;
            }
            let span = self.span(m);
            match index.slice(&self.text, span) {
                Some(found) if found == surface => {}
                Some(found) => out.push(format!(
                    "{name}-offset {offset} covers {found:?}, expected {surface:?}"
                )),
                None => out.push(format!(
                    "{name}-offset {offset} + {} runs past text length {}",
                    span.len(),
                    index.char_count()
                )),
            }
        }
        let spans = [
            ("Pronoun", self.span(Mention::Pronoun)),
            ("A", self.span(Mention::A)),
            ("B", self.span(Mention::B)),
        ];
        for i in 0..3 {
            for j in i + 1..3 {
                if spans[i].1 == spans[j].1 {
                    out.push(format!("{} and {} spans are identical", spans[i].0, spans[j].0));
                }
            }
        }
        out
    }
}

pub fn gender_of_pronoun(pronoun: &str) -> Result<Gender, GapError> {
    match pronoun.to_lowercase().as_str() {
        "he" | "him" | "his" => Ok(Gender::Masculine),
        "she" | "her" | "hers" => Ok(Gender::Feminine),
        _ => Err(GapError::UnknownPronoun(pronoun.to_string())),
    }
}

pub fn gender_of(example: &GapExample) -> Result<Gender, GapError> {
    gender_of_pronoun(&example.pronoun)
}

/// Order-preserving partition into (masculine, feminine).
pub fn split_by_gender(dataset: &[GapExample]) -> Result<(Vec<GapExample>, Vec<GapExample>), GapError> {
    let mut masc = Vec::new();
    let mut fem = Vec::new();
    for ex in dataset {
        match gender_of(ex)? {
            Gender::Masculine => masc.push(ex.clone()),
            Gender::Feminine => fem.push(ex.clone()),
        }
    }
    Ok((masc, fem))
}

/// Validates a whole dataset: per-example invariants plus id uniqueness.
pub fn validate(dataset: &[GapExample]) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ex in dataset {
        if !seen.insert(ex.id.as_str()) {
            out.push(Violation {
                id: ex.id.clone(),
                message: "duplicate id".to_string(),
            });
        }
        out.extend(ex.violations().into_iter().map(|message| Violation {
            id: ex.id.clone(),
            message,
        }));
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GapError + '_ {
    move |source| GapError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_bool(s: &str, line: u64, column: &str) -> Result<bool, GapError> {
    match s.trim().to_ascii_uppercase().as_str() {
        "TRUE" => Ok(true),
        "FALSE" => Ok(false),
        other => Err(GapError::Parse {
            line,
            message: format!("{column}: expected TRUE or FALSE, found {other:?}"),
        }),
    }
}

fn parse_offset(s: &str, line: u64, column: &str) -> Result<usize, GapError> {
    s.trim().parse().map_err(|_| GapError::Parse {
        line,
        message: format!("{column}: expected a non-negative integer, found {s:?}"),
    })
}

/// Reads rows without checking span invariants.
pub fn read_gap_tsv(path: &Path, has_gold: bool) -> Result<Vec<GapExample>, GapError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_gap_from(file, has_gold)
}

pub fn read_gap_from<R: std::io::Read>(reader: R, has_gold: bool) -> Result<Vec<GapExample>, GapError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| GapError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut idx = BTreeMap::new();
    let required: &[&str] = if has_gold { &GOLD_COLUMNS } else { &UNLABELED_COLUMNS };
    for name in required {
        let i = col(name).ok_or_else(|| GapError::Parse {
            line: 1,
            message: format!("header lacks column {name}"),
        })?;
        idx.insert(*name, i);
    }
    let width = header.len();

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| GapError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(GapError::Parse {
                line,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let get = |name: &str| &record[idx[name]];
        let id = get("ID").to_string();
        let gold = if has_gold {
            let a = parse_bool(get("A-coref"), line, "A-coref")?;
            let b = parse_bool(get("B-coref"), line, "B-coref")?;
            Some(match (a, b) {
                (true, true) => return Err(GapError::Integrity { line, id }),
                (true, false) => Label::A,
                (false, true) => Label::B,
                (false, false) => Label::Neither,
            })
        } else {
            None
        };
        out.push(GapExample {
            text: get("Text").to_string(),
            pronoun: get("Pronoun").to_string(),
            pronoun_offset: parse_offset(get("Pronoun-offset"), line, "Pronoun-offset")?,
            a_text: get("A").to_string(),
            a_offset: parse_offset(get("A-offset"), line, "A-offset")?,
            b_text: get("B").to_string(),
            b_offset: parse_offset(get("B-offset"), line, "B-offset")?,
            url: get("URL").to_string(),
            gold,
            id,
        });
    }
    Ok(out)
}

/// Loads and validates a GAP TSV file, in file order.
pub fn load_gap_tsv(path: &Path, has_gold: bool) -> Result<Vec<GapExample>, GapError> {
    let rows = read_gap_tsv(path, has_gold)?;
    let violations = validate(&rows);
    if violations.is_empty() {
        Ok(rows)
    } else {
        Err(GapError::Validation(violations))
    }
}

/// Writes the labelled layout when every example has gold, else the unlabelled one.
pub fn write_gap_tsv<W: Write>(mut w: W, dataset: &[GapExample]) -> std::io::Result<()> {
    let labelled = !dataset.is_empty() && dataset.iter().all(|e| e.gold.is_some());
    let header: &[&str] = if labelled { &GOLD_COLUMNS } else { &UNLABELED_COLUMNS };
    writeln!(w, "{}", header.join("\t"))?;
    let tf = |b: bool| if b { "TRUE" } else { "FALSE" };
    for e in dataset {
        if labelled {
            let g = e.gold.expect("labelled");
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id,
                e.text,
                e.pronoun,
                e.pronoun_offset,
                e.a_text,
                e.a_offset,
                tf(g == Label::A),
                e.b_text,
                e.b_offset,
                tf(g == Label::B),
                e.url
            )?;
        } else {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id, e.text, e.pronoun, e.pronoun_offset, e.a_text, e.a_offset, e.b_text, e.b_offset, e.url
            )?;
        }
    }
    Ok(())
}

pub fn save_gap_tsv(path: &Path, dataset: &[GapExample]) -> Result<(), GapError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_gap_tsv(&mut w, dataset).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Gold-label fixes keyed by example id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrectionsLedger {
    pub entries: BTreeMap<String, Label>,
}

impl CorrectionsLedger {
    pub fn load(path: &Path) -> Result<Self, GapError> {
        let file = File::open(path).map_err(io_err(path))?;
        Self::read(BufReader::new(file))
    }

    /// Two-column TSV (`id`, `label`); `#` comments and blank lines skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, GapError> {
        let mut entries = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.map_err(|e| GapError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = trimmed.split('\t');
            let (Some(id), Some(label), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(GapError::Parse {
                    line: line_no,
                    message: "expected two tab-separated columns: id, label".to_string(),
                });
            };
            if entries.is_empty() && id.eq_ignore_ascii_case("id") && label.eq_ignore_ascii_case("label") {
                continue;
            }
            let label: Label = label.parse().map_err(|_| GapError::Parse {
                line: line_no,
                message: format!("invalid label {label:?}"),
            })?;
            if let Some(prev) = entries.insert(id.trim().to_string(), label) {
                if prev != label {
                    return Err(GapError::Parse {
                        line: line_no,
                        message: format!("conflicting corrections for {id}"),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What a correction pass changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub changed: usize,
    pub changed_masculine: usize,
    pub changed_feminine: usize,
    /// Changed examples whose pronoun is outside the gendered inventory.
    pub changed_other: usize,
}

/// Replaces gold labels for ledger ids; all other fields are untouched.
pub fn apply_corrections(
    dataset: &[GapExample],
    ledger: &CorrectionsLedger,
) -> Result<(Vec<GapExample>, CorrectionSummary), GapError> {
    if let Some(e) = dataset.iter().find(|e| e.gold.is_none()) {
        return Err(GapError::MissingGold(e.id.clone()));
    }
    let ids: HashSet<&str> = dataset.iter().map(|e| e.id.as_str()).collect();
    if let Some(missing) = ledger.entries.keys().find(|k| !ids.contains(k.as_str())) {
        return Err(GapError::UnknownId(missing.clone()));
    }
    let mut summary = CorrectionSummary::default();
    let out = dataset
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if let Some(&label) = ledger.entries.get(&e.id) {
                if e.gold != Some(label) {
                    summary.changed += 1;
                    match gender_of(&e) {
                        Ok(Gender::Masculine) => summary.changed_masculine += 1,
                        Ok(Gender::Feminine) => summary.changed_feminine += 1,
                        Err(_) => summary.changed_other += 1,
                    }
                    e.gold = Some(label);
                }
            }
            e
        })
        .collect();
    Ok((out, summary))
}
