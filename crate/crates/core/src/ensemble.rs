//! Averaging and fixed-weight blending of probability triples, plus the
//! `ID,A,B,NEITHER` prediction file format.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap_data::Label;

/// Tolerance on the simplex sum for triples produced by this crate.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("triple ({0}, {1}, {2}) is not on the probability simplex")]
    OffSimplex(f64, f64, f64),
    #[error("blend weights ({0}, {1}) must be non-negative and sum to 1")]
    BadWeights(f64, f64),
    #[error("nothing to average")]
    Empty,
    #[error("prediction sets disagree on ids: {0}")]
    Misaligned(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("prediction file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Probabilities for A, B and NEITHER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionTriple {
    pub a: f64,
    pub b: f64,
    pub neither: f64,
}

impl PredictionTriple {
    pub const UNIFORM: Self = Self {
        a: 1.0 / 3.0,
        b: 1.0 / 3.0,
        neither: 1.0 / 3.0,
    };

    pub fn new(a: f64, b: f64, neither: f64) -> Result<Self, EnsembleError> {
        Self::with_tolerance(a, b, neither, SIMPLEX_TOL)
    }

    pub fn with_tolerance(a: f64, b: f64, neither: f64, tol: f64) -> Result<Self, EnsembleError> {
        let t = Self { a, b, neither };
        if t.on_simplex(tol) {
            Ok(t)
        } else {
            Err(EnsembleError::OffSimplex(a, b, neither))
        }
    }

    /// Unchecked constructor for values known to be on the simplex.
    pub fn from_array(p: [f64; 3]) -> Self {
        Self {
            a: p[0],
            b: p[1],
            neither: p[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.neither]
    }

    pub fn get(self, label: Label) -> f64 {
        self.to_array()[label.index()]
    }

    pub fn on_simplex(self, tol: f64) -> bool {
        let p = self.to_array();
        p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Highest-probability label; ties go to the earlier of A, B, NEITHER.
    pub fn argmax(self) -> Label {
        let p = self.to_array();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        Label::from_index(best)
    }

    pub fn swap_candidates(self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            neither: self.neither,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct BlendWeights {
    w_finetuned: f64,
    w_frozen: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    w_finetuned: f64,
    w_frozen: f64,
}

impl TryFrom<RawWeights> for BlendWeights {
    type Error = EnsembleError;
    fn try_from(r: RawWeights) -> Result<Self, Self::Error> {
        Self::new(r.w_finetuned, r.w_frozen)
    }
}

impl Default for BlendWeights {
    fn default() -> Self {
        Self {
            w_finetuned: 0.65,
            w_frozen: 0.35,
        }
    }
}

impl BlendWeights {
    pub fn new(w_finetuned: f64, w_frozen: f64) -> Result<Self, EnsembleError> {
        let ok = w_finetuned >= 0.0 && w_frozen >= 0.0 && (w_finetuned + w_frozen - 1.0).abs() <= SIMPLEX_TOL;
        if ok {
            Ok(Self { w_finetuned, w_frozen })
        } else {
            Err(EnsembleError::BadWeights(w_finetuned, w_frozen))
        }
    }

    pub fn finetuned(self) -> f64 {
        self.w_finetuned
    }

    pub fn frozen(self) -> f64 {
        self.w_frozen
    }
}

impl std::str::FromStr for BlendWeights {
    type Err = String;
    /// Parses `"0.65,0.35"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("expected two comma-separated weights, got {s:?}"));
        }
        let p = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        Self::new(p(parts[0])?, p(parts[1])?).map_err(|e| e.to_string())
    }
}

/// Componentwise mean.
pub fn average_predictions(triples: &[PredictionTriple]) -> Result<PredictionTriple, EnsembleError> {
    if triples.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let mut sum = [0.0f64; 3];
    for t in triples {
        if !t.on_simplex(SIMPLEX_TOL) {
            return Err(EnsembleError::OffSimplex(t.a, t.b, t.neither));
        }
        for (s, v) in sum.iter_mut().zip(t.to_array()) {
            *s += v;
        }
    }
    let n = triples.len() as f64;
    Ok(PredictionTriple::from_array(sum.map(|s| s / n)))
}

pub fn blend(ft: PredictionTriple, fr: PredictionTriple, w: BlendWeights) -> Result<PredictionTriple, EnsembleError> {
    for t in [ft, fr] {
        if !t.on_simplex(SIMPLEX_TOL) {
            return Err(EnsembleError::OffSimplex(t.a, t.b, t.neither));
        }
    }
    let (x, y) = (ft.to_array(), fr.to_array());
    Ok(PredictionTriple::from_array(std::array::from_fn(|i| {
        w.w_finetuned * x[i] + w.w_frozen * y[i]
    })))
}

/// Ordered `(id, triple)` rows, the contents of one prediction file.
pub type Predictions = Vec<(String, PredictionTriple)>;

/// Averages several prediction sets row by row; every set must list the
/// same ids in the same order.
pub fn average_sets(sets: &[Predictions]) -> Result<Predictions, EnsembleError> {
    let first = sets.first().ok_or(EnsembleError::Empty)?;
    let mut out = Vec::with_capacity(first.len());
    for (i, (id, _)) in first.iter().enumerate() {
        let mut row = Vec::with_capacity(sets.len());
        for s in sets {
            match s.get(i) {
                Some((other, t)) if other == id => row.push(*t),
                _ => return Err(EnsembleError::Misaligned(format!("row {i} ({id})"))),
            }
        }
        out.push((id.clone(), average_predictions(&row)?));
    }
    if sets.iter().any(|s| s.len() != first.len()) {
        return Err(EnsembleError::Misaligned("row counts differ".into()));
    }
    Ok(out)
}

/// Blends two prediction sets matched by id (order of `finetuned` is kept).
pub fn blend_sets(finetuned: &Predictions, frozen: &Predictions, w: BlendWeights) -> Result<Predictions, EnsembleError> {
    let lookup: std::collections::HashMap<&str, PredictionTriple> =
        frozen.iter().map(|(id, t)| (id.as_str(), *t)).collect();
    if lookup.len() != finetuned.len() {
        return Err(EnsembleError::Misaligned(format!(
            "{} fine-tuned rows vs {} frozen rows",
            finetuned.len(),
            lookup.len()
        )));
    }
    finetuned
        .iter()
        .map(|(id, ft)| {
            let fr = lookup
                .get(id.as_str())
                .ok_or_else(|| EnsembleError::Misaligned(format!("{id} missing from frozen predictions")))?;
            Ok((id.clone(), blend(*ft, *fr, w)?))
        })
        .collect()
}

pub fn write_predictions<W: Write>(w: W, preds: &Predictions) -> Result<(), EnsembleError> {
    let io = |e: csv::Error| EnsembleError::Parse {
        line: 0,
        message: e.to_string(),
    };
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ID", "A", "B", "NEITHER"]).map_err(io)?;
    for (id, t) in preds {
        // `{}` on f64 prints the shortest string that round-trips.
        wr.write_record([id.clone(), t.a.to_string(), t.b.to_string(), t.neither.to_string()])
            .map_err(io)?;
    }
    wr.flush().map_err(|e| io(e.into()))
}

pub fn save_predictions(path: &Path, preds: &Predictions) -> Result<(), EnsembleError> {
    let f = File::create(path).map_err(|source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_predictions(std::io::BufWriter::new(f), preds)
}

/// Reads a prediction file, checking every row is on the simplex within `tol`.
pub fn read_predictions<R: Read>(r: R, tol: f64) -> Result<Predictions, EnsembleError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = rd.headers().map_err(|e| EnsembleError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let expected = ["ID", "A", "B", "NEITHER"];
    if header.len() != 4 || header.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(EnsembleError::Parse {
            line: 1,
            message: format!("header must be ID,A,B,NEITHER (got {:?})", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| EnsembleError::Parse {
            line,
            message: e.to_string(),
        })?;
        let num = |k: usize| {
            rec[k].parse::<f64>().map_err(|e| EnsembleError::Parse {
                line,
                message: format!("column {}: {e}", expected[k]),
            })
        };
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(EnsembleError::Parse {
                line,
                message: format!("duplicate id {id}"),
            });
        }
        let t = PredictionTriple::with_tolerance(num(1)?, num(2)?, num(3)?, tol).map_err(|e| EnsembleError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push((id, t));
    }
    Ok(out)
}

pub fn load_predictions(path: &Path, tol: f64) -> Result<Predictions, EnsembleError> {
    let f = File::open(path).map_err(|source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_predictions(std::io::BufReader::new(f), tol)
}
