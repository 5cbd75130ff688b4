//! Multiclass logloss, 3-class accuracy, 2-class pair F1, per-gender splits
//! and bias ratios, plus report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::PredictionTriple;
use crate::gap_data::{gender_of, GapError, GapExample, Gender, Label};

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const CLIP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("nothing to score")]
    Empty,
    #[error("ids differ between gold and predictions: {missing} missing from predictions ({missing_ids}), {extra} unexpected ({extra_ids})")]
    IdMismatch {
        missing: usize,
        missing_ids: String,
        extra: usize,
        extra_ids: String,
    },
    #[error("{id}: negative or non-finite probability in {triple:?}")]
    BadProbability { id: String, triple: [f64; 3] },
    #[error("no {0} examples to score")]
    EmptyGender(Gender),
    #[error("{metric} bias ratio is undefined ({numerator} / {denominator})")]
    DegenerateRatio {
        metric: &'static str,
        numerator: f64,
        denominator: f64,
    },
    #[error("{id} has no gold label")]
    MissingGold { id: String },
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error("report parse: {0}")]
    Parse(String),
}

/// Neumaier-compensated sum, independent of chunking.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels(pub BTreeMap<String, Label>);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix(pub BTreeMap<String, PredictionTriple>);

impl GoldLabels {
    pub fn from_examples(examples: &[GapExample]) -> Result<Self, MetricError> {
        examples
            .iter()
            .map(|e| {
                e.gold
                    .map(|g| (e.id.clone(), g))
                    .ok_or_else(|| MetricError::MissingGold { id: e.id.clone() })
            })
            .collect::<Result<_, _>>()
            .map(GoldLabels)
    }
}

impl FromIterator<(String, PredictionTriple)> for PredictionMatrix {
    fn from_iter<I: IntoIterator<Item = (String, PredictionTriple)>>(iter: I) -> Self {
        PredictionMatrix(iter.into_iter().collect())
    }
}

fn preview<'a>(ids: impl Iterator<Item = &'a String>) -> String {
    let v: Vec<&str> = ids.take(5).map(String::as_str).collect();
    v.join(", ")
}

/// Pairs each gold row with its prediction, in id order.
fn aligned<'a>(gold: &'a GoldLabels, pred: &'a PredictionMatrix) -> Result<Vec<(Label, PredictionTriple)>, MetricError> {
    if gold.0.is_empty() {
        return Err(MetricError::Empty);
    }
    let missing: Vec<&String> = gold.0.keys().filter(|k| !pred.0.contains_key(*k)).collect();
    let extra: Vec<&String> = pred.0.keys().filter(|k| !gold.0.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(MetricError::IdMismatch {
            missing: missing.len(),
            missing_ids: preview(missing.into_iter()),
            extra: extra.len(),
            extra_ids: preview(extra.into_iter()),
        });
    }
    gold.0
        .iter()
        .map(|(id, &g)| {
            let t = pred.0[id];
            if t.to_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(MetricError::BadProbability {
                    id: id.clone(),
                    triple: t.to_array(),
                });
            }
            Ok((g, t))
        })
        .collect()
}

pub fn logloss(gold: &GoldLabels, pred: &PredictionMatrix) -> Result<f64, MetricError> {
    let rows = aligned(gold, pred)?;
    let n = rows.len() as f64;
    Ok(-compensated_sum(rows.iter().map(|(g, t)| t.get(*g).clamp(CLIP, 1.0 - CLIP).ln())) / n)
}

pub fn accuracy3(gold: &GoldLabels, pred: &PredictionMatrix) -> Result<f64, MetricError> {
    let rows = aligned(gold, pred)?;
    let hits = rows.iter().filter(|(g, t)| t.argmax() == *g).count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Pair-level confusion counts `(tp, fp, fn)` for the A/B pair expansion.
pub fn pair_counts(gold: &GoldLabels, pred: &PredictionMatrix) -> Result<(usize, usize, usize), MetricError> {
    let rows = aligned(gold, pred)?;
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (g, t) in rows {
        let chosen = t.argmax();
        for cand in [Label::A, Label::B] {
            match (g == cand, chosen == cand) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    Ok((tp, fp, fneg))
}

/// Harmonic mean of pair precision and recall, evaluated as
/// `2tp / (2tp + fp + fn)` so the result is a single rounding of the exact
/// ratio. Zero when there are no positive pairs at all.
pub fn f1_pairs(gold: &GoldLabels, pred: &PredictionMatrix) -> Result<f64, MetricError> {
    let (tp, fp, fneg) = pair_counts(gold, pred)?;
    let den = 2 * tp + fp + fneg;
    Ok(if den == 0 { 0.0 } else { (2 * tp) as f64 / den as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub logloss: f64,
    pub accuracy: f64,
    pub f1: f64,
}

impl MetricSet {
    pub fn compute(gold: &GoldLabels, pred: &PredictionMatrix) -> Result<Self, MetricError> {
        Ok(Self {
            logloss: logloss(gold, pred)?,
            accuracy: accuracy3(gold, pred)?,
            f1: f1_pairs(gold, pred)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRatios {
    /// Masculine over feminine, so values below 1 mean worse feminine loss.
    pub logloss: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub masculine: MetricSet,
    pub feminine: MetricSet,
    pub overall: MetricSet,
    pub bias: BiasRatios,
}

fn ratio(metric: &'static str, numerator: f64, denominator: f64) -> Result<f64, MetricError> {
    let r = numerator / denominator;
    if r.is_finite() && r > 0.0 {
        Ok(r)
    } else {
        Err(MetricError::DegenerateRatio {
            metric,
            numerator,
            denominator,
        })
    }
}

impl EvalReport {
    /// Builds a report from already-computed per-gender metrics.
    pub fn from_metrics(name: &str, masculine: MetricSet, feminine: MetricSet, overall: MetricSet) -> Result<Self, MetricError> {
        let bias = BiasRatios {
            logloss: ratio("logloss", masculine.logloss, feminine.logloss)?,
            accuracy: ratio("accuracy", feminine.accuracy, masculine.accuracy)?,
            f1: ratio("f1", feminine.f1, masculine.f1)?,
        };
        Ok(Self {
            name: name.to_string(),
            masculine,
            feminine,
            overall,
            bias,
        })
    }

    /// The 12 numbers in table order: logloss, accuracy, F1, each as M, F, O, B.
    pub fn cells(&self) -> [f64; 12] {
        let (m, f, o, b) = (self.masculine, self.feminine, self.overall, self.bias);
        [
            m.logloss, f.logloss, o.logloss, b.logloss, m.accuracy, f.accuracy, o.accuracy, b.accuracy, m.f1, f.f1, o.f1,
            b.f1,
        ]
    }
}

pub fn bias_report(
    name: &str,
    gold: &GoldLabels,
    pred: &PredictionMatrix,
    genders: &BTreeMap<String, Gender>,
) -> Result<EvalReport, MetricError> {
    let split = |g: Gender| -> Result<MetricSet, MetricError> {
        let ids: Vec<&String> = gold.0.keys().filter(|id| genders.get(*id) == Some(&g)).collect();
        if ids.is_empty() {
            return Err(MetricError::EmptyGender(g));
        }
        let sub_gold = GoldLabels(ids.iter().map(|id| ((*id).clone(), gold.0[*id])).collect());
        let sub_pred = PredictionMatrix(
            ids.iter()
                .filter_map(|id| pred.0.get(*id).map(|t| ((*id).clone(), *t)))
                .collect(),
        );
        MetricSet::compute(&sub_gold, &sub_pred)
    };
    // Alignment errors surface on the full set first.
    let overall = MetricSet::compute(gold, pred)?;
    if let Some(id) = gold.0.keys().find(|id| !genders.contains_key(*id)) {
        return Err(MetricError::Parse(format!("{id} has no gender tag")));
    }
    let masculine = split(Gender::Masculine)?;
    let feminine = split(Gender::Feminine)?;
    EvalReport::from_metrics(name, masculine, feminine, overall)
}

/// Gold labels, genders and scores for a labelled dataset in one call.
pub fn score_dataset(name: &str, examples: &[GapExample], pred: &PredictionMatrix) -> Result<EvalReport, MetricError> {
    let gold = GoldLabels::from_examples(examples)?;
    let genders = examples
        .iter()
        .map(|e| Ok((e.id.clone(), gender_of(e)?)))
        .collect::<Result<BTreeMap<_, _>, MetricError>>()?;
    bias_report(name, &gold, pred, &genders)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Txt,
    Tsv,
    Md,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "txt" | "text" => Ok(Self::Txt),
            "tsv" => Ok(Self::Tsv),
            "md" | "markdown" => Ok(Self::Md),
            other => Err(format!("unknown report format {other:?} (txt, tsv, md)")),
        }
    }
}

const METRICS: [&str; 3] = ["logloss", "accuracy", "f1"];
const SPLITS: [&str; 4] = ["M", "F", "O", "B"];

fn column_names() -> Vec<String> {
    METRICS
        .iter()
        .flat_map(|m| SPLITS.iter().map(move |s| format!("{m}_{s}")))
        .collect()
}

/// Renders reports as a table with M/F/O/B columns per metric. Text and
/// markdown show three decimals; TSV keeps full precision.
pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            let _ = writeln!(out, "model\t{}", column_names().join("\t"));
            for r in reports {
                let cells: Vec<String> = r.cells().iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}\t{}", r.name, cells.join("\t"));
            }
        }
        ReportFormat::Md => {
            let _ = writeln!(
                out,
                "| model | LL M | LL F | LL O | LL B | Acc M | Acc F | Acc O | Acc B | F1 M | F1 F | F1 O | F1 B |"
            );
            let _ = writeln!(out, "|---|{}", "---:|".repeat(12));
            for r in reports {
                let cells: Vec<String> = r.cells().iter().map(|v| format!("{v:.3}")).collect();
                let _ = writeln!(out, "| {} | {} |", r.name, cells.join(" | "));
            }
        }
        ReportFormat::Txt => {
            let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(
                out,
                "{:width$}  {:^27}  {:^27}  {:^27}",
                "", "Logarithmic loss", "Accuracy", "F1 score"
            );
            let splits: String = SPLITS.iter().map(|s| format!("{s:>6} ")).collect::<String>();
            let _ = writeln!(out, "{:width$}  {splits} {splits} {splits}", "model");
            for r in reports {
                let c = r.cells();
                let group = |k: usize| c[k * 4..k * 4 + 4].iter().map(|v| format!("{v:>6.3} ")).collect::<String>();
                let _ = writeln!(out, "{:width$}  {} {} {}", r.name, group(0), group(1), group(2));
            }
        }
    }
    out
}

/// Parses a TSV rendering back into `(name, cells)` rows.
pub fn parse_tsv_report(text: &str) -> Result<Vec<(String, [f64; 12])>, MetricError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| MetricError::Parse("empty report".into()))?;
    let expected = format!("model\t{}", column_names().join("\t"));
    if header != expected {
        return Err(MetricError::Parse(format!("unexpected header {header:?}")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split('\t').collect();
            if parts.len() != 13 {
                return Err(MetricError::Parse(format!("expected 13 fields in {l:?}")));
            }
            let mut cells = [0.0; 12];
            for (c, p) in cells.iter_mut().zip(&parts[1..]) {
                *c = p.parse().map_err(|e| MetricError::Parse(format!("{p:?}: {e}")))?;
            }
            Ok((parts[0].to_string(), cells))
        })
        .collect()
}
