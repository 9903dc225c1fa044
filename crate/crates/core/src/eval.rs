//! Intent and slot scoring from gold + prediction files.
//!
//! Conventions used by every report:
//! - precision, recall and F1 are 0 whenever their denominator is 0;
//! - macro F1 averages per-class F1 over classes with gold support only;
//!   predicted-only classes are listed with support 0 but left out of the mean;
//! - slot matching is span-exact: a predicted span counts only if label, start
//!   and end all equal a gold span;
//! - slot accuracy is character-level: every position of the utterance carries
//!   the label of the span covering it, or `O`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OUTSIDE: &str = "O";
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions")]
    Empty,
    #[error("duplicate example_id {0:?}")]
    DuplicateId(String),
    #[error("example {id}: confidence {value} is outside [0, 1]")]
    ConfidenceOutOfRange { id: String, value: f64 },
    #[error("example {id}: invalid span {label}@({start},{end}): {reason}")]
    InvalidSpan {
        id: String,
        label: String,
        start: usize,
        end: usize,
        reason: &'static str,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub example_id: String,
    pub gold_intent: String,
    pub predicted_intent: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "RawSpan", into = "RawSpan")]
pub struct LabeledSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Spans are accepted either as `["label", start, end]` or as objects.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSpan {
    Tuple(String, usize, usize),
    Object { label: String, start: usize, end: usize },
}

impl From<RawSpan> for LabeledSpan {
    fn from(raw: RawSpan) -> Self {
        match raw {
            RawSpan::Tuple(label, start, end) | RawSpan::Object { label, start, end } => Self { label, start, end },
        }
    }
}

impl From<LabeledSpan> for RawSpan {
    fn from(s: LabeledSpan) -> Self {
        RawSpan::Tuple(s.label, s.start, s.end)
    }
}

impl LabeledSpan {
    pub fn new(label: &str, start: usize, end: usize) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub example_id: String,
    pub gold_spans: Vec<LabeledSpan>,
    pub predicted_spans: Vec<LabeledSpan>,
    /// Plain text, used for its character length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Character length when `text` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

impl SlotPrediction {
    /// Character length of the utterance; falls back to the furthest span end.
    pub fn char_len(&self) -> usize {
        if let Some(text) = &self.text {
            return text.chars().count();
        }
        self.length.unwrap_or_else(|| {
            self.gold_spans
                .iter()
                .chain(&self.predicted_spans)
                .map(|s| s.end)
                .max()
                .unwrap_or(0)
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub n: usize,
    /// How matches and accuracy were counted.
    pub method: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn metrics(c: Counts) -> ClassMetrics {
    ClassMetrics {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        support: c.tp + c.fn_,
    }
}

fn assemble(counts: BTreeMap<String, Counts>, accuracy: f64, n: usize, method: &str) -> ClassReport {
    let pooled = counts.values().fold(Counts::default(), |acc, c| Counts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    let per_class: BTreeMap<String, ClassMetrics> = counts.into_iter().map(|(k, c)| (k, metrics(c))).collect();
    let supported: Vec<f64> = per_class.values().filter(|m| m.support > 0).map(|m| m.f1).collect();
    let macro_f1 = if supported.is_empty() {
        0.0
    } else {
        supported.iter().sum::<f64>() / supported.len() as f64
    };
    let micro = metrics(pooled);
    ClassReport {
        per_class,
        macro_f1,
        micro_precision: micro.precision,
        micro_recall: micro.recall,
        micro_f1: micro.f1,
        accuracy,
        n,
        method: method.to_string(),
    }
}

fn check_intents(preds: &[IntentPrediction]) -> Result<(), EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ids = HashSet::new();
    for p in preds {
        if !ids.insert(p.example_id.as_str()) {
            return Err(EvalError::DuplicateId(p.example_id.clone()));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(EvalError::ConfidenceOutOfRange {
                id: p.example_id.clone(),
                value: p.confidence,
            });
        }
    }
    Ok(())
}

pub fn intent_report(preds: &[IntentPrediction]) -> Result<ClassReport, EvalError> {
    check_intents(preds)?;
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    let mut correct = 0;
    for p in preds {
        if p.gold_intent == p.predicted_intent {
            correct += 1;
            counts.entry(p.gold_intent.clone()).or_default().tp += 1;
        } else {
            counts.entry(p.gold_intent.clone()).or_default().fn_ += 1;
            counts.entry(p.predicted_intent.clone()).or_default().fp += 1;
        }
    }
    Ok(assemble(
        counts,
        ratio(correct, preds.len()),
        preds.len(),
        "single-label intent classification",
    ))
}

fn check_side(id: &str, spans: &[LabeledSpan], len: usize) -> Result<(), EvalError> {
    let invalid = |s: &LabeledSpan, reason| EvalError::InvalidSpan {
        id: id.to_string(),
        label: s.label.clone(),
        start: s.start,
        end: s.end,
        reason,
    };
    let mut sorted: Vec<&LabeledSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for (k, s) in sorted.iter().enumerate() {
        if s.start >= s.end {
            return Err(invalid(s, "start must be before end"));
        }
        if s.end > len {
            return Err(invalid(s, "end exceeds text length"));
        }
        if k > 0 && s.start < sorted[k - 1].end {
            return Err(invalid(s, "overlaps another span"));
        }
    }
    Ok(())
}

fn check_slots(preds: &[SlotPrediction]) -> Result<(), EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ids = HashSet::new();
    for p in preds {
        if !ids.insert(p.example_id.as_str()) {
            return Err(EvalError::DuplicateId(p.example_id.clone()));
        }
        let len = p.char_len();
        check_side(&p.example_id, &p.gold_spans, len)?;
        check_side(&p.example_id, &p.predicted_spans, len)?;
    }
    Ok(())
}

fn position_labels(spans: &[LabeledSpan], len: usize) -> Vec<&str> {
    let mut labels = vec![OUTSIDE; len];
    for s in spans {
        labels[s.start..s.end].iter_mut().for_each(|l| *l = &s.label);
    }
    labels
}

pub fn slot_report(preds: &[SlotPrediction]) -> Result<ClassReport, EvalError> {
    check_slots(preds)?;
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    let (mut correct_pos, mut total_pos) = (0usize, 0usize);
    for p in preds {
        let mut gold: HashMap<&LabeledSpan, usize> = HashMap::new();
        for s in &p.gold_spans {
            *gold.entry(s).or_default() += 1;
            counts.entry(s.label.clone()).or_default().fn_ += 1;
        }
        for s in &p.predicted_spans {
            let c = counts.entry(s.label.clone()).or_default();
            match gold.get_mut(s) {
                Some(left) if *left > 0 => {
                    *left -= 1;
                    c.tp += 1;
                    c.fn_ -= 1;
                }
                _ => c.fp += 1,
            }
        }
        let len = p.char_len();
        let g = position_labels(&p.gold_spans, len);
        let q = position_labels(&p.predicted_spans, len);
        correct_pos += g.iter().zip(&q).filter(|(a, b)| a == b).count();
        total_pos += len;
    }
    Ok(assemble(
        counts,
        ratio(correct_pos, total_pos),
        preds.len(),
        "span-exact match (label, start, end); accuracy is character-level including O",
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// Rows are gold labels, columns predicted labels.
    pub counts: Vec<Vec<usize>>,
    /// Mean prediction confidence per cell; 0 for empty cells.
    pub mean_confidence: Vec<Vec<f64>>,
}

pub fn confusion(preds: &[IntentPrediction]) -> Result<ConfusionMatrix, EvalError> {
    check_intents(preds)?;
    let labels: Vec<String> = preds
        .iter()
        .flat_map(|p| [p.gold_intent.clone(), p.predicted_intent.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0usize; k]; k];
    let mut sums = vec![vec![0f64; k]; k];
    for p in preds {
        let (g, q) = (index[p.gold_intent.as_str()], index[p.predicted_intent.as_str()]);
        counts[g][q] += 1;
        sums[g][q] += p.confidence;
    }
    let mean_confidence = counts
        .iter()
        .zip(&sums)
        .map(|(cr, sr)| {
            cr.iter()
                .zip(sr)
                .map(|(&c, &s)| if c == 0 { 0.0 } else { s / c as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        labels,
        counts,
        mean_confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub correct: usize,
    pub incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub bins: Vec<HistogramBin>,
}

/// Bin `b` covers `[b/10, (b+1)/10)`; the last bin also includes 1.0.
pub fn bin_index(confidence: f64) -> usize {
    let edge = |b: usize| b as f64 / HISTOGRAM_BINS as f64;
    let mut b = ((confidence * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
    if b > 0 && confidence < edge(b) {
        b -= 1;
    } else if b + 1 < HISTOGRAM_BINS && confidence >= edge(b + 1) {
        b += 1;
    }
    b
}

pub fn confidence_histogram(preds: &[IntentPrediction]) -> Result<ConfidenceHistogram, EvalError> {
    check_intents(preds)?;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: b as f64 / HISTOGRAM_BINS as f64,
            upper: (b + 1) as f64 / HISTOGRAM_BINS as f64,
            correct: 0,
            incorrect: 0,
        })
        .collect();
    for p in preds {
        let bin = &mut bins[bin_index(p.confidence)];
        if p.gold_intent == p.predicted_intent {
            bin.correct += 1;
        } else {
            bin.incorrect += 1;
        }
    }
    Ok(ConfidenceHistogram { bins })
}

fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_intent_predictions(path: &Path) -> Result<Vec<IntentPrediction>, EvalError> {
    load_jsonl(path)
}

pub fn load_slot_predictions(path: &Path) -> Result<Vec<SlotPrediction>, EvalError> {
    load_jsonl(path)
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for row in rows {
        line(&mut out, row);
    }
    out
}

/// Per-intent F1 with one column per report and a closing `macro avg` row.
pub fn render_intent_table(columns: &[(&str, &ClassReport)]) -> String {
    let mut header = vec!["Intents".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.to_string()));
    let labels: BTreeSet<&String> = columns
        .iter()
        .flat_map(|(_, r)| r.per_class.iter().filter(|(_, m)| m.support > 0).map(|(k, _)| k))
        .collect();
    let mut rows: Vec<Vec<String>> = labels
        .into_iter()
        .map(|label| {
            let mut row = vec![label.clone()];
            row.extend(columns.iter().map(|(_, r)| match r.per_class.get(label) {
                Some(m) => format!("{:.2}", m.f1),
                None => "-".to_string(),
            }));
            row
        })
        .collect();
    let mut macro_row = vec!["macro avg".to_string()];
    macro_row.extend(columns.iter().map(|(_, r)| format!("{:.3}", r.macro_f1)));
    rows.push(macro_row);
    table(&header, &rows)
}

/// Micro F1, macro F1 and accuracy with one column per report.
pub fn render_slot_table(columns: &[(&str, &ClassReport)]) -> String {
    let mut header = vec![String::new()];
    header.extend(columns.iter().map(|(name, _)| name.to_string()));
    let row = |name: &str, f: fn(&ClassReport) -> f64| {
        let mut r = vec![name.to_string()];
        r.extend(columns.iter().map(|(_, rep)| format!("{:.2}", f(rep))));
        r
    };
    let rows = vec![
        row("micro avg", |r| r.micro_f1),
        row("macro avg", |r| r.macro_f1),
        row("accuracy", |r| r.accuracy),
    ];
    table(&header, &rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn matrix_csv<T: ToString>(labels: &[String], cells: &[Vec<T>]) -> String {
    let mut out = String::from("gold\\predicted");
    for l in labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (label, row) in labels.iter().zip(cells) {
        out.push_str(&csv_field(label));
        for c in row {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

impl ConfusionMatrix {
    pub fn counts_csv(&self) -> String {
        matrix_csv(&self.labels, &self.counts)
    }

    pub fn mean_confidence_csv(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .mean_confidence
            .iter()
            .map(|r| r.iter().map(|v| format!("{v:.6}")).collect())
            .collect();
        matrix_csv(&self.labels, &cells)
    }
}

impl ConfidenceHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,correct,incorrect\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{i},{:.1},{:.1},{},{}", b.lower, b.upper, b.correct, b.incorrect);
        }
        out
    }
}
