//! Marker robustness trials: which delimiter scheme does a backend leave intact?
//!
//! Each scheme wraps every slot of a sentence, either around the surface
//! itself or around a numbered identifier body (`0`, `01`, ...). A unit is
//! preserved when the translated sentence still contains exactly as many
//! well-formed open/close pairs as were sent; for identifier wrapping the
//! bodies must also come back unchanged.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::AnnotatedUtterance;
use crate::projection::IdentifierAllocator;
use crate::translator::{TranslateError, TranslationRequest, Translator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WrapMode {
    WrapSurface,
    WrapIdentifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerScheme {
    pub name: String,
    pub open: String,
    pub close: String,
    pub mode: WrapMode,
}

impl MarkerScheme {
    pub fn new(name: &str, open: &str, close: &str, mode: WrapMode) -> Self {
        Self {
            name: name.into(),
            open: open.into(),
            close: close.into(),
            mode,
        }
    }

    fn delimiters(&self) -> impl Iterator<Item = &str> {
        [self.open.as_str(), self.close.as_str()].into_iter()
    }
}

const CATALOG: [(&str, &str, &str); 7] = [
    ("xml", "<m>", "</m>"),
    ("dollars", "$", "$"),
    ("braces", "{", "}"),
    ("brackets", "[", "]"),
    ("parentheses", "(", ")"),
    ("section", "§", "§"),
    ("currency", "¤", "¤"),
];

/// The built-in scheme catalog in one wrapping mode.
pub fn builtin_schemes(mode: WrapMode) -> Vec<MarkerScheme> {
    CATALOG
        .iter()
        .map(|(name, open, close)| MarkerScheme::new(name, open, close, mode))
        .collect()
}

/// Every delimiter string of the built-in catalog except `keep`'s.
pub fn catalog_delimiters_except(keep: &str) -> Vec<String> {
    let kept: HashSet<&str> = CATALOG
        .iter()
        .filter(|(n, ..)| *n == keep)
        .flat_map(|(_, o, c)| [*o, *c])
        .collect();
    let all: BTreeSet<&str> = CATALOG.iter().flat_map(|(_, o, c)| [*o, *c]).collect();
    all.into_iter()
        .filter(|d| !kept.contains(d))
        .map(String::from)
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum MarkerError {
    #[error("scheme {scheme:?}: delimiter {delimiter:?} already occurs in {text:?}")]
    Collision {
        scheme: String,
        delimiter: String,
        text: String,
    },
    #[error("invalid scheme {0:?}: delimiters must be non-empty")]
    InvalidScheme(String),
    #[error("duplicate scheme name {0:?}")]
    DuplicateScheme(String),
    #[error("no schemes given")]
    NoSchemes,
    #[error("no usable sentence in the sample (need at least one span and no delimiter collisions)")]
    EmptySample,
    #[error(transparent)]
    Translate(#[from] TranslateError),
}

/// A rendered sentence and the unit contents it should come back with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedSentence {
    pub text: String,
    pub units: Vec<String>,
}

fn collision(utt: &AnnotatedUtterance, scheme: &MarkerScheme) -> Option<MarkerError> {
    scheme
        .delimiters()
        .find(|d| utt.plain.contains(d))
        .map(|d| MarkerError::Collision {
            scheme: scheme.name.clone(),
            delimiter: d.to_string(),
            text: utt.plain.clone(),
        })
}

pub fn apply_scheme(
    utt: &AnnotatedUtterance,
    scheme: &MarkerScheme,
    allocator: &mut IdentifierAllocator,
) -> Result<WrappedSentence, MarkerError> {
    if scheme.open.is_empty() || scheme.close.is_empty() {
        return Err(MarkerError::InvalidScheme(scheme.name.clone()));
    }
    if let Some(e) = collision(utt, scheme) {
        return Err(e);
    }
    let chars: Vec<char> = utt.plain.chars().collect();
    let mut text = String::with_capacity(utt.plain.len() + 16);
    let mut units = Vec::with_capacity(utt.spans.len());
    let mut cursor = 0;
    for span in &utt.spans {
        text.extend(&chars[cursor..span.start]);
        let unit = match scheme.mode {
            WrapMode::WrapSurface => span.surface.clone(),
            WrapMode::WrapIdentifier => format!("0{}", allocator.allocate().ordinal),
        };
        text.push_str(&scheme.open);
        text.push_str(&unit);
        text.push_str(&scheme.close);
        units.push(unit);
        cursor = span.end;
    }
    text.extend(&chars[cursor..]);
    Ok(WrappedSentence { text, units })
}

/// Contents of the well-formed pairs in `text`, or `None` when a delimiter
/// is left unpaired.
fn extract_units(text: &str, scheme: &MarkerScheme) -> Option<Vec<String>> {
    let mut units = Vec::new();
    let mut rest = text;
    while let Some(o) = rest.find(&scheme.open) {
        if scheme.open != scheme.close && rest[..o].contains(&scheme.close) {
            return None;
        }
        let after = &rest[o + scheme.open.len()..];
        let c = after.find(&scheme.close)?;
        let body = &after[..c];
        if scheme.open != scheme.close && body.contains(&scheme.open) {
            return None;
        }
        units.push(body.trim().to_string());
        rest = &after[c + scheme.close.len()..];
    }
    if rest.contains(&scheme.close) {
        return None;
    }
    Some(units)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitCheck {
    pub preserved: bool,
    pub content_translated: bool,
}

pub fn check_translation(translated: &str, scheme: &MarkerScheme, sent: &WrappedSentence) -> UnitCheck {
    let Some(mut got) = extract_units(translated, scheme) else {
        return UnitCheck {
            preserved: false,
            content_translated: false,
        };
    };
    if got.len() != sent.units.len() {
        return UnitCheck {
            preserved: false,
            content_translated: false,
        };
    }
    let mut want = sent.units.clone();
    got.sort();
    want.sort();
    let same = got == want;
    match scheme.mode {
        WrapMode::WrapIdentifier => UnitCheck {
            preserved: same,
            content_translated: false,
        },
        WrapMode::WrapSurface => UnitCheck {
            preserved: true,
            content_translated: !same,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeStats {
    pub preservation_rate: f64,
    pub content_translated_rate: f64,
    pub n: usize,
    pub preserved: usize,
    pub content_translated: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub backend_id: String,
    pub per_scheme: BTreeMap<String, SchemeStats>,
    /// Scheme names by preservation rate, best first; ties by name.
    pub ranking: Vec<String>,
    pub sentences_used: usize,
    pub excluded_no_spans: usize,
    pub excluded_collisions: usize,
}

pub fn run_trial(
    sample: &[AnnotatedUtterance],
    schemes: &[MarkerScheme],
    translator: &Translator,
    src: &str,
    tgt: &str,
    max_in_flight: usize,
) -> Result<TrialReport, MarkerError> {
    if schemes.is_empty() {
        return Err(MarkerError::NoSchemes);
    }
    let mut names = HashSet::new();
    for s in schemes {
        if s.open.is_empty() || s.close.is_empty() {
            return Err(MarkerError::InvalidScheme(s.name.clone()));
        }
        if !names.insert(s.name.as_str()) {
            return Err(MarkerError::DuplicateScheme(s.name.clone()));
        }
    }

    let (mut no_spans, mut collisions) = (0, 0);
    let mut used = Vec::new();
    for utt in sample {
        if utt.spans.is_empty() {
            no_spans += 1;
        } else if schemes.iter().any(|s| collision(utt, s).is_some()) {
            collisions += 1;
        } else {
            used.push(utt);
        }
    }
    if used.is_empty() {
        return Err(MarkerError::EmptySample);
    }

    let mut jobs = Vec::with_capacity(schemes.len() * used.len());
    for (k, scheme) in schemes.iter().enumerate() {
        for utt in &used {
            jobs.push((k, apply_scheme(utt, scheme, &mut IdentifierAllocator::starting_at(0))?));
        }
    }
    let reqs: Vec<TranslationRequest> = jobs
        .iter()
        .map(|(_, w)| TranslationRequest::new(w.text.clone(), src, tgt))
        .collect();
    let results = translator.translate_batch(&reqs, max_in_flight)?;

    let mut stats = vec![SchemeStats::default(); schemes.len()];
    for ((k, wrapped), result) in jobs.iter().zip(results) {
        let st = &mut stats[*k];
        st.n += 1;
        match result {
            Ok(r) => {
                let check = check_translation(&r.text, &schemes[*k], wrapped);
                st.preserved += check.preserved as usize;
                st.content_translated += check.content_translated as usize;
            }
            Err(e) => {
                log::debug!("scheme {}: {e}", schemes[*k].name);
                st.errors += 1;
            }
        }
    }
    for st in &mut stats {
        st.preservation_rate = st.preserved as f64 / st.n as f64;
        st.content_translated_rate = st.content_translated as f64 / st.n as f64;
    }

    let mut ranking: Vec<(&str, f64)> = schemes
        .iter()
        .zip(&stats)
        .map(|(s, st)| (s.name.as_str(), st.preservation_rate))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    Ok(TrialReport {
        backend_id: translator.backend_id().to_string(),
        per_scheme: schemes.iter().map(|s| s.name.clone()).zip(stats).collect(),
        ranking: ranking.into_iter().map(|(n, _)| n.to_string()).collect(),
        sentences_used: used.len(),
        excluded_no_spans: no_spans,
        excluded_collisions: collisions,
    })
}

/// Aligned text table in ranking order.
pub fn render_table(report: &TrialReport) -> String {
    let width = report
        .ranking
        .iter()
        .map(|n| n.chars().count())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>5}  {:>6}\n",
        "scheme", "preserved", "content", "n", "errors"
    );
    for name in &report.ranking {
        let st = &report.per_scheme[name];
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>9.3}  {:>5}  {:>6}",
            name, st.preservation_rate, st.content_translated_rate, st.n, st.errors
        );
    }
    out
}
