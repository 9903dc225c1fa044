//! Annotation projection through a translation backend.
//!
//! Each example goes through three steps:
//!
//! 1. **mask** every labeled span with a numbered identifier `$0N$` and keep
//!    `(identifier, label, surface)` in a span table;
//! 2. **translate** the masked sentence, and every span surface on its own;
//! 3. **backfill** the identifiers in the translated sentence with the
//!    translated surfaces, which become the target-language spans.
//!
//! Between 2 and 3 the translated sentence is checked for missing,
//! duplicated or mangled identifiers. Any such example is quarantined rather
//! than emitted.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotatedUtterance, PlainBuilder};
use crate::corpus::{Dataset, Example};
use crate::par;
use crate::translator::{TranslateError, TranslationRequest, Translator};

static IDENTIFIER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$0[0-9]+\$").unwrap());
static DOLLAR_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$[^\s$]{1,8}\$").unwrap());

/// Matches anything shaped like an identifier.
pub fn identifier_regex() -> &'static Regex {
    &IDENTIFIER
}

/// True when `token` is exactly the rendering of some ordinal.
pub fn is_identifier(token: &str) -> bool {
    Identifier::parse(token).is_some()
}

/// A numbered placeholder rendered as `$0` + decimal ordinal + `$`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Identifier {
    pub ordinal: u64,
}

impl Identifier {
    pub fn new(ordinal: u64) -> Self {
        Self { ordinal }
    }

    pub fn render(&self) -> String {
        format!("$0{}$", self.ordinal)
    }

    /// Inverse of [`render`](Self::render); rejects non-canonical forms such as `$007$`.
    pub fn parse(token: &str) -> Option<Self> {
        let digits = token.strip_prefix("$0")?.strip_suffix('$')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return None;
        }
        digits.parse().ok().map(Self::new)
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "$0{}$", self.ordinal)
    }
}

impl From<Identifier> for String {
    fn from(id: Identifier) -> Self {
        id.render()
    }
}

impl TryFrom<String> for Identifier {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Identifier::parse(&s).ok_or_else(|| format!("not an identifier: {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocatorMode {
    /// One counter for the whole run; no ordinal is issued twice.
    #[default]
    Global,
    /// Restart at 0 for every example, so equal inputs mask identically.
    PerExample,
}

#[derive(Debug, Clone, Default)]
pub struct IdentifierAllocator {
    next: u64,
}

impl IdentifierAllocator {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn allocate(&mut self) -> Identifier {
        let id = Identifier::new(self.next);
        self.next += 1;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanTableEntry {
    pub identifier: Identifier,
    pub label: String,
    pub src_surface: String,
    pub tgt_surface: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedUtterance {
    pub text: String,
    pub table: Vec<SpanTableEntry>,
    pub intent: String,
}

impl MaskedUtterance {
    pub fn expected(&self) -> BTreeSet<Identifier> {
        self.table.iter().map(|e| e.identifier).collect()
    }
}

/// Replaces each span, left to right, with the next identifier.
pub fn mask_spans(utt: &AnnotatedUtterance, allocator: &mut IdentifierAllocator) -> MaskedUtterance {
    let mut text = String::with_capacity(utt.plain.len() + 4 * utt.spans.len());
    let mut table = Vec::with_capacity(utt.spans.len());
    let mut spans = utt.spans.iter().peekable();
    for (pos, c) in utt.plain.chars().enumerate() {
        if let Some(span) = spans.peek() {
            if pos == span.start {
                let identifier = allocator.allocate();
                text.push_str(&identifier.render());
                table.push(SpanTableEntry {
                    identifier,
                    label: span.label.clone(),
                    src_surface: span.surface.clone(),
                    tgt_surface: None,
                });
            }
            if pos >= span.start && pos < span.end {
                if pos + 1 == span.end {
                    spans.next();
                }
                continue;
            }
        }
        text.push(c);
    }
    MaskedUtterance {
        text,
        table,
        intent: utt.intent.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PartError {
    #[error("sentence translation failed: {0}")]
    Sentence(TranslateError),
    #[error("translation of span {surface:?} failed: {error}")]
    Span { surface: String, error: TranslateError },
}

/// Translates the masked sentence and each span surface on its own.
pub fn translate_parts(
    masked: &MaskedUtterance,
    translator: &Translator,
    src: &str,
    tgt: &str,
) -> Result<(String, Vec<SpanTableEntry>), PartError> {
    let sentence = translator
        .translate(&TranslationRequest::new(&masked.text, src, tgt))
        .map_err(PartError::Sentence)?;
    let mut table = masked.table.clone();
    for entry in &mut table {
        let out = translator
            .translate(&TranslationRequest::new(&entry.src_surface, src, tgt))
            .map_err(|error| PartError::Span {
                surface: entry.src_surface.clone(),
                error,
            })?;
        entry.tgt_surface = Some(out.text);
    }
    Ok((sentence.text, table))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub missing: BTreeSet<Identifier>,
    pub duplicated: BTreeSet<Identifier>,
    pub mangled: Vec<String>,
    pub ok: bool,
}

/// Checks that every expected identifier survived exactly once and that no
/// other short `$...$` token appeared. Identifier order is not checked.
pub fn validate_identifiers(translated: &str, expected: &BTreeSet<Identifier>) -> ValidationReport {
    let mut counts: HashMap<Identifier, usize> = HashMap::new();
    let mut mangled = Vec::new();
    for m in DOLLAR_TOKEN.find_iter(translated) {
        match Identifier::parse(m.as_str()).filter(|id| expected.contains(id)) {
            Some(id) => *counts.entry(id).or_default() += 1,
            None => mangled.push(m.as_str().to_string()),
        }
    }
    let missing: BTreeSet<_> = expected.iter().filter(|id| !counts.contains_key(id)).copied().collect();
    let duplicated: BTreeSet<_> = counts.iter().filter(|(_, &n)| n > 1).map(|(id, _)| *id).collect();
    let ok = missing.is_empty() && duplicated.is_empty() && mangled.is_empty();
    ValidationReport {
        missing,
        duplicated,
        mangled,
        ok,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackfillError {
    #[error("identifier {0} has no span table entry")]
    UnknownIdentifier(String),
    #[error("identifier {0} does not occur exactly once")]
    NotExactlyOnce(Identifier),
    #[error("identifier {0} has no translated surface")]
    MissingTranslation(Identifier),
    #[error("translated surface for {0} is empty")]
    EmptySurface(Identifier),
    #[error("translation contains annotation brackets")]
    Bracket,
    #[error("identifier-like token left in the projected text")]
    IdentifierLeak,
}

/// Substitutes translated surfaces for identifiers and records their spans.
pub fn backfill(translated: &str, table: &[SpanTableEntry], intent: &str) -> Result<AnnotatedUtterance, BackfillError> {
    let by_id: HashMap<String, &SpanTableEntry> = table.iter().map(|e| (e.identifier.render(), e)).collect();
    let mut used = HashSet::new();
    let mut builder = PlainBuilder::new();
    let mut last = 0;
    for m in IDENTIFIER.find_iter(translated) {
        let entry = by_id
            .get(m.as_str())
            .ok_or_else(|| BackfillError::UnknownIdentifier(m.as_str().to_string()))?;
        if !used.insert(entry.identifier) {
            return Err(BackfillError::NotExactlyOnce(entry.identifier));
        }
        let surface = entry
            .tgt_surface
            .as_deref()
            .ok_or(BackfillError::MissingTranslation(entry.identifier))?;
        if surface.contains(['[', ']']) {
            return Err(BackfillError::Bracket);
        }
        builder.push_text(&translated[last..m.start()]);
        if !builder.push_span(&entry.label, surface) {
            return Err(BackfillError::EmptySurface(entry.identifier));
        }
        last = m.end();
    }
    builder.push_text(&translated[last..]);
    if let Some(e) = table.iter().find(|e| !used.contains(&e.identifier)) {
        return Err(BackfillError::NotExactlyOnce(e.identifier));
    }
    let utt = builder.finish(intent);
    if utt.plain.contains(['[', ']']) {
        return Err(BackfillError::Bracket);
    }
    if IDENTIFIER.is_match(&utt.plain) {
        return Err(BackfillError::IdentifierLeak);
    }
    Ok(utt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuarantineReason {
    MissingId,
    DuplicatedId,
    MangledId,
    TranslationError,
    EmptySpanTranslation,
}

impl QuarantineReason {
    pub const ALL: [QuarantineReason; 5] = [
        Self::MissingId,
        Self::DuplicatedId,
        Self::MangledId,
        Self::TranslationError,
        Self::EmptySpanTranslation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MissingId => "MISSING_ID",
            Self::DuplicatedId => "DUPLICATED_ID",
            Self::MangledId => "MANGLED_ID",
            Self::TranslationError => "TRANSLATION_ERROR",
            Self::EmptySpanTranslation => "EMPTY_SPAN_TRANSLATION",
        }
    }
}

/// Full trace of one example through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub example_id: String,
    pub masked: MaskedUtterance,
    pub translated_masked: Option<String>,
    pub validation: Option<ValidationReport>,
    pub result: Option<AnnotatedUtterance>,
    pub quarantine_reason: Option<QuarantineReason>,
    pub detail: Option<String>,
}

impl ProjectionRecord {
    fn quarantined(
        id: &str,
        masked: &MaskedUtterance,
        translated: Option<&str>,
        validation: Option<ValidationReport>,
        reason: QuarantineReason,
        detail: Option<String>,
    ) -> Self {
        Self {
            example_id: id.to_string(),
            masked: masked.clone(),
            translated_masked: translated.map(str::to_string),
            validation,
            result: None,
            quarantine_reason: Some(reason),
            detail,
        }
    }

    /// Line record for the quarantine file.
    pub fn quarantine_line(&self) -> serde_json::Value {
        serde_json::json!({
            "example_id": self.example_id,
            "reason": self.quarantine_reason.map(|r| r.as_str()),
            "masked_text": self.masked.text,
            "translated_masked": self.translated_masked,
            "validation": self.validation,
            "detail": self.detail,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Language codes sent to the backend, e.g. `fr` and `wo`.
    pub src_lang: String,
    pub tgt_lang: String,
    /// Locale written into projected records, e.g. `wo-SN`.
    pub tgt_locale: String,
    pub max_in_flight: usize,
    pub allocator: AllocatorMode,
    /// Examples already projected by an earlier run.
    pub skip_ids: HashSet<String>,
}

impl ProjectionOptions {
    pub fn new(src_lang: &str, tgt_lang: &str, tgt_locale: &str) -> Self {
        Self {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            tgt_locale: tgt_locale.into(),
            max_in_flight: 4,
            allocator: AllocatorMode::Global,
            skip_ids: HashSet::new(),
        }
    }
}

pub const SPAN_CONTEXT_NOTE: &str =
    "span surfaces are translated standalone, without sentence context; multi-word slot values may read less naturally";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub total: usize,
    pub projected: usize,
    pub skipped: usize,
    pub quarantined_by_reason: BTreeMap<String, usize>,
    pub success_rate: f64,
    pub backend_id: String,
    pub unique_span_translations: usize,
    pub notes: Vec<String>,
}

impl ProjectionSummary {
    pub fn quarantined(&self) -> usize {
        self.quarantined_by_reason.values().sum()
    }

    pub fn quarantine_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.quarantined() as f64 / self.total as f64
        }
    }
}

#[derive(Debug)]
pub struct ProjectionOutcome {
    pub projected: Dataset,
    pub quarantine: Vec<ProjectionRecord>,
    pub summary: ProjectionSummary,
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("example {id}: {message}")]
    InvalidExample { id: String, message: String },
    #[error(transparent)]
    Config(#[from] TranslateError),
}

fn reason_for(report: &ValidationReport) -> QuarantineReason {
    if !report.missing.is_empty() {
        QuarantineReason::MissingId
    } else if !report.duplicated.is_empty() {
        QuarantineReason::DuplicatedId
    } else {
        QuarantineReason::MangledId
    }
}

fn project_one(
    example: &Example,
    masked: &MaskedUtterance,
    sentence: &Result<String, TranslateError>,
    spans: &HashMap<&str, &Result<String, TranslateError>>,
) -> ProjectionRecord {
    let id = &example.id;
    let translated = match sentence {
        Ok(t) => t.as_str(),
        // an empty translation of a masked sentence has lost every identifier
        Err(TranslateError::EmptyTranslation) if !masked.table.is_empty() => "",
        Err(e) => {
            return ProjectionRecord::quarantined(
                id,
                masked,
                None,
                None,
                QuarantineReason::TranslationError,
                Some(e.to_string()),
            )
        }
    };
    let report = validate_identifiers(translated, &masked.expected());
    if !report.ok {
        let reason = reason_for(&report);
        return ProjectionRecord::quarantined(id, masked, Some(translated), Some(report), reason, None);
    }
    let mut table = masked.table.clone();
    for entry in &mut table {
        match spans[entry.src_surface.as_str()] {
            Ok(t) => entry.tgt_surface = Some(t.clone()),
            Err(e) => {
                let reason = match e {
                    TranslateError::EmptyTranslation => QuarantineReason::EmptySpanTranslation,
                    _ => QuarantineReason::TranslationError,
                };
                return ProjectionRecord::quarantined(
                    id,
                    masked,
                    Some(translated),
                    Some(report),
                    reason,
                    Some(format!("span {:?}: {e}", entry.src_surface)),
                );
            }
        }
    }
    match backfill(translated, &table, &example.intent) {
        Ok(utt) => ProjectionRecord {
            example_id: id.clone(),
            masked: MaskedUtterance {
                table,
                ..masked.clone()
            },
            translated_masked: Some(translated.to_string()),
            validation: Some(report),
            result: Some(utt),
            quarantine_reason: None,
            detail: None,
        },
        Err(e) => {
            let reason = match e {
                BackfillError::EmptySurface(_) => QuarantineReason::EmptySpanTranslation,
                BackfillError::IdentifierLeak => QuarantineReason::MangledId,
                _ => QuarantineReason::TranslationError,
            };
            ProjectionRecord::quarantined(id, masked, Some(translated), Some(report), reason, Some(e.to_string()))
        }
    }
}

/// Runs mask, translate, validate and backfill over a dataset.
///
/// Masking happens first, sequentially, so identifier ordinals follow input
/// order. Sentences and the deduplicated set of span surfaces are then
/// translated in bounded-parallel batches. Output order follows input order.
pub fn project_dataset(
    dataset: &Dataset,
    translator: &Translator,
    options: &ProjectionOptions,
) -> Result<ProjectionOutcome, ProjectionError> {
    if options.max_in_flight == 0 {
        return Err(TranslateError::Config("max_in_flight must be at least 1".into()).into());
    }
    if options.src_lang == options.tgt_lang {
        return Err(
            TranslateError::Config(format!("source and target language are both {:?}", options.src_lang)).into(),
        );
    }

    let mut allocator = IdentifierAllocator::default();
    let mut work: Vec<(&Example, MaskedUtterance)> = Vec::new();
    let mut skipped = 0;
    for example in &dataset.examples {
        if options.skip_ids.contains(&example.id) {
            skipped += 1;
            continue;
        }
        let utt = example.utterance().map_err(|e| ProjectionError::InvalidExample {
            id: example.id.clone(),
            message: e.to_string(),
        })?;
        if options.allocator == AllocatorMode::PerExample {
            allocator = IdentifierAllocator::default();
        }
        work.push((example, mask_spans(&utt, &mut allocator)));
    }

    let (src, tgt) = (options.src_lang.as_str(), options.tgt_lang.as_str());
    let sentence_reqs: Vec<TranslationRequest> = work
        .iter()
        .map(|(_, m)| TranslationRequest::new(&m.text, src, tgt))
        .collect();
    let mut seen = HashSet::new();
    let surfaces: Vec<&str> = work
        .iter()
        .flat_map(|(_, m)| m.table.iter().map(|e| e.src_surface.as_str()))
        .filter(|s| seen.insert(*s))
        .collect();
    let span_reqs: Vec<TranslationRequest> = surfaces.iter().map(|s| TranslationRequest::new(*s, src, tgt)).collect();

    let unwrap_text = |r: Result<crate::translator::TranslationResult, TranslateError>| r.map(|t| t.text);
    let sentences: Vec<Result<String, TranslateError>> = translator
        .translate_batch(&sentence_reqs, options.max_in_flight)?
        .into_iter()
        .map(unwrap_text)
        .collect();
    let span_results: Vec<Result<String, TranslateError>> = translator
        .translate_batch(&span_reqs, options.max_in_flight)?
        .into_iter()
        .map(unwrap_text)
        .collect();
    let span_lookup: HashMap<&str, &Result<String, TranslateError>> =
        surfaces.iter().copied().zip(span_results.iter()).collect();

    let indices: Vec<usize> = (0..work.len()).collect();
    let records = par::bounded_map(&indices, options.max_in_flight, |&i| {
        let (example, masked) = &work[i];
        project_one(example, masked, &sentences[i], &span_lookup)
    });

    let mut projected = Vec::new();
    let mut quarantine = Vec::new();
    let mut by_reason: BTreeMap<String, usize> = QuarantineReason::ALL
        .iter()
        .map(|r| (r.as_str().to_string(), 0))
        .collect();
    for (record, (example, _)) in records.into_iter().zip(&work) {
        match (&record.result, record.quarantine_reason) {
            (Some(utt), None) => {
                let annotated_text = utt.serialize().map_err(|e| ProjectionError::InvalidExample {
                    id: example.id.clone(),
                    message: e.to_string(),
                })?;
                projected.push(Example {
                    id: example.id.clone(),
                    locale: options.tgt_locale.clone(),
                    domain: example.domain.clone(),
                    intent: example.intent.clone(),
                    text: utt.plain.clone(),
                    annotated_text,
                });
            }
            (_, Some(reason)) => {
                *by_reason.entry(reason.as_str().to_string()).or_default() += 1;
                quarantine.push(record);
            }
            (None, None) => unreachable!("record has neither result nor reason"),
        }
    }

    let total = work.len();
    let summary = ProjectionSummary {
        total,
        projected: projected.len(),
        skipped,
        quarantined_by_reason: by_reason,
        success_rate: if total == 0 {
            1.0
        } else {
            projected.len() as f64 / total as f64
        },
        backend_id: translator.backend_id().to_string(),
        unique_span_translations: surfaces.len(),
        notes: vec![SPAN_CONTEXT_NOTE.to_string()],
    };
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ProjectionOutcome {
        projected: Dataset {
            locale: options.tgt_locale.clone(),
            examples: projected,
            provenance: format!(
                "{} | projected via {} at unix {stamp}",
                dataset.provenance,
                translator.backend_id()
            ),
        },
        quarantine,
        summary,
    })
}
