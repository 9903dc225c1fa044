//! MASSIVE-style corpora: loading, filtering, seeded splitting and counts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annot::{self, normalize_whitespace, AnnotError, AnnotatedUtterance};

/// The 27 intents (10 scenarios) of the French extract used for the Wolof bot.
pub const WOLOF_BOT_INTENTS: [&str; 27] = [
    "transport_query",
    "transport_ticket",
    "transport_taxi",
    "transport_traffic",
    "calendar_query",
    "calendar_set",
    "calendar_remove",
    "alarm_set",
    "alarm_remove",
    "alarm_query",
    "lists_query",
    "lists_remove",
    "lists_createoradd",
    "takeaway_query",
    "takeaway_order",
    "play_audiobook",
    "play_game",
    "play_music",
    "play_podcasts",
    "play_radio",
    "news_query",
    "recommendation_locations",
    "recommendation_events",
    "recommendation_movies",
    "datetime_query",
    "datetime_convert",
    "weather_query",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("no records in {path} match the requested locale and intents")]
    EmptyResult { path: PathBuf },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("train ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("cannot serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub locale: String,
    pub domain: String,
    pub intent: String,
    pub text: String,
    pub annotated_text: String,
}

impl Example {
    pub fn utterance(&self) -> Result<AnnotatedUtterance, AnnotError> {
        annot::parse_annotated(&self.annotated_text, &self.intent)
    }

    /// Checks that the markup strips to the plain utterance.
    pub fn check_consistency(&self) -> Result<(), String> {
        if self.intent.trim().is_empty() {
            return Err("empty intent".into());
        }
        let stripped = annot::strip_markup(&self.annotated_text).map_err(|e| e.to_string())?;
        if stripped != normalize_whitespace(&self.text) {
            return Err(format!(
                "annotated text strips to {stripped:?}, expected {:?}",
                normalize_whitespace(&self.text)
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub locale: String,
    pub examples: Vec<Example>,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.id.as_str()).collect()
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub diagnostics: Vec<Diagnostic>,
}

/// On-disk record layout (MASSIVE field names).
#[derive(Debug, Serialize)]
struct MassiveRecord<'a> {
    id: &'a str,
    locale: &'a str,
    scenario: &'a str,
    intent: &'a str,
    utt: &'a str,
    annot_utt: &'a str,
}

fn field<'v>(obj: &'v serde_json::Map<String, Value>, key: &str) -> Result<&'v str, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("field {key:?} is not a string")),
        None => Err(format!("missing field {key:?}")),
    }
}

fn parse_record(line: &str) -> Result<Example, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err("field \"id\" is not a string or number".into()),
        None => return Err("missing field \"id\"".into()),
    };
    Ok(Example {
        id,
        locale: field(obj, "locale")?.to_string(),
        domain: field(obj, "scenario")?.to_string(),
        intent: field(obj, "intent")?.to_string(),
        text: field(obj, "utt")?.to_string(),
        annotated_text: field(obj, "annot_utt")?.to_string(),
    })
}

/// Loads line-delimited MASSIVE records.
///
/// Only records whose locale equals `locale` (or, when `None`, the locale of
/// the first well-formed record) and whose intent is in `intent_filter` are
/// kept. Lines that fail to parse or violate the markup/plain-text invariant
/// are reported as diagnostics; use [`LoadOutcome::into_strict`] to turn them
/// into an error.
pub fn load_corpus(
    path: &Path,
    locale: Option<&str>,
    intent_filter: Option<&BTreeSet<String>>,
) -> Result<LoadOutcome, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut locale = locale.map(str::to_string);
    let mut examples = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let example = match parse_record(line) {
            Ok(e) => e,
            Err(message) => {
                diagnostics.push(Diagnostic { line: line_no, message });
                continue;
            }
        };
        let wanted_locale = locale.get_or_insert_with(|| example.locale.clone());
        if example.locale != *wanted_locale {
            continue;
        }
        if let Some(filter) = intent_filter {
            if !filter.contains(&example.intent) {
                continue;
            }
        }
        if let Err(message) = example.check_consistency() {
            diagnostics.push(Diagnostic { line: line_no, message });
            continue;
        }
        if !seen.insert(example.id.clone()) {
            diagnostics.push(Diagnostic {
                line: line_no,
                message: format!("duplicate id {:?}", example.id),
            });
            continue;
        }
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(CorpusError::EmptyResult {
            path: path.to_path_buf(),
        });
    }
    let filter_note = match intent_filter {
        Some(f) => format!("{} intents", f.len()),
        None => "all intents".to_string(),
    };
    let locale = locale.unwrap_or_default();
    Ok(LoadOutcome {
        dataset: Dataset {
            provenance: format!("{} (locale {locale}, {filter_note})", path.display()),
            locale,
            examples,
        },
        diagnostics,
    })
}

impl LoadOutcome {
    pub fn into_strict(self) -> Result<Dataset, CorpusError> {
        match self.diagnostics.into_iter().next() {
            Some(d) => Err(CorpusError::Malformed {
                line: d.line,
                message: d.message,
            }),
            None => Ok(self.dataset),
        }
    }
}

/// Writes examples back in MASSIVE record layout, one JSON object per line.
pub fn write_corpus<W: Write>(dataset: &Dataset, mut out: W) -> Result<(), CorpusError> {
    for e in &dataset.examples {
        let record = MassiveRecord {
            id: &e.id,
            locale: &e.locale,
            scenario: &e.domain,
            intent: &e.intent,
            utt: &e.text,
            annot_utt: &e.annotated_text,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|source| CorpusError::Io {
            path: PathBuf::from("<output>"),
            source,
        })?;
    }
    Ok(())
}

pub fn save_corpus(dataset: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    write_corpus(dataset, &mut writer)?;
    writer.flush().map_err(io_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub seed: u64,
    /// Split each intent separately so both halves keep the intent mix.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            seed: 0,
            stratified: false,
        }
    }
}

/// `floor(ratio * n + 0.5)`.
pub fn train_size(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// Uniform draw in `0..bound` by 128-bit multiply-shift of one xoshiro256** output.
fn bounded(rng: &mut Xoshiro256StarStar, bound: usize) -> usize {
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

/// Fisher-Yates from the last element down, with [`bounded`] draws.
fn shuffle(items: &mut [usize], rng: &mut Xoshiro256StarStar) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}

/// Seeded train/test partition.
///
/// The generator is xoshiro256** seeded with SplitMix64(`seed`), so a given
/// seed selects the same members on every platform. Both halves keep the
/// input order.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset), CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    if !(spec.train_ratio > 0.0 && spec.train_ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(spec.train_ratio));
    }
    let n = dataset.len();
    let mut rng = Xoshiro256StarStar::seed_from_u64(spec.seed);
    let mut in_train = vec![false; n];
    if spec.stratified {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in dataset.examples.iter().enumerate() {
            groups.entry(e.intent.as_str()).or_default().push(i);
        }
        let target = train_size(spec.train_ratio, n);
        let mut quotas: Vec<(usize, f64, &str)> = groups
            .iter()
            .map(|(name, members)| {
                let exact = spec.train_ratio * members.len() as f64;
                (exact.floor() as usize, exact - exact.floor(), *name)
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            quotas[b]
                .1
                .total_cmp(&quotas[a].1)
                .then_with(|| quotas[a].2.cmp(quotas[b].2))
        });
        for &g in order.iter().take(target.saturating_sub(assigned)) {
            quotas[g].0 += 1;
        }
        for ((_, members), (quota, _, _)) in groups.iter_mut().zip(&quotas) {
            shuffle(members, &mut rng);
            members.iter().take(*quota).for_each(|&i| in_train[i] = true);
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, &mut rng);
        let k = train_size(spec.train_ratio, n);
        order.iter().take(k).for_each(|&i| in_train[i] = true);
    }
    let part = |want: bool, name: &str| Dataset {
        locale: dataset.locale.clone(),
        examples: dataset
            .examples
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(e, _)| e.clone())
            .collect(),
        provenance: format!(
            "{} | {name} split ratio={} seed={}{}",
            dataset.provenance,
            spec.train_ratio,
            spec.seed,
            if spec.stratified { " stratified" } else { "" }
        ),
    };
    Ok((part(true, "train"), part(false, "test")))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_domain: BTreeMap<String, usize>,
    pub per_intent: BTreeMap<String, usize>,
}

pub fn stats(dataset: &Dataset) -> DatasetStats {
    let mut s = DatasetStats::default();
    for e in &dataset.examples {
        s.total += 1;
        *s.per_domain.entry(e.domain.clone()).or_default() += 1;
        *s.per_intent.entry(e.intent.clone()).or_default() += 1;
    }
    s
}
