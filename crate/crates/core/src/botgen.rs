//! Chatbot project scaffolding from a domain/intent ontology.
//!
//! An ontology is either a directory of `<domain>/<intent>.csv` files or one
//! `.xlsx` workbook per domain with one sheet per intent. Both carry an
//! `example` column (bracket-annotated utterances) and an optional `response`
//! column. The generated project holds `config.yml`, `domain.yml`,
//! `data/nlu.yml` and `data/rules.yml`; output is byte-for-byte stable for a
//! given ontology and template.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use calamine::{open_workbook, Data, Reader, Xlsx};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{parse_annotated, parse_training_markup, AnnotError, AnnotatedUtterance};

pub const SCAFFOLD_FILES: [&str; 4] = ["config.yml", "domain.yml", "data/nlu.yml", "data/rules.yml"];
const FORMAT_VERSION: &str = "3.1";

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Table { path: String, message: String },
    #[error("{path}: no `example` column")]
    MissingColumn { path: String },
    #[error("{path}: no domains found")]
    NoDomains { path: String },
    #[error("invalid {kind} name {name:?} (use letters, digits and underscores)")]
    InvalidName { kind: &'static str, name: String },
    #[error("intent {intent:?} defined in both {first} and {second}")]
    DuplicateIntent {
        intent: String,
        first: String,
        second: String,
    },
    #[error("domain {domain:?}, intent {intent:?} has no examples")]
    EmptyIntent { domain: String, intent: String },
    #[error("domain {domain:?}, intent {intent:?}, row {row}: {source}")]
    Example {
        domain: String,
        intent: String,
        row: u64,
        #[source]
        source: AnnotError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub domain: String,
    pub name: String,
    pub examples: Vec<AnnotatedUtterance>,
    /// Distinct non-empty responses in row order.
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    /// Sorted by domain, then intent name.
    pub intents: Vec<IntentSpec>,
}

impl Ontology {
    pub fn from_intents(mut intents: Vec<IntentSpec>) -> Result<Self, OntologyError> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for i in &intents {
            check_name("domain", &i.domain)?;
            check_name("intent", &i.name)?;
            if let Some(first) = seen.insert(&i.name, &i.domain) {
                return Err(OntologyError::DuplicateIntent {
                    intent: i.name.clone(),
                    first: first.to_string(),
                    second: i.domain.clone(),
                });
            }
            if i.examples.is_empty() {
                return Err(OntologyError::EmptyIntent {
                    domain: i.domain.clone(),
                    intent: i.name.clone(),
                });
            }
        }
        intents.sort_by(|a, b| (&a.domain, &a.name).cmp(&(&b.domain, &b.name)));
        Ok(Self { intents })
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.intents.iter().map(|i| i.domain.as_str()).collect()
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.intents
            .iter()
            .flat_map(|i| i.examples.iter().flat_map(|e| e.spans.iter().map(|s| s.label.as_str())))
            .collect()
    }
}

fn check_name(kind: &'static str, name: &str) -> Result<(), OntologyError> {
    if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(())
    } else {
        Err(OntologyError::InvalidName {
            kind,
            name: name.to_string(),
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OntologyError + '_ {
    move |source| OntologyError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Builds one intent from `(row number, example, response)` rows.
fn intent_from_rows(
    domain: &str,
    intent: &str,
    rows: impl IntoIterator<Item = (u64, String, String)>,
) -> Result<IntentSpec, OntologyError> {
    let mut examples = Vec::new();
    let mut responses: Vec<String> = Vec::new();
    for (row, example, response) in rows {
        let (example, response) = (example.trim(), response.trim());
        if !example.is_empty() {
            let utt = parse_annotated(example, intent)
                .and_then(|u| u.to_training_markup().map(|_| u))
                .map_err(|source| OntologyError::Example {
                    domain: domain.into(),
                    intent: intent.into(),
                    row,
                    source,
                })?;
            examples.push(utt);
        }
        if !response.is_empty() && !responses.iter().any(|r| r == response) {
            responses.push(response.to_string());
        }
    }
    Ok(IntentSpec {
        domain: domain.into(),
        name: intent.into(),
        examples,
        responses,
    })
}

fn header_columns(path: &Path, header: &[String]) -> Result<(usize, Option<usize>), OntologyError> {
    let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let example = find("example").ok_or_else(|| OntologyError::MissingColumn {
        path: path.display().to_string(),
    })?;
    Ok((example, find("response")))
}

fn load_csv_intent(domain: &str, path: &Path) -> Result<IntentSpec, OntologyError> {
    let table_err = |e: csv::Error| OntologyError::Table {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(table_err)?;
    let header: Vec<String> = reader.headers().map_err(table_err)?.iter().map(String::from).collect();
    let (ex_col, resp_col) = header_columns(path, &header)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(table_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |c: Option<usize>| c.and_then(|c| record.get(c)).unwrap_or("").to_string();
        rows.push((line, cell(Some(ex_col)), cell(resp_col)));
    }
    intent_from_rows(domain, &stem(path), rows)
}

fn load_workbook(path: &Path) -> Result<Vec<IntentSpec>, OntologyError> {
    let table_err = |message: String| OntologyError::Table {
        path: path.display().to_string(),
        message,
    };
    let domain = stem(path);
    let mut book: Xlsx<_> = open_workbook(path).map_err(|e: calamine::XlsxError| table_err(e.to_string()))?;
    let mut intents = Vec::new();
    let sheets: Vec<String> = book.sheet_names();
    for sheet in sheets {
        let range = book.worksheet_range(&sheet).map_err(|e| table_err(e.to_string()))?;
        let first_row = range.start().map_or(0, |(r, _)| r as u64);
        let mut rows = range.rows();
        let header: Vec<String> = match rows.next() {
            Some(cells) => cells.iter().map(Data::to_string).collect(),
            None => Vec::new(),
        };
        let (ex_col, resp_col) = header_columns(&path.join(&sheet), &header)?;
        let data = rows.enumerate().map(|(i, cells)| {
            let cell = |c: Option<usize>| c.and_then(|c| cells.get(c)).map(Data::to_string).unwrap_or_default();
            // 1-based sheet row; the header occupies the first one
            (first_row + i as u64 + 2, cell(Some(ex_col)), cell(resp_col))
        });
        intents.push(intent_from_rows(&domain, &sheet, data.collect::<Vec<_>>())?);
    }
    Ok(intents)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, OntologyError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    Ok(entries)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Loads an ontology from a directory (CSV domain folders and/or `.xlsx`
/// workbooks) or from a single workbook.
pub fn load_ontology(path: &Path) -> Result<Ontology, OntologyError> {
    let mut intents = Vec::new();
    if path.is_file() && has_ext(path, "xlsx") {
        intents = load_workbook(path)?;
    } else {
        for entry in sorted_entries(path)? {
            if entry.is_dir() {
                let domain = stem(&entry);
                for file in sorted_entries(&entry)? {
                    if file.is_file() && has_ext(&file, "csv") {
                        intents.push(load_csv_intent(&domain, &file)?);
                    }
                }
            } else if has_ext(&entry, "xlsx") {
                intents.extend(load_workbook(&entry)?);
            }
        }
    }
    if intents.is_empty() {
        return Err(OntologyError::NoDomains {
            path: path.display().to_string(),
        });
    }
    Ontology::from_intents(intents)
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template: {0}")]
    Parse(String),
    #[error("template is missing a {0:?} stage")]
    MissingStage(StageRole),
    #[error("template stage {stage:?} ({role:?}) is out of order")]
    OutOfOrder { stage: String, role: StageRole },
    #[error("template setting {key:?}: unsupported value")]
    Setting { key: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageRole {
    Tokenizer,
    Featurizer,
    Classifier,
    Fallback,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub role: StageRole,
    pub name: String,
    pub settings: Vec<(String, SettingValue)>,
}

impl Component {
    fn new(role: StageRole, name: &str, settings: &[(&str, SettingValue)]) -> Self {
        Self {
            role,
            name: name.into(),
            settings: settings.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTemplate {
    pub language: String,
    pub assistant_id: String,
    pub pipeline: Vec<Component>,
    pub policies: Vec<Component>,
}

impl Default for PipelineTemplate {
    fn default() -> Self {
        use SettingValue::*;
        Self {
            language: "xx".into(),
            assistant_id: "xproject_bot".into(),
            pipeline: vec![
                Component::new(StageRole::Tokenizer, "WhitespaceTokenizer", &[]),
                Component::new(
                    StageRole::Featurizer,
                    "LanguageModelFeaturizer",
                    &[
                        ("model_name", Str("bert".into())),
                        ("model_weights", Str("rasa/LaBSE".into())),
                    ],
                ),
                Component::new(
                    StageRole::Classifier,
                    "DIETClassifier",
                    &[("epochs", Int(100)), ("constrain_similarities", Bool(true))],
                ),
                Component::new(
                    StageRole::Fallback,
                    "FallbackClassifier",
                    &[("threshold", Float(0.3)), ("ambiguity_threshold", Float(0.1))],
                ),
            ],
            policies: vec![Component::new(StageRole::Other, "RulePolicy", &[])],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    #[serde(default = "other_role")]
    role: StageRole,
    name: String,
    #[serde(default)]
    settings: toml::Table,
}

fn other_role() -> StageRole {
    StageRole::Other
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    language: Option<String>,
    assistant_id: Option<String>,
    pipeline: Vec<RawComponent>,
    #[serde(default)]
    policies: Vec<RawComponent>,
}

fn convert(raw: RawComponent) -> Result<Component, TemplateError> {
    let settings = raw
        .settings
        .into_iter()
        .map(|(k, v)| {
            let value = match v {
                toml::Value::String(s) => SettingValue::Str(s),
                toml::Value::Integer(i) => SettingValue::Int(i),
                toml::Value::Float(f) => SettingValue::Float(f),
                toml::Value::Boolean(b) => SettingValue::Bool(b),
                _ => return Err(TemplateError::Setting { key: k }),
            };
            Ok((k, value))
        })
        .collect::<Result<_, _>>()?;
    Ok(Component {
        role: raw.role,
        name: raw.name,
        settings,
    })
}

impl PipelineTemplate {
    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let raw: RawTemplate = toml::from_str(text).map_err(|e| TemplateError::Parse(e.to_string()))?;
        let defaults = Self::default();
        let template = Self {
            language: raw.language.unwrap_or(defaults.language),
            assistant_id: raw.assistant_id.unwrap_or(defaults.assistant_id),
            pipeline: raw.pipeline.into_iter().map(convert).collect::<Result<_, _>>()?,
            policies: if raw.policies.is_empty() {
                defaults.policies
            } else {
                raw.policies.into_iter().map(convert).collect::<Result<_, _>>()?
            },
        };
        template.validate()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Tokenizer, featurizer and classifier are mandatory; role stages must
    /// appear in tokenizer, featurizer, classifier, fallback order.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for role in [StageRole::Tokenizer, StageRole::Featurizer, StageRole::Classifier] {
            if !self.pipeline.iter().any(|c| c.role == role) {
                return Err(TemplateError::MissingStage(role));
            }
        }
        let mut last = StageRole::Tokenizer;
        for c in self.pipeline.iter().filter(|c| c.role != StageRole::Other) {
            if c.role < last {
                return Err(TemplateError::OutOfOrder {
                    stage: c.name.clone(),
                    role: c.role,
                });
            }
            last = c.role;
        }
        Ok(())
    }
}

/// Generated files keyed by path relative to the project root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectScaffold {
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn is_plain_scalar(s: &str) -> bool {
    const RESERVED: [&str; 11] = ["true", "false", "yes", "no", "on", "off", "null", "y", "n", "~", ".nan"];
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || "_./-".contains(c))
        && !RESERVED.contains(&s.to_ascii_lowercase().as_str())
}

/// A YAML scalar: plain when unambiguous, otherwise double-quoted.
pub fn yaml_scalar(s: &str) -> String {
    if is_plain_scalar(s) {
        s.to_string()
    } else {
        serde_json::to_string(s).expect("strings always serialize")
    }
}

fn yaml_setting(v: &SettingValue) -> String {
    match v {
        SettingValue::Bool(b) => b.to_string(),
        SettingValue::Int(i) => i.to_string(),
        SettingValue::Float(f) if f.is_finite() && f.fract() == 0.0 => format!("{f:.1}"),
        SettingValue::Float(f) => f.to_string(),
        SettingValue::Str(s) => yaml_scalar(s),
    }
}

fn response_action(intent: &str) -> String {
    format!("utter_{intent}")
}

fn render_components(out: &mut String, key: &str, components: &[Component]) {
    let _ = writeln!(out, "{key}:");
    for c in components {
        let _ = writeln!(out, "  - name: {}", yaml_scalar(&c.name));
        for (k, v) in &c.settings {
            let _ = writeln!(out, "    {}: {}", yaml_scalar(k), yaml_setting(v));
        }
    }
}

fn render_config(template: &PipelineTemplate) -> String {
    let mut out = String::from("recipe: default.v1\n");
    let _ = writeln!(out, "assistant_id: {}", yaml_scalar(&template.assistant_id));
    let _ = writeln!(out, "language: {}", yaml_scalar(&template.language));
    out.push('\n');
    render_components(&mut out, "pipeline", &template.pipeline);
    out.push('\n');
    render_components(&mut out, "policies", &template.policies);
    out
}

fn render_domain(ontology: &Ontology, warnings: &mut Vec<String>) -> String {
    let mut out = format!("version: \"{FORMAT_VERSION}\"\n\nintents:\n");
    for i in &ontology.intents {
        let _ = writeln!(out, "  - {}", yaml_scalar(&i.name));
    }
    out.push('\n');
    let entities = ontology.entities();
    if entities.is_empty() {
        out.push_str("entities: []\n");
    } else {
        out.push_str("entities:\n");
        for e in entities {
            let _ = writeln!(out, "  - {}", yaml_scalar(e));
        }
    }
    out.push_str("\nresponses:\n");
    for i in &ontology.intents {
        let _ = writeln!(out, "  {}:", response_action(&i.name));
        if i.responses.is_empty() {
            warnings.push(format!(
                "intent {:?} ({}) has no response; placeholder written",
                i.name, i.domain
            ));
            let _ = writeln!(
                out,
                "    - text: {}",
                yaml_scalar(&format!("TODO: response for {}", i.name))
            );
        }
        for r in &i.responses {
            let _ = writeln!(out, "    - text: {}", yaml_scalar(r));
        }
    }
    out.push_str("\nsession_config:\n  session_expiration_time: 60\n  carry_over_slots_to_new_session: true\n");
    out
}

fn render_nlu(ontology: &Ontology) -> Result<String, AnnotError> {
    let mut out = format!("version: \"{FORMAT_VERSION}\"\n\nnlu:\n");
    for i in &ontology.intents {
        let _ = writeln!(out, "  - intent: {}", yaml_scalar(&i.name));
        out.push_str("    examples: |\n");
        for e in &i.examples {
            let _ = writeln!(out, "      - {}", e.to_training_markup()?);
        }
    }
    Ok(out)
}

fn render_rules(ontology: &Ontology) -> String {
    let mut out = format!("version: \"{FORMAT_VERSION}\"\n\nrules:\n");
    for i in &ontology.intents {
        let _ = writeln!(out, "  - rule: {}", yaml_scalar(&format!("respond to {}", i.name)));
        out.push_str("    steps:\n");
        let _ = writeln!(out, "      - intent: {}", yaml_scalar(&i.name));
        let _ = writeln!(out, "      - action: {}", yaml_scalar(&response_action(&i.name)));
    }
    out
}

pub fn render_scaffold(ontology: &Ontology, template: &PipelineTemplate) -> Result<ProjectScaffold, AnnotError> {
    let mut warnings = Vec::new();
    let files = BTreeMap::from([
        ("config.yml".to_string(), render_config(template)),
        ("domain.yml".to_string(), render_domain(ontology, &mut warnings)),
        ("data/nlu.yml".to_string(), render_nlu(ontology)?),
        ("data/rules.yml".to_string(), render_rules(ontology)),
    ]);
    Ok(ProjectScaffold { files, warnings })
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Annotation(#[from] AnnotError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn generate_project(
    ontology: &Ontology,
    template: &PipelineTemplate,
    out_dir: &Path,
) -> Result<ProjectScaffold, GenerateError> {
    template.validate()?;
    let scaffold = render_scaffold(ontology, template)?;
    for (rel, content) in &scaffold.files {
        let path = out_dir.join(rel);
        let io = |source| GenerateError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&path, content).map_err(io)?;
    }
    for w in &scaffold.warnings {
        log::warn!("{w}");
    }
    Ok(scaffold)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldReport {
    pub violations: Vec<String>,
}

impl ScaffoldReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn str_list(v: Option<&serde_yaml::Value>) -> Vec<String> {
    v.and_then(|v| v.as_sequence())
        .map(|s| s.iter().filter_map(|x| x.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

/// Reads `data/nlu.yml` back into utterances grouped by intent.
pub fn read_nlu(out_dir: &Path) -> Result<BTreeMap<String, Vec<AnnotatedUtterance>>, String> {
    let path = out_dir.join("data/nlu.yml");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc: serde_yaml::Value = serde_yaml::from_str(&text).map_err(|e| format!("data/nlu.yml: {e}"))?;
    let mut out: BTreeMap<String, Vec<AnnotatedUtterance>> = BTreeMap::new();
    let blocks = doc
        .get("nlu")
        .and_then(|n| n.as_sequence())
        .ok_or("data/nlu.yml: no nlu list")?;
    for block in blocks {
        let intent = block
            .get("intent")
            .and_then(|v| v.as_str())
            .ok_or("data/nlu.yml: block without intent")?;
        let examples = block.get("examples").and_then(|v| v.as_str()).unwrap_or("");
        let parsed = out.entry(intent.to_string()).or_default();
        for line in examples.lines().filter(|l| !l.trim().is_empty()) {
            let markup = line
                .trim_start()
                .strip_prefix("- ")
                .ok_or_else(|| format!("data/nlu.yml: intent {intent}: example line without `- `: {line:?}"))?;
            let utt =
                parse_training_markup(markup, intent).map_err(|e| format!("data/nlu.yml: intent {intent}: {e}"))?;
            parsed.push(utt);
        }
    }
    Ok(out)
}

/// Checks a generated project for missing files, dangling references and
/// entity declarations that do not match the training data.
pub fn validate_scaffold(out_dir: &Path) -> ScaffoldReport {
    let mut v = Vec::new();
    let mut docs: BTreeMap<&str, serde_yaml::Value> = BTreeMap::new();
    for rel in SCAFFOLD_FILES {
        match fs::read_to_string(out_dir.join(rel)) {
            Err(_) => v.push(format!("missing file {rel}")),
            Ok(text) => match serde_yaml::from_str(&text) {
                Ok(doc) => {
                    docs.insert(rel, doc);
                }
                Err(e) => v.push(format!("{rel}: not valid YAML: {e}")),
            },
        }
    }

    if let Some(config) = docs.get("config.yml") {
        if config.get("language").and_then(|l| l.as_str()).is_none() {
            v.push("config.yml: no language".into());
        }
        let names: Vec<String> = config
            .get("pipeline")
            .and_then(|p| p.as_sequence())
            .map(|p| {
                p.iter()
                    .filter_map(|c| c.get("name")?.as_str().map(String::from))
                    .collect()
            })
            .unwrap_or_default();
        if names.is_empty() {
            v.push("config.yml: empty pipeline".into());
        }
    }

    let empty = serde_yaml::Value::Null;
    let domain = docs.get("domain.yml").unwrap_or(&empty);
    let intents: BTreeSet<String> = str_list(domain.get("intents")).into_iter().collect();
    let entities: BTreeSet<String> = str_list(domain.get("entities")).into_iter().collect();
    let responses: BTreeSet<String> = domain
        .get("responses")
        .and_then(|r| r.as_mapping())
        .map(|m| m.keys().filter_map(|k| k.as_str().map(String::from)).collect())
        .unwrap_or_default();

    if docs.contains_key("data/nlu.yml") {
        match read_nlu(out_dir) {
            Err(e) => v.push(e),
            Ok(nlu) => {
                let mut used = BTreeSet::new();
                for (intent, utts) in &nlu {
                    if !intents.contains(intent) {
                        v.push(format!("data/nlu.yml: intent {intent} is not declared in domain.yml"));
                    }
                    used.extend(utts.iter().flat_map(|u| u.spans.iter().map(|s| s.label.clone())));
                }
                for e in used.difference(&entities) {
                    v.push(format!("data/nlu.yml: entity {e} is not declared in domain.yml"));
                }
                for e in entities.difference(&used) {
                    v.push(format!("domain.yml: entity {e} never appears in data/nlu.yml"));
                }
                for i in &intents {
                    if nlu.get(i).is_none_or(|u| u.is_empty()) {
                        v.push(format!("domain.yml: intent {i} has no training examples"));
                    }
                }
            }
        }
    }

    if let Some(rules) = docs.get("data/rules.yml") {
        for rule in rules.get("rules").and_then(|r| r.as_sequence()).into_iter().flatten() {
            let name = rule.get("rule").and_then(|r| r.as_str()).unwrap_or("?");
            for step in rule.get("steps").and_then(|s| s.as_sequence()).into_iter().flatten() {
                if let Some(i) = step.get("intent").and_then(|x| x.as_str()) {
                    if !intents.contains(i) {
                        v.push(format!("data/rules.yml: rule {name:?} uses unknown intent {i}"));
                    }
                }
                if let Some(a) = step.get("action").and_then(|x| x.as_str()) {
                    if a.starts_with("utter_") && !responses.contains(a) {
                        v.push(format!("data/rules.yml: rule {name:?} uses unknown action {a}"));
                    }
                }
            }
        }
    }
    ScaffoldReport { violations: v }
}
