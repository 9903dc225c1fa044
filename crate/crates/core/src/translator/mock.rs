//! Deterministic backends for tests and dry runs.
//!
//! None of these translate anything. They exist so every projection failure
//! mode can be produced on demand and replayed exactly.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TranslateError, TranslationBackend};
use crate::projection::{identifier_regex, is_identifier};

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityBackend;

impl TranslationBackend for IdentityBackend {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate_text(&self, text: &str, _src: &str, _tgt: &str) -> Result<String, TranslateError> {
        Ok(text.to_string())
    }
}

/// Reverses the order of whitespace-separated tokens. Tokens themselves,
/// identifiers included, are not altered.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReverseBackend;

impl TranslationBackend for ReverseBackend {
    fn id(&self) -> &str {
        "reverse"
    }

    fn translate_text(&self, text: &str, _src: &str, _tgt: &str) -> Result<String, TranslateError> {
        let mut tokens: Vec<&str> = text.split_whitespace().collect();
        tokens.reverse();
        Ok(tokens.join(" "))
    }
}

pub const PSEUDO_SUFFIX: &str = "~wo";

/// Uppercases every token that is not an identifier and appends
/// [`PSEUDO_SUFFIX`] as a final token.
#[derive(Debug, Clone, Copy, Default)]
pub struct PseudoBackend;

impl TranslationBackend for PseudoBackend {
    fn id(&self) -> &str {
        "pseudo"
    }

    fn translate_text(&self, text: &str, _src: &str, _tgt: &str) -> Result<String, TranslateError> {
        let mut out: Vec<String> = text
            .split_whitespace()
            .map(|t| {
                if is_identifier(t) {
                    t.to_string()
                } else {
                    t.to_uppercase()
                }
            })
            .collect();
        out.push(PSEUDO_SUFFIX.to_string());
        Ok(out.join(" "))
    }
}

/// Wraps a backend and counts how often it is called.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: TranslationBackend> TranslationBackend for CountingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn translate_text(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.translate_text(text, src, tgt)
    }
}

/// Fixed responses per input text; anything else is echoed.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    id: String,
    script: HashMap<String, Result<String, TranslateError>>,
}

impl ScriptedBackend {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            script: HashMap::new(),
        }
    }

    pub fn respond(mut self, input: &str, output: &str) -> Self {
        self.script.insert(input.to_string(), Ok(output.to_string()));
        self
    }

    pub fn fail_on(mut self, input: &str, error: TranslateError) -> Self {
        self.script.insert(input.to_string(), Err(error));
        self
    }
}

impl TranslationBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_text(&self, text: &str, _src: &str, _tgt: &str) -> Result<String, TranslateError> {
        self.script.get(text).cloned().unwrap_or_else(|| Ok(text.to_string()))
    }
}

/// Fault probabilities applied by [`FaultBackend`].
///
/// For every identifier occurrence in the base output, four uniforms are
/// drawn in the order drop, mutate, content, duplicate, and the first one
/// under its probability decides the fault. Afterwards every occurrence of a
/// delimiter listed in `strip_delimiters` is removed with
/// `strip_delimiter_prob`. The stream is seeded from SHA-256 of the seed and
/// the request text, so the outcome is a pure function of both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultProfile {
    pub drop_identifier_prob: f64,
    pub mutate_digit_to_letter_prob: f64,
    pub translate_marker_content_prob: f64,
    pub duplicate_identifier_prob: f64,
    pub seed: u64,
    pub strip_delimiters: Vec<String>,
    pub strip_delimiter_prob: f64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        Self {
            drop_identifier_prob: 0.0,
            mutate_digit_to_letter_prob: 0.0,
            translate_marker_content_prob: 0.0,
            duplicate_identifier_prob: 0.0,
            seed: 0,
            strip_delimiters: Vec::new(),
            strip_delimiter_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    Drop,
    DigitsToLetters,
    ContentTranslated,
    Duplicate,
}

/// One fault applied to one identifier occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub identifier: String,
    pub kind: FaultKind,
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl FaultProfile {
    pub fn validate(&self) -> Result<(), TranslateError> {
        let probs = [
            ("drop_identifier_prob", self.drop_identifier_prob),
            ("mutate_digit_to_letter_prob", self.mutate_digit_to_letter_prob),
            ("translate_marker_content_prob", self.translate_marker_content_prob),
            ("duplicate_identifier_prob", self.duplicate_identifier_prob),
            ("strip_delimiter_prob", self.strip_delimiter_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(TranslateError::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.strip_delimiters.iter().any(String::is_empty) {
            return Err(TranslateError::Config("empty strip delimiter".into()));
        }
        Ok(())
    }

    fn rng_for(&self, request_text: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(request_text.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }

    fn draw_kind(&self, rng: &mut ChaCha8Rng) -> Option<FaultKind> {
        let draws = [unit(rng), unit(rng), unit(rng), unit(rng)];
        let table = [
            (self.drop_identifier_prob, FaultKind::Drop),
            (self.mutate_digit_to_letter_prob, FaultKind::DigitsToLetters),
            (self.translate_marker_content_prob, FaultKind::ContentTranslated),
            (self.duplicate_identifier_prob, FaultKind::Duplicate),
        ];
        draws
            .iter()
            .zip(table)
            .find(|(u, (p, _))| **u < *p)
            .map(|(_, (_, k))| k)
    }

    /// Replays the identifier fault stream for a request without applying it.
    pub fn replay(&self, request_text: &str, base_output: &str) -> Vec<FaultEvent> {
        let mut rng = self.rng_for(request_text);
        identifier_regex()
            .find_iter(base_output)
            .filter_map(|m| {
                self.draw_kind(&mut rng).map(|kind| FaultEvent {
                    identifier: m.as_str().to_string(),
                    kind,
                })
            })
            .collect()
    }

    /// Applies the fault stream for `request_text` to `base_output`.
    pub fn apply(&self, request_text: &str, base_output: &str) -> String {
        let mut rng = self.rng_for(request_text);
        let mut out = String::with_capacity(base_output.len() + 8);
        let mut last = 0;
        for m in identifier_regex().find_iter(base_output) {
            out.push_str(&base_output[last..m.start()]);
            last = m.end();
            let token = m.as_str();
            match self.draw_kind(&mut rng) {
                None => out.push_str(token),
                Some(FaultKind::Drop) => {
                    if out.ends_with(' ') {
                        out.pop();
                    } else if base_output[last..].starts_with(' ') {
                        last += 1;
                    }
                }
                Some(FaultKind::DigitsToLetters) => out.extend(token.chars().map(|c| match c.to_digit(10) {
                    Some(d) => char::from(b'A' + d as u8),
                    None => c,
                })),
                Some(FaultKind::ContentTranslated) => {
                    // "$07$" -> "$7$", "$00$" -> "$0$": never a well-formed identifier
                    out.push('$');
                    out.push_str(&token[2..]);
                }
                Some(FaultKind::Duplicate) => {
                    out.push_str(token);
                    out.push(' ');
                    out.push_str(token);
                }
            }
        }
        out.push_str(&base_output[last..]);
        if self.strip_delimiters.is_empty() || self.strip_delimiter_prob <= 0.0 {
            return out;
        }
        let mut delimiters: Vec<&str> = self.strip_delimiters.iter().map(String::as_str).collect();
        delimiters.sort_by_key(|d| std::cmp::Reverse(d.len()));
        let mut stripped = String::with_capacity(out.len());
        let mut rest = out.as_str();
        while let Some(c) = rest.chars().next() {
            match delimiters.iter().find(|d| rest.starts_with(**d)) {
                Some(d) => {
                    if unit(&mut rng) >= self.strip_delimiter_prob {
                        stripped.push_str(d);
                    }
                    rest = &rest[d.len()..];
                }
                None => {
                    stripped.push(c);
                    rest = &rest[c.len_utf8()..];
                }
            }
        }
        stripped
    }
}

/// Applies a [`FaultProfile`] on top of any base backend.
pub struct FaultBackend<B> {
    base: B,
    profile: FaultProfile,
    id: String,
}

impl<B: TranslationBackend> FaultBackend<B> {
    pub fn new(base: B, profile: FaultProfile) -> Result<Self, TranslateError> {
        profile.validate()?;
        let id = format!("fault({})#{}", base.id(), profile.seed);
        Ok(Self { base, profile, id })
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }
}

impl<B: TranslationBackend> TranslationBackend for FaultBackend<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_text(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        let base = self.base.translate_text(text, src, tgt)?;
        Ok(self.profile.apply(text, &base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<B: TranslationBackend>(b: &B, text: &str) -> String {
        b.translate_text(text, "fr", "wo").unwrap()
    }

    #[test]
    fn base_mocks() {
        assert_eq!(run(&IdentityBackend, "bonjour"), "bonjour");
        assert_eq!(run(&ReverseBackend, "a b c"), "c b a");
        assert_eq!(run(&ReverseBackend, "see $00$ now"), "now $00$ see");
        assert_eq!(run(&PseudoBackend, "see $00$ now"), "SEE $00$ NOW ~wo");
    }

    fn only(kind: &str) -> FaultProfile {
        let mut p = FaultProfile {
            seed: 11,
            ..FaultProfile::default()
        };
        match kind {
            "drop" => p.drop_identifier_prob = 1.0,
            "mutate" => p.mutate_digit_to_letter_prob = 1.0,
            "content" => p.translate_marker_content_prob = 1.0,
            "dup" => p.duplicate_identifier_prob = 1.0,
            _ => unreachable!(),
        }
        p
    }

    #[test]
    fn each_fault_kind() {
        let f = |k| FaultBackend::new(IdentityBackend, only(k)).unwrap();
        assert_eq!(run(&f("drop"), "see $00$ now"), "see now");
        assert_eq!(run(&f("drop"), "$00$ now"), "now");
        assert_eq!(run(&f("drop"), "see $00$"), "see");
        assert_eq!(run(&f("mutate"), "see $07$ now"), "see $AH$ now");
        assert_eq!(run(&f("content"), "see $07$ and $00$"), "see $7$ and $0$");
        assert_eq!(run(&f("dup"), "see $012$ now"), "see $012$ $012$ now");
    }

    #[test]
    fn zero_profile_is_transparent() {
        let f = FaultBackend::new(ReverseBackend, FaultProfile::default()).unwrap();
        for text in ["see $00$ now", "a  b", "$01$ $02$ x"] {
            assert_eq!(run(&f, text), run(&ReverseBackend, text));
        }
    }

    #[test]
    fn replay_matches_application() {
        let profile = FaultProfile {
            drop_identifier_prob: 0.3,
            duplicate_identifier_prob: 0.3,
            seed: 5,
            ..FaultProfile::default()
        };
        let f = FaultBackend::new(IdentityBackend, profile.clone()).unwrap();
        for i in 0..200 {
            let text = format!("x $0{}$ y $0{}$", 2 * i, 2 * i + 1);
            let out = run(&f, &text);
            let events = profile.replay(&text, &text);
            assert_eq!(events.is_empty(), out == text, "{text} -> {out}");
            assert_eq!(run(&f, &text), out);
        }
    }

    #[test]
    fn strips_listed_delimiters() {
        let profile = FaultProfile {
            strip_delimiters: vec!["[".into(), "]".into(), "<m>".into(), "</m>".into()],
            strip_delimiter_prob: 1.0,
            ..FaultProfile::default()
        };
        let f = FaultBackend::new(IdentityBackend, profile).unwrap();
        assert_eq!(run(&f, "a [07] <m>b</m> $08$"), "a 07 b $08$");
    }

    #[test]
    fn rejects_bad_probabilities() {
        let p = FaultProfile {
            drop_identifier_prob: 1.5,
            ..FaultProfile::default()
        };
        assert!(FaultBackend::new(IdentityBackend, p).is_err());
    }
}
