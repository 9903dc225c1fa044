//! Inline span markup.
//!
//! The canonical form follows the MASSIVE `annot_utt` convention: every slot
//! is written in place as `[label : surface]`. Brackets never nest and are the
//! only structural characters, so a single left-to-right scan is enough.
//!
//! All offsets are Unicode scalar value offsets into the whitespace-normalized
//! plain text, never byte offsets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotError {
    #[error("unbalanced '[' at position {position}")]
    UnbalancedOpen { position: usize },
    #[error("unexpected ']' at position {position}")]
    UnexpectedClose { position: usize },
    #[error("nested '[' at position {position}")]
    Nested { position: usize },
    #[error("missing ':' separator in annotation at position {position}")]
    MissingSeparator { position: usize },
    #[error("empty label at position {position}")]
    EmptyLabel { position: usize },
    #[error("empty surface at position {position}")]
    EmptySurface { position: usize },
    #[error("invalid label {label:?} at position {position}")]
    InvalidLabel { label: String, position: usize },
    #[error("malformed training markup at position {position}: {reason}")]
    TrainingMarkup { position: usize, reason: &'static str },
    #[error("label {0:?} cannot be written as a training entity")]
    IllegalTrainingLabel(String),
    #[error("invalid annotated utterance: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub label: String,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedUtterance {
    pub plain: String,
    pub spans: Vec<Span>,
    pub intent: String,
}

/// Collapses every run of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Returns the substring covering characters `start..end`.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}

pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && !label
            .chars()
            .any(|c| c.is_whitespace() || c == '[' || c == ']' || c == ':')
}

fn is_training_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Incrementally assembles normalized plain text and span offsets from
/// alternating text and span pieces.
#[derive(Debug, Default)]
pub(crate) struct PlainBuilder {
    out: String,
    len: usize,
    pending_space: bool,
    spans: Vec<Span>,
}

impl PlainBuilder {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    fn push_char(&mut self, c: char) {
        if c.is_whitespace() {
            self.pending_space = true;
            return;
        }
        if self.pending_space && self.len > 0 {
            self.out.push(' ');
            self.len += 1;
        }
        self.pending_space = false;
        self.out.push(c);
        self.len += 1;
    }

    pub(crate) fn push_text(&mut self, text: &str) {
        text.chars().for_each(|c| self.push_char(c));
    }

    /// Appends a labeled surface. Returns `false` (and appends nothing) when the
    /// surface is blank after normalization.
    pub(crate) fn push_span(&mut self, label: &str, surface: &str) -> bool {
        let surface = normalize_whitespace(surface);
        if surface.is_empty() {
            return false;
        }
        if self.pending_space && self.len > 0 {
            self.out.push(' ');
            self.len += 1;
        }
        self.pending_space = false;
        let start = self.len;
        self.out.push_str(&surface);
        self.len += surface.chars().count();
        self.spans.push(Span {
            label: label.to_string(),
            surface,
            start,
            end: self.len,
        });
        true
    }

    pub(crate) fn finish(self, intent: &str) -> AnnotatedUtterance {
        AnnotatedUtterance {
            plain: self.out,
            spans: self.spans,
            intent: intent.to_string(),
        }
    }
}

/// Parses `[label : surface]` markup.
pub fn parse_annotated(markup: &str, intent: &str) -> Result<AnnotatedUtterance, AnnotError> {
    let chars: Vec<char> = markup.chars().collect();
    let mut builder = PlainBuilder::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                let open = i;
                let mut j = i + 1;
                let close = loop {
                    match chars.get(j) {
                        None => return Err(AnnotError::UnbalancedOpen { position: open }),
                        Some('[') => return Err(AnnotError::Nested { position: j }),
                        Some(']') => break j,
                        Some(_) => j += 1,
                    }
                };
                let body = &chars[open + 1..close];
                let colon = body
                    .iter()
                    .position(|&c| c == ':')
                    .ok_or(AnnotError::MissingSeparator { position: open })?;
                let label: String = body[..colon].iter().collect();
                let label = label.trim();
                if label.is_empty() {
                    return Err(AnnotError::EmptyLabel { position: open + 1 });
                }
                if !is_valid_label(label) {
                    return Err(AnnotError::InvalidLabel {
                        label: label.to_string(),
                        position: open + 1,
                    });
                }
                let surface: String = body[colon + 1..].iter().collect();
                if !builder.push_span(label, &surface) {
                    return Err(AnnotError::EmptySurface {
                        position: open + 1 + colon + 1,
                    });
                }
                i = close + 1;
            }
            ']' => return Err(AnnotError::UnexpectedClose { position: i }),
            c => {
                builder.push_char(c);
                i += 1;
            }
        }
    }
    Ok(builder.finish(intent))
}

/// Removes markup and returns the normalized plain text.
pub fn strip_markup(markup: &str) -> Result<String, AnnotError> {
    parse_annotated(markup, "").map(|u| u.plain)
}

impl AnnotatedUtterance {
    pub fn unannotated(plain: &str, intent: &str) -> Self {
        Self {
            plain: normalize_whitespace(plain),
            spans: Vec::new(),
            intent: intent.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), AnnotError> {
        let bad = |msg: String| Err(AnnotError::Invariant(msg));
        if self.plain != normalize_whitespace(&self.plain) {
            return bad("plain text is not whitespace-normalized".into());
        }
        if self.plain.contains(['[', ']']) {
            return bad("plain text contains a bracket".into());
        }
        let len = self.plain.chars().count();
        let mut prev_end = 0;
        for (k, span) in self.spans.iter().enumerate() {
            if !is_valid_label(&span.label) {
                return bad(format!("span {k} has invalid label {:?}", span.label));
            }
            if span.start >= span.end || span.end > len {
                return bad(format!("span {k} offsets ({}, {}) out of range", span.start, span.end));
            }
            if k > 0 && span.start < prev_end {
                return bad(format!("span {k} overlaps or is out of order"));
            }
            if char_slice(&self.plain, span.start, span.end) != span.surface {
                return bad(format!("span {k} surface does not match plain text"));
            }
            if span.surface.trim() != span.surface {
                return bad(format!("span {k} surface has surrounding whitespace"));
            }
            prev_end = span.end;
        }
        Ok(())
    }

    /// Canonical `[label : surface]` markup.
    pub fn serialize(&self) -> Result<String, AnnotError> {
        self.render(|out, span| {
            out.push('[');
            out.push_str(&span.label);
            out.push_str(" : ");
            out.push_str(&span.surface);
            out.push(']');
            Ok(())
        })
    }

    /// Entity markup for NLU training files: `[surface](label)`.
    pub fn to_training_markup(&self) -> Result<String, AnnotError> {
        self.render(|out, span| {
            if !is_training_label(&span.label) {
                return Err(AnnotError::IllegalTrainingLabel(span.label.clone()));
            }
            out.push('[');
            out.push_str(&span.surface);
            out.push_str("](");
            out.push_str(&span.label);
            out.push(')');
            Ok(())
        })
    }

    fn render<F>(&self, mut write_span: F) -> Result<String, AnnotError>
    where
        F: FnMut(&mut String, &Span) -> Result<(), AnnotError>,
    {
        self.validate()?;
        let mut out = String::with_capacity(self.plain.len() + 16 * self.spans.len());
        let mut spans = self.spans.iter().peekable();
        for (pos, c) in self.plain.chars().enumerate() {
            if let Some(span) = spans.peek() {
                if pos == span.start {
                    write_span(&mut out, span)?;
                }
                if pos >= span.start && pos < span.end {
                    if pos + 1 == span.end {
                        spans.next();
                    }
                    continue;
                }
            }
            out.push(c);
        }
        Ok(out)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.spans.iter().map(|s| s.label.as_str())
    }
}

/// Parses `[surface](label)` training markup back into an utterance.
pub fn parse_training_markup(markup: &str, intent: &str) -> Result<AnnotatedUtterance, AnnotError> {
    let chars: Vec<char> = markup.chars().collect();
    let mut builder = PlainBuilder::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                let open = i;
                let close = chars[open + 1..]
                    .iter()
                    .position(|&c| c == ']')
                    .map(|p| p + open + 1)
                    .ok_or(AnnotError::UnbalancedOpen { position: open })?;
                if chars.get(close + 1) != Some(&'(') {
                    return Err(AnnotError::TrainingMarkup {
                        position: close + 1,
                        reason: "expected '(' after ']'",
                    });
                }
                let paren_close = chars[close + 2..]
                    .iter()
                    .position(|&c| c == ')')
                    .map(|p| p + close + 2)
                    .ok_or(AnnotError::TrainingMarkup {
                        position: close + 1,
                        reason: "unterminated '('",
                    })?;
                let surface: String = chars[open + 1..close].iter().collect();
                let label: String = chars[close + 2..paren_close].iter().collect();
                if surface.contains('[') {
                    return Err(AnnotError::Nested { position: open });
                }
                if !is_training_label(&label) {
                    return Err(AnnotError::IllegalTrainingLabel(label));
                }
                if !builder.push_span(&label, &surface) {
                    return Err(AnnotError::EmptySurface { position: open + 1 });
                }
                i = paren_close + 1;
            }
            ']' => return Err(AnnotError::UnexpectedClose { position: i }),
            c => {
                builder.push_char(c);
                i += 1;
            }
        }
    }
    Ok(builder.finish(intent))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    const ROOM: &str = "book me a room from [start_date : July 15] to [end_date : July 24]";

    fn span(label: &str, surface: &str, start: usize, end: usize) -> Span {
        Span {
            label: label.into(),
            surface: surface.into(),
            start,
            end,
        }
    }

    #[test]
    fn parses_room_booking() {
        let u = parse_annotated(ROOM, "book_room").unwrap();
        assert_eq!(u.plain, "book me a room from July 15 to July 24");
        assert_eq!(
            u.spans,
            vec![
                span("start_date", "July 15", 20, 27),
                span("end_date", "July 24", 31, 38)
            ]
        );
        assert_eq!(u.intent, "book_room");
        assert_eq!(u.serialize().unwrap(), ROOM);
    }

    #[test]
    fn no_markup() {
        let u = parse_annotated("hello world", "greet").unwrap();
        assert_eq!(u.plain, "hello world");
        assert!(u.spans.is_empty());
        assert_eq!(u.serialize().unwrap(), "hello world");
        assert_eq!(u.to_training_markup().unwrap(), "hello world");
    }

    #[test]
    fn positioned_errors() {
        assert_eq!(
            parse_annotated("[a : x", "i"),
            Err(AnnotError::UnbalancedOpen { position: 0 })
        );
        assert_eq!(
            parse_annotated("a ] b", "i"),
            Err(AnnotError::UnexpectedClose { position: 2 })
        );
        assert_eq!(
            parse_annotated("[a : [b : c]]", "i"),
            Err(AnnotError::Nested { position: 5 })
        );
        assert_eq!(
            parse_annotated("x [ : y]", "i"),
            Err(AnnotError::EmptyLabel { position: 3 })
        );
        assert_eq!(
            parse_annotated("x [l :  ]", "i"),
            Err(AnnotError::EmptySurface { position: 6 })
        );
        assert_eq!(
            parse_annotated("[ab]", "i"),
            Err(AnnotError::MissingSeparator { position: 0 })
        );
        assert!(matches!(
            parse_annotated("[a b : c]", "i"),
            Err(AnnotError::InvalidLabel { position: 1, .. })
        ));
    }

    #[test]
    fn tolerant_spacing_and_normalization() {
        let u = parse_annotated("  réveille-moi à   [time:cinq  heures]  ", "alarm_set").unwrap();
        assert_eq!(u.plain, "réveille-moi à cinq heures");
        assert_eq!(u.spans, vec![span("time", "cinq heures", 15, 26)]);
        assert_eq!(u.serialize().unwrap(), "réveille-moi à [time : cinq heures]");
    }

    #[test]
    fn surface_may_contain_colon() {
        let u = parse_annotated("at [time : 10:30]", "i").unwrap();
        assert_eq!(u.spans[0].surface, "10:30");
    }

    #[test]
    fn whole_text_span() {
        let u = AnnotatedUtterance {
            plain: "dakar ak thiès".into(),
            spans: vec![span("place", "dakar ak thiès", 0, 14)],
            intent: "i".into(),
        };
        let markup = u.serialize().unwrap();
        assert_eq!(markup, "[place : dakar ak thiès]");
        assert_eq!(parse_annotated(&markup, "i").unwrap(), u);
    }

    #[test]
    fn training_markup() {
        let u = parse_annotated(ROOM, "book_room").unwrap();
        assert_eq!(
            u.to_training_markup().unwrap(),
            "book me a room from [July 15](start_date) to [July 24](end_date)"
        );
        let adjacent = AnnotatedUtterance {
            plain: "a b".into(),
            spans: vec![span("l1", "a", 0, 1), span("l2", "b", 2, 3)],
            intent: "i".into(),
        };
        assert_eq!(adjacent.to_training_markup().unwrap(), "[a](l1) [b](l2)");
        assert_eq!(parse_training_markup("[a](l1) [b](l2)", "i").unwrap(), adjacent);

        let bad = AnnotatedUtterance {
            plain: "a".into(),
            spans: vec![span("l(1)", "a", 0, 1)],
            intent: "i".into(),
        };
        assert_eq!(
            bad.to_training_markup(),
            Err(AnnotError::IllegalTrainingLabel("l(1)".into()))
        );
    }

    #[test]
    fn serialize_rejects_invalid() {
        let overlapping = AnnotatedUtterance {
            plain: "abc".into(),
            spans: vec![span("x", "ab", 0, 2), span("y", "bc", 1, 3)],
            intent: "i".into(),
        };
        assert!(matches!(overlapping.serialize(), Err(AnnotError::Invariant(_))));
        let wrong_surface = AnnotatedUtterance {
            plain: "abc".into(),
            spans: vec![span("x", "zz", 0, 2)],
            intent: "i".into(),
        };
        assert!(wrong_surface.serialize().is_err());
        let padded = AnnotatedUtterance {
            plain: "a b".into(),
            spans: vec![span("x", " b", 1, 3)],
            intent: "i".into(),
        };
        assert!(padded.serialize().is_err());
    }

    #[test]
    fn char_slice_counts_scalars() {
        assert_eq!(char_slice("ñaŋ ëx", 1, 3), "aŋ");
        assert_eq!(char_slice("abc", 3, 3), "");
        assert_eq!(char_slice("abc", 0, 3), "abc");
    }

    pub(crate) fn utterance_strategy() -> impl Strategy<Value = AnnotatedUtterance> {
        let token = "[a-zA-Z0-9ëñŋéàçóú'$,.:!?-]{1,8}";
        let segment = (prop::collection::vec(token, 1..4), prop::option::of("[a-z_]{1,10}"));
        prop::collection::vec(segment, 0..7).prop_map(|segments| {
            let mut builder = PlainBuilder::new();
            let mut budget = 5;
            for (words, label) in segments {
                let text = words.join(" ");
                match label {
                    Some(label) if budget > 0 => {
                        budget -= 1;
                        builder.push_span(&label, &text);
                    }
                    _ => builder.push_text(&text),
                }
                builder.push_text(" ");
            }
            builder.finish("intent")
        })
    }

    proptest! {
        #[test]
        fn round_trip(u in utterance_strategy()) {
            prop_assert!(u.validate().is_ok());
            let markup = u.serialize().unwrap();
            prop_assert_eq!(parse_annotated(&markup, "intent").unwrap(), u.clone());
            let training = u.to_training_markup().unwrap();
            prop_assert_eq!(parse_training_markup(&training, "intent").unwrap(), u);
        }

        #[test]
        fn offsets_are_sound(markup in "[a-z \\[\\]:ë]{0,40}") {
            if let Ok(u) = parse_annotated(&markup, "i") {
                for s in &u.spans {
                    prop_assert_eq!(char_slice(&u.plain, s.start, s.end), s.surface.as_str());
                }
            }
        }
    }
}
