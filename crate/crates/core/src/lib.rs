//! Cross-lingual annotation projection for task-oriented dialogue data.
//!
//! Slot and intent annotations are carried from a resource-rich language to
//! a low-resource one through any machine translation backend: spans are
//! masked with `$0N$` identifiers, the sentence and the spans are translated,
//! and surviving identifiers are backfilled with the translated spans. The
//! crate also measures how well marker schemes survive a backend, scores
//! intent/slot predictions, and generates chatbot project scaffolds from
//! spreadsheet-style ontologies.

pub mod annot;
pub mod botgen;
pub mod corpus;
pub mod eval;
pub mod markerlab;
pub mod par;
pub mod projection;
pub mod translator;

pub use annot::{AnnotError, AnnotatedUtterance, Span};
pub use corpus::{Dataset, DatasetStats, Example, SplitSpec};
pub use projection::{project_dataset, Identifier, ProjectionOptions, QuarantineReason};
pub use translator::{TranslationBackend, TranslationRequest, Translator};
