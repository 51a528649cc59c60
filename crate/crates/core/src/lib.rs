//! Preference queries over relations whose attributes are organised in
//! taxonomies.
//!
//! Preferences are written as formulas (see [`formula`]), rewritten with the
//! transitive-closure and specificity operators (see [`rewrite`]) and
//! evaluated with a block-nested-loop Best operator (see [`eval`]). The
//! [`oracle`] module recomputes the rewriting over explicit tuple-pair sets
//! for cross-checking, and [`bench`] generates synthetic workloads.

pub mod bench;
pub mod eval;
pub mod fixtures;
pub mod formula;
pub mod oracle;
pub mod rewrite;
pub mod taxonomy;

pub use eval::{best, naive_best, BestOptions, BestResult};
pub use formula::{Clause, Formula, Predicate, Schema, Statement, TRelation, TTuple};
pub use rewrite::{apply_sequence, canonicalize, Canonical};
pub use taxonomy::{Taxonomy, ValueId};
