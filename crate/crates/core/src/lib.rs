//! Acronym identification and disambiguation toolkit.
//!
//! Two tasks share this crate:
//!
//! * **Identification** — locating acronym (short-form) and expansion
//!   (long-form) spans in tokenized sentences, treated as BIO sequence
//!   tagging. Taggers include a linear-chain CRF ([`crf`]), a rule-based
//!   extractor in the Schwartz–Hearst lineage ([`rulebased`]), and
//!   ensembles of either ([`ensemble`]).
//! * **Disambiguation** — choosing the correct expansion of an acronym
//!   occurrence from a dictionary of candidates, treated as span selection
//!   over a constructed input sequence ([`disambig`]).
//!
//! [`corpus`] loads the data files, [`tagscheme`] handles BIO/BIOless tag
//! transforms, [`features`] builds the CRF feature sets, and [`eval`]
//! scores predictions with span-level macro P/R/F1.

pub mod corpus;
pub mod crf;
pub mod disambig;
pub mod ensemble;
pub mod eval;
pub mod features;
pub mod rulebased;
pub mod tagscheme;

pub use corpus::{AdInstance, AiInstance, ExpansionDictionary, FoldAssignment};
pub use crf::{CrfModel, TrainConfig};
pub use disambig::{AdInput, AdPrediction, SpanScores};
pub use ensemble::{BlendModel, VoteTally};
pub use eval::{AdMetrics, AiMetrics};
pub use features::{FeatureSet, PosTag};
pub use tagscheme::{Mention, MentionClass, Tag, TagScheme, TaggedSentence};
