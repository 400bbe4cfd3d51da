//! Symbolic mirroring: explaining and unifying disagreeing classifier views
//! with an ontology, plus the program-graph runtime and a small STRIPS
//! planner that consumes the unified knowledge.
//!
//! Module map:
//!
//! - [`kb`]: the `.smk` ontology format, builder and validation
//! - [`reasoner`]: ancestors, properties, lifted relationships, LCA
//! - [`converge`]: views, `explain`, `converge` and outcome classification
//! - [`graph`]: program graphs, kinds, meta-points and DOT export
//! - [`predictions`]: classifier output corpora and the remote contract
//! - [`study`]: corpus aggregation, chi-squared tests and reports
//! - [`planner`]: STRIPS domains, BFS planning and fact generation

pub mod converge;
pub mod graph;
pub mod kb;
pub mod planner;
pub mod predictions;
pub mod reasoner;
pub mod study;

pub use converge::{
    classify_outcome, converge, explain, normalize, Convergence, Explanation, Outcome, OutcomeKind,
    View,
};
pub use graph::{draw, get_classifiers, ProgramGraph, Runtime, Value};
pub use kb::{parse_kb, serialize_kb, validate_kb, KbBuilder, KbError, KnowledgeBase};
pub use planner::{parse_domain, plan, Plan, PlanningProblem};
pub use predictions::{
    load_predictions, parse_predictions, top_prediction, PredictionCorpus, PredictionDistribution,
};
pub use study::{chi_squared_2x1, encode_stream, run_corpus, CorpusReport};
