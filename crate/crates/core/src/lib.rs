//! Knowledge-grounded hypothesis generation.
//!
//! A question about two entities is answered by retrieving relation chains
//! from a knowledge graph, enriching a literature query with them, prompting
//! a generator for step-by-step reasoning and a label, and checking every
//! step against direct graph triples to obtain a confidence score.

pub mod agents;
pub mod chains;
pub mod dataset;
pub mod eval;
pub mod kg;
pub mod linker;
pub mod lit;
pub mod pipeline;
pub mod scalar;
pub mod seeds;
pub mod verifier;

pub use agents::Label;
pub use kg::{EntityId, KnowledgeGraph, MaskSpec, RelationType, Triple};
pub use scalar::{Exact, Real, Scalar};

pub type Bm25Params64 = lit::Bm25Params<f64>;
pub type SearchHit64 = lit::SearchHit<f64>;
pub type Metrics64 = eval::Metrics<f64>;
pub type ExactMetrics = eval::Metrics<Exact>;
pub type Score64 = eval::Score<f64>;
pub type ExactScore = eval::Score<Exact>;
