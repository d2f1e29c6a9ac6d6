//! Topic refinement: LLM topic pools are embedded, compared with an
//! assignment-based similarity, linked into a document/topic/word graph,
//! refined with an edge-conditioned graph network and reduced to k
//! representative phrases.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod fusion;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod sgs;
pub mod stats;

pub use error::{Error, ErrorCategory, Result};
