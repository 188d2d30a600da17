//! Linear model trees with relaxed-Lasso leaves.
//!
//! The crate grows shallow regression trees whose leaves hold sparse linear
//! models, guards predictions with per-leaf truncation and out-of-distribution
//! checks, and explains fitted models through ghost-variable importance,
//! accumulated local effects, linear SHAP values and plain-text reports.

pub mod bench;
pub mod data;
pub mod error;
pub mod explain;
pub mod linalg;
pub mod linmod;
pub mod llm;
pub mod robust;
pub mod svg;
pub mod tree;

pub use error::{Result, TrustError};
