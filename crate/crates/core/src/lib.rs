//! Fairness auditing and debiasing for binary text classifiers.
//!
//! The crate measures three dataset/model bias sources (selection bias,
//! overamplification bias, and externally supplied representation-bias
//! scores), applies removal procedures (counterfactual perturbation,
//! re-stratification, bias-subspace projection) and evaluates group and
//! counterfactual fairness of classifier outputs.
//!
//! Everything is file-oriented: corpora are JSON Lines, embeddings are JSON
//! Lines or a small binary format, and reports are JSON. The models under
//! audit stay external; the [`harness`] module ships a hashed bag-of-words
//! logistic regression so the whole workflow can run without them.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod schema;
pub mod stratify;
pub mod subspace;
pub mod text;

pub use error::{Error, Result};

/// Version stamped into every serialized report.
pub const FORMAT_VERSION: u32 = 1;
