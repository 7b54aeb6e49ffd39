//! Fairness-aware re-ranking of nearest-neighbour results.
//!
//! Items live in a [`Catalog`] of dense descriptors with curated tags, from
//! which demographic group memberships are derived. Averaging each group's
//! descriptors gives its fairness representation. Queries retrieve an exact
//! KNN [`CandidatePool`], which [`rerank`] reorders greedily, trading
//! relevance against a diversity term. With [`Kernel::Fmmr`] that term
//! rewards items whose distances to the group representations differ from
//! those already selected, which pulls under-represented groups into the
//! top of the list.
//!
//! The [`metrics`] and [`tuning`] modules implement precision@k,
//! fairness-ratio@k, entropy@k, Student-t intervals and the constrained grid
//! search for the trade-off parameter.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, synthetic
//! corpora and the command-line harness live in the `fairrank` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod catalog;
pub mod distance;
pub mod error;
pub mod metrics;
pub mod representations;
pub mod rerank;
pub mod retrieval;
pub mod tuning;

pub use catalog::{normalize_tag, Catalog, EmbeddingItem, GroupMapping};
pub use distance::{distance, Metric};
pub use error::{Error, Result};
pub use metrics::{
    entropy_at_k, evaluate_query, fairness_ratio_at_k, precision_at_k, t_confidence_interval, ConfidenceInterval,
    QueryEvaluation,
};
pub use representations::{build_representations, sample_count, FairnessRepresentation, RepresentationSet};
pub use rerank::{classic_sim, fsim, rerank, Kernel, RankedEntry, RankedResult, RerankConfig};
pub use retrieval::{knn, knn_for_item, CandidatePool, ScoredCandidate};
pub use tuning::{
    best_lambda_for_query, matched_fairness_lambda, tune, CurvePoint, FairnessObjective, MatchedLambda, QueryTuning,
    TuningConfig, TuningResult,
};
