//! File formats, synthetic corpora and the experiment harness around
//! [`fairrank_core`].
//!
//! The `fairrank` binary exposes these as subcommands; see the README for
//! the command-line interface.

pub mod error;
pub mod experiment;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
pub use experiment::{
    run_experiment, select_queries, split_queries, ExperimentSpec, Method, QueryFilter, Report, ReportRow, Summary,
};
pub use fairrank_core as core;
pub use io::{load_catalog, save_catalog, CatalogPaths};
pub use synth::{generate_synthetic, SyntheticCorpus, SyntheticSpec};
