//! Query expansion with word embeddings.
//!
//! A short user query is expanded into a Boolean query in four steps:
//!
//! 1. related words are fetched from a [`suggestions`] provider;
//! 2. the words nearest the query in embedding space are kept ([`ranking`]);
//! 3. they are grouped by orientation with a seeded optimizer ([`clustering`]);
//! 4. each group becomes an OR clause and the clauses are AND-ed
//!    ([`boolean_query`]).
//!
//! [`evaluation`] scores expansions against human-written baselines over a
//! document corpus, and [`cli`] exposes everything as the `qexpand` binary.

pub mod bench;
pub mod boolean_query;
pub mod cli;
pub mod clustering;
pub mod evaluation;
pub mod parallel;
pub mod pipeline;
pub mod ranking;
pub mod suggestions;
pub mod vector_model;

pub use boolean_query::{parse, render, Document, QueryAst};
pub use clustering::{
    brute_force_grouping, cluster_score, group_score, optimize_grouping, Cluster, Grouping,
};
pub use pipeline::{Expander, Expansion, ExpansionParams};
pub use vector_model::{VectorModel, WordVector};
