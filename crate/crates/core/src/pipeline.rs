//! End-to-end expansion: embed the query, fetch suggestions, keep the
//! nearest ones, cluster them with the query tokens, and render the result
//! as an AND-of-OR query.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::boolean_query::{flat_or, formulate, render, QueryAst, RenderError};
use crate::clustering::{optimize_grouping_with, ClusterError, Grouping, OptimizerOptions};
use crate::ranking::{select_top, RankedWord};
use crate::suggestions::{ProviderError, Suggestion, SuggestionProvider};
use crate::vector_model::{normalize, ModelError, VectorModel, WordVector};

pub const DEFAULT_MAX_SUGGESTIONS: usize = 50;
pub const DEFAULT_TOP_N: usize = 25;
pub const DEFAULT_CLUSTERS: usize = 3;
pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpansionParams {
    /// Suggestions requested from the provider.
    pub max_suggestions: usize,
    /// Nearest suggestions kept for clustering.
    pub top_n: usize,
    pub clusters: usize,
    pub iterations: usize,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self {
            max_suggestions: DEFAULT_MAX_SUGGESTIONS,
            top_n: DEFAULT_TOP_N,
            clusters: DEFAULT_CLUSTERS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("{0} must be at least 1")]
    NotPositive(&'static str),
    #[error("top-n ({top_n}) exceeds max-suggestions ({max_suggestions})")]
    TopNExceedsMax {
        top_n: usize,
        max_suggestions: usize,
    },
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.max_suggestions == 0 {
            return Err(ParamsError::NotPositive("max-suggestions"));
        }
        if self.top_n == 0 {
            return Err(ParamsError::NotPositive("top-n"));
        }
        if self.clusters == 0 {
            return Err(ParamsError::NotPositive("clusters"));
        }
        if self.top_n > self.max_suggestions {
            return Err(ParamsError::TopNExceedsMax {
                top_n: self.top_n,
                max_suggestions: self.max_suggestions,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("query not embeddable; out-of-vocabulary tokens: {}", .0.join(", "))]
    OutOfVocabulary(Vec<String>),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("clustering failed: {0}")]
    Clustering(#[from] ClusterError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("query is empty")]
    EmptyQuery,
}

impl From<ModelError> for ExpandError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::QueryNotEmbeddable { oov } => Self::OutOfVocabulary(oov),
            other => Self::OutOfVocabulary(vec![other.to_string()]),
        }
    }
}

/// Per-stage results of one expansion.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub query: String,
    pub query_vector: WordVector,
    pub suggestions: Vec<Suggestion>,
    pub selected: Vec<RankedWord>,
    pub grouping: Grouping,
    pub ast: QueryAst,
    pub rendered: String,
    pub accepted_moves: usize,
    pub restarts: usize,
    pub clustering_time: Duration,
}

impl Expansion {
    /// No suggestion survived the vocabulary filter; the expansion holds
    /// only the query's own tokens.
    pub fn is_degraded(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Runs the expansion pipeline against a model and a suggestion provider.
pub struct Expander<'a> {
    model: &'a VectorModel,
    provider: &'a dyn SuggestionProvider,
    params: ExpansionParams,
}

impl<'a> Expander<'a> {
    pub fn new(
        model: &'a VectorModel,
        provider: &'a dyn SuggestionProvider,
        params: ExpansionParams,
    ) -> Self {
        Self {
            model,
            provider,
            params,
        }
    }

    pub fn params(&self) -> &ExpansionParams {
        &self.params
    }

    pub fn model(&self) -> &VectorModel {
        self.model
    }

    pub fn provider(&self) -> &dyn SuggestionProvider {
        self.provider
    }

    pub fn suggest(&self, query: &str) -> Result<Vec<Suggestion>, ProviderError> {
        self.provider
            .suggest(&normalize(query), self.params.max_suggestions)
    }

    /// Full expansion including the provider call.
    pub fn expand(&self, query: &str, seed: u64) -> Result<Expansion, ExpandError> {
        let query_vector = self.embed(query)?;
        let suggestions = self.suggest(query)?;
        self.expand_from(query, query_vector, suggestions, seed)
    }

    /// Expansion from already-fetched suggestions.
    pub fn expand_with(
        &self,
        query: &str,
        suggestions: Vec<Suggestion>,
        seed: u64,
    ) -> Result<Expansion, ExpandError> {
        let query_vector = self.embed(query)?;
        self.expand_from(query, query_vector, suggestions, seed)
    }

    /// The unoptimized baseline: query OR every suggestion.
    pub fn flat_expansion(
        &self,
        query: &str,
        suggestions: &[Suggestion],
    ) -> Result<QueryAst, ExpandError> {
        flat_or(query, suggestions.iter().map(|s| s.term.as_str())).ok_or(ExpandError::EmptyQuery)
    }

    fn embed(&self, query: &str) -> Result<WordVector, ExpandError> {
        if query.trim().is_empty() {
            return Err(ExpandError::EmptyQuery);
        }
        Ok(self.model.embed_query(query)?)
    }

    fn expand_from(
        &self,
        query: &str,
        query_vector: WordVector,
        suggestions: Vec<Suggestion>,
        seed: u64,
    ) -> Result<Expansion, ExpandError> {
        let selected = select_top(self.model, &query_vector, &suggestions, self.params.top_n);
        let vectors = clustering_input(self.model, query, &selected);

        let started = Instant::now();
        let (grouping, trace) = optimize_grouping_with(
            &vectors,
            self.params.clusters,
            OptimizerOptions::new(self.params.iterations, seed),
        )?;
        let clustering_time = started.elapsed();

        let ast = formulate(&grouping);
        let rendered = render(&ast)?;
        Ok(Expansion {
            query: normalize(query),
            query_vector,
            suggestions,
            selected,
            grouping,
            ast,
            rendered,
            accepted_moves: trace.accepted_moves,
            restarts: trace.restarts,
            clustering_time,
        })
    }
}

/// The query's in-vocabulary tokens followed by the selected suggestions,
/// without repeated tokens.
pub fn clustering_input(
    model: &VectorModel,
    query: &str,
    selected: &[RankedWord],
) -> Vec<WordVector> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for token in query.split_whitespace() {
        if let Some(v) = model.lookup(token) {
            if seen.insert(v.token.clone()) {
                out.push(v.clone());
            }
        }
    }
    for r in selected {
        if seen.insert(r.word.token.clone()) {
            out.push(r.word.clone());
        }
    }
    out
}

/// Seed for the query at `index` in a batch.
pub fn query_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}
