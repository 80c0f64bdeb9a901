//! Loading of text word2vec models and token/query lookup.
//!
//! The on-disk format is the plain-text word2vec layout: a header line
//! `<vocab_size> <dimension>` followed by one `<token> <f1> ... <fd>` row per
//! word. Tokens are lowercased on load; the first occurrence of a token wins.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised while loading a model or embedding a query.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header at line 1: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: header declares {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component count mismatch at line {line}: expected {expected}, found {found}")]
    ComponentCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric component {value:?} at line {line}")]
    NonNumeric { line: usize, value: String },
    #[error("model has an empty vocabulary after filtering")]
    EmptyVocabulary,
    #[error("query not embeddable; out-of-vocabulary tokens: {}", oov.join(", "))]
    QueryNotEmbeddable { oov: Vec<String> },
}

/// Lowercases and trims a token or phrase.
pub fn normalize(text: &str) -> String {
    text.trim().to_lowercase()
}

/// A token together with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVector {
    pub token: String,
    pub components: Vec<f64>,
}

impl WordVector {
    pub fn new(token: impl Into<String>, components: Vec<f64>) -> Self {
        Self {
            token: token.into(),
            components,
        }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    /// Euclidean norm of the components.
    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

impl AsRef<[f64]> for WordVector {
    fn as_ref(&self) -> &[f64] {
        &self.components
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Non-fatal conditions observed while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadWarnings {
    /// Rows whose token was already present (first occurrence kept).
    pub duplicates: usize,
    /// Rows rejected because every component was zero.
    pub zero_norm: usize,
}

impl LoadWarnings {
    pub fn total(&self) -> usize {
        self.duplicates + self.zero_norm
    }
}

/// An immutable token to vector mapping with a fixed dimension.
#[derive(Debug, Clone)]
pub struct VectorModel {
    dimension: usize,
    entries: HashMap<String, WordVector>,
    warnings: LoadWarnings,
}

impl VectorModel {
    /// Builds a model from in-memory vectors, applying the same filtering
    /// rules as [`VectorModel::load`].
    pub fn from_vectors(
        dimension: usize,
        vectors: impl IntoIterator<Item = WordVector>,
    ) -> Result<Self, ModelError> {
        let mut model = Self {
            dimension,
            entries: HashMap::new(),
            warnings: LoadWarnings::default(),
        };
        for (i, v) in vectors.into_iter().enumerate() {
            if v.dimension() != dimension {
                return Err(ModelError::ComponentCount {
                    line: i + 1,
                    expected: dimension,
                    found: v.dimension(),
                });
            }
            model.insert(v);
        }
        if model.entries.is_empty() {
            return Err(ModelError::EmptyVocabulary);
        }
        Ok(model)
    }

    /// Loads a text word2vec model. When `expected_dim` is set, a header
    /// declaring a different dimension is rejected.
    pub fn load(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(BufReader::new(file), expected_dim).map_err(|e| match e {
            ModelError::Io { source, .. } => ModelError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        expected_dim: Option<usize>,
    ) -> Result<Self, ModelError> {
        let io_err = |source| ModelError::Io {
            path: PathBuf::new(),
            source,
        };
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(io_err)?,
            None => return Err(ModelError::MalformedHeader("file is empty".into())),
        };
        let dimension = parse_header(&header)?;
        if let Some(expected) = expected_dim {
            if expected != dimension {
                return Err(ModelError::DimensionMismatch {
                    expected,
                    found: dimension,
                });
            }
        }

        let mut model = Self {
            dimension,
            entries: HashMap::new(),
            warnings: LoadWarnings::default(),
        };
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(io_err)?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let mut components = Vec::with_capacity(dimension);
            for field in fields {
                let value: f64 = field.parse().map_err(|_| ModelError::NonNumeric {
                    line: line_no,
                    value: field.to_string(),
                })?;
                components.push(value);
            }
            if components.len() != dimension {
                return Err(ModelError::ComponentCount {
                    line: line_no,
                    expected: dimension,
                    found: components.len(),
                });
            }
            model.insert(WordVector::new(token, components));
        }
        if model.entries.is_empty() {
            return Err(ModelError::EmptyVocabulary);
        }
        Ok(model)
    }

    fn insert(&mut self, mut v: WordVector) {
        v.token = normalize(&v.token);
        if v.token.is_empty() {
            return;
        }
        if v.components.iter().all(|&c| c == 0.0) {
            self.warnings.zero_norm += 1;
            return;
        }
        if self.entries.contains_key(&v.token) {
            self.warnings.duplicates += 1;
            return;
        }
        self.entries.insert(v.token.clone(), v);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    pub fn warnings(&self) -> LoadWarnings {
        self.warnings
    }

    /// Looks up a token after normalization. Absence means out of vocabulary.
    pub fn lookup(&self, token: &str) -> Option<&WordVector> {
        self.entries.get(&normalize(token))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }

    /// All tokens in lexicographic order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut tokens: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        tokens.sort_unstable();
        tokens
    }

    /// Embeds a query as the mean of its in-vocabulary token vectors.
    pub fn embed_query(&self, query: &str) -> Result<WordVector, ModelError> {
        let normalized = query.split_whitespace().map(normalize).collect::<Vec<_>>();
        let mut sum = vec![0.0; self.dimension];
        let mut found = 0usize;
        let mut oov = Vec::new();
        for token in &normalized {
            match self.entries.get(token) {
                Some(v) => {
                    for (acc, c) in sum.iter_mut().zip(&v.components) {
                        *acc += c;
                    }
                    found += 1;
                }
                None => oov.push(token.clone()),
            }
        }
        if found == 0 {
            return Err(ModelError::QueryNotEmbeddable { oov });
        }
        if found > 1 {
            let n = found as f64;
            sum.iter_mut().for_each(|c| *c /= n);
        }
        Ok(WordVector::new(normalized.join(" "), sum))
    }

    /// Vector for a suggestion term. Single tokens are looked up directly;
    /// a multi-word phrase is embedded as the mean of its tokens and is only
    /// in vocabulary when every token is.
    pub fn phrase_vector(&self, phrase: &str) -> Option<WordVector> {
        if let Some(v) = self.lookup(phrase) {
            return Some(v.clone());
        }
        let tokens: Vec<&str> = phrase.split_whitespace().collect();
        if tokens.len() < 2 || tokens.iter().any(|t| !self.contains(t)) {
            return None;
        }
        self.embed_query(phrase).ok()
    }
}

fn parse_header(header: &str) -> Result<usize, ModelError> {
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [vocab, dim] = fields.as_slice() else {
        return Err(ModelError::MalformedHeader(format!(
            "expected `<vocab_size> <dimension>`, got {header:?}"
        )));
    };
    vocab
        .parse::<usize>()
        .map_err(|_| ModelError::MalformedHeader(format!("bad vocab size {vocab:?}")))?;
    match dim.parse::<usize>() {
        Ok(d) if d > 0 => Ok(d),
        _ => Err(ModelError::MalformedHeader(format!(
            "bad dimension {dim:?}"
        ))),
    }
}
