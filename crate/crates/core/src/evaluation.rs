//! Relative evaluation of generated expansions against human-written
//! baselines over a fixed-order document corpus.
//!
//! Every technique produces a per-document selection vector. Rates are
//! computed against the baseline's vector:
//!
//! * true positive rate: `100 * |other ∧ base| / |base|`
//! * false positive rate: `100 * |other ∧ ¬base| / |¬base|`
//! * accuracy: `(tp + tn) / (tp + tn + fp + fn)`

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boolean_query::{
    document_tokens, parse, render, CompiledQuery, Document, MatchOptions, QueryAst,
};
use crate::parallel::{map_ordered, Execution};
use crate::pipeline::{query_seed, Expander};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("scoring vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rate undefined: baseline selects {0}")]
    UndefinedRate(&'static str),
    #[error("accuracy undefined for an empty corpus")]
    EmptyCorpus,
}

/// Column names used when reading a corpus CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusColumns {
    pub text: String,
    pub id: Option<String>,
    pub title: Option<String>,
}

impl Default for CorpusColumns {
    fn default() -> Self {
        Self {
            text: "content".into(),
            id: None,
            title: None,
        }
    }
}

/// A CSV row that could not be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based record number, header excluded.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct CorpusLoad {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedRow>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Reads documents in file order. Rows that fail to parse are skipped and
/// reported; missing ids are replaced by the row number.
pub fn load_corpus(
    path: impl AsRef<Path>,
    columns: &CorpusColumns,
) -> Result<CorpusLoad, CorpusError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let missing = |column: &str| CorpusError::MissingColumn {
        path: path.to_path_buf(),
        column: column.to_string(),
    };
    let text_idx = column_index(&headers, &columns.text).ok_or_else(|| missing(&columns.text))?;
    let id_idx = match &columns.id {
        Some(c) => Some(column_index(&headers, c).ok_or_else(|| missing(c))?),
        None => None,
    };
    let title_idx = match &columns.title {
        Some(c) => Some(column_index(&headers, c).ok_or_else(|| missing(c))?),
        None => None,
    };

    let mut documents = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedRow {
                    row,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let id = id_idx.map(field).unwrap_or_else(|| row.to_string());
        if !ids.insert(id.clone()) {
            skipped.push(SkippedRow {
                row,
                reason: format!("duplicate id {id:?}"),
            });
            continue;
        }
        documents.push(Document {
            id,
            title: title_idx.map(field).unwrap_or_default(),
            text: field(text_idx),
        });
    }
    Ok(CorpusLoad { documents, skipped })
}

/// Documents with their token streams computed once.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    tokens: Vec<Vec<String>>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, options: MatchOptions) -> Self {
        let tokens = documents
            .iter()
            .map(|d| document_tokens(d, options))
            .collect();
        Self { documents, tokens }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// One selection bit per corpus document, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringVector {
    pub bits: Vec<bool>,
}

impl ScoringVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn score_corpus(ast: &QueryAst, corpus: &Corpus) -> ScoringVector {
    score_corpus_with(ast, corpus, Execution::Parallel)
}

pub fn score_corpus_with(ast: &QueryAst, corpus: &Corpus, exec: Execution) -> ScoringVector {
    let compiled = CompiledQuery::new(ast);
    ScoringVector::new(map_ordered(&corpus.tokens, exec, |_, tokens| {
        compiled.matches_tokens(tokens)
    }))
}

fn check_len(a: &ScoringVector, b: &ScoringVector) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Percentage of baseline-selected documents also selected by `other`.
pub fn true_positive_rate(other: &ScoringVector, base: &ScoringVector) -> Result<f64, MetricError> {
    check_len(other, base)?;
    let selected = base.count_ones();
    if selected == 0 {
        return Err(MetricError::UndefinedRate("nothing"));
    }
    let both = other
        .bits
        .iter()
        .zip(&base.bits)
        .filter(|(&o, &b)| o && b)
        .count();
    Ok(100.0 * both as f64 / selected as f64)
}

/// Percentage of baseline-rejected documents that `other` selects.
pub fn false_positive_rate(
    other: &ScoringVector,
    base: &ScoringVector,
) -> Result<f64, MetricError> {
    check_len(other, base)?;
    let rejected = base.len() - base.count_ones();
    if rejected == 0 {
        return Err(MetricError::UndefinedRate("everything"));
    }
    let extra = other
        .bits
        .iter()
        .zip(&base.bits)
        .filter(|(&o, &b)| o && !b)
        .count();
    Ok(100.0 * extra as f64 / rejected as f64)
}

/// Confusion counts and derived metrics for one technique and query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Percent; `None` when the baseline selects nothing.
    pub tp_rate: Option<f64>,
    /// Percent; `None` when the baseline selects everything.
    pub fp_rate: Option<f64>,
    pub accuracy: f64,
    pub elapsed_secs: f64,
}

pub fn confusion_and_accuracy(
    other: &ScoringVector,
    base: &ScoringVector,
) -> Result<EvalMetrics, MetricError> {
    check_len(other, base)?;
    if base.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&o, &b) in other.bits.iter().zip(&base.bits) {
        match (o, b) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalMetrics {
        tp,
        tn,
        fp,
        fn_,
        tp_rate: true_positive_rate(other, base).ok(),
        fp_rate: false_positive_rate(other, base).ok(),
        accuracy: (tp + tn) as f64 / (tp + tn + fp + fn_) as f64,
        elapsed_secs: 0.0,
    })
}

/// A raw user query with an optional human-written expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub raw_query: String,
    pub baseline_expansion: Option<String>,
}

/// Reads a `query,expansion` CSV (the expansion column is optional).
pub fn load_queries(
    path: impl AsRef<Path>,
) -> Result<(Vec<QueryRecord>, Vec<SkippedRow>), CorpusError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let query_idx = column_index(&headers, "query").ok_or_else(|| CorpusError::MissingColumn {
        path: path.to_path_buf(),
        column: "query".into(),
    })?;
    let expansion_idx = column_index(&headers, "expansion");

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedRow {
                    row,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let raw_query = record.get(query_idx).unwrap_or("").trim().to_string();
        if raw_query.is_empty() {
            skipped.push(SkippedRow {
                row,
                reason: "empty query".into(),
            });
            continue;
        }
        let baseline_expansion = expansion_idx
            .and_then(|i| record.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        records.push(QueryRecord {
            raw_query,
            baseline_expansion,
        });
    }
    Ok((records, skipped))
}

/// Minimum, quartiles, and maximum (linear interpolation between ranks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumberSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

pub const FLAT_TECHNIQUE: &str = "flat_or";
pub const CLUSTERED_TECHNIQUE: &str = "clustered";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueResult {
    pub technique: String,
    pub expansion: Option<String>,
    pub metrics: Option<EvalMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub index: usize,
    pub query: String,
    pub baseline: String,
    pub baseline_selected: usize,
    pub techniques: Vec<TechniqueResult>,
}

/// A record that could not be evaluated at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub index: usize,
    pub query: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSummary {
    pub technique: String,
    pub evaluated: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_elapsed_secs: Option<f64>,
    pub tp_rate: Option<FiveNumberSummary>,
    pub fp_rate: Option<FiveNumberSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub provider: String,
    pub max_suggestions: usize,
    pub top_n: usize,
    pub clusters: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: ReportSettings,
    pub corpus_size: usize,
    pub records: usize,
    pub with_baseline: usize,
    pub evaluated: usize,
    pub rows: Vec<QueryRow>,
    pub failures: Vec<RecordFailure>,
    pub summaries: Vec<TechniqueSummary>,
}

impl EvalReport {
    /// Zeroes every wall-clock field so reports can be compared byte for byte.
    pub fn strip_timings(&mut self) {
        for row in &mut self.rows {
            for t in &mut row.techniques {
                if let Some(m) = &mut t.metrics {
                    m.elapsed_secs = 0.0;
                }
            }
        }
        for s in &mut self.summaries {
            if s.mean_elapsed_secs.is_some() {
                s.mean_elapsed_secs = Some(0.0);
            }
        }
    }

    pub fn summary(&self, technique: &str) -> Option<&TechniqueSummary> {
        self.summaries.iter().find(|s| s.technique == technique)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per (query, technique).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "index",
            "query",
            "technique",
            "expansion",
            "tp",
            "tn",
            "fp",
            "fn",
            "tp_rate",
            "fp_rate",
            "accuracy",
            "elapsed_secs",
            "error",
        ])
        .expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for t in &row.techniques {
                let m = t.metrics.as_ref();
                w.write_record([
                    row.index.to_string(),
                    row.query.clone(),
                    t.technique.clone(),
                    t.expansion.clone().unwrap_or_default(),
                    m.map(|m| m.tp.to_string()).unwrap_or_default(),
                    m.map(|m| m.tn.to_string()).unwrap_or_default(),
                    m.map(|m| m.fp.to_string()).unwrap_or_default(),
                    m.map(|m| m.fn_.to_string()).unwrap_or_default(),
                    opt(m.and_then(|m| m.tp_rate)),
                    opt(m.and_then(|m| m.fp_rate)),
                    m.map(|m| m.accuracy.to_string()).unwrap_or_default(),
                    m.map(|m| m.elapsed_secs.to_string()).unwrap_or_default(),
                    t.error.clone().unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("no record has a baseline expansion")]
    NoBaselines,
    #[error("corpus is empty")]
    EmptyCorpus,
}

enum RowOutcome {
    Evaluated(QueryRow),
    Failed(RecordFailure),
}

fn technique_error(technique: &str, error: String) -> TechniqueResult {
    TechniqueResult {
        technique: technique.into(),
        expansion: None,
        metrics: None,
        error: Some(error),
    }
}

fn scored(
    technique: &str,
    ast: &QueryAst,
    corpus: &Corpus,
    base: &ScoringVector,
    started: Instant,
    extra_secs: f64,
) -> TechniqueResult {
    let expansion = match render(ast) {
        Ok(s) => s,
        Err(e) => return technique_error(technique, e.to_string()),
    };
    let bits = score_corpus_with(ast, corpus, Execution::Sequential);
    match confusion_and_accuracy(&bits, base) {
        Ok(mut m) => {
            m.elapsed_secs = started.elapsed().as_secs_f64() + extra_secs;
            TechniqueResult {
                technique: technique.into(),
                expansion: Some(expansion),
                metrics: Some(m),
                error: None,
            }
        }
        Err(e) => technique_error(technique, e.to_string()),
    }
}

fn evaluate_record(
    index: usize,
    record: &QueryRecord,
    baseline: &str,
    corpus: &Corpus,
    expander: &Expander<'_>,
    seed: u64,
) -> RowOutcome {
    let fail = |error: String| {
        RowOutcome::Failed(RecordFailure {
            index,
            query: record.raw_query.clone(),
            error,
        })
    };
    let base_ast = match parse(baseline) {
        Ok(ast) => ast,
        Err(e) => return fail(format!("unparseable baseline: {e}")),
    };
    let base = score_corpus_with(&base_ast, corpus, Execution::Sequential);

    let fetch_started = Instant::now();
    let suggestions = match expander.suggest(&record.raw_query) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let fetch_secs = fetch_started.elapsed().as_secs_f64();

    let started = Instant::now();
    let flat = match expander.flat_expansion(&record.raw_query, &suggestions) {
        Ok(ast) => scored(FLAT_TECHNIQUE, &ast, corpus, &base, started, fetch_secs),
        Err(e) => technique_error(FLAT_TECHNIQUE, e.to_string()),
    };

    let started = Instant::now();
    let clustered =
        match expander.expand_with(&record.raw_query, suggestions, query_seed(seed, index)) {
            Ok(expansion) => scored(
                CLUSTERED_TECHNIQUE,
                &expansion.ast,
                corpus,
                &base,
                started,
                fetch_secs,
            ),
            Err(e) => technique_error(CLUSTERED_TECHNIQUE, e.to_string()),
        };

    RowOutcome::Evaluated(QueryRow {
        index,
        query: record.raw_query.clone(),
        baseline: baseline.to_string(),
        baseline_selected: base.count_ones(),
        techniques: vec![flat, clustered],
    })
}

fn summarize(technique: &str, rows: &[QueryRow]) -> TechniqueSummary {
    let metrics: Vec<&EvalMetrics> = rows
        .iter()
        .flat_map(|r| &r.techniques)
        .filter(|t| t.technique == technique)
        .filter_map(|t| t.metrics.as_ref())
        .collect();
    let mean = |f: &dyn Fn(&EvalMetrics) -> f64| {
        (!metrics.is_empty())
            .then(|| metrics.iter().map(|m| f(m)).sum::<f64>() / metrics.len() as f64)
    };
    let tp: Vec<f64> = metrics.iter().filter_map(|m| m.tp_rate).collect();
    let fp: Vec<f64> = metrics.iter().filter_map(|m| m.fp_rate).collect();
    TechniqueSummary {
        technique: technique.into(),
        evaluated: metrics.len(),
        mean_accuracy: mean(&|m| m.accuracy),
        mean_elapsed_secs: mean(&|m| m.elapsed_secs),
        tp_rate: FiveNumberSummary::from_values(&tp),
        fp_rate: FiveNumberSummary::from_values(&fp),
    }
}

/// Evaluates every record that has a baseline, in parallel across records.
/// Per-record problems end up in the report rather than aborting the batch.
pub fn evaluate_batch(
    records: &[QueryRecord],
    corpus: &Corpus,
    expander: &Expander<'_>,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport, BatchError> {
    if corpus.is_empty() {
        return Err(BatchError::EmptyCorpus);
    }
    let with_baseline = records
        .iter()
        .filter(|r| r.baseline_expansion.is_some())
        .count();
    if with_baseline == 0 {
        return Err(BatchError::NoBaselines);
    }
    let outcomes = map_ordered(records, exec, |index, record| {
        record
            .baseline_expansion
            .as_deref()
            .map(|baseline| evaluate_record(index, record, baseline, corpus, expander, seed))
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            RowOutcome::Evaluated(row) => rows.push(row),
            RowOutcome::Failed(f) => failures.push(f),
        }
    }
    let params = expander.params();
    Ok(EvalReport {
        settings: ReportSettings {
            provider: expander.provider().name().into(),
            max_suggestions: params.max_suggestions,
            top_n: params.top_n,
            clusters: params.clusters,
            iterations: params.iterations,
            seed,
        },
        corpus_size: corpus.len(),
        records: records.len(),
        with_baseline,
        evaluated: rows.len(),
        summaries: vec![
            summarize(FLAT_TECHNIQUE, &rows),
            summarize(CLUSTERED_TECHNIQUE, &rows),
        ],
        rows,
        failures,
    })
}
