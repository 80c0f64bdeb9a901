//! Command-line front end: `expand`, `batch`, `evaluate`, `bench`, and
//! `model-info`.
//!
//! [`run`] takes explicit output streams so the commands can be driven from
//! tests exactly as the binary drives them.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, SweepConfig, SweepMode, VectorSource};
use crate::boolean_query::MatchOptions;
use crate::evaluation::{evaluate_batch, load_corpus, load_queries, Corpus, CorpusColumns};
use crate::parallel::{default_threads, map_ordered, with_threads, Execution};
use crate::pipeline::{query_seed, ExpandError, Expander, ExpansionParams};
use crate::suggestions::{
    DatamuseClient, DatamuseConfig, LocalLexicon, SuggestionProvider, DATAMUSE_URL_ENV,
};
use crate::vector_model::VectorModel;

/// Process exit codes. Values are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    /// Bad flags or inconsistent configuration.
    Config = 2,
    ModelLoad = 3,
    OutOfVocabulary = 4,
    Provider = 5,
    /// Unreadable or malformed input file (queries, corpus, lexicon).
    Input = 6,
    Output = 7,
    /// The clustering or rendering stage could not produce a query.
    Expansion = 8,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn new(status: ExitStatus, message: impl fmt::Display) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }
}

impl From<ExpandError> for CliError {
    fn from(e: ExpandError) -> Self {
        let status = match &e {
            ExpandError::OutOfVocabulary(_) | ExpandError::EmptyQuery => {
                ExitStatus::OutOfVocabulary
            }
            ExpandError::Provider(_) => ExitStatus::Provider,
            ExpandError::Clustering(_) | ExpandError::Render(_) => ExitStatus::Expansion,
        };
        Self::new(status, e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qexpand",
    version,
    about = "Embedding-guided Boolean query expansion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand one query into an AND-of-OR Boolean query.
    Expand(ExpandArgs),
    /// Expand every query of a CSV file.
    Batch(BatchArgs),
    /// Compare generated expansions with baseline expansions over a corpus.
    Evaluate(EvaluateArgs),
    /// Time the clustering step across iteration or word counts.
    Bench(BenchArgs),
    /// Print vocabulary size and dimension of a model.
    ModelInfo(ModelInfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Datamuse,
    Local,
}

/// `--seed <u64>` or `--seed random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

impl SeedArg {
    pub fn resolve(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Random => rand::random(),
        }
    }
}

fn parse_seed(s: &str) -> Result<SeedArg, String> {
    if s.eq_ignore_ascii_case("random") {
        return Ok(SeedArg::Random);
    }
    s.parse()
        .map(SeedArg::Fixed)
        .map_err(|_| format!("expected an unsigned integer or `random`, got {s:?}"))
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Text word2vec model file.
    #[arg(long, env = "QEXPAND_MODEL")]
    pub model: PathBuf,
    /// Reject models whose header declares another dimension.
    #[arg(long)]
    pub expected_dim: Option<usize>,
    /// Suggestion source; defaults to `local` when --lexicon is given.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// JSON lexicon for the local provider.
    #[arg(long, env = "QEXPAND_LEXICON")]
    pub lexicon: Option<PathBuf>,
    /// Base URL of the Datamuse API.
    #[arg(long, env = DATAMUSE_URL_ENV)]
    pub datamuse_url: Option<String>,
    /// Suggestions requested per query (N).
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_MAX_SUGGESTIONS)]
    pub max_suggestions: usize,
    /// Nearest suggestions kept for clustering (n).
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Number of OR groups (m).
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_CLUSTERS)]
    pub clusters: usize,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value = "0", value_parser = parse_seed)]
    pub seed: SeedArg,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub verbose: bool,
}

impl PipelineArgs {
    fn params(&self) -> Result<ExpansionParams, CliError> {
        let params = ExpansionParams {
            max_suggestions: self.max_suggestions,
            top_n: self.top_n,
            clusters: self.clusters,
            iterations: self.iterations,
        };
        params
            .validate()
            .map_err(|e| CliError::new(ExitStatus::Config, e))?;
        if self.threads == Some(0) {
            return Err(CliError::new(
                ExitStatus::Config,
                "threads must be at least 1",
            ));
        }
        Ok(params)
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(default_threads)
    }

    fn load_model(&self, err: &mut dyn Write) -> Result<VectorModel, CliError> {
        let started = Instant::now();
        let model = VectorModel::load(&self.model, self.expected_dim)
            .map_err(|e| CliError::new(ExitStatus::ModelLoad, e))?;
        if self.verbose {
            let w = model.warnings();
            let _ = writeln!(
                err,
                "model: {} words, dimension {}, {} duplicates, {} zero rows, loaded in {:.1} ms",
                model.vocab_size(),
                model.dimension(),
                w.duplicates,
                w.zero_norm,
                started.elapsed().as_secs_f64() * 1000.0
            );
        }
        Ok(model)
    }

    fn provider(&self) -> Result<Box<dyn SuggestionProvider>, CliError> {
        let kind = self.provider.unwrap_or(if self.lexicon.is_some() {
            ProviderKind::Local
        } else {
            ProviderKind::Datamuse
        });
        match kind {
            ProviderKind::Local => {
                let path = self.lexicon.as_ref().ok_or_else(|| {
                    CliError::new(ExitStatus::Config, "--provider local requires --lexicon")
                })?;
                let lexicon =
                    LocalLexicon::load(path).map_err(|e| CliError::new(ExitStatus::Input, e))?;
                Ok(Box::new(lexicon))
            }
            ProviderKind::Datamuse => {
                let mut config = DatamuseConfig::from_env();
                if let Some(url) = &self.datamuse_url {
                    config.base_url = url.clone();
                }
                Ok(Box::new(DatamuseClient::new(config)))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the expansion here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// The user query, e.g. "academic paper".
    pub query: String,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// CSV with a `query` column.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// CSV with `query,expansion` columns.
    #[arg(long)]
    pub queries: PathBuf,
    /// Corpus CSV.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "content")]
    pub text_col: String,
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long)]
    pub title_col: Option<String>,
    /// Match against the body only.
    #[arg(long)]
    pub no_title: bool,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write a flattened per-query CSV.
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    /// Zero all timing fields so reports are reproducible.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchModeArg {
    Iterations,
    Wordcount,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub mode: BenchModeArg,
    /// Draw vectors from this model (topped up synthetically if small).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dimension of synthetic vectors when no model is given.
    #[arg(long, default_value_t = bench::DEFAULT_SYNTHETIC_DIM)]
    pub dim: usize,
    /// Sweep points; defaults depend on the mode.
    #[arg(long, value_delimiter = ',')]
    pub points: Vec<usize>,
    /// Suggestion count for the iterations sweep.
    #[arg(long, default_value_t = 25)]
    pub words: usize,
    /// Iteration count for the word-count sweep.
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_CLUSTERS)]
    pub clusters: usize,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value = "0", value_parser = parse_seed)]
    pub seed: SeedArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelInfoArgs {
    #[arg(long, env = "QEXPAND_MODEL")]
    pub model: PathBuf,
    #[arg(long)]
    pub expected_dim: Option<usize>,
}

fn emit(path: Option<&Path>, content: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::new(ExitStatus::Output, format!("{}: {e}", p.display()))),
        None => out
            .write_all(content.as_bytes())
            .map_err(|e| CliError::new(ExitStatus::Output, e)),
    }
}

fn resolve_seed(arg: SeedArg, verbose: bool, err: &mut dyn Write) -> u64 {
    let seed = arg.resolve();
    if verbose || arg == SeedArg::Random {
        let _ = writeln!(err, "seed: {seed}");
    }
    seed
}

pub fn cmd_expand(
    args: &ExpandArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let p = &args.pipeline;
    let params = p.params()?;
    let model = p.load_model(err)?;
    let provider = p.provider()?;
    let seed = resolve_seed(p.seed, p.verbose, err);
    let expander = Expander::new(&model, provider.as_ref(), params);
    let expansion = with_threads(Some(p.threads()), || expander.expand(&args.query, seed))?;

    if p.verbose {
        let _ = writeln!(
            err,
            "suggestions: {} from {}",
            expansion.suggestions.len(),
            provider.name()
        );
        if expansion.is_degraded() {
            let _ = writeln!(err, "warning: no suggestion is in the model vocabulary");
        }
        for r in &expansion.selected {
            let _ = writeln!(err, "  {:<24} {:.6}", r.word.token, r.distance);
        }
        let _ = writeln!(
            err,
            "grouping score: {:.6} ({} clusters, {} accepted moves, {} restarts, {:.1} ms)",
            expansion.grouping.score,
            expansion.grouping.len(),
            expansion.accepted_moves,
            expansion.restarts,
            expansion.clustering_time.as_secs_f64() * 1000.0
        );
    }
    emit(
        args.output.as_deref(),
        &format!("{}\n", expansion.rendered),
        out,
    )
}

pub fn cmd_batch(
    args: &BatchArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let p = &args.pipeline;
    let params = p.params()?;
    let (records, skipped) =
        load_queries(&args.queries).map_err(|e| CliError::new(ExitStatus::Input, e))?;
    let model = p.load_model(err)?;
    let provider = p.provider()?;
    let seed = resolve_seed(p.seed, p.verbose, err);
    let expander = Expander::new(&model, provider.as_ref(), params);

    let results = with_threads(Some(p.threads()), || {
        map_ordered(&records, Execution::Parallel, |i, record| {
            expander
                .expand(&record.raw_query, query_seed(seed, i))
                .map(|e| e.rendered)
        })
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| CliError::new(ExitStatus::Output, e);
    w.write_record(["query", "expansion", "error"])
        .map_err(write_err)?;
    let mut failures = 0;
    for (record, result) in records.iter().zip(&results) {
        match result {
            Ok(expansion) => w.write_record([record.raw_query.as_str(), expansion, ""]),
            Err(e) => {
                failures += 1;
                w.write_record([record.raw_query.as_str(), "", &e.to_string()])
            }
        }
        .map_err(write_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::new(ExitStatus::Output, e.error()))?;
    if p.verbose || failures > 0 || !skipped.is_empty() {
        let _ = writeln!(
            err,
            "batch: {} queries, {} failed, {} rows skipped",
            records.len(),
            failures,
            skipped.len()
        );
    }
    emit(
        args.output.as_deref(),
        &String::from_utf8_lossy(&bytes),
        out,
    )
}

pub fn cmd_evaluate(
    args: &EvaluateArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let p = &args.pipeline;
    let params = p.params()?;
    let columns = CorpusColumns {
        text: args.text_col.clone(),
        id: args.id_col.clone(),
        title: args.title_col.clone(),
    };
    let load =
        load_corpus(&args.corpus, &columns).map_err(|e| CliError::new(ExitStatus::Input, e))?;
    for s in &load.skipped {
        let _ = writeln!(err, "corpus row {} skipped: {}", s.row, s.reason);
    }
    let (records, skipped) =
        load_queries(&args.queries).map_err(|e| CliError::new(ExitStatus::Input, e))?;
    for s in &skipped {
        let _ = writeln!(err, "query row {} skipped: {}", s.row, s.reason);
    }
    let model = p.load_model(err)?;
    let provider = p.provider()?;
    let seed = resolve_seed(p.seed, p.verbose, err);
    let expander = Expander::new(&model, provider.as_ref(), params);
    let corpus = Corpus::new(
        load.documents,
        MatchOptions {
            include_title: !args.no_title,
        },
    );

    let mut report = with_threads(Some(p.threads()), || {
        evaluate_batch(&records, &corpus, &expander, seed, Execution::Parallel)
    })
    .map_err(|e| CliError::new(ExitStatus::Input, e))?;
    if args.no_timings {
        report.strip_timings();
    }

    if p.verbose {
        let _ = writeln!(
            err,
            "evaluated {} of {} records with baselines ({} failures)",
            report.evaluated,
            report.with_baseline,
            report.failures.len()
        );
        for s in &report.summaries {
            let _ = writeln!(
                err,
                "  {:<10} mean accuracy {:?}, mean elapsed {:?} s",
                s.technique, s.mean_accuracy, s.mean_elapsed_secs
            );
        }
    }
    if let Some(path) = &args.report_csv {
        emit(Some(path), &report.to_csv(), out)?;
    }
    emit(
        args.report.as_deref(),
        &format!("{}\n", report.to_json()),
        out,
    )
}

pub fn cmd_bench(
    args: &BenchArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    if args.clusters == 0 || args.trials == 0 {
        return Err(CliError::new(
            ExitStatus::Config,
            "clusters and trials must be at least 1",
        ));
    }
    let seed = resolve_seed(args.seed, false, err);
    let (mode, defaults): (SweepMode, &[usize]) = match args.mode {
        BenchModeArg::Iterations => (SweepMode::Iterations, &bench::DEFAULT_ITERATION_SWEEP),
        BenchModeArg::Wordcount => (SweepMode::WordCount, &bench::DEFAULT_WORD_SWEEP),
    };
    let points = if args.points.is_empty() {
        defaults.to_vec()
    } else {
        args.points.clone()
    };
    let source = match &args.model {
        Some(path) => {
            let model = VectorModel::load(path, None)
                .map_err(|e| CliError::new(ExitStatus::ModelLoad, e))?;
            VectorSource::from_model(&model, seed)
        }
        None => VectorSource::synthetic(args.dim.max(1), seed),
    };
    let config = SweepConfig {
        mode,
        points,
        words: args.words,
        iterations: args.iterations,
        clusters: args.clusters,
        trials: args.trials,
        seed,
    };
    let rows =
        bench::run_sweep(&config, &source).map_err(|e| CliError::new(ExitStatus::Config, e))?;
    emit(args.output.as_deref(), &bench::rows_to_csv(&rows), out)
}

pub fn cmd_model_info(args: &ModelInfoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = VectorModel::load(&args.model, args.expected_dim)
        .map_err(|e| CliError::new(ExitStatus::ModelLoad, e))?;
    let w = model.warnings();
    let text = format!(
        "vocab_size: {}\ndimension: {}\nduplicates: {}\nzero_norm: {}\n",
        model.vocab_size(),
        model.dimension(),
        w.duplicates,
        w.zero_norm
    );
    emit(None, &text, out)
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Expand(a) => cmd_expand(a, out, err),
        Command::Batch(a) => cmd_batch(a, out, err),
        Command::Evaluate(a) => cmd_evaluate(a, out, err),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::ModelInfo(a) => cmd_model_info(a, out),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(rendered.as_bytes());
                    ExitStatus::Success.code()
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    ExitStatus::Config.code()
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => ExitStatus::Success.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.status.code()
        }
    }
}
