//! Related-word providers: the live Datamuse "means like" endpoint and an
//! offline JSON lexicon with the same output shape.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::vector_model::normalize;

pub const DATAMUSE_BASE_URL: &str = "https://api.datamuse.com";
/// Environment variable that overrides the Datamuse base URL (mock servers).
pub const DATAMUSE_URL_ENV: &str = "QEXPAND_DATAMUSE_URL";

/// A candidate related word in provider order.
#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub term: String,
    pub provider_rank: usize,
    pub provider_score: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request for {query:?} failed after {attempts} attempts: {message}")]
    Network {
        query: String,
        attempts: u32,
        message: String,
    },
    #[error("request for {query:?} returned HTTP {status}")]
    Status { query: String, status: u16 },
    #[error("malformed response for {query:?}: {message}")]
    MalformedResponse { query: String, message: String },
    #[error("cannot read lexicon {path}: {message}")]
    Lexicon { path: PathBuf, message: String },
}

impl ProviderError {
    pub fn query(&self) -> Option<&str> {
        match self {
            Self::Network { query, .. }
            | Self::Status { query, .. }
            | Self::MalformedResponse { query, .. } => Some(query),
            Self::Lexicon { .. } => None,
        }
    }
}

/// Source of related words for a query.
pub trait SuggestionProvider: Send + Sync {
    fn suggest(&self, query: &str, max_n: usize) -> Result<Vec<Suggestion>, ProviderError>;

    fn name(&self) -> &'static str;
}

/// Normalizes terms, drops empties and later duplicates, and reassigns ranks
/// so they stay contiguous in provider order.
pub fn dedup_suggestions<I>(raw: I, max_n: usize) -> Vec<Suggestion>
where
    I: IntoIterator<Item = (String, Option<f64>)>,
{
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (term, score) in raw {
        if out.len() >= max_n {
            break;
        }
        let term = normalize(&term);
        if term.is_empty() || !seen.insert(term.clone()) {
            continue;
        }
        out.push(Suggestion {
            term,
            provider_rank: out.len(),
            provider_score: score,
        });
    }
    out
}

/// Offline stand-in for Datamuse: query phrase -> ordered suggestion terms.
#[derive(Debug, Clone, Default)]
pub struct LocalLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl LocalLexicon {
    pub fn new<K, V>(entries: impl IntoIterator<Item = (K, Vec<V>)>) -> Self
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for (key, terms) in entries {
            let key = normalize(key.as_ref());
            let list = map.entry(key).or_default();
            for term in terms {
                let term = normalize(term.as_ref());
                if !term.is_empty() && !list.contains(&term) {
                    list.push(term);
                }
            }
        }
        Self { entries: map }
    }

    /// Reads a JSON object mapping query strings to arrays of suggestions.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let err = |message: String| ProviderError::Lexicon {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(err)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: HashMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut keys: Vec<_> = raw.into_iter().collect();
        // merge order for keys that collide after normalization
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self::new(keys))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First `max_n` entries for the normalized query; unknown queries give [].
    pub fn fetch(&self, query: &str, max_n: usize) -> Vec<Suggestion> {
        self.entries
            .get(&normalize(query))
            .map(|terms| {
                terms
                    .iter()
                    .take(max_n)
                    .enumerate()
                    .map(|(rank, term)| Suggestion {
                        term: term.clone(),
                        provider_rank: rank,
                        provider_score: None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

impl SuggestionProvider for LocalLexicon {
    fn suggest(&self, query: &str, max_n: usize) -> Result<Vec<Suggestion>, ProviderError> {
        Ok(self.fetch(query, max_n))
    }

    fn name(&self) -> &'static str {
        "local"
    }
}

#[derive(Debug, Deserialize)]
struct DatamuseWord {
    word: String,
    #[serde(default)]
    score: Option<f64>,
}

/// Parses a Datamuse `/words` JSON body into deduplicated suggestions.
pub fn parse_datamuse_response(
    query: &str,
    body: &str,
    max_n: usize,
) -> Result<Vec<Suggestion>, ProviderError> {
    let rows: Vec<DatamuseWord> =
        serde_json::from_str(body).map_err(|e| ProviderError::MalformedResponse {
            query: query.to_string(),
            message: e.to_string(),
        })?;
    if let Some(bad) = rows
        .iter()
        .find(|r| r.score.is_some_and(|s| s.is_nan() || s < 0.0))
    {
        return Err(ProviderError::MalformedResponse {
            query: query.to_string(),
            message: format!("negative or NaN score for {:?}", bad.word),
        });
    }
    Ok(dedup_suggestions(
        rows.into_iter().map(|r| (r.word, r.score)),
        max_n,
    ))
}

#[derive(Debug, Clone)]
pub struct DatamuseConfig {
    pub base_url: String,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl Default for DatamuseConfig {
    fn default() -> Self {
        Self {
            base_url: DATAMUSE_BASE_URL.to_string(),
            max_in_flight: 4,
            retries: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(10),
        }
    }
}

impl DatamuseConfig {
    /// Defaults, with the base URL taken from `QEXPAND_DATAMUSE_URL` if set.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(url) = std::env::var(DATAMUSE_URL_ENV) {
            if !url.trim().is_empty() {
                config.base_url = url.trim().to_string();
            }
        }
        config
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(ProviderError),
}

/// Blocking client for `GET /words?ml=<query>&max=<n>`.
#[derive(Debug)]
pub struct DatamuseClient {
    config: DatamuseConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl DatamuseClient {
    pub fn new(config: DatamuseConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = InFlight {
            active: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_in_flight.max(1),
        };
        Self {
            config,
            agent,
            in_flight,
        }
    }

    pub fn config(&self) -> &DatamuseConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/words", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, query: &str, max_n: usize) -> Attempt {
        let _slot = self.in_flight.acquire();
        let response = self
            .agent
            .get(&self.endpoint())
            .query("ml", query)
            .query("max", max_n.to_string())
            .call();
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(ProviderError::Status {
                query: query.to_string(),
                status,
            });
        }
        match response.body_mut().read_to_string() {
            Ok(body) => Attempt::Done(body),
            Err(e) => Attempt::Transient(e.to_string()),
        }
    }

    pub fn fetch(&self, query: &str, max_n: usize) -> Result<Vec<Suggestion>, ProviderError> {
        let max_n = max_n.max(1);
        let mut last_error = String::new();
        let mut last_status = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.attempt(query, max_n) {
                Attempt::Done(body) => return parse_datamuse_response(query, &body, max_n),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(message) => {
                    last_status = message
                        .strip_prefix("HTTP ")
                        .and_then(|s| s.parse::<u16>().ok());
                    last_error = message;
                }
            }
        }
        match last_status {
            Some(status) => Err(ProviderError::Status {
                query: query.to_string(),
                status,
            }),
            None => Err(ProviderError::Network {
                query: query.to_string(),
                attempts: self.config.retries + 1,
                message: last_error,
            }),
        }
    }
}

impl SuggestionProvider for DatamuseClient {
    fn suggest(&self, query: &str, max_n: usize) -> Result<Vec<Suggestion>, ProviderError> {
        self.fetch(query, max_n)
    }

    fn name(&self) -> &'static str {
        "datamuse"
    }
}
