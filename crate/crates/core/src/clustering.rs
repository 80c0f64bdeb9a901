//! Orientation-based clustering of word vectors.
//!
//! A cluster is scored by how well its members point the same way:
//! `|sum of members| / sum of |member|`, which is 1 for colinear vectors and
//! 0 when they cancel out. A grouping's score is the sum of its cluster
//! scores, and [`optimize_grouping`] searches for a partition into `m`
//! non-empty clusters that maximizes it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::vector_model::{norm, WordVector};

/// Upper bound on the number of partitions [`brute_force_grouping`] will enumerate.
pub const DEFAULT_PARTITION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("cluster member {0:?} has zero norm")]
    ZeroNormMember(String),
    #[error("members have mismatched dimensions")]
    DimensionMismatch,
    #[error("cluster count must be at least 1")]
    NoClusters,
    #[error("cannot split {vectors} vectors into {clusters} non-empty clusters")]
    TooFewVectors { vectors: usize, clusters: usize },
    #[error("{count} partitions exceed the enumeration cap of {cap}")]
    PartitionCapExceeded { count: u128, cap: u128 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<WordVector>,
}

impl Cluster {
    pub fn new(members: Vec<WordVector>) -> Self {
        Self { members }
    }

    pub fn score(&self) -> Result<f64, ClusterError> {
        cluster_score(&self.members)
    }

    /// Componentwise mean of the members.
    pub fn centroid(&self) -> Vec<f64> {
        let d = self.members.first().map_or(0, WordVector::dimension);
        let mut mean = vec![0.0; d];
        for m in &self.members {
            for (acc, c) in mean.iter_mut().zip(&m.components) {
                *acc += c;
            }
        }
        let n = self.members.len().max(1) as f64;
        mean.iter_mut().for_each(|c| *c /= n);
        mean
    }
}

/// A partition of the input vectors with its cached group score.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub clusters: Vec<Cluster>,
    pub score: f64,
}

impl Grouping {
    /// Builds a grouping and computes its score from scratch.
    pub fn new(clusters: Vec<Cluster>) -> Result<Self, ClusterError> {
        let score = clusters
            .iter()
            .map(Cluster::score)
            .sum::<Result<f64, _>>()?;
        Ok(Self { clusters, score })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }
}

/// `|Σ c_i| / Σ |c_i|` over the members; always within [0, 1].
pub fn cluster_score<V: AsRef<[f64]> + ClusterMember>(members: &[V]) -> Result<f64, ClusterError> {
    let first = members.first().ok_or(ClusterError::EmptyCluster)?;
    let d = first.as_ref().len();
    let mut norms = Vec::with_capacity(members.len());
    for m in members {
        let c = m.as_ref();
        if c.len() != d {
            return Err(ClusterError::DimensionMismatch);
        }
        let n = norm(c);
        if n == 0.0 {
            return Err(ClusterError::ZeroNormMember(m.label()));
        }
        norms.push(n);
    }
    let pairs = members
        .iter()
        .map(|m| m.as_ref())
        .zip(norms.iter().copied());
    Ok(score_kernel(pairs, &mut vec![0.0; d]))
}

/// Scores `(components, norm)` pairs using `scratch` as the accumulator.
///
/// With `U` the norm-weighted mean of the unit vectors and `spread` their
/// weighted squared distance from `U`, the score is
/// `sqrt(|U|² / (|U|² + spread))`. Aligned members give a spread of order
/// ε² and a score of exactly 1; members that cancel give `U = 0` and a score
/// of exactly 0.
fn score_kernel<'v, I>(members: I, scratch: &mut [f64]) -> f64
where
    I: Iterator<Item = (&'v [f64], f64)> + Clone,
{
    scratch.fill(0.0);
    let mut total = 0.0;
    for (c, n) in members.clone() {
        total += n;
        for (acc, x) in scratch.iter_mut().zip(c) {
            *acc += x;
        }
    }
    if total == 0.0 {
        return 0.0;
    }
    scratch.iter_mut().for_each(|a| *a /= total);
    let mut spread = 0.0;
    for (c, n) in members {
        let dev: f64 = c
            .iter()
            .zip(scratch.iter())
            .map(|(x, u)| {
                let e = x / n - u;
                e * e
            })
            .sum();
        spread += n / total * dev;
    }
    let mean_sq: f64 = scratch.iter().map(|u| u * u).sum();
    if mean_sq == 0.0 {
        return 0.0;
    }
    (mean_sq / (mean_sq + spread)).sqrt()
}

/// Anything that can be scored as a cluster member.
pub trait ClusterMember {
    fn label(&self) -> String;
}

impl ClusterMember for WordVector {
    fn label(&self) -> String {
        self.token.clone()
    }
}

impl ClusterMember for Vec<f64> {
    fn label(&self) -> String {
        format!("{self:?}")
    }
}

impl ClusterMember for &[f64] {
    fn label(&self) -> String {
        format!("{self:?}")
    }
}

/// Sum of cluster scores, recomputed from the members.
pub fn group_score(g: &Grouping) -> Result<f64, ClusterError> {
    g.clusters.iter().map(Cluster::score).sum()
}

/// Counters and score history from one optimizer run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerTrace {
    pub initial_score: f64,
    /// Best score seen, appended each time it improves.
    pub best_scores: Vec<f64>,
    pub accepted_moves: usize,
    pub restarts: usize,
}

/// Tuning knobs for [`optimize_grouping_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Consecutive rejected moves before re-dealing from a fresh shuffle.
    /// `None` derives it from the neighbourhood size.
    pub patience: Option<usize>,
}

impl OptimizerOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            patience: None,
        }
    }
}

/// Mutable search state: an assignment with per-cluster cached scores.
struct SearchState<'a> {
    vectors: &'a [WordVector],
    norms: Vec<f64>,
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    scores: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> SearchState<'a> {
    fn new(vectors: &'a [WordVector], m: usize) -> Self {
        let d = vectors[0].dimension();
        Self {
            vectors,
            norms: vectors.iter().map(WordVector::norm).collect(),
            assignment: vec![0; vectors.len()],
            sizes: vec![0; m],
            scores: vec![0.0; m],
            scratch: vec![0.0; d],
        }
    }

    /// Round-robin deal over a shuffled order; every cluster gets a member.
    fn deal(&mut self, rng: &mut ChaCha8Rng) {
        let m = self.sizes.len();
        let mut order: Vec<usize> = (0..self.vectors.len()).collect();
        order.shuffle(rng);
        self.sizes.iter_mut().for_each(|s| *s = 0);
        for (k, &idx) in order.iter().enumerate() {
            self.assignment[idx] = k % m;
            self.sizes[k % m] += 1;
        }
        for c in 0..m {
            self.scores[c] = self.score_of(c);
        }
    }

    /// Scores cluster `c` from its current members.
    fn score_of(&mut self, c: usize) -> f64 {
        let Self {
            vectors,
            norms,
            assignment,
            scratch,
            ..
        } = self;
        let members = vectors
            .iter()
            .zip(norms.iter())
            .zip(assignment.iter())
            .filter(move |(_, &a)| a == c)
            .map(|((v, &n), _)| (v.components.as_slice(), n));
        score_kernel(members, scratch)
    }

    fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Moves `idx` into `to` if that strictly raises the total score and the
    /// source cluster keeps at least one member.
    fn try_move(&mut self, idx: usize, to: usize) -> bool {
        let from = self.assignment[idx];
        if from == to || self.sizes[from] == 1 {
            return false;
        }
        let before = self.total();
        let (old_from, old_to) = (self.scores[from], self.scores[to]);
        self.assignment[idx] = to;
        self.scores[from] = self.score_of(from);
        self.scores[to] = self.score_of(to);
        if self.total() > before {
            self.sizes[from] -= 1;
            self.sizes[to] += 1;
            true
        } else {
            self.assignment[idx] = from;
            self.scores[from] = old_from;
            self.scores[to] = old_to;
            false
        }
    }
}

fn validate(vectors: &[WordVector], m: usize) -> Result<(), ClusterError> {
    if m == 0 {
        return Err(ClusterError::NoClusters);
    }
    if vectors.len() < m {
        return Err(ClusterError::TooFewVectors {
            vectors: vectors.len(),
            clusters: m,
        });
    }
    let d = vectors[0].dimension();
    for v in vectors {
        if v.dimension() != d {
            return Err(ClusterError::DimensionMismatch);
        }
        if v.norm() == 0.0 {
            return Err(ClusterError::ZeroNormMember(v.token.clone()));
        }
    }
    Ok(())
}

fn grouping_from_assignment(
    vectors: &[WordVector],
    assignment: &[usize],
    m: usize,
) -> Result<Grouping, ClusterError> {
    let mut clusters = vec![Vec::new(); m];
    for (v, &c) in vectors.iter().zip(assignment) {
        clusters[c].push(v.clone());
    }
    Grouping::new(clusters.into_iter().map(Cluster::new).collect())
}

/// Seeded hill-climbing search for the grouping with the highest score.
///
/// Deterministic for a fixed `(vectors, m, iterations, seed)`.
pub fn optimize_grouping(
    vectors: &[WordVector],
    m: usize,
    iterations: usize,
    seed: u64,
) -> Result<Grouping, ClusterError> {
    optimize_grouping_with(vectors, m, OptimizerOptions::new(iterations, seed)).map(|(g, _)| g)
}

pub fn optimize_grouping_with(
    vectors: &[WordVector],
    m: usize,
    options: OptimizerOptions,
) -> Result<(Grouping, OptimizerTrace), ClusterError> {
    validate(vectors, m)?;
    let n = vectors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut state = SearchState::new(vectors, m);
    state.deal(&mut rng);

    let mut best_score = state.total();
    let mut best_assignment = state.assignment.clone();
    let mut trace = OptimizerTrace {
        initial_score: best_score,
        best_scores: vec![best_score],
        ..OptimizerTrace::default()
    };

    // every cluster is a singleton: nothing can move
    if m == 1 || m == n {
        let g = grouping_from_assignment(vectors, &best_assignment, m)?;
        return Ok((g, trace));
    }

    let patience = options.patience.unwrap_or(4 * n * (m - 1)).max(1);
    let mut stalled = 0usize;
    for _ in 0..options.iterations {
        if stalled >= patience {
            state.deal(&mut rng);
            trace.restarts += 1;
            stalled = 0;
        }
        let idx = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..m - 1);
        if to >= state.assignment[idx] {
            to += 1;
        }
        if state.try_move(idx, to) {
            trace.accepted_moves += 1;
            stalled = 0;
        } else {
            stalled += 1;
        }
        let current = state.total();
        if current > best_score {
            best_score = current;
            best_assignment.copy_from_slice(&state.assignment);
            trace.best_scores.push(best_score);
        }
    }

    let g = grouping_from_assignment(vectors, &best_assignment, m)?;
    Ok((g, trace))
}

/// Number of ways to partition `n` items into `m` non-empty blocks,
/// saturating at `u128::MAX`.
pub fn stirling2(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    let mut row = vec![0u128; m + 1];
    row[0] = 1;
    for i in 1..=n {
        for k in (1..=m.min(i)).rev() {
            row[k] = (k as u128)
                .saturating_mul(row[k])
                .saturating_add(row[k - 1]);
        }
        row[0] = 0;
    }
    row[m]
}

/// Exact optimum by enumerating every partition into `m` non-empty blocks.
pub fn brute_force_grouping(vectors: &[WordVector], m: usize) -> Result<Grouping, ClusterError> {
    brute_force_grouping_capped(vectors, m, DEFAULT_PARTITION_CAP)
}

pub fn brute_force_grouping_capped(
    vectors: &[WordVector],
    m: usize,
    cap: u128,
) -> Result<Grouping, ClusterError> {
    validate(vectors, m)?;
    let count = stirling2(vectors.len(), m);
    if count > cap {
        return Err(ClusterError::PartitionCapExceeded { count, cap });
    }
    let mut labels = vec![0usize; vectors.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate_partitions(&mut labels, 1, 1, m, &mut |labels| {
        let mut clusters: Vec<Vec<&[f64]>> = vec![Vec::new(); m];
        for (v, &l) in vectors.iter().zip(labels.iter()) {
            clusters[l].push(&v.components);
        }
        let score: f64 = clusters
            .iter()
            .map(|c| cluster_score(c).expect("validated input"))
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, labels.to_vec()));
        }
    });
    let (_, labels) = best.expect("at least one partition exists");
    grouping_from_assignment(vectors, &labels, m)
}

/// Visits restricted growth strings of length `labels.len()` using exactly
/// `m` distinct labels.
fn enumerate_partitions(
    labels: &mut [usize],
    pos: usize,
    used: usize,
    m: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if pos == labels.len() {
        if used == m {
            visit(labels);
        }
        return;
    }
    // not enough positions left to open the missing blocks
    if labels.len() - pos < m - used {
        return;
    }
    for l in 0..used.min(m) {
        labels[pos] = l;
        enumerate_partitions(labels, pos + 1, used, m, visit);
    }
    if used < m {
        labels[pos] = used;
        enumerate_partitions(labels, pos + 1, used + 1, m, visit);
    }
}
