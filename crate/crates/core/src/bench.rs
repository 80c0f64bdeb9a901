//! Runtime sweeps of the clustering step: cost versus iteration count and
//! versus the number of words being grouped. Model loading is never timed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::{optimize_grouping, ClusterError};
use crate::vector_model::{VectorModel, WordVector};

pub const DEFAULT_ITERATION_SWEEP: [usize; 3] = [5_000, 10_000, 20_000];
pub const DEFAULT_WORD_SWEEP: [usize; 3] = [10, 25, 50];
/// Dimension of synthetic vectors when no model is supplied.
pub const DEFAULT_SYNTHETIC_DIM: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Iterations,
    WordCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mode: SweepMode,
    /// Iteration counts (iterations mode) or suggestion counts (word mode).
    pub points: Vec<usize>,
    /// Suggestion count held fixed in iterations mode.
    pub words: usize,
    /// Iteration count held fixed in word mode.
    pub iterations: usize,
    pub clusters: usize,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn iterations(points: Vec<usize>) -> Self {
        Self {
            mode: SweepMode::Iterations,
            points,
            words: 25,
            iterations: 10_000,
            clusters: 3,
            trials: 3,
            seed: 0,
        }
    }

    pub fn word_count(points: Vec<usize>) -> Self {
        Self {
            mode: SweepMode::WordCount,
            ..Self::iterations(points)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    /// Suggestions clustered, not counting the query token.
    pub words: usize,
    pub iterations: usize,
    pub trials: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
}

impl BenchRow {
    /// Mean cost of one optimizer iteration in microseconds.
    pub fn per_iteration_us(&self) -> f64 {
        if self.iterations == 0 {
            return 0.0;
        }
        self.mean_ms * 1000.0 / self.iterations as f64
    }
}

/// Source of vectors for a sweep: a loaded model, topped up with seeded
/// synthetic vectors when its vocabulary is too small.
pub struct VectorSource {
    vectors: Vec<WordVector>,
    dim: usize,
    seed: u64,
}

impl VectorSource {
    pub fn synthetic(dim: usize, seed: u64) -> Self {
        Self {
            vectors: Vec::new(),
            dim,
            seed,
        }
    }

    pub fn from_model(model: &VectorModel, seed: u64) -> Self {
        let vectors = model
            .tokens()
            .into_iter()
            .filter_map(|t| model.lookup(t).cloned())
            .collect();
        Self {
            vectors,
            dim: model.dimension(),
            seed,
        }
    }

    /// First `count` vectors in a fixed order.
    pub fn take(&self, count: usize) -> Vec<WordVector> {
        let mut out: Vec<WordVector> = self.vectors.iter().take(count).cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        while out.len() < count {
            let components = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            out.push(WordVector::new(
                format!("synthetic{}", out.len()),
                components,
            ));
        }
        out
    }
}

fn time_point(
    vectors: &[WordVector],
    clusters: usize,
    iterations: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64), ClusterError> {
    // warm-up run, not recorded
    optimize_grouping(vectors, clusters, iterations.min(1_000), seed)?;
    let mut samples = Vec::with_capacity(trials);
    for t in 0..trials {
        let started = Instant::now();
        let g = optimize_grouping(vectors, clusters, iterations, seed.wrapping_add(t as u64))?;
        samples.push(started.elapsed().as_secs_f64() * 1000.0);
        std::hint::black_box(g);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, var.sqrt()))
}

/// Runs the sweep; each point clusters the query vector plus `words`
/// suggestion vectors.
pub fn run_sweep(
    config: &SweepConfig,
    source: &VectorSource,
) -> Result<Vec<BenchRow>, ClusterError> {
    let trials = config.trials.max(1);
    config
        .points
        .iter()
        .map(|&point| {
            let (words, iterations) = match config.mode {
                SweepMode::Iterations => (config.words, point),
                SweepMode::WordCount => (point, config.iterations),
            };
            let vectors = source.take(words + 1);
            let (mean_ms, stddev_ms) =
                time_point(&vectors, config.clusters, iterations, trials, config.seed)?;
            Ok(BenchRow {
                words,
                iterations,
                trials,
                mean_ms,
                stddev_ms,
            })
        })
        .collect()
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("words,iterations,trials,mean_ms,stddev_ms,per_iteration_us\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4}\n",
            r.words,
            r.iterations,
            r.trials,
            r.mean_ms,
            r.stddev_ms,
            r.per_iteration_us()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_source_is_deterministic() {
        let s = VectorSource::synthetic(8, 5);
        assert_eq!(s.take(4), s.take(4));
        assert_eq!(s.take(4)[0].dimension(), 8);
    }

    #[test]
    fn model_source_tops_up() {
        let model = VectorModel::from_vectors(
            2,
            [
                WordVector::new("b", vec![1.0, 0.0]),
                WordVector::new("a", vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let v = VectorSource::from_model(&model, 0).take(5);
        assert_eq!(v.len(), 5);
        assert_eq!(v[0].token, "a");
        assert_eq!(v[4].dimension(), 2);
    }

    #[test]
    fn sweep_emits_one_row_per_point() {
        let mut config = SweepConfig::iterations(vec![10, 20]);
        config.words = 5;
        config.trials = 2;
        let rows = run_sweep(&config, &VectorSource::synthetic(4, 1)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].iterations, 20);
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("words,iterations,trials,mean_ms"));
        assert_eq!(csv.lines().count(), 3);
    }
}
