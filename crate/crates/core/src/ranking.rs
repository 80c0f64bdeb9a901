//! Distance scoring of suggested words against the query vector.

use thiserror::Error;

use crate::suggestions::Suggestion;
use crate::vector_model::{VectorModel, WordVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("candidate set is empty")]
    EmptyCandidates,
}

/// A suggestion that survived the vocabulary filter, with its distance to
/// the query vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedWord {
    pub word: WordVector,
    pub distance: f64,
}

/// Euclidean norm of `w - i`.
pub fn word_distance(w: &WordVector, i: &WordVector) -> Result<f64, RankingError> {
    if w.dimension() != i.dimension() {
        return Err(RankingError::DimensionMismatch {
            left: w.dimension(),
            right: i.dimension(),
        });
    }
    Ok(w.components
        .iter()
        .zip(&i.components)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Mean distance of a candidate set to the query; lower is closer.
pub fn set_similarity_score(
    candidates: &[WordVector],
    i: &WordVector,
) -> Result<f64, RankingError> {
    if candidates.is_empty() {
        return Err(RankingError::EmptyCandidates);
    }
    let mut total = 0.0;
    for w in candidates {
        total += word_distance(w, i)?;
    }
    Ok(total / candidates.len() as f64)
}

/// Scores each provider's candidate set and returns the index of the one
/// nearest to the query along with all scores.
pub fn compare_providers(
    sets: &[Vec<WordVector>],
    i: &WordVector,
) -> Result<(usize, Vec<f64>), RankingError> {
    let scores = sets
        .iter()
        .map(|s| set_similarity_score(s, i))
        .collect::<Result<Vec<_>, _>>()?;
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(idx, _)| idx)
        .ok_or(RankingError::EmptyCandidates)?;
    Ok((best, scores))
}

/// Keeps the `n` in-vocabulary suggestions nearest to `i`, nearest first,
/// ties broken by term.
pub fn select_top(
    model: &VectorModel,
    i: &WordVector,
    suggestions: &[Suggestion],
    n: usize,
) -> Vec<RankedWord> {
    let mut ranked: Vec<RankedWord> = suggestions
        .iter()
        .filter_map(|s| {
            let mut word = model.phrase_vector(&s.term)?;
            word.token = s.term.clone();
            let distance = word_distance(&word, i).ok()?;
            Some(RankedWord { word, distance })
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.word.token.cmp(&b.word.token))
    });
    ranked.truncate(n);
    ranked
}
