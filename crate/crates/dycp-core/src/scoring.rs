//! Query-vs-history relevance scoring.
//!
//! The score of turn k against a query is the inner product of the turn's
//! stored embedding with the query embedding. Components are f32 at rest;
//! accumulation is f64 so a long dot product does not lose the low bits
//! that selection thresholds later compare against.

use serde::{Deserialize, Serialize};

use crate::error::{DycpError, Result};
use crate::provider::EmbeddingProvider;
use crate::store::HistoryView;

/// An embedded user query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    vector: Vec<f32>,
}

impl QueryEmbedding {
    /// Validates finiteness; the dimension is checked at scoring time
    /// against the history it is scored against.
    pub fn new(vector: Vec<f32>) -> Result<Self> {
        if vector.is_empty() {
            return Err(DycpError::Validation("empty query embedding".into()));
        }
        if let Some(col) = vector.iter().position(|c| !c.is_finite()) {
            return Err(DycpError::NonFinite { row: 0, col });
        }
        Ok(QueryEmbedding { vector })
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Embeds the query text alone — no draft answer, nothing else — through
/// the provider.
pub fn embed_query(provider: &dyn EmbeddingProvider, query_text: &str) -> Result<QueryEmbedding> {
    let mut rows = provider.embed(&[query_text])?;
    if rows.len() != 1 {
        return Err(DycpError::ProviderContract(format!(
            "asked for 1 embedding, got {}",
            rows.len()
        )));
    }
    QueryEmbedding::new(rows.pop().unwrap())
}

/// How turn and query vectors combine into a relevance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Raw inner product — the default. Selection z-normalizes the score
    /// list, so global scale cancels anyway.
    #[default]
    Dot,
    /// Cosine similarity; a zero-norm side scores 0.
    Cosine,
}

/// Scores every visible turn against the query, in turn order.
pub fn score_history(view: &HistoryView<'_>, query: &QueryEmbedding) -> Result<Vec<f64>> {
    score_history_with(view, query, Similarity::Dot)
}

/// [`score_history`] with an explicit similarity choice.
pub fn score_history_with(
    view: &HistoryView<'_>,
    query: &QueryEmbedding,
    similarity: Similarity,
) -> Result<Vec<f64>> {
    if view.is_empty() {
        return Ok(Vec::new());
    }
    let dim = view.dim().expect("non-empty history always has a dimension");
    if query.dim() != dim {
        return Err(DycpError::DimensionMismatch { expected: dim, got: query.dim() });
    }
    let q = query.as_slice();
    let q_norm = match similarity {
        Similarity::Dot => 0.0,
        Similarity::Cosine => norm(q),
    };
    let mut scores = Vec::with_capacity(view.len());
    for k in 1..=view.len() {
        let row = view.embedding_row(k);
        let raw = dot(row, q);
        scores.push(match similarity {
            Similarity::Dot => raw,
            Similarity::Cosine => {
                let denom = norm(row) * q_norm;
                if denom > 0.0 {
                    raw / denom
                } else {
                    0.0
                }
            }
        });
    }
    Ok(scores)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}
