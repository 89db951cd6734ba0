//! Shared input generators for the criterion benchmarks in `benches/`.
//!
//! Both generators are seeded so numbers stay comparable across runs and
//! machines.

use dycp_core::{DialogueHistory, QueryEmbedding};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Scores drawn from a standard normal: the all-noise regime where the
/// span count grows with the sequence and extraction does the most work.
pub fn noise_scores(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// A history with unit-normalized Gaussian embeddings plus a matching
/// query, mirroring the retrieval workload at production width.
pub fn embedded_history(turns: usize, dim: usize, seed: u64) -> (DialogueHistory, QueryEmbedding) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = DialogueHistory::new(format!("bench-{turns}x{dim}"));
    for i in 0..turns {
        let vector = unit_gaussian(dim, &mut rng);
        history
            .append_turn_with_vector(
                &format!("message {i} about subsystem {}", i % 41),
                &format!("reply {i} covering component {}", i % 29),
                vector,
            )
            .expect("generated vectors are finite and fixed-width");
    }
    let query = QueryEmbedding::new(unit_gaussian(dim, &mut rng)).unwrap();
    (history, query)
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut v: Vec<f32> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    for x in &mut v {
        *x = (*x as f64 / norm) as f32;
    }
    v
}
