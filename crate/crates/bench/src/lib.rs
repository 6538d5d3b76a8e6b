//! Synthetic fixtures for the selection benchmarks.

use iclbudget::{EmbeddingStore, EmbeddingVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random `dim`-dimensional vectors around a handful of centers, with
/// ids `s00000`, `s00001`, ...
pub fn clustered_store(n: usize, dim: usize, seed: u64) -> (EmbeddingStore, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..8).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut store = EmbeddingStore::new("bench");
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let c = &centers[i % centers.len()];
        let v: Vec<f64> = c.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        let id = format!("s{i:05}");
        store.insert(id.clone(), EmbeddingVector::new(v)).expect("uniform dimension");
        ids.push(id);
    }
    (store, ids)
}
