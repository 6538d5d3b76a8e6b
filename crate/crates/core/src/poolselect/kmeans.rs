use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::squared_euclidean;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { max_iters: 100, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input vector.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia of each assignment step, in order.
    pub inertia_history: Vec<f64>,
}

/// k-means++ seeding: the first centroid is uniform, each later one is drawn
/// with probability proportional to squared distance from the nearest chosen
/// centroid. When every point already coincides with a centroid the next one
/// is drawn uniformly from the points not yet chosen.
pub fn kmeans_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![vectors[first].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| squared_euclidean(v, &vectors[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.push(vectors[next].clone());
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(squared_euclidean(v, &vectors[next]));
        }
    }
    centroids
}

fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_euclidean(v, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignment = vectors
        .iter()
        .map(|v| {
            let (c, d) = nearest(v, centroids);
            inertia += d;
            c
        })
        .collect();
    (assignment, inertia)
}

/// Lloyd's algorithm from k-means++ seeding, deterministic per `seed`.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, params: &KMeansParams) -> Result<KMeansResult> {
    if k == 0 || k > vectors.len() {
        return Err(Error::Argument(format!("cannot form {k} clusters from {} vectors", vectors.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(vectors, k, &mut rng);
    kmeans_from(vectors, init, params)
}

/// Lloyd iterations from given initial centroids. Nearest-centroid ties go
/// to the lower index. A cluster left empty is reseeded with the point
/// farthest from its own centroid, taken from a cluster that still has at
/// least two members.
pub fn kmeans_from(vectors: &[Vec<f64>], init: Vec<Vec<f64>>, params: &KMeansParams) -> Result<KMeansResult> {
    let k = init.len();
    if k == 0 || k > vectors.len() {
        return Err(Error::Argument(format!("cannot form {k} clusters from {} vectors", vectors.len())));
    }
    let dim = vectors[0].len();
    if vectors.iter().chain(&init).any(|v| v.len() != dim) {
        return Err(Error::Argument("vectors have mixed dimensions".into()));
    }
    let mut centroids = init;
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let (mut assignment, inertia) = assign(vectors, &centroids);
        history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| if n == 0 { old.clone() } else { s.iter().map(|x| x / n as f64).collect() })
            .collect();

        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..vectors.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .map(|i| (squared_euclidean(&vectors[i], &next[assignment[i]]), i))
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            if let Some((_, i)) = donor {
                counts[assignment[i]] -= 1;
                assignment[i] = empty;
                counts[empty] = 1;
                next[empty] = vectors[i].clone();
            }
        }

        let shift = centroids.iter().zip(&next).map(|(a, b)| squared_euclidean(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < params.tol {
            break;
        }
    }
    let (assignment, inertia) = assign(vectors, &centroids);
    Ok(KMeansResult { centroids, assignment, inertia, iterations, inertia_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = random_points(3, 20, 3);
        let r = kmeans(&pts, 1, 0, &KMeansParams::default()).unwrap();
        for d in 0..3 {
            let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / 20.0;
            assert!((r.centroids[0][d] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 0.0], vec![10.1, 0.0]];
        for seed in 0..10 {
            let r = kmeans(&pts, 2, seed, &KMeansParams::default()).unwrap();
            let mut xs: Vec<f64> = r.centroids.iter().map(|c| c[0]).collect();
            xs.sort_by(f64::total_cmp);
            assert!((xs[0] - 0.05).abs() < 1e-12 && (xs[1] - 10.05).abs() < 1e-12, "seed {seed}: {xs:?}");
            assert!(r.centroids.iter().all(|c| c[1] == 0.0));
        }
    }

    #[test]
    fn inertia_never_increases() {
        for run in 0..50 {
            let pts = random_points(100 + run, 40, 4);
            let r = kmeans(&pts, 5, run, &KMeansParams { max_iters: 100, tol: 0.0 }).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "run {run}: {:?}", r.inertia_history);
            }
        }
    }

    #[test]
    fn assignment_and_inertia_are_consistent() {
        let pts = random_points(9, 30, 2);
        let r = kmeans(&pts, 4, 1, &KMeansParams::default()).unwrap();
        let mut total = 0.0;
        for (p, &c) in pts.iter().zip(&r.assignment) {
            let d = squared_euclidean(p, &r.centroids[c]);
            for other in &r.centroids {
                assert!(d <= squared_euclidean(p, other));
            }
            total += d;
        }
        assert!((total - r.inertia).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0]];
        // second centroid starts far from every point and would stay empty
        let r = kmeans_from(&pts, vec![vec![1.0], vec![1000.0]], &KMeansParams::default()).unwrap();
        let mut sizes = [0; 2];
        for &c in &r.assignment {
            sizes[c] += 1;
        }
        assert!(sizes.iter().all(|&s| s > 0), "{sizes:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let pts = random_points(4, 25, 3);
        let a = kmeans(&pts, 3, 77, &KMeansParams::default()).unwrap();
        let b = kmeans(&pts, 3, 77, &KMeansParams::default()).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(&pts, 0, 1, &KMeansParams::default()).is_err());
        assert!(kmeans(&pts, 26, 1, &KMeansParams::default()).is_err());
    }
}
