//! Seeded k-means for the inverted-file candidate index.
//!
//! Fixed iteration budget (25) with early stop once the largest centroid
//! movement drops below 1e-6. Initial centroids are copied from randomly
//! chosen distinct entries; a cluster that empties out is reseeded from the
//! entry currently farthest from its assigned centroid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERS: usize = 25;
pub const MOVEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// `clusters x dim`, row-major.
    pub centroids: Vec<f32>,
    /// Cluster id per input vector.
    pub assignments: Vec<u32>,
    pub clusters: usize,
}

fn l2_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn nearest_centroid(v: &[f32], centroids: &[f32], dim: usize, k: usize) -> (u32, f64) {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for c in 0..k {
        let d = l2_sq(v, &centroids[c * dim..(c + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = c as u32;
        }
    }
    (best, best_d)
}

/// Cluster `n` vectors of width `dim` stored row-major in `data`.
///
/// Requires `1 <= k <= n`; the caller validates.
pub fn fit(data: &[f32], n: usize, dim: usize, k: usize, seed: u64) -> KMeansFit {
    assert!(k >= 1 && k <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, k);
    let mut centroids = Vec::with_capacity(k * dim);
    for i in picks {
        centroids.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }

    let mut assignments = vec![0u32; n];
    let mut distances = vec![0f64; n];
    for _ in 0..MAX_ITERS {
        for i in 0..n {
            let (c, d) = nearest_centroid(&data[i * dim..(i + 1) * dim], &centroids, dim, k);
            assignments[i] = c;
            distances[i] = d;
        }

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a as usize] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            // steal the entry farthest from its current centroid
            let (far, _) = distances
                .iter()
                .enumerate()
                .filter(|&(i, _)| counts[assignments[i] as usize] > 1)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .expect("some cluster holds more than one entry");
            counts[assignments[far] as usize] -= 1;
            assignments[far] = empty as u32;
            counts[empty] = 1;
            distances[far] = 0.0;
        }

        let mut sums = vec![0f64; k * dim];
        for i in 0..n {
            let c = assignments[i] as usize;
            for d in 0..dim {
                sums[c * dim + d] += data[i * dim + d] as f64;
            }
        }
        let mut movement = 0f64;
        for c in 0..k {
            let mut delta = 0f64;
            for d in 0..dim {
                let new = (sums[c * dim + d] / counts[c] as f64) as f32;
                let old = centroids[c * dim + d];
                let diff = new as f64 - old as f64;
                delta += diff * diff;
                centroids[c * dim + d] = new;
            }
            movement = movement.max(delta.sqrt());
        }
        if movement < MOVEMENT_TOL {
            break;
        }
    }

    // final assignment against the settled centroids
    for i in 0..n {
        let (c, _) = nearest_centroid(&data[i * dim..(i + 1) * dim], &centroids, dim, k);
        assignments[i] = c;
    }

    KMeansFit {
        centroids,
        assignments,
        clusters: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let data = vec![0.0, 0.0, 1.0, 0.0, 0.0, 3.0];
        let fit = fit(&data, 3, 2, 1, 9);
        assert_relative_eq!(fit.centroids[0], 1.0 / 3.0, epsilon = 1e-6);
        assert_relative_eq!(fit.centroids[1], 1.0, epsilon = 1e-6);
        assert!(fit.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn separated_blobs_get_separate_clusters() {
        let mut data = Vec::new();
        for i in 0..10 {
            data.extend_from_slice(&[i as f32 * 0.01, 0.0]);
        }
        for i in 0..10 {
            data.extend_from_slice(&[100.0 + i as f32 * 0.01, 0.0]);
        }
        let fit = fit(&data, 20, 2, 2, 4);
        let first = fit.assignments[0];
        assert!(fit.assignments[..10].iter().all(|&a| a == first));
        assert!(fit.assignments[10..].iter().all(|&a| a != first));
    }

    #[test]
    fn deterministic_per_seed() {
        let data: Vec<f32> = (0..60).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = fit(&data, 20, 3, 4, 11);
        let b = fit(&data, 20, 3, 4, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn k_equals_n_keeps_every_cluster_occupied() {
        let data = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let fit = fit(&data, 3, 2, 3, 5);
        let mut seen = vec![false; 3];
        for &a in &fit.assignments {
            seen[a as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
