//! Lloyd's k-means with k-means++ initialization and a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::TextlabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids, one entry per Lloyd
    /// iteration (never increasing).
    pub inertia_history: Vec<f64>,
}

impl KmeansResult {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("at least one iteration")
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, the rest proportional to the
/// squared distance from the nearest chosen centroid.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass is on already-chosen points
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Cluster `points` into `k` groups. Ties in the assignment step break
/// toward the lower centroid index; an empty cluster is reseeded from the
/// point farthest from its assigned centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KmeansResult, TextlabError> {
    if k == 0 {
        return Err(TextlabError::InvalidInput("k must be >= 1".into()));
    }
    if points.len() < k {
        return Err(TextlabError::InvalidInput(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(TextlabError::InvalidInput(
            "points must share a dimension".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();
    for _ in 0..max_iter.max(1) {
        // assign
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed && inertia_history.len() > 1 {
            break;
        }
        // update
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed from the point farthest from its assigned centroid
                let farthest = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        dist2(p, &centroids[assignments[*i]])
                            .total_cmp(&dist2(q, &centroids[assignments[*j]]))
                    })
                    .map(|(i, _)| i)
                    .expect("non-empty points");
                centroids[c] = points[farthest].clone();
            } else {
                for (ci, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *ci = s / counts[c] as f64;
                }
            }
        }
    }
    Ok(KmeansResult {
        assignments,
        centroids,
        inertia_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(
        centers: &[(f64, f64)],
        per_blob: usize,
        spread: f64,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (b, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per_blob {
                let dx: f64 = rng.random::<f64>() - 0.5;
                let dy: f64 = rng.random::<f64>() - 0.5;
                points.push(vec![cx + spread * dx, cy + spread * dy]);
                truth.push(b);
            }
        }
        (points, truth)
    }

    /// Adjusted Rand index between two labelings.
    fn ari(a: &[usize], b: &[usize]) -> f64 {
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0u64; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1;
        }
        let choose2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
        let sum_ij: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
        let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
        let sum_b: f64 = (0..kb)
            .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
            .sum();
        let total = choose2(a.len() as u64);
        let expected = sum_a * sum_b / total;
        let max = 0.5 * (sum_a + sum_b);
        (sum_ij - expected) / (max - expected)
    }

    #[test]
    fn one_cluster_centroid_is_the_mean() {
        let points = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let result = kmeans(&points, 1, 7, 100).unwrap();
        assert!((result.centroids[0][0] - 1.0).abs() < 1e-12);
        assert!((result.centroids[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn well_separated_blobs_are_recovered_exactly() {
        let (points, truth) = blobs(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 40, 1.0, 3);
        let result = kmeans(&points, 3, 11, 200).unwrap();
        assert_eq!(ari(&result.assignments, &truth), 1.0);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let result = kmeans(&points, 8, 5, 100).unwrap();
        assert!(result.inertia() < 1e-18);
        let mut sorted = result.assignments.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 8, "every point its own cluster");
    }

    #[test]
    fn objective_never_increases() {
        let (points, _) = blobs(
            &[(0.0, 0.0), (3.0, 1.0), (1.0, 4.0), (5.0, 5.0)],
            50,
            2.5,
            9,
        );
        let result = kmeans(&points, 6, 123, 500).unwrap();
        for w in result.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (points, _) = blobs(&[(0.0, 0.0), (4.0, 4.0)], 30, 2.0, 21);
        let a = kmeans(&points, 4, 99, 200).unwrap();
        let b = kmeans(&points, 4, 99, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&points, 3, 0, 10).is_err());
    }
}
