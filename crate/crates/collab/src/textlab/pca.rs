//! Principal component analysis over embedding vectors.
//!
//! Components come from the eigendecomposition of the covariance of centered
//! data; when there are fewer observations than dimensions the Gram-matrix
//! form is used, which yields the same nonzero spectrum at a fraction of the
//! cost. Retains the smallest component count reaching the variance target,
//! capped at `max_components`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::TextlabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Row-orthonormal basis, one row per retained component.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Share of total variance captured by each retained component,
    /// non-increasing.
    pub explained_variance_ratio: Vec<f64>,
    /// False when the component cap bound before the variance target was
    /// reached.
    pub reached_target: bool,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn explained_total(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    /// Project vectors into the reduced space.
    pub fn transform(&self, vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
        vectors
            .iter()
            .map(|v| {
                self.components
                    .iter()
                    .map(|c| {
                        c.iter()
                            .zip(v.iter().zip(&self.mean))
                            .map(|(ci, (vi, mi))| ci * (vi - mi))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Reconstruct from the reduced space back into the original one.
    pub fn inverse_transform(&self, reduced: &[Vec<f64>]) -> Vec<Vec<f64>> {
        reduced
            .iter()
            .map(|r| {
                let mut v = self.mean.clone();
                for (coef, comp) in r.iter().zip(&self.components) {
                    for (vi, ci) in v.iter_mut().zip(comp) {
                        *vi += coef * ci;
                    }
                }
                v
            })
            .collect()
    }
}

/// Fit a PCA on centered data, retaining the smallest number of components
/// whose cumulative explained-variance share reaches `variance_target`,
/// never more than `max_components`.
pub fn pca_fit(
    vectors: &[Vec<f64>],
    variance_target: f64,
    max_components: usize,
) -> Result<PcaModel, TextlabError> {
    let n = vectors.len();
    if n < 2 {
        return Err(TextlabError::InvalidInput(format!(
            "PCA needs at least 2 vectors, got {n}"
        )));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(TextlabError::InvalidInput(
            "vectors must share a nonzero dimension".into(),
        ));
    }
    if max_components == 0 {
        return Err(TextlabError::InvalidInput(
            "max_components must be >= 1".into(),
        ));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // centered data, row-major n x d
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered.iter().map(|x| x * x).sum::<f64>() / denom;
    if total_variance <= 0.0 {
        return Err(TextlabError::InvalidInput("data has zero variance".into()));
    }

    // (eigenvalue, component) pairs sorted by descending eigenvalue
    let mut pairs: Vec<(f64, Vec<f64>)> = if d <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        (0..d)
            .map(|j| {
                let col = eig.eigenvectors.column(j);
                (eig.eigenvalues[j], col.iter().copied().collect())
            })
            .collect()
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .filter(|j| eig.eigenvalues[*j] > 1e-12 * total_variance)
            .map(|j| {
                let u = eig.eigenvectors.column(j);
                // map the Gram eigenvector back to feature space
                let v = centered.transpose() * u;
                let norm = v.norm();
                (eig.eigenvalues[j], (v / norm).iter().copied().collect())
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut components = Vec::new();
    let mut ratios = Vec::new();
    let mut cumulative = 0.0;
    let mut reached_target = false;
    for (value, mut component) in pairs {
        if components.len() >= max_components {
            break;
        }
        if value <= 0.0 {
            break;
        }
        // deterministic sign: largest-magnitude coordinate positive
        let pivot = component
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if component[pivot] < 0.0 {
            for x in &mut component {
                *x = -*x;
            }
        }
        let ratio = value / total_variance;
        cumulative += ratio;
        components.push(component);
        ratios.push(ratio);
        if cumulative >= variance_target {
            reached_target = true;
            break;
        }
    }
    Ok(PcaModel {
        components,
        mean,
        explained_variance_ratio: ratios,
        reached_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn gauss(rng: &mut ChaCha12Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Eigen-spectrum oracle: power iteration with deflation, independent of
    /// the nalgebra decomposition.
    fn spectrum_oracle(vectors: &[Vec<f64>], count: usize) -> Vec<f64> {
        let n = vectors.len();
        let d = vectors[0].len();
        let mut mean = vec![0.0; d];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n as f64;
            }
        }
        let rows: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect();
        // cov as a dense d x d matrix
        let mut cov = vec![vec![0.0; d]; d];
        for row in &rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += row[i] * row[j] / (n - 1) as f64;
                }
            }
        }
        let mut values = Vec::new();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut deflated: Vec<(f64, Vec<f64>)> = Vec::new();
        for _ in 0..count {
            let mut v: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
            for _ in 0..2000 {
                // w = cov * v minus deflated directions
                let mut w = vec![0.0; d];
                for i in 0..d {
                    w[i] = cov[i].iter().zip(&v).map(|(c, x)| c * x).sum();
                }
                // deflation: orthogonalize against found eigenvectors
                for (_, u) in &deflated {
                    let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                    for i in 0..d {
                        w[i] -= dot * u[i];
                    }
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                for i in 0..d {
                    v[i] = w[i] / norm;
                }
            }
            let mut cv = vec![0.0; d];
            for i in 0..d {
                cv[i] = cov[i].iter().zip(&v).map(|(c, x)| c * x).sum();
            }
            let lambda: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum();
            values.push(lambda);
            deflated.push((lambda, v.clone()));
        }
        values
    }

    #[test]
    fn planar_data_needs_two_components() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let d = 10;
        let e1: Vec<f64> = (0..d).map(|i| if i == 2 { 1.0 } else { 0.0 }).collect();
        let e2: Vec<f64> = (0..d).map(|i| if i == 7 { 1.0 } else { 0.0 }).collect();
        let vectors: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let (a, b) = (3.0 * gauss(&mut rng), gauss(&mut rng));
                (0..d).map(|i| a * e1[i] + b * e2[i]).collect()
            })
            .collect();
        let model = pca_fit(&vectors, 0.999_999, 20).unwrap();
        assert_eq!(model.n_components(), 2);
        assert!(model.reached_target);
        assert!((model.explained_total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn component_cap_binds_on_isotropic_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let vectors: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..40).map(|_| gauss(&mut rng)).collect())
            .collect();
        let model = pca_fit(&vectors, 0.9, 20).unwrap();
        assert_eq!(model.n_components(), 20, "cap binds");
        assert!(!model.reached_target);
        assert!(model.explained_total() < 0.9);
        // eigen-spectrum oracle agrees that 20 components cannot reach 90%
        let spectrum = spectrum_oracle(&vectors, 20);
        let total: f64 = {
            // total variance straight from the data
            let n = vectors.len();
            let d = vectors[0].len();
            let mut mean = vec![0.0; d];
            for v in &vectors {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x / n as f64;
                }
            }
            vectors
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&mean)
                        .map(|(x, m)| (x - m) * (x - m))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / (n - 1) as f64
        };
        let top20: f64 = spectrum.iter().sum();
        assert!(top20 / total < 0.9, "oracle top-20 share {}", top20 / total);
        // and the per-component ratios agree with the oracle spectrum
        for (ours, oracle) in model.explained_variance_ratio.iter().zip(&spectrum) {
            assert!(
                (ours - oracle / total).abs() < 1e-6,
                "{ours} vs {}",
                oracle / total
            );
        }
    }

    #[test]
    fn ratios_are_non_increasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let vectors: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                (0..12)
                    .map(|j| (3.0 / (1.0 + j as f64)) * gauss(&mut rng))
                    .collect()
            })
            .collect();
        let model = pca_fit(&vectors, 1.0, 12).unwrap();
        for pair in model.explained_variance_ratio.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
    }

    #[test]
    fn explained_variance_matches_reconstruction_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let vectors: Vec<Vec<f64>> = (0..80)
            .map(|_| {
                (0..15)
                    .map(|j| ((j % 5) as f64 + 1.0) * gauss(&mut rng))
                    .collect()
            })
            .collect();
        let model = pca_fit(&vectors, 0.8, 15).unwrap();
        let reduced = model.transform(&vectors);
        let rebuilt = model.inverse_transform(&reduced);
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; 15];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n;
            }
        }
        let total: f64 = vectors
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&mean)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum::<f64>()
            })
            .sum();
        let residual: f64 = vectors
            .iter()
            .zip(&rebuilt)
            .map(|(v, r)| v.iter().zip(r).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        let explained_from_reconstruction = 1.0 - residual / total;
        assert!(
            (explained_from_reconstruction - model.explained_total()).abs() < 1e-8,
            "{explained_from_reconstruction} vs {}",
            model.explained_total()
        );
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        // more dimensions than points forces the Gram path; duplicating the
        // data flips it back to covariance, and spectra must agree
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let vectors: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..30).map(|_| gauss(&mut rng)).collect())
            .collect();
        let gram = pca_fit(&vectors, 1.0, 30).unwrap();
        assert!(gram.n_components() <= 11, "at most n-1 nonzero components");
        // transform-reconstruct consistency on the Gram path
        let reduced = gram.transform(&vectors);
        assert_eq!(reduced[0].len(), gram.n_components());
        let rebuilt = gram.inverse_transform(&reduced);
        let err: f64 = vectors
            .iter()
            .zip(&rebuilt)
            .map(|(v, r)| v.iter().zip(r).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        assert!(
            err < 1e-16,
            "full-rank basis reconstructs exactly, err {err}"
        );
    }
}
