//! Exact t-SNE: 2D stochastic neighbor embedding of feature rows.
//!
//! This is the O(N²) algorithm with per-row precision found by binary
//! search against the target perplexity, symmetrized affinities, a
//! Student-t low-dimensional kernel, and momentum gradient descent with an
//! early-exaggeration phase. Corpus sizes here are a few hundred rows, so
//! the exact formulation is both fast enough and free of approximation
//! knobs.
//!
//! Initialization is a seeded Gaussian (σ = 1e-4) drawn from a ChaCha8
//! stream via the Box-Muller transform, so a given seed reproduces the
//! embedding bit-for-bit anywhere.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{FeatureMatrix, RowMetadata};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("t-SNE needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("row {row} contains a non-finite value")]
    NonFiniteInput { row: usize },
    #[error("{name} must be positive, got {value}")]
    BadParameter { name: &'static str, value: f64 },
}

/// t-SNE hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub early_exaggeration: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Iterations during which affinities are multiplied by
    /// `early_exaggeration`.
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch_iter: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 2.0,
            early_exaggeration: 20.0,
            seed: 40,
            iterations: 1000,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
        }
    }
}

/// One embedded feature row with its plotting metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub piece_id: String,
    pub x: f64,
    pub y: f64,
    pub metadata: RowMetadata,
}

/// Raw embedding output: final coordinates plus the KL objective per
/// iteration (computed against the un-exaggerated affinities).
#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub coords: Vec<[f64; 2]>,
    pub objective_trace: Vec<f64>,
}

/// Embed a feature matrix; rows keep their metadata.
pub fn tsne(matrix: &FeatureMatrix, config: &TsneConfig) -> Result<Vec<EmbeddedPoint>, EmbeddingError> {
    let output = tsne_embed(&matrix.rows, config)?;
    Ok(output
        .coords
        .iter()
        .zip(&matrix.metadata)
        .map(|(&[x, y], meta)| EmbeddedPoint {
            piece_id: meta.piece_id.clone(),
            x,
            y,
            metadata: meta.clone(),
        })
        .collect())
}

/// Embed raw rows into 2D.
pub fn tsne_embed(rows: &[Vec<f64>], config: &TsneConfig) -> Result<TsneOutput, EmbeddingError> {
    let n = rows.len();
    if n < 3 {
        return Err(EmbeddingError::TooFewRows(n));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteInput { row: i });
        }
    }
    for (name, value) in [
        ("perplexity", config.perplexity),
        ("early_exaggeration", config.early_exaggeration),
        ("learning_rate", config.learning_rate),
    ] {
        if !(value > 0.0) {
            return Err(EmbeddingError::BadParameter { name, value });
        }
    }

    let distances = pairwise_squared_distances(rows);
    let p = symmetric_affinities(&distances, n, config.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y = vec![0.0f64; n * 2];
    for value in &mut y {
        *value = 1e-4 * gaussian(&mut rng);
    }

    let mut velocity = vec![0.0f64; n * 2];
    let mut gains = vec![1.0f64; n * 2];
    let mut gradient = vec![0.0f64; n * 2];
    let mut q_weights = vec![0.0f64; n * n];
    let mut trace = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };

        // Student-t weights w_ij = 1 / (1 + ||y_i − y_j||²) and their sum.
        let mut w_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                q_weights[i * n + j] = w;
                q_weights[j * n + i] = w;
                w_sum += 2.0 * w;
            }
        }

        // KL(P‖Q) in nats against the true (un-exaggerated) affinities.
        let mut objective = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p_ij = p[i * n + j];
                if p_ij > 0.0 {
                    let q_ij = (q_weights[i * n + j] / w_sum).max(1e-300);
                    objective += p_ij * (p_ij / q_ij).ln();
                }
            }
        }
        trace.push(objective);

        // Gradient: 4 Σ_j (P_ij − Q_ij) w_ij (y_i − y_j).
        gradient.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q_weights[i * n + j];
                let q_ij = w / w_sum;
                let factor = 4.0 * (exaggeration * p[i * n + j] - q_ij) * w;
                gradient[2 * i] += factor * (y[2 * i] - y[2 * j]);
                gradient[2 * i + 1] += factor * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }

        // Momentum update with per-coordinate adaptive gains: a gain grows
        // by 0.2 when the gradient opposes the current velocity and decays
        // by 0.8 otherwise, floored at 0.01.
        for k in 0..n * 2 {
            gains[k] = if gradient[k].signum() != velocity[k].signum() {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            velocity[k] = momentum * velocity[k] - config.learning_rate * gains[k] * gradient[k];
            y[k] += velocity[k];
        }

        recenter(&mut y, n);
    }

    let coords = (0..n).map(|i| [y[2 * i], y[2 * i + 1]]).collect();
    Ok(TsneOutput {
        coords,
        objective_trace: trace,
    })
}

fn pairwise_squared_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// Conditional affinities with per-row precision found by bisection on the
/// Shannon entropy (tolerance 1e-5 on log-perplexity, at most 50 steps),
/// then symmetrized: `p_ij = (p_{j|i} + p_{i|j}) / 2N`.
fn symmetric_affinities(distances: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target_entropy = perplexity.ln();
    let mut conditional = vec![0.0; n * n];

    for i in 0..n {
        let mut beta = 1.0f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let row = &distances[i * n..(i + 1) * n];

        for _ in 0..50 {
            let mut sum_p = 0.0;
            let mut sum_dp = 0.0;
            for (j, &d) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let p = (-beta * d).exp();
                sum_p += p;
                sum_dp += d * p;
            }
            if sum_p <= 0.0 {
                // All neighbors unreachable at this precision; relax it.
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
                continue;
            }
            let entropy = sum_p.ln() + beta * sum_dp / sum_p;
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }

        let mut sum_p = 0.0;
        for (j, &d) in row.iter().enumerate() {
            if j != i {
                let p = (-beta * d).exp();
                conditional[i * n + j] = p;
                sum_p += p;
            }
        }
        if sum_p > 0.0 {
            for j in 0..n {
                conditional[i * n + j] /= sum_p;
            }
        } else {
            for j in 0..n {
                if j != i {
                    conditional[i * n + j] = 1.0 / (n - 1) as f64;
                }
            }
        }
    }

    let mut p = vec![0.0; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) * scale;
        }
    }
    p
}

/// Standard normal deviate via the Box-Muller transform, consuming two
/// 64-bit words of the stream per call.
fn gaussian<R: RngCore>(rng: &mut R) -> f64 {
    // u1 in (0, 1], u2 in [0, 1).
    let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let u1 = 1.0 - u1;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn recenter(y: &mut [f64], n: usize) {
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    for i in 0..n {
        mean_x += y[2 * i];
        mean_y += y[2 * i + 1];
    }
    mean_x /= n as f64;
    mean_y /= n as f64;
    for i in 0..n {
        y[2 * i] -= mean_x;
        y[2 * i + 1] -= mean_y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_rows() -> Vec<Vec<f64>> {
        // Two well-separated 4-point clusters in 3D.
        let mut rows = Vec::new();
        for i in 0..4 {
            let jitter = i as f64 * 0.01;
            rows.push(vec![jitter, 0.0, 0.0]);
            rows.push(vec![100.0 + jitter, 100.0, 100.0]);
        }
        rows
    }

    #[test]
    fn same_seed_gives_bit_identical_output() {
        let rows = cluster_rows();
        let config = TsneConfig {
            iterations: 300,
            ..TsneConfig::default()
        };
        let a = tsne_embed(&rows, &config).unwrap();
        let b = tsne_embed(&rows, &config).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn nearest_neighbors_stay_within_cluster() {
        // At perplexity 2 only local neighborhoods are preserved, so assert
        // on nearest neighbors rather than global cluster geometry.
        let rows = cluster_rows();
        let out = tsne_embed(&rows, &TsneConfig::default()).unwrap();
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        for i in 0..8 {
            let nearest = (0..8)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    dist(out.coords[i], out.coords[a])
                        .total_cmp(&dist(out.coords[i], out.coords[b]))
                })
                .unwrap();
            // Even indices form one cluster, odd the other.
            assert_eq!(nearest % 2, i % 2, "point {i} paired across clusters");
        }
    }

    #[test]
    fn objective_settles_near_the_end() {
        let rows = cluster_rows();
        let out = tsne_embed(&rows, &TsneConfig::default()).unwrap();
        let trace = &out.objective_trace;
        let tail = &trace[trace.len() - 100..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-3, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn output_is_centered() {
        let rows = cluster_rows();
        let out = tsne_embed(&rows, &TsneConfig::default()).unwrap();
        let (mut sx, mut sy) = (0.0, 0.0);
        for c in &out.coords {
            sx += c[0];
            sy += c[1];
        }
        assert!(sx.abs() / 8.0 < 1e-9 && sy.abs() / 8.0 < 1e-9);
    }

    #[test]
    fn too_few_rows_rejected() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            tsne_embed(&rows, &TsneConfig::default()),
            Err(EmbeddingError::TooFewRows(2))
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let rows = vec![vec![0.0], vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            tsne_embed(&rows, &TsneConfig::default()),
            Err(EmbeddingError::NonFiniteInput { row: 1 })
        ));
    }

    #[test]
    fn identical_rows_do_not_break_the_search() {
        let rows = vec![vec![1.0, 2.0]; 5];
        let out = tsne_embed(&rows, &TsneConfig::default()).unwrap();
        assert!(out.coords.iter().flatten().all(|v| v.is_finite()));
    }
}
