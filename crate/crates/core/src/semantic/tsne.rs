//! Exact O(N^2) t-SNE.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::seeded;

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations during which P is exaggerated.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    /// KL(P || Q) against the un-exaggerated P when exaggeration ends.
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Points whose bandwidth search stopped short of the entropy target.
    pub unconverged_bandwidths: usize,
    pub config: TsneConfig,
}

impl Projection2D {
    pub fn as_rows(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.to_vec()).collect()
    }
}

pub fn tsne(emb: &EmbeddingMatrix, cfg: &TsneConfig) -> Result<Projection2D> {
    let n = emb.len();
    if n < 4 {
        return Err(Error::invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let limit = (n as f64 - 1.0) / 3.0;
    if !(cfg.perplexity > 0.0 && cfg.perplexity < limit) {
        return Err(Error::invalid(format!(
            "perplexity {} infeasible for N = {n} (must be below {limit:.3})",
            cfg.perplexity
        )));
    }
    if !(cfg.learning_rate > 0.0 && cfg.early_exaggeration > 0.0 && cfg.iterations > 0) {
        return Err(Error::invalid("t-SNE learning rate, exaggeration and iterations must be positive"));
    }

    let dist = squared_distances(&emb.vectors);
    let (cond, unconverged) = conditional_probabilities(&dist, cfg.perplexity);
    if unconverged > 0 {
        log::warn!("t-SNE: {unconverged} bandwidth search(es) did not reach the perplexity target");
    }
    let p = symmetrize(&cond);

    let mut rng = seeded(cfg.seed, 0);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0f64; 2]; n];

    let exag_end = cfg.exaggeration_iters.min(cfg.iterations);
    let mut initial_kl = None;

    for iter in 0..cfg.iterations {
        if iter == exag_end {
            initial_kl = Some(kl_divergence(&p, &y, &mut num));
        }
        let exaggeration = if iter < exag_end { cfg.early_exaggeration } else { 1.0 };
        let momentum = if iter < cfg.momentum_switch_iter {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };

        let z = student_t_kernel(&y, &mut num);
        for g in grad.iter_mut() {
            *g = [0.0, 0.0];
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / z).max(MIN_PROB);
                let mult = (exaggeration * p[i * n + j] - q) * num[i * n + j];
                grad[i][0] += 4.0 * mult * (y[i][0] - y[j][0]);
                grad[i][1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
        }
        if grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("t-SNE gradient became non-finite at iteration {iter}")));
        }

        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (velocity[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                velocity[i][d] = momentum * velocity[i][d] - cfg.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        let mean = y.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        for p in y.iter_mut() {
            p[0] -= mean[0] / n as f64;
            p[1] -= mean[1] / n as f64;
        }
    }

    let final_kl = kl_divergence(&p, &y, &mut num);
    Ok(Projection2D {
        points: y,
        initial_kl: initial_kl.unwrap_or(final_kl),
        final_kl,
        unconverged_bandwidths: unconverged,
        config: cfg.clone(),
    })
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = super::squared_distance(&x[i], &x[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional Gaussian affinities whose entropy (nats) matches
/// `ln(perplexity)`, found by bisection on the precision.
fn conditional_probabilities(dist: &[f64], perplexity: f64) -> (Vec<f64>, usize) {
    let n = (dist.len() as f64).sqrt() as usize;
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut unconverged = 0;
    let mut row = vec![0.0; n];

    for i in 0..n {
        let di = &dist[i * n..(i + 1) * n];
        // shift by the nearest neighbour distance so exp() cannot underflow
        // to an all-zero row
        let dmin = (0..n).filter(|&j| j != i).map(|j| di[j]).fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut converged = false;

        for _ in 0..MAX_BISECTIONS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let shifted = di[j] - dmin;
                let w = (-shifted * beta).exp();
                row[j] = w;
                sum += w;
                weighted += shifted * w;
            }
            let h = sum.ln() + beta * weighted / sum;
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                converged = true;
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        if !converged {
            unconverged += 1;
        }
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            p[i * n + j] = row[j] / sum;
        }
    }
    (p, unconverged)
}

fn symmetrize(cond: &[f64]) -> Vec<f64> {
    let n = (cond.len() as f64).sqrt() as usize;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(MIN_PROB);
            }
        }
    }
    p
}

/// Fills `num` with `1 / (1 + |y_i - y_j|^2)` and returns its off-diagonal sum.
fn student_t_kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    z
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let z = student_t_kernel(y, num);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                let q = (num[i * n + j] / z).max(MIN_PROB);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}
