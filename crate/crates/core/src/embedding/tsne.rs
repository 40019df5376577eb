//! Exact t-SNE.
//!
//! Input affinities use a Gaussian kernel per point whose bandwidth is found by
//! bisection on the kernel precision until the conditional distribution has the
//! requested perplexity. Output affinities use a Student-t kernel with one
//! degree of freedom. The embedding minimises KL(P‖Q) by gradient descent with
//! momentum, per-coordinate adaptive gains and early exaggeration.
//!
//! Once exaggeration ends, a step that would raise KL(P‖Q) is rejected: the
//! momentum and gains are reset and a plain gradient step is backtracked
//! until the divergence no longer rises (adaptive restart).
//!
//! All loops reduce in a fixed order, so a fixed seed gives bit-identical
//! output regardless of the thread count.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::EmbeddingError;

const MIN_GAIN: f64 = 0.01;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    /// Target perplexity, capped at (N − 1) / 3 for N points.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    pub init_stddev: f64,
    pub max_sigma_steps: usize,
    /// Tolerance on the conditional entropy, in bits.
    pub entropy_tolerance: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
            init_stddev: 1e-4,
            max_sigma_steps: 50,
            entropy_tolerance: 1e-5,
        }
    }
}

impl TsneConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), EmbeddingError> {
        let positive = [
            ("perplexity", self.perplexity),
            ("learning_rate", self.learning_rate),
            ("early_exaggeration", self.early_exaggeration),
            ("init_stddev", self.init_stddev),
            ("entropy_tolerance", self.entropy_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmbeddingError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.iterations == 0 || self.max_sigma_steps == 0 {
            return Err(EmbeddingError::InvalidConfig(
                "iterations and max_sigma_steps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        self.perplexity.min((n as f64 - 1.0) / 3.0)
    }
}

/// Symmetrised input affinities.
#[derive(Debug, Clone)]
pub struct JointProbabilities {
    pub n: usize,
    /// Row-major N×N, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    /// Perplexity 2^H achieved by each conditional distribution.
    pub achieved_perplexity: Vec<f64>,
    /// Calibrated precision of each row: P_{j|i} ∝ exp(−precision_i · ‖x_i − x_j‖²).
    pub precisions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub embedding: Array2<f64>,
    pub perplexity: f64,
    pub achieved_perplexity: Vec<f64>,
    /// KL(P‖Q) of the embedding entering each iteration, followed by the final value.
    pub kl_trace: Vec<f64>,
}

fn squared_distances(points: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = points.nrows();
    let mut dist = vec![0.0; n * n];
    dist.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = points.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            if i != j {
                let b = points.row(j);
                *out = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            }
        }
    });
    dist
}

/// Conditional distribution of row `i`, written into `out`; returns entropy in bits.
fn entropy_at(dist: &[f64], i: usize, beta: f64, dmin: f64, out: &mut [f64]) -> f64 {
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, p)) in dist.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let shifted = d - dmin;
        *p = (-beta * shifted).exp();
        z += *p;
        weighted += shifted * *p;
    }
    for p in out.iter_mut() {
        *p /= z;
    }
    (z.ln() + beta * weighted / z) / std::f64::consts::LN_2
}

/// Bisection on the Gaussian precision of row `i`. Returns the achieved
/// perplexity and the precision.
fn calibrate_row(dist: &[f64], i: usize, perplexity: f64, cfg: &TsneConfig, out: &mut [f64]) -> (f64, f64) {
    let target = perplexity.log2();
    let (mut dmin, mut sum, mut count) = (f64::INFINITY, 0.0, 0usize);
    for (j, &d) in dist.iter().enumerate() {
        if j != i {
            dmin = dmin.min(d);
            sum += d;
            count += 1;
        }
    }
    let spread = sum / count as f64 - dmin;
    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut h = entropy_at(dist, i, beta, dmin, out);
    for _ in 0..cfg.max_sigma_steps {
        let diff = h - target;
        if diff.abs() <= cfg.entropy_tolerance {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = entropy_at(dist, i, beta, dmin, out);
    }
    (h.exp2(), beta)
}

fn check_points(points: ArrayView2<'_, f64>) -> Result<(), EmbeddingError> {
    if points.nrows() < 4 {
        return Err(EmbeddingError::TooFewPoints(points.nrows()));
    }
    if let Some(((row, col), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(EmbeddingError::NonFiniteInput { row, col });
    }
    Ok(())
}

pub fn joint_probabilities(
    points: ArrayView2<'_, f64>,
    config: &TsneConfig,
) -> Result<JointProbabilities, EmbeddingError> {
    config.check()?;
    check_points(points)?;
    let n = points.nrows();
    let perplexity = config.effective_perplexity(n);
    let dist = squared_distances(points);

    let mut cond = vec![0.0; n * n];
    let (achieved_perplexity, precisions): (Vec<f64>, Vec<f64>) = cond
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| calibrate_row(&dist[i * n..(i + 1) * n], i, perplexity, config, row))
        .unzip();

    let denom = 2.0 * n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok(JointProbabilities {
        n,
        p,
        achieved_perplexity,
        precisions,
    })
}

/// Student-t kernel values (zero diagonal) and their total.
fn student_kernel(y: &[f64], n: usize, num: &mut [f64]) -> f64 {
    let row_sums: Vec<f64> = num
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let (xi, yi) = (y[2 * i], y[2 * i + 1]);
            let mut s = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if i == j {
                    *v = 0.0;
                } else {
                    let (dx, dy) = (xi - y[2 * j], yi - y[2 * j + 1]);
                    *v = 1.0 / (1.0 + dx * dx + dy * dy);
                    s += *v;
                }
            }
            s
        })
        .collect();
    row_sums.iter().sum()
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / z).max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// KL(P‖Q) for a given 2-D embedding.
pub fn kl_for_embedding(joint: &JointProbabilities, embedding: &Array2<f64>) -> f64 {
    let n = joint.n;
    let y: Vec<f64> = embedding.iter().copied().collect();
    let mut num = vec![0.0; n * n];
    let z = student_kernel(&y, n, &mut num);
    kl_divergence(&joint.p, &num, z)
}

fn gradient(p: &[f64], num: &[f64], z: f64, y: &[f64], n: usize, exaggeration: f64, grad: &mut [f64]) {
    grad.par_chunks_mut(2).enumerate().for_each(|(i, g)| {
        let (mut gx, mut gy) = (0.0, 0.0);
        let prow = &p[i * n..(i + 1) * n];
        let nrow = &num[i * n..(i + 1) * n];
        for j in 0..n {
            let w = (exaggeration * prow[j] - nrow[j] / z) * nrow[j];
            gx += w * (y[2 * i] - y[2 * j]);
            gy += w * (y[2 * i + 1] - y[2 * j + 1]);
        }
        g[0] = 4.0 * gx;
        g[1] = 4.0 * gy;
    });
}

fn center(y: &mut [f64], n: usize) {
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        cx += y[2 * i];
        cy += y[2 * i + 1];
    }
    let (cx, cy) = (cx / n as f64, cy / n as f64);
    for i in 0..n {
        y[2 * i] -= cx;
        y[2 * i + 1] -= cy;
    }
}

/// Embeds the rows of `points` in two dimensions.
pub fn tsne(points: ArrayView2<'_, f64>, config: &TsneConfig) -> Result<TsneOutput, EmbeddingError> {
    let joint = joint_probabilities(points, config)?;
    let n = joint.n;
    let p = &joint.p;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_stddev)
        .map_err(|e| EmbeddingError::InvalidConfig(e.to_string()))?;
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut kl_trace = Vec::with_capacity(config.iterations + 1);

    let mut z = student_kernel(&y, n, &mut num);
    let mut kl = kl_divergence(p, &num, z);
    let mut next_y = vec![0.0; 2 * n];
    let mut next_num = vec![0.0; n * n];

    for iter in 0..config.iterations {
        let exaggerating = iter < config.exaggeration_iters;
        let exaggeration = if exaggerating { config.early_exaggeration } else { 1.0 };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        kl_trace.push(kl);

        gradient(p, &num, z, &y, n, exaggeration, &mut grad);

        let mut proposed_velocity = velocity.clone();
        let mut proposed_gains = gains.clone();
        for k in 0..2 * n {
            proposed_gains[k] = if (grad[k] > 0.0) != (velocity[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            proposed_velocity[k] = momentum * velocity[k] - config.learning_rate * proposed_gains[k] * grad[k];
            next_y[k] = y[k] + proposed_velocity[k];
        }
        center(&mut next_y, n);
        let next_z = student_kernel(&next_y, n, &mut next_num);
        let next_kl = kl_divergence(p, &next_num, next_z);

        if exaggerating || next_kl <= kl {
            velocity = proposed_velocity;
            gains = proposed_gains;
            std::mem::swap(&mut y, &mut next_y);
            std::mem::swap(&mut num, &mut next_num);
            z = next_z;
            kl = next_kl;
            continue;
        }

        velocity.fill(0.0);
        gains.fill(1.0);
        let mut step = config.learning_rate;
        for _ in 0..MAX_BACKTRACKS {
            step /= 2.0;
            for k in 0..2 * n {
                next_y[k] = y[k] - step * grad[k];
            }
            center(&mut next_y, n);
            let next_z = student_kernel(&next_y, n, &mut next_num);
            let next_kl = kl_divergence(p, &next_num, next_z);
            if next_kl <= kl {
                std::mem::swap(&mut y, &mut next_y);
                std::mem::swap(&mut num, &mut next_num);
                z = next_z;
                kl = next_kl;
                break;
            }
        }
    }
    kl_trace.push(kl);

    Ok(TsneOutput {
        embedding: Array2::from_shape_vec((n, 2), y).expect("2n coordinates"),
        perplexity: config.effective_perplexity(n),
        achieved_perplexity: joint.achieved_perplexity,
        kl_trace,
    })
}
