//! Numerical steady-state oracle for the queue's birth-death chain.
//!
//! The chain is truncated at a configurable highest state K and the global
//! balance equations are solved as a tridiagonal linear system. This shares
//! no algebra with the geometric closed form in [`crate::queueing`], which is
//! what makes it useful as an independent cross-check.

use crate::queueing::{QueueParameters, SteadyStateMetrics};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("truncation level must be at least 1, got {0}")]
    TruncationTooSmall(usize),
}

/// Birth-death chain on states `0..=truncation_level` with birth rate lambda
/// and death rate mu taken from [`QueueParameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedChain {
    params: QueueParameters,
    truncation_level: usize,
}

/// Solved stationary distribution of a truncated chain.
///
/// `saturated` records that the underlying rates had lambda >= mu; the
/// distribution is still a valid stationary vector of the finite chain, it
/// just no longer approximates an infinite-buffer queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateVector {
    probabilities: Vec<f64>,
    saturated: bool,
}

impl SteadyStateVector {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Largest violation of detailed balance, max over edges of
    /// |lambda * pi_i - mu * pi_{i+1}|.
    pub fn detailed_balance_residual(&self, params: &QueueParameters) -> f64 {
        let lambda = params.arrival_rate();
        let mu = params.service_rate();
        let mut worst = 0.0f64;
        for pair in self.probabilities.windows(2) {
            worst = worst.max((lambda * pair[0] - mu * pair[1]).abs());
        }
        worst
    }
}

impl TruncatedChain {
    /// Default highest state. Large enough that for every utilization up to
    /// 0.9375 the neglected tail mass is far below double precision noise.
    pub const DEFAULT_TRUNCATION: usize = 400;

    pub fn new(params: QueueParameters, truncation_level: usize) -> Result<Self, ChainError> {
        if truncation_level < 1 {
            return Err(ChainError::TruncationTooSmall(truncation_level));
        }
        Ok(Self {
            params,
            truncation_level,
        })
    }

    pub fn with_default_truncation(params: QueueParameters) -> Self {
        Self {
            params,
            truncation_level: Self::DEFAULT_TRUNCATION,
        }
    }

    pub fn params(&self) -> &QueueParameters {
        &self.params
    }

    pub fn truncation_level(&self) -> usize {
        self.truncation_level
    }

    /// Solves the global balance equations for the stationary distribution.
    ///
    /// The system is anchored by replacing state 0's (redundant) balance row
    /// with `x_0 = 1`, solved with the Thomas algorithm in O(K), and then
    /// normalized to unit mass. For lambda > mu the chain is solved with the
    /// rates swapped and the result reversed; the two chains are mirror
    /// images, and this keeps every intermediate value bounded.
    pub fn solve_steady_state(&self) -> SteadyStateVector {
        let lambda = self.params.arrival_rate();
        let mu = self.params.service_rate();
        let saturated = !self.params.is_stable();

        let mut probabilities = if lambda <= mu {
            solve_balance(lambda, mu, self.truncation_level)
        } else {
            let mut mirrored = solve_balance(mu, lambda, self.truncation_level);
            mirrored.reverse();
            mirrored
        };

        let mass: f64 = probabilities.iter().sum();
        for p in &mut probabilities {
            *p = (*p / mass).max(0.0);
        }
        SteadyStateVector {
            probabilities,
            saturated,
        }
    }

    /// Convenience wrapper: solve, then summarize.
    pub fn metrics(&self) -> SteadyStateMetrics {
        metrics_from_distribution(&self.solve_steady_state(), &self.params)
    }
}

/// Unnormalized stationary vector of the birth-death chain on `0..=k`,
/// requires lambda <= mu so the entries stay in [0, 1].
///
/// Row 0 anchors x_0 = 1. Row i in 1..k is the balance equation of state i:
/// lambda * x_{i-1} - (lambda + mu) * x_i + mu * x_{i+1} = 0. Row k is the
/// boundary equation lambda * x_{k-1} - mu * x_k = 0.
fn solve_balance(lambda: f64, mu: f64, k: usize) -> Vec<f64> {
    let n = k + 1;
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    diag[0] = 1.0;
    rhs[0] = 1.0;
    for i in 1..k {
        lower[i] = lambda;
        diag[i] = -(lambda + mu);
        upper[i] = mu;
    }
    lower[k] = lambda;
    diag[k] = -mu;

    // Thomas algorithm: forward elimination, then back substitution.
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Summarizes a stationary distribution by literal truncated sums.
///
/// The mean is sum of i * pi_i, utilization is 1 - pi_0, and the time metrics
/// follow from Little's law: T = N / lambda, W = T - 1 / mu. With lambda = 0
/// there is no arrival stream to average over, so T and W are NaN while the
/// occupancy metrics are all zero.
pub fn metrics_from_distribution(
    vector: &SteadyStateVector,
    params: &QueueParameters,
) -> SteadyStateMetrics {
    let mean_in_system = vector
        .probabilities()
        .iter()
        .enumerate()
        .map(|(i, p)| i as f64 * p)
        .sum::<f64>();
    let prob_empty = vector.probabilities().first().copied().unwrap_or(0.0);
    let utilization = 1.0 - prob_empty;
    let mean_response_time = mean_in_system / params.arrival_rate();
    let mean_wait = mean_response_time - 1.0 / params.service_rate();
    SteadyStateMetrics {
        utilization,
        mean_in_system,
        mean_response_time,
        mean_wait,
        mean_queue_length: mean_in_system - utilization,
        prob_empty,
    }
}
