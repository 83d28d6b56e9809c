//! Classic reconstruction baselines on the linearized system `J dmu = b`:
//! Elastic Net regression with cross-validated regularization and Bregman
//! iterations with an l1 regularizer.

mod bregman;
mod elastic_net;

pub use bregman::{bregman_solve, bregman_solve_batch, BregmanHistory};
pub use elastic_net::{
    cross_validate_alpha, elastic_net_reconstruct, elastic_net_solve, kkt_max_violation,
    ElasticNetContext,
};

use serde::{Deserialize, Serialize};

/// Elastic Net solver settings. The objective is
/// `1/2 ||J d - b||^2 + alpha (theta ||d||_1 + (1 - theta) ||d||_2^2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElasticNetConfig {
    /// l1/l2 mixing, `theta` in [0, 1] (1 = lasso, 0 = ridge).
    pub theta: f64,
    /// Descending regularization grid; empty = derive log-spaced grid from
    /// the data scale `||J^T b||_inf / max(theta, 0.01)`.
    pub alpha_grid: Vec<f64>,
    pub grid_points: usize,
    /// Ratio of the smallest to the largest grid value for derived grids.
    pub grid_span: f64,
    pub cv_folds: usize,
    /// Cap on coordinate-descent sweeps per alpha.
    pub max_iter: usize,
    /// Absolute KKT tolerance driving coordinate descent convergence.
    pub tol: f64,
    /// Column standardization (off: physical units matter).
    pub standardize: bool,
    /// Clamp the solution to be non-negative (off by default).
    pub nonnegative: bool,
    /// Seed for the fold shuffle.
    pub cv_seed: u64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            theta: 0.5,
            alpha_grid: Vec::new(),
            grid_points: 10,
            grid_span: 1e-3,
            cv_folds: 5,
            max_iter: 500,
            tol: 1e-8,
            standardize: false,
            nonnegative: false,
            cv_seed: 0,
        }
    }
}

/// Bregman iteration settings: outer dual updates around a FISTA inner
/// solver for `1/2 ||J d - b||^2 + alpha ||d||_1 - alpha <p, d>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BregmanConfig {
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_max_iter: usize,
    /// Relative iterate-change tolerance of the inner solver.
    pub inner_tol: f64,
    /// Morozov discrepancy stop `||J d - b|| <= tau * noise_norm` when the
    /// noise norm is known; otherwise all `outer_iters` run.
    pub discrepancy_tau: f64,
    pub noise_norm: Option<f64>,
}

impl Default for BregmanConfig {
    fn default() -> Self {
        BregmanConfig {
            alpha: 1.0,
            outer_iters: 20,
            inner_max_iter: 2000,
            inner_tol: 1e-8,
            discrepancy_tau: 1.0,
            noise_norm: None,
        }
    }
}

/// Result of a variational solve.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Absorption increment per active voxel (cm^-1).
    pub delta_mu: Vec<f64>,
    /// `mu_a0 + delta_mu`.
    pub mu: Vec<f64>,
    pub chosen_alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final data residual `||J d - b||`.
    pub residual_norm: f64,
}

impl Reconstruction {
    pub fn from_delta(delta_mu: Vec<f64>, mu_a0: f64, alpha: f64, iters: usize, converged: bool, residual: f64) -> Self {
        let mu = delta_mu.iter().map(|&d| mu_a0 + d).collect();
        Reconstruction {
            delta_mu,
            mu,
            chosen_alpha: alpha,
            iterations: iters,
            converged,
            residual_norm: residual,
        }
    }
}
