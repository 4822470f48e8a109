//! Default tolerances and search parameters. Every knob is overridable;
//! the defaults assume ambient dimension at most ~8 where conditioning
//! is benign.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Membership / multiplicative-closure residual.
    pub mem_tol: f64,
    /// Linear independence threshold (smallest Gram singular value).
    pub rank_tol: f64,
    /// Target width for distance-to-subspace intervals.
    pub dist_tol: f64,
    /// Diagonal certificate residual threshold.
    pub diag_tol: f64,
    /// Homomorphism multiplicativity residual.
    pub hom_tol: f64,
    /// Slack for per-step schedule dominance checks.
    pub sched_tol: f64,
    /// Intertwining residual for similarities.
    pub sim_tol: f64,
    /// Invertibility threshold (smallest singular value).
    pub inv_tol: f64,
    /// Derivation solver residual.
    pub der_tol: f64,
    /// Slack for chain-audit inequality comparisons.
    pub audit_tol: f64,
    /// Conjugation residual for pipeline success.
    pub pipe_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mem_tol: 1e-9,
            rank_tol: 1e-10,
            dist_tol: 1e-7,
            diag_tol: 1e-8,
            hom_tol: 1e-10,
            sched_tol: 1e-8,
            sim_tol: 1e-9,
            inv_tol: 1e-8,
            der_tol: 1e-9,
            audit_tol: 1e-6,
            pipe_tol: 1e-8,
        }
    }
}

/// Parameters for the multi-start nonconvex searches. Results are
/// deterministic given (seed, starts): starts are combined by index,
/// never by arrival order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub starts: usize,
    pub max_iters: usize,
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            starts: 64,
            max_iters: 500,
            plateau_tol: 1e-10,
            seed: 0x6b6b6c6162,
        }
    }
}

impl SearchParams {
    pub fn light(&self) -> SearchParams {
        SearchParams {
            starts: self.starts.min(16),
            max_iters: self.max_iters.min(200),
            ..*self
        }
    }
}
