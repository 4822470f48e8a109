//! End-to-end orchestration: conditional expectation, inversion,
//! unitization, the homomorphization iteration, and the averaging
//! similarity, with every constant of the chain audited.

use crate::algebra::{conditional_expectation, OperatorAlgebra};
use crate::dist::dist_to_subspace;
use crate::error::{KkError, Result};
use crate::htensor::{canonical_diagonal, DiagonalCertificate};
use crate::johnson::{basis_defect_residual, homomorphize, IterationSchedule, JohnsonOptions};
use crate::maps::{cb_norm_interval, invert, invert_onto, BallGeometry, LinearOperatorMap};
use crate::matrix::*;
use crate::perturbation::{generate_instance, near_inclusion_gamma};
use crate::similarity::{build_similarity, Representation, SimilarityOutcome};
use crate::tol::{SearchParams, Tolerances};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// ||S - I|| <= SIMILARITY_CONSTANT * ||u|| * gamma in the final
/// similarity theorem. The constant is stated, not derived display by
/// display, so the audit reports the empirically feasible threshold
/// alongside it.
pub const SIMILARITY_CONSTANT: f64 = 656.0;

/// The chain audit is feasible whenever gamma < 1/GAMMA_DENOMINATOR
/// (at ||u|| = 1); sufficient, not tight.
pub const GAMMA_DENOMINATOR: f64 = 164.0;

/// Pure arithmetic evaluation of the proof chain (e0)-(e5) at a given
/// near-inclusion gamma and diagonal norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainAudit {
    pub gamma: f64,
    pub u_norm: f64,
    /// 2 gamma.
    pub bound_t_minus_id: f64,
    /// 1/(1 - 2 gamma).
    pub bound_t_inv: f64,
    /// 2 gamma / (1 - 2 gamma).
    pub bound_v_minus_id: f64,
    /// (1 - 2 gamma)/(1 - 4 gamma).
    pub bound_v1_inv: f64,
    /// 1/(1 - 4 gamma).
    pub bound_l_cb: f64,
    /// 4 gamma / (1 - 4 gamma).
    pub bound_l_minus_id: f64,
    /// 12 gamma / (1 - 4 gamma)^2.
    pub bound_l_defect: f64,
    pub mu: f64,
    pub delta: f64,
    /// delta (4||u|| + 8 mu^2 ||u||^2).
    pub eps: f64,
    /// eps + 4 gamma/(1 - 4 gamma); must end below 1.
    pub final_check_1: f64,
    /// ((1 - 4 gamma)/(1 - 8 gamma)) eps; must end below 1.
    pub final_check_2: f64,
    pub feasible: bool,
    /// Largest gamma with both checks below 1 at this u_norm, located
    /// by bisection; exceeds 1/164 at u_norm = 1.
    pub empirical_gamma_threshold: f64,
}

fn chain_checks(gamma: f64, u_norm: f64) -> (f64, f64) {
    let mu = 1.0 / (1.0 - 4.0 * gamma);
    let delta = 12.0 * gamma / ((1.0 - 4.0 * gamma) * (1.0 - 4.0 * gamma));
    let eps = delta * (4.0 * u_norm + 8.0 * mu * mu * u_norm * u_norm);
    let c1 = eps + 4.0 * gamma / (1.0 - 4.0 * gamma);
    let c2 = (1.0 - 4.0 * gamma) / (1.0 - 8.0 * gamma) * eps;
    (c1, c2)
}

/// Bisection for the feasibility edge of both final checks.
pub fn gamma_feasibility_threshold(u_norm: f64) -> f64 {
    let feasible = |g: f64| {
        let (c1, c2) = chain_checks(g, u_norm);
        c1 < 1.0 && c2 < 1.0
    };
    let mut lo = 0.0;
    let mut hi = 0.125 - 1e-12;
    if feasible(hi) {
        return hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn audit_chain(gamma: f64, u_norm: f64) -> Result<ChainAudit> {
    if !(0.0..0.125).contains(&gamma) {
        return Err(KkError::OutOfRange(format!(
            "gamma = {gamma} outside [0, 1/8)"
        )));
    }
    if u_norm < 0.0 {
        return Err(KkError::OutOfRange("u_norm must be >= 0".into()));
    }
    let mu = 1.0 / (1.0 - 4.0 * gamma);
    let delta = 12.0 * gamma / ((1.0 - 4.0 * gamma) * (1.0 - 4.0 * gamma));
    let eps = delta * (4.0 * u_norm + 8.0 * mu * mu * u_norm * u_norm);
    let (final_check_1, final_check_2) = chain_checks(gamma, u_norm);
    Ok(ChainAudit {
        gamma,
        u_norm,
        bound_t_minus_id: 2.0 * gamma,
        bound_t_inv: 1.0 / (1.0 - 2.0 * gamma),
        bound_v_minus_id: 2.0 * gamma / (1.0 - 2.0 * gamma),
        bound_v1_inv: (1.0 - 2.0 * gamma) / (1.0 - 4.0 * gamma),
        bound_l_cb: mu,
        bound_l_minus_id: 4.0 * gamma / (1.0 - 4.0 * gamma),
        bound_l_defect: delta,
        mu,
        delta,
        eps,
        final_check_1,
        final_check_2,
        feasible: final_check_1 < 1.0 && final_check_2 < 1.0,
        empirical_gamma_threshold: gamma_feasibility_threshold(u_norm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineMode {
    Certified,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Success,
    ProjectionNotInvertible,
    UnitNotInvertible,
    JohnsonFailed,
    SimilaritySingular,
    ConjugationResidualHigh,
    CertifiedBoundViolated,
}

fn encode_matrix(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Full record of one pipeline run; every failure verdict keeps the
/// partial report up to the failing step. Timings are kept in a
/// single field so determinism comparisons can strip them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub ambient_dim: usize,
    pub m_dim: usize,
    pub n_dim: usize,
    pub mode: PipelineMode,
    pub gamma: f64,
    /// False when gamma came from a measured lower bound instead of an
    /// analytic value; the run is then heuristic regardless of mode.
    pub gamma_from_hint: bool,
    pub u_m_norm_upper: f64,
    pub audit: Option<ChainAudit>,
    pub projection_condition: Option<f64>,
    /// The Tomiyama normal-part extraction applied to T^{-1} is the
    /// identity operation at finite dimension; recorded so the step
    /// stays visible.
    pub normal_part_is_identity: bool,
    pub unit_smallest_singular_value: Option<f64>,
    pub johnson: Option<IterationSchedule>,
    pub pi_multiplicativity_residual: Option<f64>,
    pub similarity: Option<SimilarityOutcome>,
    pub s_matrix: Option<Vec<Vec<[f64; 2]>>>,
    /// ||pi - L||_cb upper times ||L^{-1}||_cb upper; below 1 forces
    /// surjectivity onto M.
    pub surjectivity_value: Option<f64>,
    /// Max normalized membership residual of the M basis in span pi(N).
    pub basis_solve_residual: Option<f64>,
    /// Max over the M basis of dist(S^{-1} b S, N)/||b||.
    pub conjugation_residual_m: Option<f64>,
    /// Max over the N basis of dist(S b S^{-1}, M)/||b||.
    pub conjugation_residual_n: Option<f64>,
    pub bound_656: f64,
    pub s_minus_identity: Option<f64>,
    pub bound_656_margin: Option<f64>,
    pub verdict: Verdict,
    pub timings_ms: Vec<(String, f64)>,
}

/// Run the whole theorem on a concrete pair M, N. N must be
/// multi-matrix; u_m is the certified diagonal of M when available
/// (its norm feeds the final bound), gamma_hint the analytic
/// near-inclusion constant.
pub fn run_pipeline(
    m: &OperatorAlgebra,
    n: &OperatorAlgebra,
    u_m_cert: Option<&DiagonalCertificate>,
    gamma_hint: Option<f64>,
    mode: PipelineMode,
    params: &SearchParams,
    tol: &Tolerances,
) -> PipelineReport {
    let start = Instant::now();
    let mut timings: Vec<(String, f64)> = Vec::new();
    let mut lap = Instant::now();
    let tick = |name: &str, timings: &mut Vec<(String, f64)>, lap: &mut Instant| {
        timings.push((name.to_string(), lap.elapsed().as_secs_f64() * 1e3));
        *lap = Instant::now();
    };

    let k = n.ambient_dim();
    let (gamma, gamma_from_hint) = match gamma_hint {
        Some(g) => (g, true),
        None => {
            let fwd = near_inclusion_gamma(m.space(), n.space(), 1, None, tol.dist_tol, params)
                .map(|iv| iv.lower)
                .unwrap_or(f64::NAN);
            let bwd = near_inclusion_gamma(n.space(), m.space(), 1, None, tol.dist_tol, params)
                .map(|iv| iv.lower)
                .unwrap_or(f64::NAN);
            (fwd.max(bwd), false)
        }
    };
    tick("gamma", &mut timings, &mut lap);

    let u_m_norm_upper = u_m_cert.map(|c| c.h_norm.upper).unwrap_or(1.0);
    let mut report = PipelineReport {
        ambient_dim: k,
        m_dim: m.dim(),
        n_dim: n.dim(),
        mode,
        gamma,
        gamma_from_hint,
        u_m_norm_upper,
        audit: None,
        projection_condition: None,
        normal_part_is_identity: true,
        unit_smallest_singular_value: None,
        johnson: None,
        pi_multiplicativity_residual: None,
        similarity: None,
        s_matrix: None,
        surjectivity_value: None,
        basis_solve_residual: None,
        conjugation_residual_m: None,
        conjugation_residual_n: None,
        bound_656: SIMILARITY_CONSTANT * u_m_norm_upper * gamma,
        s_minus_identity: None,
        bound_656_margin: None,
        verdict: Verdict::Success,
        timings_ms: Vec::new(),
    };
    let finish = |mut r: PipelineReport, v: Verdict, timings: Vec<(String, f64)>| {
        r.verdict = v;
        r.timings_ms = timings;
        r.timings_ms
            .push(("total".to_string(), start.elapsed().as_secs_f64() * 1e3));
        r
    };

    report.audit = audit_chain(gamma.clamp(0.0, 0.124), 1.0).ok();

    // (1) T = E|_M, the compression of M by the expectation onto N.
    let e = match conditional_expectation(n) {
        Ok(e) => e,
        Err(_) => return finish(report, Verdict::ProjectionNotInvertible, timings),
    };
    let t = e.restrict_to(m.space().clone());
    tick("expectation", &mut timings, &mut lap);

    // (2)-(3) V = T^{-1} : N -> M; the normal part of V is V itself.
    let (v, condition) = match invert_onto(&t, n.space(), tol.rank_tol) {
        Ok(pair) => pair,
        Err(_) => return finish(report, Verdict::ProjectionNotInvertible, timings),
    };
    report.projection_condition = Some(condition);
    tick("invert", &mut timings, &mut lap);

    // (4) L = V(1)^{-1} V, unital by construction.
    let v1 = v.apply(&identity(k));
    let sigma = smallest_singular_value(&v1);
    report.unit_smallest_singular_value = Some(sigma);
    if sigma <= tol.inv_tol {
        return finish(report, Verdict::UnitNotInvertible, timings);
    }
    let v1_inv = match v1.clone().try_inverse() {
        Some(inv) => inv,
        None => return finish(report, Verdict::UnitNotInvertible, timings),
    };
    let l_images: Vec<CMat> = v.images().iter().map(|img| &v1_inv * img).collect();
    let l = LinearOperatorMap::from_onb_images(n.space().clone(), k, l_images)
        .with_geometry(BallGeometry::from_algebra(n));
    tick("unitize", &mut timings, &mut lap);

    // (5) Johnson iteration with the canonical norm-one diagonal of N,
    // eps taken from the audit (floored away from zero for gamma = 0).
    let (u_n, u_n_cert) = match canonical_diagonal(n, params) {
        Ok(pair) => pair,
        Err(_) => return finish(report, Verdict::JohnsonFailed, timings),
    };
    let eps = report
        .audit
        .as_ref()
        .map(|a| a.eps)
        .unwrap_or(0.0)
        .max(1e-9);
    let mut opts = JohnsonOptions::new();
    opts.hom_tol = tol.hom_tol;
    opts.defect_upper_hint = report.audit.as_ref().map(|a| a.delta.max(1e-12));
    if mode == PipelineMode::Heuristic {
        opts.mu_hint = report.audit.as_ref().map(|a| a.mu);
    }
    let (pi_map, schedule) =
        match homomorphize(&l, &u_n, u_n_cert.h_norm.upper, eps, &opts, params) {
            Ok(pair) => pair,
            Err(_) => return finish(report, Verdict::JohnsonFailed, timings),
        };
    report.pi_multiplicativity_residual = Some(basis_defect_residual(&pi_map));
    report.johnson = Some(schedule);
    tick("johnson", &mut timings, &mut lap);

    // (6) Averaging similarity between pi and id_N.
    let pi = match Representation::new(n.clone(), pi_map.clone()) {
        Ok(p) => p,
        Err(_) => return finish(report, Verdict::JohnsonFailed, timings),
    };
    let id_n = Representation::identity(n);
    let outcome: SimilarityOutcome =
        match build_similarity(&pi, &id_n, &u_n, u_n_cert.h_norm.upper, params) {
            Ok(o) => o,
            Err(_) => return finish(report, Verdict::SimilaritySingular, timings),
        };
    report.s_matrix = Some(encode_matrix(&outcome.s));
    report.s_minus_identity = Some(outcome.s_minus_identity);
    report.bound_656_margin = Some(report.bound_656 - outcome.s_minus_identity);
    let invertible = outcome.invertible;
    let swapped = outcome.ordering_swapped;
    let s = outcome.s.clone();
    report.similarity = Some(outcome);
    tick("similarity", &mut timings, &mut lap);
    if !invertible {
        return finish(report, Verdict::SimilaritySingular, timings);
    }

    // (7) Surjectivity of pi onto M: analytic check plus direct solve.
    let light = params.light();
    let diff_cb = cb_norm_interval(&pi_map.sub(&l), &light);
    if let Ok((l_inv, _)) = invert(&l, tol.rank_tol) {
        let linv_cb = cb_norm_interval(&l_inv, &light);
        report.surjectivity_value = Some(diff_cb.upper * linv_cb.upper);
    }
    if let Ok(pi_range) = crate::algebra::build_space(k, pi_map.images().to_vec()) {
        let mut worst: f64 = 0.0;
        for b in m.basis() {
            let nb = op_norm(b).max(1e-300);
            worst = worst.max(pi_range.membership_residual(b) / nb);
        }
        report.basis_solve_residual = Some(worst);
    }
    tick("surjectivity", &mut timings, &mut lap);

    // (8) Conjugation residuals in both directions. With pi(x) S = S x
    // the conjugation carrying N onto M is S itself (its inverse when
    // the averaging swapped the orderings).
    let s_fwd = if swapped {
        match s.clone().try_inverse() {
            Some(inv) => inv,
            None => return finish(report, Verdict::SimilaritySingular, timings),
        }
    } else {
        s.clone()
    };
    let s_bwd = match s_fwd.clone().try_inverse() {
        Some(inv) => inv,
        None => return finish(report, Verdict::SimilaritySingular, timings),
    };
    let mut res_m: f64 = 0.0;
    for b in m.basis() {
        let conj = &s_bwd * b * &s_fwd;
        let d = match dist_to_subspace(&conj, n.space(), tol.dist_tol) {
            Ok(iv) => iv.upper,
            Err(_) => f64::NAN,
        };
        res_m = res_m.max(d / op_norm(b).max(1e-300));
    }
    let mut res_n: f64 = 0.0;
    for b in n.basis() {
        let conj = &s_fwd * b * &s_bwd;
        let d = match dist_to_subspace(&conj, m.space(), tol.dist_tol) {
            Ok(iv) => iv.upper,
            Err(_) => f64::NAN,
        };
        res_n = res_n.max(d / op_norm(b).max(1e-300));
    }
    report.conjugation_residual_m = Some(res_m);
    report.conjugation_residual_n = Some(res_n);
    tick("conjugation", &mut timings, &mut lap);
    if !(res_m <= tol.pipe_tol && res_n <= tol.pipe_tol) {
        return finish(report, Verdict::ConjugationResidualHigh, timings);
    }

    // (9) The certified bound ||S - I|| <= 656 ||u_M|| gamma.
    if mode == PipelineMode::Certified {
        let smi = report.s_minus_identity.unwrap_or(f64::NAN);
        if !(smi <= report.bound_656 + tol.audit_tol) {
            return finish(report, Verdict::CertifiedBoundViolated, timings);
        }
    }
    finish(report, Verdict::Success, timings)
}

/// Batch configuration: a t-grid by seed-range sweep on one block
/// profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchConfig {
    pub block_sizes: Vec<usize>,
    pub ambient_dim: Option<usize>,
    pub t_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: PipelineMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRecord {
    pub t: f64,
    pub seed: u64,
    pub gamma_analytic: f64,
    pub u_norm_ub: f64,
    pub s_minus_i: f64,
    pub bound_656: f64,
    pub verdict: Verdict,
    /// Set when certified mode excluded this t (gamma beyond the
    /// certified gate) and the instance ran heuristically instead.
    pub certified_gate_excluded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TAggregate {
    pub t: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub min_margin_656: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub config: BatchConfig,
    pub records: Vec<BatchRecord>,
    pub per_t: Vec<TAggregate>,
    /// Largest t in the grid with a perfect success rate.
    pub success_frontier_t: Option<f64>,
    /// Smallest t in the grid with at least one failure.
    pub first_failure_t: Option<f64>,
}

/// Sweep the grid; reports are produced in (t, seed) order and the
/// whole summary is deterministic for a fixed config.
pub fn run_batch(
    config: &BatchConfig,
    params: &SearchParams,
    tol: &Tolerances,
) -> Result<(BatchSummary, Vec<PipelineReport>)> {
    if config.block_sizes.is_empty() {
        return Err(KkError::ConfigInvalid("empty block profile".into()));
    }
    let total: usize = config.block_sizes.iter().sum();
    let k = config.ambient_dim.unwrap_or(total);
    if k < total {
        return Err(KkError::ConfigInvalid(format!(
            "ambient_dim {k} below block total {total}"
        )));
    }
    if config.t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(KkError::ConfigInvalid("negative or NaN t in grid".into()));
    }
    let mut records = Vec::new();
    let mut reports = Vec::new();
    let mut t_sorted = config.t_grid.clone();
    t_sorted.sort_by(f64::total_cmp);
    for &t in &t_sorted {
        for &seed in &config.seeds {
            let inst = generate_instance(&config.block_sizes, k, t, seed, params)?;
            let gate = 1.0 / (SIMILARITY_CONSTANT * inst.u_m_cert.h_norm.upper);
            let excluded =
                config.mode == PipelineMode::Certified && inst.gamma_analytic >= gate;
            let mode = if excluded {
                PipelineMode::Heuristic
            } else {
                config.mode
            };
            let report = run_pipeline(
                &inst.m,
                &inst.n,
                Some(&inst.u_m_cert),
                Some(inst.gamma_analytic),
                mode,
                params,
                tol,
            );
            records.push(BatchRecord {
                t,
                seed,
                gamma_analytic: inst.gamma_analytic,
                u_norm_ub: inst.u_m_cert.h_norm.upper,
                s_minus_i: report.s_minus_identity.unwrap_or(f64::NAN),
                bound_656: report.bound_656,
                verdict: report.verdict,
                certified_gate_excluded: excluded,
            });
            reports.push(report);
        }
    }
    let mut per_t = Vec::new();
    for &t in &t_sorted {
        let group: Vec<&BatchRecord> = records.iter().filter(|r| r.t == t).collect();
        let runs = group.len();
        let successes = group
            .iter()
            .filter(|r| r.verdict == Verdict::Success)
            .count();
        let min_margin = group
            .iter()
            .map(|r| r.bound_656 - r.s_minus_i)
            .fold(f64::INFINITY, f64::min);
        per_t.push(TAggregate {
            t,
            runs,
            successes,
            success_rate: if runs == 0 {
                1.0
            } else {
                successes as f64 / runs as f64
            },
            min_margin_656: min_margin,
        });
    }
    let success_frontier_t = per_t
        .iter()
        .filter(|a| a.successes == a.runs && a.runs > 0)
        .map(|a| a.t)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |b| b.max(t))));
    let first_failure_t = per_t
        .iter()
        .filter(|a| a.successes < a.runs)
        .map(|a| a.t)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |b| b.min(t))));
    Ok((
        BatchSummary {
            config: config.clone(),
            records,
            per_t,
            success_frontier_t,
            first_failure_t,
        },
        reports,
    ))
}
