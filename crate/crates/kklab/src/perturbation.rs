//! Kadison-Kastler metric and near-inclusion estimators, the cb
//! near-inclusion checker, and the random perturbed-pair instance
//! generator (M = S0 N S0^{-1} with S0 = I + tX).
//!
//! Outer suprema over unit balls are nonconvex; we ship certified
//! lower bounds (feasible point + dual certificate for the inner
//! convex problem) and analytic upper bounds, never exact KK
//! distances.

use crate::algebra::{build_algebra_with, build_space, OperatorAlgebra, OperatorSpace};
use crate::dist::dist_with_projection;
use crate::error::{KkError, Result};
use crate::htensor::{canonical_diagonal, transport_diagonal, DiagonalCertificate, TensorElement};
use crate::maps::{lin_max_step, project_ampliated, random_ball_point, BallGeometry, NormInterval};
use crate::matrix::*;
use crate::tol::{SearchParams, Tolerances};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A generated perturbed pair M = S0 N S0^{-1} with its analytic
/// distance bound and the transported diagonal.
#[derive(Debug, Clone)]
pub struct PerturbationInstance {
    pub n: OperatorAlgebra,
    pub m: OperatorAlgebra,
    pub s0: CMat,
    pub t: f64,
    pub seed: u64,
    pub block_sizes: Vec<usize>,
    /// 2 (1 + ||S0|| ||S0^{-1}||) ||S0 - I||.
    pub gamma_analytic: f64,
    pub u_m: TensorElement,
    pub u_m_cert: DiagonalCertificate,
    pub u_n: TensorElement,
    pub u_n_cert: DiagonalCertificate,
}

/// Random instance: S0 = I + t X with X a normalized complex Gaussian
/// direction, resampled until S0 is well conditioned. Deterministic
/// given (inputs, seed); the generator is ChaCha8 keyed by the seed.
pub fn generate_instance(
    block_sizes: &[usize],
    ambient_dim: usize,
    t: f64,
    seed: u64,
    params: &SearchParams,
) -> Result<PerturbationInstance> {
    if t < 0.0 {
        return Err(KkError::OutOfRange("perturbation size t must be >= 0".into()));
    }
    let n = crate::algebra::multi_matrix_algebra(block_sizes, ambient_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s0 = identity(ambient_dim);
    if t > 0.0 {
        // cond(S0) <= (1+t)/(1-t) holds for most draws; resample the
        // rare badly conditioned ones.
        let bound = if t < 1.0 {
            (1.0 + t) / (1.0 - t) + 1e-12
        } else {
            f64::INFINITY
        };
        let mut accepted = false;
        for _ in 0..64 {
            let x = random_direction(&mut rng, ambient_dim, ambient_dim);
            let cand = identity(ambient_dim) + &x * C64::new(t, 0.0);
            if cond(&cand) <= bound {
                s0 = cand;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(KkError::PreconditionFailed(
                "could not sample a well-conditioned S0".into(),
            ));
        }
    }
    let sigma = smallest_singular_value(&s0);
    let s0inv = s0.clone().try_inverse().ok_or(KkError::Singular { sigma })?;
    let gamma_analytic =
        2.0 * (1.0 + op_norm(&s0) * op_norm(&s0inv)) * op_norm(&(&s0 - identity(ambient_dim)));
    let m_basis: Vec<CMat> = n.basis().iter().map(|b| &s0 * b * &s0inv).collect();
    let m_space = build_space(ambient_dim, m_basis)?;
    let m = build_algebra_with(m_space, false, n.tolerances())?;
    let (u_n, u_n_cert) = canonical_diagonal(&n, params)?;
    let (u_m, u_m_cert) = transport_diagonal(&u_n, &s0, Some(&m), params)?;
    Ok(PerturbationInstance {
        n,
        m,
        s0,
        t,
        seed,
        block_sizes: block_sizes.to_vec(),
        gamma_analytic,
        u_m,
        u_m_cert,
        u_n,
        u_n_cert,
    })
}

/// Shared outer ascent: maximize an inner convex distance over the
/// unit ball of M_n(E). Cheap annihilator-residual gradients steer the
/// search; the certified solve runs once per start on the best point.
fn directed_sup(
    e: &OperatorSpace,
    geometry: Option<&BallGeometry>,
    proj_f: &dyn Fn(&CMat) -> CMat,
    n: usize,
    unit_ball: bool,
    dist_tol: f64,
    params: &SearchParams,
) -> NormInterval {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9a1c ^ (n as u64) << 13);
    let mut best = NormInterval {
        lower: 0.0,
        upper: f64::INFINITY,
        method_tags: vec!["multistart".into(), "dual-certificate".into()],
        converged: false,
    };
    let starts = params.starts.min(12).max(4);
    let iters = params.max_iters.min(30);
    for _ in 0..starts {
        let mut x = random_ball_point(e, geometry, n, &mut rng);
        let mut prev = -1.0;
        for _ in 0..iters {
            // Proxy objective: ||x - P(x)||, whose supergradient pulls
            // back through the annihilator of M_n(F).
            let r = &x - proj_f(&x);
            let val = op_norm(&r);
            if val < 1e-15 || (val - prev).abs() < 1e-12 {
                break;
            }
            prev = val;
            let (_, u, v) = top_singular_triple(&r);
            let g = &u * v.adjoint();
            let phi = project_ampliated(e, &(&g - proj_f(&g)), n);
            match lin_max_step(e, geometry, &phi, n) {
                Some(next) => x = next,
                None => break,
            }
        }
        let out = dist_with_projection(&x, proj_f, unit_ball, dist_tol);
        if out.interval.lower > best.lower {
            best.lower = out.interval.lower;
            best.converged = out.interval.converged;
        }
    }
    best
}

/// Level-n near inclusion: sup over the unit ball of M_n(E) of the
/// distance to M_n(F). Certified lower bound; the upper bound is left
/// to analytic majorants supplied by the caller.
pub fn near_inclusion_gamma(
    e: &OperatorSpace,
    f: &OperatorSpace,
    n: usize,
    geometry: Option<&BallGeometry>,
    dist_tol: f64,
    params: &SearchParams,
) -> Result<NormInterval> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(KkError::DimensionMismatch {
            expected: e.ambient_dim(),
            got: f.ambient_dim(),
        });
    }
    let proj = |z: &CMat| project_ampliated(f, z, n);
    Ok(directed_sup(e, geometry, &proj, n, false, dist_tol, params))
}

/// Kadison-Kastler distance: Hausdorff distance between the unit
/// balls, as the max of the two directed unit-ball deviations.
pub fn kk_distance_interval(
    e: &OperatorSpace,
    f: &OperatorSpace,
    geometry_e: Option<&BallGeometry>,
    geometry_f: Option<&BallGeometry>,
    gamma_upper_hint: Option<f64>,
    dist_tol: f64,
    params: &SearchParams,
) -> Result<NormInterval> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(KkError::DimensionMismatch {
            expected: e.ambient_dim(),
            got: f.ambient_dim(),
        });
    }
    let proj_f = |z: &CMat| f.project(z);
    let proj_e = |z: &CMat| e.project(z);
    let d_ef = directed_sup(e, geometry_e, &proj_f, 1, true, dist_tol, params);
    let d_fe = directed_sup(f, geometry_f, &proj_e, 1, true, dist_tol, params);
    let lower = d_ef.lower.max(d_fe.lower);
    let upper = gamma_upper_hint.unwrap_or(f64::INFINITY).max(lower);
    let mut tags = vec!["multistart".to_string(), "dual-certificate".to_string()];
    if gamma_upper_hint.is_some() {
        tags.push("analytic-chain".to_string());
    }
    Ok(NormInterval {
        lower,
        upper,
        method_tags: tags,
        converged: d_ef.converged && d_fe.converged,
    })
}

/// Per-level margins of the cb near-inclusion bound
/// gamma_n <= 4 ||u_M|| gamma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbLevelMargin {
    pub level: usize,
    pub gamma_lower: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbNearInclusionReport {
    pub gamma: f64,
    pub u_norm_upper: f64,
    pub levels: Vec<CbLevelMargin>,
    pub all_nonnegative: bool,
}

/// Check M subset_cb^{4 ||u|| gamma} N across matrix levels.
pub fn cb_near_inclusion_check(
    m: &OperatorAlgebra,
    n: &OperatorAlgebra,
    u_m_cert: &DiagonalCertificate,
    gamma: f64,
    levels: &[usize],
    params: &SearchParams,
    tol: &Tolerances,
) -> Result<CbNearInclusionReport> {
    let geometry = BallGeometry::from_algebra(m);
    let u_ub = u_m_cert.h_norm.upper;
    let bound = 4.0 * u_ub * gamma;
    let mut out = Vec::new();
    for &lvl in levels {
        let iv = near_inclusion_gamma(
            m.space(),
            n.space(),
            lvl,
            geometry.as_ref(),
            tol.dist_tol,
            params,
        )?;
        out.push(CbLevelMargin {
            level: lvl,
            gamma_lower: iv.lower,
            bound,
            margin: bound + tol.audit_tol - iv.lower,
        });
    }
    let all_nonnegative = out.iter().all(|l| l.margin >= 0.0);
    Ok(CbNearInclusionReport {
        gamma,
        u_norm_upper: u_ub,
        levels: out,
        all_nonnegative,
    })
}
