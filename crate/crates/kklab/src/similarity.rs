//! Neighboring-representation averaging: S = sum_k pi1(a_k) pi2(b_k)
//! intertwines pi1 and pi2 and is invertible when the representations
//! are cb-close relative to the diagonal norm. Also the derivation
//! solver phi = sum_k D(a_k) pi(b_k) and the distance-to-commutant
//! toolkit.

use crate::algebra::{commutant, OperatorAlgebra};
use crate::dist::dist_to_subspace;
use crate::error::{KkError, Result};
use crate::htensor::TensorElement;
use crate::johnson::basis_defect_residual;
use crate::maps::{cb_norm_interval, LinearOperatorMap, NormInterval};
use crate::matrix::*;
use crate::tol::SearchParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A unital multiplicative map from an algebra into the K' x K'
/// matrices.
#[derive(Debug, Clone)]
pub struct Representation {
    source: OperatorAlgebra,
    map: LinearOperatorMap,
    multiplicativity_residual: f64,
}

impl Representation {
    pub fn new(source: OperatorAlgebra, map: LinearOperatorMap) -> Result<Representation> {
        if !map.is_unital(1e-10) {
            let k = source.ambient_dim();
            let residual = op_norm(&(map.apply(&identity(k)) - identity(map.codomain_dim())));
            return Err(KkError::NotUnital { residual });
        }
        let residual = basis_defect_residual(&map);
        if residual > source.tolerances().hom_tol.max(1e-10) {
            return Err(KkError::PreconditionFailed(format!(
                "multiplicativity residual {residual:.3e} too large for a representation"
            )));
        }
        Ok(Representation {
            source,
            map,
            multiplicativity_residual: residual,
        })
    }

    pub fn identity(a: &OperatorAlgebra) -> Representation {
        Representation {
            source: a.clone(),
            map: LinearOperatorMap::identity_on_algebra(a),
            multiplicativity_residual: 0.0,
        }
    }

    /// ad_{S0} composed with the identity representation.
    pub fn conjugated(a: &OperatorAlgebra, s0: &CMat) -> Result<Representation> {
        let map = LinearOperatorMap::ad(a.space().clone(), s0)?
            .with_geometry(crate::maps::BallGeometry::from_algebra(a));
        Representation::new(a.clone(), map)
    }

    pub fn source(&self) -> &OperatorAlgebra {
        &self.source
    }

    pub fn map(&self) -> &LinearOperatorMap {
        &self.map
    }

    pub fn multiplicativity_residual(&self) -> f64 {
        self.multiplicativity_residual
    }
}

/// Outcome of the averaging construction; intertwining holds even when
/// S is numerically singular, so singularity is a reported condition,
/// not an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityOutcome {
    #[serde(skip)]
    pub s: CMat,
    pub intertwining_residual: f64,
    pub s_minus_identity: f64,
    pub smallest_singular_value: f64,
    pub invertible: bool,
    /// ||u|| ||pi1 - pi2||_cb ||pi1||_cb under upper-bound estimates,
    /// for the ordering actually used.
    pub sufficient_condition_value: f64,
    pub sufficient_condition_holds: bool,
    /// Set when the hypothesis only held after swapping pi1 and pi2.
    pub ordering_swapped: bool,
}

fn averaging(pi1: &LinearOperatorMap, pi2: &LinearOperatorMap, u: &TensorElement) -> CMat {
    let kp = pi1.codomain_dim();
    let mut s = CMat::zeros(kp, kp);
    for (a, b) in u.pairs() {
        s += pi1.apply(a) * pi2.apply(b);
    }
    s
}

fn intertwining_residual(
    pi1: &LinearOperatorMap,
    pi2: &LinearOperatorMap,
    s: &CMat,
    basis: &[CMat],
) -> f64 {
    let mut worst: f64 = 0.0;
    for m in basis {
        let r = pi1.apply(m) * s - s * pi2.apply(m);
        worst = worst.max(op_norm(&r));
    }
    worst
}

/// Proposition-style averaging with the "without loss of generality"
/// swap: both orderings are evaluated and the one whose sufficient
/// condition holds is kept (preferring the unswapped one).
pub fn build_similarity(
    pi1: &Representation,
    pi2: &Representation,
    u: &TensorElement,
    u_norm_upper: f64,
    params: &SearchParams,
) -> Result<SimilarityOutcome> {
    if !std::ptr::eq(pi1.source(), pi2.source())
        && pi1.source().space().onb().len() != pi2.source().space().onb().len()
    {
        return Err(KkError::SourceMismatch);
    }
    if pi1.map.codomain_dim() != pi2.map.codomain_dim() {
        return Err(KkError::DimensionMismatch {
            expected: pi1.map.codomain_dim(),
            got: pi2.map.codomain_dim(),
        });
    }
    let diff_cb = cb_norm_interval(&pi1.map.sub(&pi2.map), params);
    let pi1_cb = cb_norm_interval(&pi1.map, params);
    let pi2_cb = cb_norm_interval(&pi2.map, params);
    let cond1 = u_norm_upper * diff_cb.upper * pi1_cb.upper;
    let cond2 = u_norm_upper * diff_cb.upper * pi2_cb.upper;
    let swap = !(cond1 < 1.0) && cond2 < 1.0;
    let (p1, p2, cond_value) = if swap {
        (&pi2.map, &pi1.map, cond2)
    } else {
        (&pi1.map, &pi2.map, cond1)
    };
    let s = averaging(p1, p2, u);
    let k = pi1.source().ambient_dim();
    let basis: Vec<CMat> = pi1.source().basis().to_vec();
    let residual = intertwining_residual(p1, p2, &s, &basis);
    let sigma = smallest_singular_value(&s);
    let inv_tol = pi1.source().tolerances().inv_tol;
    let _ = k;
    Ok(SimilarityOutcome {
        s_minus_identity: op_norm(&(&s - identity(pi1.map.codomain_dim()))),
        smallest_singular_value: sigma,
        invertible: sigma > inv_tol,
        intertwining_residual: residual,
        sufficient_condition_value: cond_value,
        sufficient_condition_holds: cond_value < 1.0,
        ordering_swapped: swap,
        s,
    })
}

/// The inner derivation m -> xm - mx restricted to A.
pub fn inner_derivation(x: &CMat, a: &OperatorAlgebra) -> LinearOperatorMap {
    let images = a
        .space()
        .onb()
        .iter()
        .map(|e| x * e - e * x)
        .collect();
    LinearOperatorMap::from_onb_images(a.space().clone(), a.ambient_dim(), images)
        .with_geometry(crate::maps::BallGeometry::from_algebra(a))
}

/// Leibniz residual of D with respect to pi on random member pairs.
pub fn leibniz_residual(d: &LinearOperatorMap, pi: &Representation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = pi.source().ambient_dim();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let m = pi.source().space().project(&random_gaussian(&mut rng, k, k));
        let n = pi.source().space().project(&random_gaussian(&mut rng, k, k));
        let lhs = d.apply(&(&m * &n));
        let rhs = d.apply(&m) * pi.map().apply(&n) + pi.map().apply(&m) * d.apply(&n);
        worst = worst.max(op_norm(&(lhs - rhs)));
    }
    worst
}

/// Solve D = delta(phi)|_{pi(A)} by phi = sum_k D(a_k) pi(b_k).
pub fn solve_derivation(
    d: &LinearOperatorMap,
    u: &TensorElement,
    pi: &Representation,
) -> Result<CMat> {
    let res = leibniz_residual(d, pi, 0x1e1b);
    if res > 1e-10 {
        return Err(KkError::NotADerivation { residual: res });
    }
    let kp = pi.map().codomain_dim();
    let mut phi = CMat::zeros(kp, kp);
    for (a, b) in u.pairs() {
        phi += d.apply(a) * pi.map().apply(b);
    }
    Ok(phi)
}

/// Residual of delta(phi)(pi(m)) = D(m) over the basis.
pub fn derivation_residual(d: &LinearOperatorMap, phi: &CMat, pi: &Representation) -> f64 {
    let mut worst: f64 = 0.0;
    for m in pi.source().basis() {
        let lhs = phi * pi.map().apply(m) - pi.map().apply(m) * phi;
        worst = worst.max(op_norm(&(lhs - d.apply(m))));
    }
    worst
}

/// dist(x, A') as a certified interval.
pub fn commutant_distance(x: &CMat, a: &OperatorAlgebra, dist_tol: f64) -> Result<NormInterval> {
    let c = commutant(a);
    dist_to_subspace(x, &c, dist_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{full_matrix_algebra, multi_matrix_algebra};
    use crate::htensor::canonical_diagonal;

    fn quick() -> SearchParams {
        SearchParams {
            starts: 16,
            max_iters: 200,
            ..SearchParams::default()
        }
    }

    #[test]
    fn identity_pair_gives_identity() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let (u, _) = canonical_diagonal(&a, &quick()).unwrap();
        let pi = Representation::identity(&a);
        let out = build_similarity(&pi, &pi, &u, 1.0, &quick()).unwrap();
        assert!(out.s_minus_identity < 1e-12, "{:?}", out.s_minus_identity);
        assert!(out.intertwining_residual < 1e-12);
        assert!(out.sufficient_condition_holds);
    }

    #[test]
    fn conjugated_pair_recovers_scalar_multiple() {
        // pi1 = ad_{S0}, pi2 = id on M2: S S0^{-1} commutes with M2, so
        // S = lambda S0 with lambda near 1.
        let a = full_matrix_algebra(2);
        let (u, _) = canonical_diagonal(&a, &quick()).unwrap();
        let s0 = identity(2) + unit(2, 0, 1) * C64::new(0.01, 0.0);
        let pi1 = Representation::conjugated(&a, &s0).unwrap();
        let pi2 = Representation::identity(&a);
        let out = build_similarity(&pi1, &pi2, &u, 1.0, &quick()).unwrap();
        assert!(out.intertwining_residual < 1e-10, "{:?}", out.intertwining_residual);
        assert!(out.invertible);
        let ratio = &out.s * s0.clone().try_inverse().unwrap();
        // ratio must be scalar.
        let lambda = ratio[(0, 0)];
        assert!(op_norm(&(&ratio - identity(2) * lambda)) < 1e-10);
        assert!((lambda - cone()).norm() < 0.1);
    }

    #[test]
    fn s_minus_identity_bound() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let (u, cert) = canonical_diagonal(&a, &quick()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let x = random_direction(&mut rng, 3, 3);
            let s0 = identity(3) + x * C64::new(5e-3, 0.0);
            let pi1 = Representation::conjugated(&a, &s0).unwrap();
            let pi2 = Representation::identity(&a);
            let diff_cb = cb_norm_interval(&pi1.map().sub(pi2.map()), &quick());
            let pi1_cb = cb_norm_interval(pi1.map(), &quick());
            let out = build_similarity(&pi1, &pi2, &u, cert.h_norm.upper, &quick()).unwrap();
            let bound = cert.h_norm.upper * diff_cb.upper * pi1_cb.upper.max(1.0);
            assert!(
                out.s_minus_identity <= bound + 1e-9,
                "{} vs {}",
                out.s_minus_identity,
                bound
            );
            assert!(out.intertwining_residual <= 1e-9);
            if out.sufficient_condition_holds {
                assert!(out.s_minus_identity < 1.0);
                assert!(out.invertible);
            }
        }
    }

    #[test]
    fn scaling_covariance() {
        let a = full_matrix_algebra(2);
        let (u, _) = canonical_diagonal(&a, &quick()).unwrap();
        let lambda = C64::new(1.7, -0.3);
        let scaled = crate::htensor::module_action(&(identity(2) * lambda), &u, &identity(2)).unwrap();
        let pi = Representation::identity(&a);
        let base = build_similarity(&pi, &pi, &u, 1.0, &quick()).unwrap();
        let out = build_similarity(&pi, &pi, &scaled, lambda.norm(), &quick()).unwrap();
        assert!(op_norm(&(&out.s - &base.s * lambda)) < 1e-12);
    }

    #[test]
    fn inner_derivation_on_matrix_units() {
        let a = full_matrix_algebra(2);
        let d = inner_derivation(&unit(2, 0, 0), &a);
        assert!(op_norm(&(d.apply(&unit(2, 0, 1)) - unit(2, 0, 1))) < 1e-12);
        assert!(op_norm(&(d.apply(&unit(2, 1, 0)) + unit(2, 1, 0))) < 1e-12);
        let zero = inner_derivation(&identity(2), &a);
        for img in zero.images() {
            assert!(op_norm(img) < 1e-14);
        }
    }

    #[test]
    fn solve_derivation_recovers_inner() {
        let a = full_matrix_algebra(2);
        let (u, _) = canonical_diagonal(&a, &quick()).unwrap();
        let pi = Representation::identity(&a);
        let d = inner_derivation(&unit(2, 0, 1), &a);
        let phi = solve_derivation(&d, &u, &pi).unwrap();
        assert!(derivation_residual(&d, &phi, &pi) < 1e-12);
        // phi - e12 must be scalar (commutant of M2).
        let diff = &phi - unit(2, 0, 1);
        assert!(op_norm(&(&diff - identity(2) * diff[(0, 0)])) < 1e-10);
    }

    #[test]
    fn derivation_norm_bound_randomized() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let (u, cert) = canonical_diagonal(&a, &quick()).unwrap();
        let pi = Representation::identity(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let x = random_gaussian(&mut rng, 3, 3);
            let d = inner_derivation(&x, &a);
            let phi = solve_derivation(&d, &u, &pi).unwrap();
            assert!(derivation_residual(&d, &phi, &pi) < 1e-9);
            let d_cb = cb_norm_interval(&d, &quick());
            assert!(op_norm(&phi) <= cert.h_norm.upper * d_cb.upper + 1e-9);
        }
    }

    #[test]
    fn commutant_distance_of_member_is_zero() {
        let a = full_matrix_algebra(2);
        let iv = commutant_distance(&(identity(2) * C64::new(2.0, 1.0)), &a, 1e-7).unwrap();
        assert!(iv.upper < 1e-10);
        // e12 against the scalars: dist = min_c ||e12 - cI|| is
        // attained at c = 0 (the two singular values are |c| and
        // sqrt(|c|^2 + 1)), so the distance is exactly 1.
        let iv = commutant_distance(&unit(2, 0, 1), &a, 1e-6).unwrap();
        assert!(iv.contains(1.0, 1e-6), "{:?}", iv);
    }

    #[test]
    fn commutant_distance_dominated_by_derivation_bound() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let (_, cert) = canonical_diagonal(&a, &quick()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..5 {
            let x = random_gaussian(&mut rng, 3, 3);
            let d = inner_derivation(&x, &a);
            let d_cb = cb_norm_interval(&d, &quick());
            let iv = commutant_distance(&x, &a, 1e-6).unwrap();
            assert!(
                iv.lower <= cert.h_norm.upper * d_cb.upper + 1e-6,
                "{} vs {}",
                iv.lower,
                cert.h_norm.upper * d_cb.upper
            );
        }
    }
}
