//! Linear maps between operator spaces, ampliations, multiplicativity
//! defects, and certified operator-norm / completely-bounded-norm
//! intervals.
//!
//! Lower bounds are always certified: every interval comes from a
//! feasible point in the relevant unit ball. Upper bounds are exact
//! (extreme-point search over block unitaries) when the domain is a
//! multi-matrix algebra, and fall back to a Hilbert-Schmidt crossnorm
//! estimate otherwise.

use crate::algebra::{OperatorAlgebra, OperatorSpace};
use crate::error::{KkError, Result};
use crate::matrix::*;
use crate::tol::SearchParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Certified lower/upper bounds for an operator or cb norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormInterval {
    pub lower: f64,
    pub upper: f64,
    pub method_tags: Vec<String>,
    pub converged: bool,
}

impl NormInterval {
    pub fn exact(v: f64, tag: &str) -> NormInterval {
        NormInterval {
            lower: v,
            upper: v,
            method_tags: vec![tag.to_string()],
            converged: true,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        self.lower - slack <= v && v <= self.upper + slack
    }
}

/// Extreme-point geometry of the unit ball of a multi-matrix domain:
/// after conjugating by the intertwiner, members are block diagonal
/// over the index sets, and ball extreme points are block unitaries.
#[derive(Debug, Clone)]
pub struct BallGeometry {
    pub intertwiner: CMat,
    pub sets: Vec<Vec<usize>>,
}

impl BallGeometry {
    /// Geometry of a multi-matrix algebra; None when the algebra has a
    /// block with multiplicity > 1 (extreme points are then not plain
    /// block unitaries) or no block structure at all.
    pub fn from_algebra(a: &OperatorAlgebra) -> Option<BallGeometry> {
        let bs = a.block_structure()?;
        if bs.multiplicities.iter().any(|&m| m != 1) {
            return None;
        }
        let mut sets = Vec::new();
        let mut offset = 0usize;
        for &n in &bs.block_sizes {
            sets.push((offset..offset + n).collect());
            offset += n;
        }
        Some(BallGeometry {
            intertwiner: bs.intertwiner.clone(),
            sets,
        })
    }

    pub fn full(k: usize) -> BallGeometry {
        BallGeometry {
            intertwiner: identity(k),
            sets: vec![(0..k).collect()],
        }
    }
}

/// A linear map between operator spaces, stored by its action on the
/// domain's HS-orthonormal basis. Applying to a matrix outside the
/// domain span acts on the HS projection.
#[derive(Debug, Clone)]
pub struct LinearOperatorMap {
    domain: OperatorSpace,
    codomain_dim: usize,
    images: Vec<CMat>,
    geometry: Option<BallGeometry>,
}

impl LinearOperatorMap {
    pub fn from_onb_images(
        domain: OperatorSpace,
        codomain_dim: usize,
        images: Vec<CMat>,
    ) -> LinearOperatorMap {
        assert_eq!(domain.dim(), images.len());
        LinearOperatorMap {
            domain,
            codomain_dim,
            images,
            geometry: None,
        }
    }

    pub fn with_geometry(mut self, g: Option<BallGeometry>) -> LinearOperatorMap {
        self.geometry = g;
        self
    }

    pub fn domain(&self) -> &OperatorSpace {
        &self.domain
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain_dim
    }

    pub fn images(&self) -> &[CMat] {
        &self.images
    }

    pub fn geometry(&self) -> Option<&BallGeometry> {
        self.geometry.as_ref()
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        let c = self.domain.onb_coords(x);
        let mut out = CMat::zeros(self.codomain_dim, self.codomain_dim);
        for (i, img) in self.images.iter().enumerate() {
            out += img * c[i];
        }
        out
    }

    /// Identity map on a space embedded in its own ambient algebra.
    pub fn identity_on(space: OperatorSpace) -> LinearOperatorMap {
        let k = space.ambient_dim();
        let images = space.onb().to_vec();
        LinearOperatorMap::from_onb_images(space, k, images)
    }

    /// Identity representation of an algebra (carries ball geometry).
    pub fn identity_on_algebra(a: &OperatorAlgebra) -> LinearOperatorMap {
        LinearOperatorMap::identity_on(a.space().clone())
            .with_geometry(BallGeometry::from_algebra(a))
    }

    /// Conjugation x -> s x s^{-1} restricted to a space.
    pub fn ad(space: OperatorSpace, s: &CMat) -> Result<LinearOperatorMap> {
        let sigma = smallest_singular_value(s);
        let sinv = s
            .clone()
            .try_inverse()
            .ok_or(KkError::Singular { sigma })?;
        let k = space.ambient_dim();
        let images = space.onb().iter().map(|e| s * e * &sinv).collect();
        Ok(LinearOperatorMap::from_onb_images(space, k, images))
    }

    /// The transpose map on the full K x K matrix algebra.
    pub fn transpose_on_full(k: usize) -> LinearOperatorMap {
        let space = crate::algebra::full_matrix_space(k);
        let images = space.onb().iter().map(|e| e.transpose()).collect();
        LinearOperatorMap::from_onb_images(space, k, images)
            .with_geometry(Some(BallGeometry::full(k)))
    }

    /// Restrict a map to a smaller domain (same ambient).
    pub fn restrict_to(&self, space: OperatorSpace) -> LinearOperatorMap {
        let images = space.onb().iter().map(|e| self.apply(e)).collect();
        LinearOperatorMap::from_onb_images(space, self.codomain_dim, images)
    }

    pub fn restrict_to_algebra(&self, a: &OperatorAlgebra) -> LinearOperatorMap {
        self.restrict_to(a.space().clone())
            .with_geometry(BallGeometry::from_algebra(a))
    }

    /// self - other, over the same domain orthonormal basis.
    pub fn sub(&self, other: &LinearOperatorMap) -> LinearOperatorMap {
        assert_eq!(self.domain.dim(), other.domain.dim());
        assert_eq!(self.codomain_dim, other.codomain_dim);
        let images = self
            .images
            .iter()
            .zip(other.images.iter())
            .map(|(a, b)| a - b)
            .collect();
        LinearOperatorMap {
            domain: self.domain.clone(),
            codomain_dim: self.codomain_dim,
            images,
            geometry: self.geometry.clone(),
        }
    }

    pub fn add(&self, other: &LinearOperatorMap) -> LinearOperatorMap {
        assert_eq!(self.domain.dim(), other.domain.dim());
        let images = self
            .images
            .iter()
            .zip(other.images.iter())
            .map(|(a, b)| a + b)
            .collect();
        LinearOperatorMap {
            domain: self.domain.clone(),
            codomain_dim: self.codomain_dim,
            images,
            geometry: self.geometry.clone(),
        }
    }

    pub fn scale(&self, c: C64) -> LinearOperatorMap {
        let images = self.images.iter().map(|m| m * c).collect();
        LinearOperatorMap {
            domain: self.domain.clone(),
            codomain_dim: self.codomain_dim,
            images,
            geometry: self.geometry.clone(),
        }
    }

    /// T - id where the domain sits inside the codomain ambient.
    pub fn minus_identity(&self) -> LinearOperatorMap {
        assert_eq!(self.domain.ambient_dim(), self.codomain_dim);
        let id = LinearOperatorMap::identity_on(self.domain.clone());
        self.sub(&id)
    }

    /// HS -> HS operator norm of the map (for crossnorm upper bounds).
    pub fn hs_norm(&self) -> f64 {
        let kk = self.codomain_dim * self.codomain_dim;
        let mut c = CMat::zeros(kk, self.images.len());
        for (j, img) in self.images.iter().enumerate() {
            c.set_column(j, &vec_of(img));
        }
        if self.images.is_empty() {
            return 0.0;
        }
        op_norm(&c)
    }

    /// Residual of linearity on random pairs (diagnostic).
    pub fn linearity_residual(&self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.domain.ambient_dim();
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let x = self.domain.project(&random_gaussian(&mut rng, k, k));
            let y = self.domain.project(&random_gaussian(&mut rng, k, k));
            let a = random_gaussian(&mut rng, 1, 1)[(0, 0)];
            let lhs = self.apply(&(&x * a + &y));
            let rhs = self.apply(&x) * a + self.apply(&y);
            worst = worst.max(op_norm(&(lhs - rhs)));
        }
        worst
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        let k = self.domain.ambient_dim();
        let out = self.apply(&identity(k));
        op_norm(&(out - identity(self.codomain_dim))) <= tol
    }
}

/// Composition s . t (apply t first).
pub fn compose(s: &LinearOperatorMap, t: &LinearOperatorMap) -> LinearOperatorMap {
    let images = t.images().iter().map(|m| s.apply(m)).collect();
    LinearOperatorMap {
        domain: t.domain().clone(),
        codomain_dim: s.codomain_dim(),
        images,
        geometry: t.geometry.clone(),
    }
}

/// Invert a map onto an explicitly given target space containing its
/// range. The returned map has the target space as its domain.
/// The condition number of the coefficient matrix is also returned.
pub fn invert_onto(
    t: &LinearOperatorMap,
    target: &OperatorSpace,
    rank_tol: f64,
) -> Result<(LinearOperatorMap, f64)> {
    let d = t.domain().dim();
    if target.dim() != d {
        return Err(KkError::DimensionMismatch {
            expected: d,
            got: target.dim(),
        });
    }
    for img in t.images() {
        if target.membership_residual(img) > 1e-8 {
            return Err(KkError::PreconditionFailed(
                "map range is not inside the inversion target space".into(),
            ));
        }
    }
    let mut c = CMat::zeros(d, d);
    for (j, img) in t.images().iter().enumerate() {
        c.set_column(j, &target.onb_coords(img));
    }
    let sigma = smallest_singular_value(&c);
    if sigma <= rank_tol {
        return Err(KkError::Singular { sigma });
    }
    let condition = cond(&c);
    let cinv = c.try_inverse().ok_or(KkError::Singular { sigma })?;
    let dom_onb = t.domain().onb();
    let k = t.domain().ambient_dim();
    let mut images = Vec::with_capacity(d);
    for j in 0..d {
        let mut img = CMat::zeros(k, k);
        for i in 0..d {
            img += &dom_onb[i] * cinv[(i, j)];
        }
        images.push(img);
    }
    Ok((
        LinearOperatorMap::from_onb_images(target.clone(), k, images),
        condition,
    ))
}

/// Invert a map onto its own range.
pub fn invert(t: &LinearOperatorMap, rank_tol: f64) -> Result<(LinearOperatorMap, f64)> {
    let range = crate::algebra::build_space(t.codomain_dim(), t.images().to_vec())
        .map_err(|_| KkError::Singular { sigma: 0.0 })?;
    invert_onto(t, &range, rank_tol)
}

/// Explicit n-th ampliation id_{M_n} (x) T as a map between ampliated
/// spaces; ampliation(T, 1) has the same action as T.
pub fn ampliation(t: &LinearOperatorMap, n: usize) -> LinearOperatorMap {
    let k = t.domain().ambient_dim();
    let kp = t.codomain_dim();
    let mut dom_onb = Vec::new();
    let mut images = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let pos = unit(n, i, j);
            for (m, e) in t.domain().onb().iter().enumerate() {
                dom_onb.push(kron(&pos, e));
                images.push(kron(&pos, &t.images()[m]));
            }
        }
    }
    let domain = OperatorSpace::from_orthonormal(n * k, dom_onb);
    LinearOperatorMap::from_onb_images(domain, n * kp, images)
}

// ---------------------------------------------------------------------------
// Norm searches over ampliated unit balls.
// ---------------------------------------------------------------------------

/// Apply the n-th ampliation blockwise: X is nK x nK, output nK' x nK'.
pub fn apply_ampliated(t: &LinearOperatorMap, x: &CMat, n: usize) -> CMat {
    let k = t.domain().ambient_dim();
    let kp = t.codomain_dim();
    let mut out = CMat::zeros(n * kp, n * kp);
    for i in 0..n {
        for j in 0..n {
            let block = x.view((i * k, j * k), (k, k)).into_owned();
            let y = t.apply(&block);
            out.view_mut((i * kp, j * kp), (kp, kp)).copy_from(&y);
        }
    }
    out
}

/// Blockwise HS projection onto M_n(E).
pub(crate) fn project_ampliated(space: &OperatorSpace, x: &CMat, n: usize) -> CMat {
    let k = space.ambient_dim();
    let mut out = CMat::zeros(n * k, n * k);
    for i in 0..n {
        for j in 0..n {
            let block = x.view((i * k, j * k), (k, k)).into_owned();
            out.view_mut((i * k, j * k), (k, k))
                .copy_from(&space.project(&block));
        }
    }
    out
}

/// Blockwise HS adjoint of the map: the matrix A in M_n(E) with
/// <A, W> = <G, T_n(W)> for all W in M_n(E).
fn riesz_ampliated(t: &LinearOperatorMap, g: &CMat, n: usize) -> CMat {
    let k = t.domain().ambient_dim();
    let kp = t.codomain_dim();
    let mut out = CMat::zeros(n * k, n * k);
    for i in 0..n {
        for j in 0..n {
            let gb = g.view((i * kp, j * kp), (kp, kp)).into_owned();
            let mut a = CMat::zeros(k, k);
            for (m, e) in t.domain().onb().iter().enumerate() {
                a += e * hs_inner(&t.images()[m], &gb);
            }
            out.view_mut((i * k, j * k), (k, k)).copy_from(&a);
        }
    }
    out
}

/// Maximize Re<Phi, X> over the unit ball of M_n(E). With block
/// geometry the maximizer is the per-component polar unitary (an
/// extreme point); otherwise we take the normalized projection, which
/// stays feasible.
pub(crate) fn lin_max_step(
    space: &OperatorSpace,
    geometry: Option<&BallGeometry>,
    phi: &CMat,
    n: usize,
) -> Option<CMat> {
    match geometry {
        Some(geo) => {
            let k = space.ambient_dim();
            let un = kron(&identity(n), &geo.intertwiner);
            let phi_c = un.adjoint() * phi * &un;
            let mut out_c = CMat::zeros(n * k, n * k);
            for set in &geo.sets {
                let idx: Vec<usize> = (0..n)
                    .flat_map(|a| set.iter().map(move |&p| a * k + p))
                    .collect();
                let d = idx.len();
                let mut sub = CMat::zeros(d, d);
                for (r, &ir) in idx.iter().enumerate() {
                    for (c, &ic) in idx.iter().enumerate() {
                        sub[(r, c)] = phi_c[(ir, ic)];
                    }
                }
                let u = polar_unitary(&sub);
                for (r, &ir) in idx.iter().enumerate() {
                    for (c, &ic) in idx.iter().enumerate() {
                        out_c[(ir, ic)] = u[(r, c)];
                    }
                }
            }
            Some(&un * out_c * un.adjoint())
        }
        None => {
            let p = project_ampliated(space, phi, n);
            let norm = op_norm(&p);
            if norm < 1e-14 {
                None
            } else {
                Some(p / C64::new(norm, 0.0))
            }
        }
    }
}

pub(crate) fn random_ball_point(
    space: &OperatorSpace,
    geometry: Option<&BallGeometry>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> CMat {
    let k = space.ambient_dim();
    let g = random_gaussian(rng, n * k, n * k);
    lin_max_step(space, geometry, &g, n).unwrap_or_else(|| CMat::zeros(n * k, n * k))
}

/// Certified interval for sup over the unit ball of M_n(E) of
/// ||T_n(X)||, by multi-start alternating ascent.
pub fn op_norm_interval(
    t: &LinearOperatorMap,
    n: usize,
    params: &SearchParams,
) -> NormInterval {
    let space = t.domain();
    let geometry = t.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (n as u64).wrapping_mul(0x9e3779b9));
    let mut best: f64 = 0.0;
    let mut any_converged = false;
    for _start in 0..params.starts {
        let mut x = random_ball_point(space, geometry, n, &mut rng);
        let mut prev = -1.0f64;
        for _iter in 0..params.max_iters {
            let y = apply_ampliated(t, &x, n);
            let (sigma, u, v) = top_singular_triple(&y);
            best = best.max(sigma);
            if sigma < 1e-15 {
                break;
            }
            if (sigma - prev).abs() < params.plateau_tol {
                any_converged = true;
                break;
            }
            prev = sigma;
            let g = &u * v.adjoint();
            let phi = riesz_ampliated(t, &g, n);
            match lin_max_step(space, geometry, &phi, n) {
                Some(next) => x = next,
                None => break,
            }
        }
        let final_val = op_norm(&apply_ampliated(t, &x, n));
        best = best.max(final_val);
    }
    let (upper, tag) = match geometry {
        Some(_) => (best, "block-unitary-extreme"),
        None => {
            let k = space.ambient_dim();
            (t.hs_norm() * ((n * k) as f64).sqrt(), "hs-crossnorm")
        }
    };
    NormInterval {
        lower: best,
        upper: upper.max(best),
        method_tags: vec!["multistart".into(), tag.into()],
        converged: any_converged,
    }
}

/// cb-norm interval: the operator norm of the ampliation at the
/// codomain dimension (Smith level), where the matrix norms stabilize.
pub fn cb_norm_interval(t: &LinearOperatorMap, params: &SearchParams) -> NormInterval {
    let level = t.codomain_dim().max(1);
    let mut iv = op_norm_interval(t, level, params);
    iv.method_tags.push("smith-ampliation".into());
    iv
}

// ---------------------------------------------------------------------------
// Multiplicativity defect.
// ---------------------------------------------------------------------------

/// The bilinear defect of a map between algebras:
/// L^v(x, y) = L(xy) - L(x) L(y).
#[derive(Debug, Clone)]
pub struct BilinearDefect {
    base: LinearOperatorMap,
}

impl BilinearDefect {
    pub fn base(&self) -> &LinearOperatorMap {
        &self.base
    }

    pub fn eval(&self, x: &CMat, y: &CMat) -> CMat {
        self.base.apply(&(x * y)) - self.base.apply(x) * self.base.apply(y)
    }

    /// Row-column ampliated evaluation:
    /// (L^v)_n(X, Y) = L_n(XY) - L_n(X) L_n(Y).
    pub fn eval_ampliated(&self, x: &CMat, y: &CMat, n: usize) -> CMat {
        apply_ampliated(&self.base, &(x * y), n)
            - apply_ampliated(&self.base, x, n) * apply_ampliated(&self.base, y, n)
    }
}

pub fn defect(l: &LinearOperatorMap) -> BilinearDefect {
    BilinearDefect { base: l.clone() }
}

/// Certified lower bound for the level-n defect norm (a lower bound
/// for the cb norm of L^v), by alternating bilinear ascent over the
/// two unit balls. `upper_hint` is an analytic majorant from the
/// caller when one is available.
pub fn defect_hcb_interval(
    l: &LinearOperatorMap,
    n: usize,
    params: &SearchParams,
    upper_hint: Option<f64>,
) -> NormInterval {
    let d = defect(l);
    let space = l.domain();
    let geometry = l.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xdefec7 ^ (n as u64) << 17);
    let mut best: f64 = 0.0;
    let mut any_converged = false;
    for _start in 0..params.starts {
        let mut x = random_ball_point(space, geometry, n, &mut rng);
        let mut y = random_ball_point(space, geometry, n, &mut rng);
        let mut prev = -1.0f64;
        for _iter in 0..params.max_iters {
            // Ascend X with Y fixed.
            let z = d.eval_ampliated(&x, &y, n);
            let (sigma, zu, zv) = top_singular_triple(&z);
            best = best.max(sigma);
            if sigma < 1e-16 {
                break;
            }
            let g = &zu * zv.adjoint();
            let ly = apply_ampliated(l, &y, n);
            let a = riesz_ampliated(l, &g, n);
            let b = riesz_ampliated(l, &(&g * ly.adjoint()), n);
            let grad_x = &a * y.adjoint() - b;
            if let Some(next) = lin_max_step(space, geometry, &grad_x, n) {
                x = next;
            }
            // Ascend Y with the updated X.
            let z = d.eval_ampliated(&x, &y, n);
            let (sigma, zu, zv) = top_singular_triple(&z);
            best = best.max(sigma);
            let g = &zu * zv.adjoint();
            let lx = apply_ampliated(l, &x, n);
            let a = riesz_ampliated(l, &g, n);
            let b = riesz_ampliated(l, &(lx.adjoint() * &g), n);
            let grad_y = x.adjoint() * &a - b;
            if let Some(next) = lin_max_step(space, geometry, &grad_y, n) {
                y = next;
            }
            let val = op_norm(&d.eval_ampliated(&x, &y, n));
            best = best.max(val);
            if (val - prev).abs() < params.plateau_tol {
                any_converged = true;
                break;
            }
            prev = val;
        }
    }
    let upper = upper_hint.unwrap_or(f64::INFINITY).max(best);
    NormInterval {
        lower: best,
        upper,
        method_tags: vec!["multistart-bilinear".into()],
        converged: any_converged,
    }
}

/// Analytic defect majorant of a near-identity map:
/// (2 + ||T||_cb) ||T - id||_cb, valid with cb upper bounds plugged in.
pub fn defect_upper_from_near_identity(t_cb_upper: f64, t_minus_id_cb_upper: f64) -> f64 {
    (2.0 + t_cb_upper) * t_minus_id_cb_upper
}
