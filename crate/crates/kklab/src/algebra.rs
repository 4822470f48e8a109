//! Subspaces and unital subalgebras of the K x K complex matrices:
//! Hilbert-Schmidt orthonormalization, membership tests, commutants,
//! conditional expectations and multi-matrix block structure.

use crate::error::{KkError, Result};
use crate::matrix::*;
use crate::maps::LinearOperatorMap;
use crate::tol::Tolerances;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A linear subspace of the K x K matrices given by a basis, together
/// with a derived Hilbert-Schmidt orthonormal basis of the same span.
#[derive(Debug, Clone)]
pub struct OperatorSpace {
    ambient_dim: usize,
    basis: Vec<CMat>,
    onb: Vec<CMat>,
    /// K^2 x d matrix whose columns are the flattened orthonormal basis.
    flat_onb: CMat,
    /// d x K^2 pseudo-inverse of the flattened input basis.
    basis_pinv: CMat,
}

impl OperatorSpace {
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.onb.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn onb(&self) -> &[CMat] {
        &self.onb
    }

    /// Hilbert-Schmidt orthogonal projection onto the span.
    pub fn project(&self, x: &CMat) -> CMat {
        let c = self.onb_coords(x);
        self.from_onb_coords(&c)
    }

    pub fn onb_coords(&self, x: &CMat) -> CVec {
        let v = vec_of(x);
        self.flat_onb.adjoint() * v
    }

    pub fn from_onb_coords(&self, c: &CVec) -> CMat {
        let v = &self.flat_onb * c;
        mat_of(&v, self.ambient_dim, self.ambient_dim)
    }

    /// Coordinates over the *input* basis (least squares).
    pub fn basis_coords(&self, x: &CMat) -> CVec {
        &self.basis_pinv * vec_of(x)
    }

    /// Operator-norm residual of x against its projection onto the span.
    pub fn membership_residual(&self, x: &CMat) -> f64 {
        op_norm(&(x - self.project(x)))
    }

    pub fn contains(&self, x: &CMat, tol: f64) -> bool {
        self.membership_residual(x) <= tol
    }

    /// Span containment: every onb element of `other` lies in this span.
    pub fn contains_space(&self, other: &OperatorSpace, tol: f64) -> bool {
        other.onb.iter().all(|e| self.contains(e, tol))
    }

    /// Build a space directly from an already HS-orthonormal family.
    pub(crate) fn from_orthonormal(ambient_dim: usize, onb: Vec<CMat>) -> OperatorSpace {
        let d = onb.len();
        let kk = ambient_dim * ambient_dim;
        let mut flat = CMat::zeros(kk, d);
        for (j, m) in onb.iter().enumerate() {
            flat.set_column(j, &vec_of(m));
        }
        let pinv = flat.adjoint();
        OperatorSpace {
            ambient_dim,
            basis: onb.clone(),
            onb,
            flat_onb: flat,
            basis_pinv: pinv,
        }
    }
}

/// Build an operator space from a basis, rejecting dependent input.
pub fn build_space(ambient_dim: usize, basis: Vec<CMat>) -> Result<OperatorSpace> {
    build_space_with(ambient_dim, basis, &Tolerances::default())
}

pub fn build_space_with(
    ambient_dim: usize,
    basis: Vec<CMat>,
    tol: &Tolerances,
) -> Result<OperatorSpace> {
    if basis.is_empty() {
        return Err(KkError::OutOfRange("empty basis".into()));
    }
    for m in &basis {
        if m.nrows() != ambient_dim || m.ncols() != ambient_dim {
            return Err(KkError::DimensionMismatch {
                expected: ambient_dim,
                got: m.nrows().max(m.ncols()),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(KkError::OutOfRange("non-finite matrix entry".into()));
        }
    }
    let d = basis.len();
    let kk = ambient_dim * ambient_dim;
    let mut flat = CMat::zeros(kk, d);
    for (j, m) in basis.iter().enumerate() {
        flat.set_column(j, &vec_of(m));
    }
    let gram = flat.adjoint() * &flat;
    let sigma_min = smallest_singular_value(&gram);
    if sigma_min <= tol.rank_tol {
        return Err(KkError::DependentBasis { sigma: sigma_min });
    }
    let svd = svd_dilation(&flat);
    let mut onb = Vec::with_capacity(d);
    let mut flat_onb = CMat::zeros(kk, d);
    for j in 0..d {
        let col = svd.u.column(j).into_owned();
        flat_onb.set_column(j, &col);
        onb.push(mat_of(&col, ambient_dim, ambient_dim));
    }
    // Pseudo-inverse of the input basis for structure constants.
    let mut sinv = CMat::zeros(d, d);
    for j in 0..d {
        sinv[(j, j)] = C64::new(1.0 / svd.singular_values[j], 0.0);
    }
    let basis_pinv = &svd.v * sinv * svd.u.adjoint();
    Ok(OperatorSpace {
        ambient_dim,
        basis,
        onb,
        flat_onb,
        basis_pinv,
    })
}

/// Block decomposition of a multi-matrix algebra: block i is a factor
/// M_{n_i} with multiplicity m_i, realized by explicit matrix units in
/// ambient coordinates and an intertwining unitary putting the algebra
/// in block-diagonal position.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    pub block_sizes: Vec<usize>,
    pub multiplicities: Vec<usize>,
    /// units[i][j * n_i + l] is the matrix unit E^{(i)}_{jl}.
    pub units: Vec<Vec<CMat>>,
    pub intertwiner: CMat,
}

/// A unital subalgebra of the K x K matrices.
#[derive(Debug, Clone)]
pub struct OperatorAlgebra {
    space: OperatorSpace,
    unit: CMat,
    /// structure[i][j] are basis coordinates of b_i b_j.
    structure_constants: Vec<Vec<CVec>>,
    selfadjoint: bool,
    block_structure: Option<BlockStructure>,
    tol: Tolerances,
}

impl OperatorAlgebra {
    pub fn space(&self) -> &OperatorSpace {
        &self.space
    }

    pub fn ambient_dim(&self) -> usize {
        self.space.ambient_dim()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn unit(&self) -> &CMat {
        &self.unit
    }

    pub fn basis(&self) -> &[CMat] {
        self.space.basis()
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.selfadjoint
    }

    pub fn block_structure(&self) -> Option<&BlockStructure> {
        self.block_structure.as_ref()
    }

    pub fn structure_constants(&self) -> &[Vec<CVec>] {
        &self.structure_constants
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Largest residual of any basis product against its
    /// structure-constant expansion, in operator norm.
    pub fn structure_residual(&self) -> f64 {
        let b = self.space.basis();
        let mut worst: f64 = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                let prod = &b[i] * &b[j];
                let mut rec = zeros(self.ambient_dim());
                for (m, bm) in b.iter().enumerate() {
                    rec += bm * self.structure_constants[i][j][m];
                }
                worst = worst.max(op_norm(&(prod - rec)));
            }
        }
        worst
    }
}

/// Build a unital operator algebra over a space: verifies unit
/// membership and multiplicative closure, computes structure constants,
/// detects selfadjointness and, for selfadjoint algebras, the block
/// structure.
pub fn build_algebra(space: OperatorSpace, selfadjoint_hint: bool) -> Result<OperatorAlgebra> {
    build_algebra_with(space, selfadjoint_hint, &Tolerances::default())
}

pub fn build_algebra_with(
    space: OperatorSpace,
    selfadjoint_hint: bool,
    tol: &Tolerances,
) -> Result<OperatorAlgebra> {
    let k = space.ambient_dim();
    let unit = identity(k);
    let unit_res = space.membership_residual(&unit);
    if unit_res > tol.mem_tol {
        return Err(KkError::NotUnital { residual: unit_res });
    }
    let b = space.basis().to_vec();
    let d = b.len();
    let mut structure = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let prod = &b[i] * &b[j];
            let res = space.membership_residual(&prod);
            if res > tol.mem_tol {
                return Err(KkError::NotClosedUnderMultiplication {
                    i,
                    j,
                    residual: res,
                });
            }
            row.push(space.basis_coords(&prod));
        }
        structure.push(row);
    }
    let adjoint_res = b
        .iter()
        .map(|m| space.membership_residual(&m.adjoint()))
        .fold(0.0f64, f64::max);
    let selfadjoint = adjoint_res <= tol.mem_tol;
    if selfadjoint_hint && !selfadjoint {
        return Err(KkError::NotSelfadjoint {
            residual: adjoint_res,
        });
    }
    let mut algebra = OperatorAlgebra {
        space,
        unit,
        structure_constants: structure,
        selfadjoint,
        block_structure: None,
        tol: *tol,
    };
    if selfadjoint {
        algebra.block_structure = Some(detect_block_structure(&algebra)?);
    }
    Ok(algebra)
}

/// Commutant of an algebra inside the full matrix algebra: the solution
/// space of [x, b_i] = 0 for every basis element.
pub fn commutant(algebra: &OperatorAlgebra) -> OperatorSpace {
    commutant_of_span(algebra.ambient_dim(), algebra.basis())
}

/// Commutant of an arbitrary family of matrices.
pub fn commutant_of_span(ambient_dim: usize, family: &[CMat]) -> OperatorSpace {
    let k = ambient_dim;
    let kk = k * k;
    // vec([x,b]) = (b^T kron I - I kron b) vec(x) in column-major
    // convention; the commutant is the joint nullspace, read off from
    // the accumulated Gram matrix of the stacked operators.
    let mut gram = CMat::zeros(kk, kk);
    let eye = identity(k);
    for b in family {
        let op = kron(&b.transpose(), &eye) - kron(&eye, b);
        gram += op.adjoint() * op;
    }
    let (vals, vecs) = hermitian_eigen(&gram);
    let top = vals.last().copied().unwrap_or(0.0).max(1.0);
    // Eigenvalues of the Gram resolve sigma down to ~sqrt(eps)*scale.
    let null_tol = 1e-12 * top;
    let mut onb = Vec::new();
    for i in 0..kk {
        if vals[i] <= null_tol {
            let col = vecs.column(i).into_owned();
            onb.push(mat_of(&col, k, k));
        }
    }
    OperatorSpace::from_orthonormal(k, onb)
}

/// Hilbert-Schmidt conditional expectation onto a selfadjoint unital
/// subalgebra: the orthogonal projection of the full matrix algebra
/// onto N. It is unital, completely positive, idempotent and
/// N-bimodular.
pub fn conditional_expectation(n: &OperatorAlgebra) -> Result<LinearOperatorMap> {
    if !n.is_selfadjoint() {
        return Err(KkError::NotSelfadjoint { residual: f64::NAN });
    }
    let k = n.ambient_dim();
    let full = full_matrix_space(k);
    let images: Vec<CMat> = full.onb().iter().map(|e| n.space().project(e)).collect();
    Ok(LinearOperatorMap::from_onb_images(full, k, images))
}

/// The full matrix algebra M_K as an operator space (matrix-unit onb).
pub fn full_matrix_space(k: usize) -> OperatorSpace {
    let mut onb = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            onb.push(unit(k, i, j));
        }
    }
    OperatorSpace::from_orthonormal(k, onb)
}

pub fn full_matrix_algebra(k: usize) -> OperatorAlgebra {
    let mut algebra = build_algebra(full_matrix_space(k), true).expect("full matrix algebra");
    let mut units = Vec::with_capacity(k * k);
    for j in 0..k {
        for l in 0..k {
            units.push(unit(k, j, l));
        }
    }
    algebra.block_structure = Some(BlockStructure {
        block_sizes: vec![k],
        multiplicities: vec![1],
        units: vec![units],
        intertwiner: identity(k),
    });
    algebra
}

/// Center of the algebra: elements of A commuting with all of A.
pub fn center_space(algebra: &OperatorAlgebra) -> OperatorSpace {
    let b = algebra.basis();
    let d = b.len();
    let k = algebra.ambient_dim();
    let kk = k * k;
    // Solve for coordinates c over the onb with [sum c_m e_m, b_i] = 0.
    let onb = algebra.space().onb();
    let mut stacked = CMat::zeros(kk * d, onb.len());
    for (r, bi) in b.iter().enumerate() {
        for (m, em) in onb.iter().enumerate() {
            let com = commutator(em, bi);
            stacked
                .view_mut((r * kk, m), (kk, 1))
                .copy_from(&vec_of(&com));
        }
    }
    let gram = stacked.adjoint() * &stacked;
    let (vals, vecs) = hermitian_eigen(&gram);
    let top = vals.last().copied().unwrap_or(0.0).max(1.0);
    let null_tol = 1e-12 * top;
    let mut members = Vec::new();
    for i in 0..onb.len() {
        if vals[i] <= null_tol {
            let c = vecs.column(i).into_owned();
            members.push(algebra.space().from_onb_coords(&c));
        }
    }
    OperatorSpace::from_orthonormal(k, orthonormalize_family(k, &members))
}

fn orthonormalize_family(k: usize, family: &[CMat]) -> Vec<CMat> {
    if family.is_empty() {
        return Vec::new();
    }
    let kk = k * k;
    let mut flat = CMat::zeros(kk, family.len());
    for (j, m) in family.iter().enumerate() {
        flat.set_column(j, &vec_of(m));
    }
    let svd = svd_dilation(&flat);
    let mut onb = Vec::new();
    for j in 0..svd.singular_values.len() {
        if svd.singular_values[j] > 1e-10 {
            onb.push(mat_of(&svd.u.column(j).into_owned(), k, k));
        }
    }
    onb
}

/// Cluster sorted eigenvalues into groups separated by more than `gap`.
fn cluster_eigenvalues(vals: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..vals.len() {
        match groups.last_mut() {
            Some(g) if (vals[i] - vals[*g.last().unwrap()]).abs() <= gap => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Simultaneous block diagonalization of a selfadjoint algebra via
/// spectral decomposition of a random selfadjoint central element;
/// degenerate draws are resolved by resampling.
fn detect_block_structure(algebra: &OperatorAlgebra) -> Result<BlockStructure> {
    let k = algebra.ambient_dim();
    let center = center_space(algebra);
    let r = center.dim();
    if r == 0 {
        return Err(KkError::NoBlockStructure);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xb10c);
    // Central projections from a generic central element.
    let mut central_projs: Option<Vec<CMat>> = None;
    for _ in 0..32 {
        let mut z = zeros(k);
        for e in center.onb() {
            let c = random_gaussian(&mut rng, 1, 1)[(0, 0)];
            z += e * c;
        }
        let h = (&z + z.adjoint()) * C64::new(0.5, 0.0);
        let scale = op_norm(&h).max(1.0);
        let (vals, vecs) = hermitian_eigen(&h);
        let groups = cluster_eigenvalues(&vals, 1e-7 * scale);
        if groups.len() != r {
            continue;
        }
        let mut projs = Vec::with_capacity(r);
        for g in &groups {
            let mut w = CMat::zeros(k, g.len());
            for (col, &i) in g.iter().enumerate() {
                w.set_column(col, &vecs.column(i));
            }
            projs.push(w);
        }
        central_projs = Some(projs);
        break;
    }
    let isometries = central_projs.ok_or(KkError::NoBlockStructure)?;

    let mut block_sizes = Vec::new();
    let mut multiplicities = Vec::new();
    let mut all_units = Vec::new();
    let mut columns: Vec<CVec> = Vec::new();
    for w in &isometries {
        let di = w.ncols();
        // Compress the algebra to the central block.
        let compressed: Vec<CMat> = algebra
            .basis()
            .iter()
            .map(|b| w.adjoint() * b * w)
            .collect();
        let comp_onb = orthonormalize_family(di, &compressed);
        let dim = comp_onb.len();
        let n = (dim as f64).sqrt().round() as usize;
        if n * n != dim || di % n != 0 {
            return Err(KkError::NoBlockStructure);
        }
        let m = di / n;
        let units = factor_matrix_units(&comp_onb, di, n, m, &mut rng)?;
        // Ambient matrix units and intertwiner columns w_{j,s} = v_j f_s.
        let q1 = &units[0] * units[0].adjoint();
        let (qvals, qvecs) = hermitian_eigen(&q1);
        let mut f = Vec::new();
        for i in 0..di {
            if qvals[i] > 0.5 {
                f.push(qvecs.column(i).into_owned());
            }
        }
        if f.len() != m {
            return Err(KkError::NoBlockStructure);
        }
        for fs in &f {
            for vj in &units {
                let col = w * (vj * fs);
                columns.push(col);
            }
        }
        let mut ambient_units = Vec::with_capacity(n * n);
        for j in 0..n {
            for l in 0..n {
                let e = &units[j] * units[l].adjoint();
                ambient_units.push(w * e * w.adjoint());
            }
        }
        block_sizes.push(n);
        multiplicities.push(m);
        all_units.push(ambient_units);
    }
    if columns.len() != k {
        return Err(KkError::NoBlockStructure);
    }
    let mut u = CMat::zeros(k, k);
    for (j, col) in columns.iter().enumerate() {
        u.set_column(j, col);
    }
    Ok(BlockStructure {
        block_sizes,
        multiplicities,
        units: all_units,
        intertwiner: u,
    })
}

/// Matrix units for a factor isomorphic to M_n with multiplicity m,
/// given an onb of its compression to M_{di}. Returns the partial
/// isometries v_1..v_n with v_j v_j^* = q_j and v_j^* v_j = q_1; the
/// units are E_{jl} = v_j v_l^*.
fn factor_matrix_units(
    comp_onb: &[CMat],
    di: usize,
    n: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CMat>> {
    for _attempt in 0..32 {
        let mut a = zeros(di);
        for e in comp_onb {
            let c = random_gaussian(rng, 1, 1)[(0, 0)];
            a += e * c;
        }
        let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let scale = op_norm(&h).max(1.0);
        let (vals, vecs) = hermitian_eigen(&h);
        let groups = cluster_eigenvalues(&vals, 1e-7 * scale);
        if groups.len() != n || groups.iter().any(|g| g.len() != m) {
            continue;
        }
        let mut qs = Vec::with_capacity(n);
        for g in &groups {
            let mut w = CMat::zeros(di, g.len());
            for (col, &i) in g.iter().enumerate() {
                w.set_column(col, &vecs.column(i));
            }
            qs.push(&w * w.adjoint());
        }
        // Link the spectral projections by polar parts of q_j r q_1.
        let mut rmat = zeros(di);
        for e in comp_onb {
            let c = random_gaussian(rng, 1, 1)[(0, 0)];
            rmat += e * c;
        }
        let mut vs = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            if j == 0 {
                vs.push(qs[0].clone());
                continue;
            }
            let c = &qs[j] * &rmat * &qs[0];
            let svd = svd_dilation(&c);
            let sv = &svd.singular_values;
            if sv.len() < m || sv[m - 1] < 1e-6 * sv[0].max(1e-300) {
                ok = false;
                break;
            }
            let mut v = CMat::zeros(di, di);
            for t in 0..sv.len() {
                if sv[t] >= 1e-6 * sv[0] {
                    let ut = svd.u.column(t).into_owned();
                    let wt = svd.v.column(t).into_owned();
                    v += &ut * wt.adjoint();
                }
            }
            vs.push(v);
        }
        if ok {
            return Ok(vs);
        }
    }
    Err(KkError::NoBlockStructure)
}

/// Block-diagonal multi-matrix algebra oplus M_{n_i} inside M_K,
/// padded with a scalar block when the sizes do not fill the ambient
/// dimension.
pub fn multi_matrix_algebra(block_sizes: &[usize], ambient_dim: usize) -> Result<OperatorAlgebra> {
    let total: usize = block_sizes.iter().sum();
    if total > ambient_dim || block_sizes.iter().any(|&n| n == 0) || block_sizes.is_empty() {
        return Err(KkError::BadBlockSizes(format!(
            "sizes {:?} in ambient dimension {}",
            block_sizes, ambient_dim
        )));
    }
    let mut basis = Vec::new();
    let mut offset = 0usize;
    for &n in block_sizes {
        for i in 0..n {
            for j in 0..n {
                basis.push(unit(ambient_dim, offset + i, offset + j));
            }
        }
        offset += n;
    }
    if offset < ambient_dim {
        // Scalar padding block keeps the algebra unital.
        let mut pad = zeros(ambient_dim);
        for i in offset..ambient_dim {
            pad[(i, i)] = cone();
        }
        basis.push(pad.clone());
    }
    let space = build_space(ambient_dim, basis)?;
    let mut algebra = build_algebra(space, true)?;
    // The standard block structure is exact here; prefer it over the
    // randomized detection (whose matrix units are only canonical up to
    // an inner automorphism).
    let mut sizes = block_sizes.to_vec();
    let mut mults = vec![1usize; block_sizes.len()];
    let mut units = Vec::new();
    let mut off = 0usize;
    for &n in block_sizes {
        let mut block_units = Vec::with_capacity(n * n);
        for j in 0..n {
            for l in 0..n {
                block_units.push(unit(ambient_dim, off + j, off + l));
            }
        }
        units.push(block_units);
        off += n;
    }
    if off < ambient_dim {
        let mut pad = zeros(ambient_dim);
        for i in off..ambient_dim {
            pad[(i, i)] = cone();
        }
        sizes.push(1);
        mults.push(ambient_dim - off);
        units.push(vec![pad]);
    }
    algebra.block_structure = Some(BlockStructure {
        block_sizes: sizes,
        multiplicities: mults,
        units,
        intertwiner: identity(ambient_dim),
    });
    Ok(algebra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_algebra2() -> OperatorAlgebra {
        multi_matrix_algebra(&[1, 1], 2).unwrap()
    }

    #[test]
    fn space_of_identity_is_one_dimensional() {
        let s = build_space(2, vec![identity(2)]).unwrap();
        assert_eq!(s.dim(), 1);
        // onb element is I/sqrt(2) up to phase
        let e = &s.onb()[0];
        assert!((fro_norm(e) - 1.0).abs() < 1e-12);
        assert!(op_norm(&(e - &identity(2) * e[(0, 0)])) < 1e-12);
    }

    #[test]
    fn repeated_element_is_dependent() {
        let err = build_space(2, vec![unit(2, 0, 0), unit(2, 0, 0)]).unwrap_err();
        assert!(matches!(err, KkError::DependentBasis { .. }));
    }

    #[test]
    fn orthogonal_pair_two_dimensional() {
        // <I, e12>_HS = 0 so the Gram matrix is already diagonal.
        let s = build_space(2, vec![identity(2), unit(2, 0, 1)]).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(hs_inner(&identity(2), &unit(2, 0, 1)).norm() < 1e-15);
    }

    #[test]
    fn diagonal_algebra_builds_selfadjoint() {
        let a = diag_algebra2();
        assert!(a.is_selfadjoint());
        let bs = a.block_structure().unwrap();
        let mut sizes = bs.block_sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1]);
        assert!(a.structure_residual() < 1e-12);
    }

    #[test]
    fn idempotent_generator_closes() {
        // span{I, [[1,-t],[0,0]]}: the generator is idempotent.
        let t = 0.1;
        let mut g = zeros(2);
        g[(0, 0)] = cone();
        g[(0, 1)] = C64::new(-t, 0.0);
        let gg = &g * &g;
        assert!(op_norm(&(&gg - &g)) < 1e-14);
        let s = build_space(2, vec![identity(2), g]).unwrap();
        let a = build_algebra(s, false).unwrap();
        assert!(!a.is_selfadjoint());
        assert!(a.block_structure().is_none());
    }

    #[test]
    fn not_unital_rejected() {
        let s = build_space(2, vec![unit(2, 0, 0), unit(2, 0, 1)]).unwrap();
        let err = build_algebra(s, false).unwrap_err();
        assert!(matches!(err, KkError::NotUnital { .. }));
    }

    #[test]
    fn commutant_of_full_is_scalars() {
        let a = full_matrix_algebra(2);
        let c = commutant(&a);
        assert_eq!(c.dim(), 1);
        assert!(c.contains(&identity(2), 1e-9));
    }

    #[test]
    fn commutant_of_diagonal_is_diagonal() {
        let a = diag_algebra2();
        let c = commutant(&a);
        assert_eq!(c.dim(), 2);
        assert!(c.contains(&unit(2, 0, 0), 1e-9));
        assert!(!c.contains(&unit(2, 0, 1), 1e-6));
    }

    #[test]
    fn commutant_of_nonselfadjoint_span() {
        // span{I, e12}: matrices commuting with e12 are span{I, e12}.
        let s = build_space(2, vec![identity(2), unit(2, 0, 1)]).unwrap();
        let a = build_algebra(s, false).unwrap();
        let c = commutant(&a);
        assert_eq!(c.dim(), 2);
        assert!(c.contains(&unit(2, 0, 1), 1e-9));
        assert!(c.contains(&identity(2), 1e-9));
    }

    #[test]
    fn bicommutant_contains_selfadjoint_algebra() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let c = commutant(&a);
        let cc = commutant_of_span(3, c.onb());
        for b in a.basis() {
            assert!(cc.membership_residual(b) < 1e-10);
        }
    }

    #[test]
    fn conditional_expectation_is_pinching() {
        let n = diag_algebra2();
        let e = conditional_expectation(&n).unwrap();
        let x = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(2.0, 1.0),
                C64::new(3.0, -1.0),
                C64::new(4.0, 0.0),
            ],
        );
        let ex = e.apply(&x);
        let mut want = zeros(2);
        want[(0, 0)] = x[(0, 0)];
        want[(1, 1)] = x[(1, 1)];
        assert!(op_norm(&(ex - want)) < 1e-12);
    }

    #[test]
    fn conditional_expectation_onto_scalars_is_trace() {
        let n = build_algebra(build_space(3, vec![identity(3)]).unwrap(), true).unwrap();
        let e = conditional_expectation(&n).unwrap();
        let x = CMat::from_fn(3, 3, |i, j| C64::new((i + 2 * j) as f64, j as f64));
        let ex = e.apply(&x);
        let want = identity(3) * (x.trace() / C64::new(3.0, 0.0));
        assert!(op_norm(&(ex - want)) < 1e-12);
    }

    #[test]
    fn conditional_expectation_refused_for_nonselfadjoint() {
        let s = build_space(2, vec![identity(2), unit(2, 0, 1)]).unwrap();
        let a = build_algebra(s, false).unwrap();
        assert!(matches!(
            conditional_expectation(&a),
            Err(KkError::NotSelfadjoint { .. })
        ));
    }

    #[test]
    fn conditional_expectation_bimodular_on_blocks() {
        let n = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let e = conditional_expectation(&n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = random_gaussian(&mut rng, 3, 3);
            let a = n.space().project(&random_gaussian(&mut rng, 3, 3));
            let b = n.space().project(&random_gaussian(&mut rng, 3, 3));
            let lhs = e.apply(&(&a * &x * &b));
            let rhs = &a * e.apply(&x) * &b;
            assert!(op_norm(&(lhs - rhs)) < 1e-12);
        }
    }

    #[test]
    fn block_structure_of_m2_plus_m1() {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let bs = a.block_structure().unwrap();
        let mut sizes = bs.block_sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        assert!(bs.multiplicities.iter().all(|&m| m == 1));
        // Intertwiner is unitary.
        let u = &bs.intertwiner;
        assert!(op_norm(&(u.adjoint() * u - identity(3))) < 1e-10);
        // Units are members of the algebra.
        for us in &bs.units {
            for e in us {
                assert!(a.space().membership_residual(e) < 1e-9);
            }
        }
    }

    #[test]
    fn padded_block_sizes() {
        let a = multi_matrix_algebra(&[2], 3).unwrap();
        assert_eq!(a.dim(), 5);
        let bs = a.block_structure().unwrap();
        let mut sizes = bs.block_sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
    }
}
