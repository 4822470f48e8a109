//! Complex matrix primitives shared by every module: operator norms,
//! Hilbert-Schmidt geometry, polar factors and seeded random matrices.
//!
//! Singular values and vectors are computed through the Hermitian
//! dilation [[0, M], [M^*, 0]] rather than nalgebra's general SVD,
//! which misconverges on complex matrices with degenerate spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

pub fn identity(k: usize) -> CMat {
    CMat::identity(k, k)
}

pub fn zeros(k: usize) -> CMat {
    CMat::zeros(k, k)
}

/// Matrix unit e_{ij} in the k x k matrices (0-based indices).
pub fn unit(k: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(k, k);
    m[(i, j)] = cone();
    m
}

pub fn real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hilbert-Schmidt inner product tr(a^* b).
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    let mut s = czero();
    for (x, y) in a.iter().zip(b.iter()) {
        s += x.conj() * y;
    }
    s
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Column-major flattening of a matrix into a vector.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn mat_of(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// The input is symmetrized first to shed roundoff.
///
/// Cyclic complex Jacobi rather than the library QR iteration: the
/// latter returns wrong eigenvectors on degenerate spectra, infinite
/// eigenvalues on inputs with extreme dynamic range, and NaNs on
/// denormal entries. Jacobi is a product of exact unitaries, so the
/// eigenvector matrix is orthonormal by construction and degenerate
/// clusters are handled correctly; at our dimensions (dilations up to
/// ~64) the O(n^3)-per-sweep cost is irrelevant.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    jacobi(m, true)
}

/// Eigenvalues only (ascending); skips accumulating the eigenvector
/// product, which matters in the norm-search hot loops.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    jacobi(m, false).0
}

fn jacobi(m: &CMat, want_vecs: bool) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let scale = h.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return (vec![0.0; n], identity(n));
    }
    let mut a = h / C64::new(scale, 0.0);
    let mut v = identity(n);
    let tol = 1e-15;
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[(p, q)];
                let r = g.norm();
                if r <= 1e-18 {
                    continue;
                }
                // Phase out g, then a real 2x2 rotation: the combined
                // unitary on (p, q) is
                //   [c, -s; s e^{-i phi}, c e^{-i phi}],  g = r e^{i phi},
                // and (U^H A U)_{pq} = r(c^2 - s^2) + (aqq - app) c s
                // vanishes for the small root of t^2 - 2 tau t - 1 = 0.
                let phase = g / C64::new(r, 0.0);
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let upp = C64::new(c, 0.0);
                let upq = C64::new(-s, 0.0);
                let uqp = phase.conj() * s;
                let uqq = phase.conj() * c;
                // Column update A <- A U, then row update A <- U^H A.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = czero();
                a[(q, p)] = czero();
                if want_vecs {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * upp + vkq * uqp;
                        v[(k, q)] = vkp * upq + vkq * uqq;
                    }
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let vals: Vec<f64> = idx.iter().map(|&i| a[(i, i)].re * scale).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &v.column(i));
    }
    (vals, vecs)
}

/// Thin singular value decomposition via the Hermitian dilation.
/// Returns singular values in descending order with matching left and
/// right singular vectors as columns of `u` and `v` (M v_i = s_i u_i).
pub struct Svd {
    pub singular_values: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

pub fn svd_dilation(m: &CMat) -> Svd {
    let (rows, cols) = (m.nrows(), m.ncols());
    let r = rows.min(cols);
    let d = rows + cols;
    let mut dil = CMat::zeros(d, d);
    dil.view_mut((0, rows), (rows, cols)).copy_from(m);
    dil.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let (vals, vecs) = hermitian_eigen(&dil);
    // Top r eigenvalues are the singular values; eigenvectors split as
    // (u, v)/sqrt(2) for positive eigenvalues.
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut singular_values = Vec::with_capacity(r);
    let mut u = CMat::zeros(rows, r);
    let mut v = CMat::zeros(cols, r);
    for i in 0..r {
        let col = d - 1 - i;
        let lambda = vals[col].max(0.0);
        singular_values.push(lambda);
        let full = vecs.column(col).into_owned();
        let p = CVec::from_column_slice(&full.as_slice()[0..rows]);
        let q = CVec::from_column_slice(&full.as_slice()[rows..rows + cols]);
        let pn = p.norm();
        let qn = q.norm();
        // Zero-eigenvalue vectors may split unevenly; renormalize the
        // halves separately when they carry mass.
        if pn > 1e-12 {
            u.set_column(i, &(&p / C64::new(pn, 0.0)));
        } else {
            u.set_column(i, &(&p * C64::new(sqrt2, 0.0)));
        }
        if qn > 1e-12 {
            v.set_column(i, &(&q / C64::new(qn, 0.0)));
        } else {
            v.set_column(i, &(&q * C64::new(sqrt2, 0.0)));
        }
    }
    Svd {
        singular_values,
        u,
        v,
    }
}

/// Singular values only (descending), via the Gram matrix of the
/// smaller side for the large ones and the dilation when full accuracy
/// on small singular values is required.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    singular_values_only(m)
}

/// Spectral (operator) norm. Uses the Gram matrix, whose largest
/// eigenvalue is computed with full relative accuracy.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.iter().all(|z| z.norm_sqr() == 0.0) {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    top_eigenvalue_psd(&gram).max(0.0).sqrt()
}

/// Largest eigenvalue of a PSD matrix. Power iteration with a
/// deterministic start; falls back to the Jacobi solver when the
/// Rayleigh quotient has not stagnated (near-degenerate gap) or the
/// input is numerically unusual.
fn top_eigenvalue_psd(gram: &CMat) -> f64 {
    let n = gram.nrows();
    let scale = gram.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    if n <= 2 || !scale.is_finite() {
        return hermitian_eigenvalues(gram).last().copied().unwrap_or(0.0);
    }
    let g = gram / C64::new(scale, 0.0);
    // Start from the dominant column mixed with the all-ones vector so
    // the iterate is not orthogonal to the top eigenspace in the
    // structured cases that show up here.
    let jmax = (0..n)
        .max_by(|&i, &j| g.column(i).norm().total_cmp(&g.column(j).norm()))
        .unwrap();
    let mut v: CVec = g.column(jmax).into_owned() + CVec::from_element(n, C64::new(1e-3, 0.0));
    let nv = v.norm();
    if nv == 0.0 {
        return hermitian_eigenvalues(gram).last().copied().unwrap_or(0.0) ;
    }
    v /= C64::new(nv, 0.0);
    let mut lambda = 0.0f64;
    for _ in 0..100 {
        let w = &g * &v;
        let wn = w.norm();
        if !wn.is_finite() {
            break;
        }
        if wn == 0.0 {
            return 0.0;
        }
        let next = CVec::from(&w / C64::new(wn, 0.0));
        // For PSD g the Rayleigh quotient equals ||g v||-ish monotone;
        // wn itself is the quotient estimate since ||v|| = 1.
        if (wn - lambda).abs() <= 1e-14 * wn.max(1e-300) {
            return wn * scale;
        }
        lambda = wn;
        v = next;
    }
    hermitian_eigenvalues(gram).last().copied().unwrap_or(0.0)
}

/// Singular values (descending) without accumulating singular vectors.
fn singular_values_only(m: &CMat) -> Vec<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let r = rows.min(cols);
    let d = rows + cols;
    let mut dil = CMat::zeros(d, d);
    dil.view_mut((0, rows), (rows, cols)).copy_from(m);
    dil.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let vals = hermitian_eigenvalues(&dil);
    (0..r).map(|i| vals[d - 1 - i].max(0.0)).collect()
}

pub fn nuclear_norm(m: &CMat) -> f64 {
    singular_values_only(m).iter().sum()
}

/// Smallest singular value with absolute accuracy (dilation-based).
pub fn smallest_singular_value(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values_only(m).last().copied().unwrap_or(0.0)
}

/// Condition number in the spectral norm; infinite when singular.
pub fn cond(m: &CMat) -> f64 {
    let sv = singular_values_only(m);
    let hi = sv.first().copied().unwrap_or(0.0);
    let lo = sv.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Polar factor sum_i u_i v_i^* over the nonzero singular triples; a
/// unitary for invertible input, a partial isometry otherwise.
pub fn polar_unitary(m: &CMat) -> CMat {
    // Square, decently conditioned inputs: Newton's iteration
    // X <- (X + X^{-H})/2 converges quadratically to the unitary polar
    // factor. Singular or non-square inputs fall back to the SVD-based
    // partial isometry.
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if scale > 0.0 && scale.is_finite() {
            let mut x = m / C64::new(scale, 0.0);
            for _ in 0..16 {
                let inv = match x.clone().try_inverse() {
                    Some(inv) => inv,
                    None => break,
                };
                if inv.iter().any(|z| !z.is_finite()) {
                    break;
                }
                // Frobenius scaling keeps the iteration count flat in
                // the condition number.
                let zeta = (inv.norm() / x.norm()).sqrt();
                if !zeta.is_finite() || zeta == 0.0 {
                    break;
                }
                let next = (&x * C64::new(zeta, 0.0)
                    + inv.adjoint() * C64::new(1.0 / zeta, 0.0))
                    * C64::new(0.5, 0.0);
                let diff = (&next - &x).norm();
                x = next;
                if diff <= 1e-14 * (m.nrows() as f64).sqrt() {
                    // Accept only a genuinely unitary limit.
                    let res = (x.adjoint() * &x - identity(m.nrows())).norm();
                    if res <= 1e-12 * (m.nrows() as f64) {
                        return x;
                    }
                    break;
                }
            }
        }
    }
    let svd = svd_dilation(m);
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = 1e-12 * top.max(1e-300);
    let mut p = CMat::zeros(m.nrows(), m.ncols());
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] > cutoff {
            let u = svd.u.column(i).into_owned();
            let v = svd.v.column(i).into_owned();
            p += &u * v.adjoint();
        }
    }
    p
}

/// Top singular triple (sigma, u, v) with m v = sigma u.
pub fn top_singular_triple(m: &CMat) -> (f64, CVec, CVec) {
    // Alternating power iteration: cheap, exact enough for the ascent
    // loops that call this per step. Degenerate top values are fine
    // (any vector in the top space maximizes). Fall back to the full
    // dilation solve when the gap is too small to converge.
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if rows > 0 && cols > 0 && scale > 0.0 && scale.is_finite() {
        let g = m / C64::new(scale, 0.0);
        let jmax = (0..cols)
            .max_by(|&i, &j| g.column(i).norm().total_cmp(&g.column(j).norm()))
            .unwrap();
        let mut v: CVec =
            CVec::from_fn(cols, |i, _| if i == jmax { cone() } else { C64::new(1e-3, 0.0) });
        v /= C64::new(v.norm(), 0.0);
        let mut sigma = 0.0f64;
        for _ in 0..60 {
            let w = &g * &v;
            let wn = w.norm();
            if !wn.is_finite() || wn == 0.0 {
                break;
            }
            let u = &w / C64::new(wn, 0.0);
            let z = g.adjoint() * &u;
            let zn = z.norm();
            if !zn.is_finite() || zn == 0.0 {
                break;
            }
            v = CVec::from(&z / C64::new(zn, 0.0));
            if (zn - sigma).abs() <= 1e-13 * zn.max(1e-300) {
                return (zn * scale, u.clone_owned(), v);
            }
            sigma = zn;
        }
    }
    let svd = svd_dilation(m);
    let sigma = svd.singular_values.first().copied().unwrap_or(0.0);
    let u = svd.u.column(0).into_owned();
    let v = svd.v.column(0).into_owned();
    (sigma, u, v)
}

/// Standard complex Gaussian matrix (independent N(0,1) real and imaginary parts).
pub fn random_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Random Gaussian matrix normalized to operator norm 1.
pub fn random_direction<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    loop {
        let m = random_gaussian(rng, rows, cols);
        let n = op_norm(&m);
        if n > 1e-8 {
            return m / C64::new(n, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn op_norm_of_units() {
        assert!((op_norm(&unit(2, 0, 1)) - 1.0).abs() < 1e-12);
        assert!((op_norm(&identity(3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hs_inner_orthogonal_units() {
        let a = unit(2, 0, 0);
        let b = unit(2, 0, 1);
        assert!(hs_inner(&a, &b).norm() < 1e-15);
        assert!((hs_inner(&a, &a) - cone()).norm() < 1e-15);
    }

    #[test]
    fn polar_of_invertible_is_unitary() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.2),
                C64::new(0.3, 0.0),
                C64::new(0.0, -0.1),
                C64::new(2.0, 0.0),
            ],
        );
        let p = polar_unitary(&m);
        let r = &p.adjoint() * &p - identity(2);
        assert!(op_norm(&r) < 1e-12);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let m = random_gaussian(&mut rng, 4, 4);
            let svd = svd_dilation(&m);
            let mut rec = CMat::zeros(4, 4);
            for i in 0..svd.singular_values.len() {
                let u = svd.u.column(i).into_owned();
                let v = svd.v.column(i).into_owned();
                rec += &u * v.adjoint() * C64::new(svd.singular_values[i], 0.0);
            }
            assert!(op_norm(&(rec - &m)) < 1e-10);
        }
    }

    #[test]
    fn svd_handles_degenerate_spectra() {
        // Unitary conjugates of the swap-style matrices that break
        // nalgebra's general complex SVD: all singular values are 1.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let u = polar_unitary(&random_gaussian(&mut rng, 4, 4));
            let sv = singular_values(&u);
            for s in sv {
                assert!((s - 1.0).abs() < 1e-10, "{s}");
            }
            assert!((op_norm(&u) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn smallest_singular_value_absolute_accuracy() {
        let mut m = identity(3);
        m[(2, 2)] = C64::new(1e-11, 0.0);
        let s = smallest_singular_value(&m);
        assert!((s - 1e-11).abs() < 1e-14);
    }

    #[test]
    fn eigen_finite_on_wide_dynamic_range() {
        // Entries spanning ~140 orders of magnitude drove the QR
        // iteration to infinite eigenvalues before the relative flush.
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = C64::new(0.5245704002624438, -0.013613570824709965);
        m[(0, 2)] = C64::new(-0.34529793538184594, 0.17582634705226194);
        m[(1, 1)] = C64::new(-4.268011217469443e-125, -4.0559867625493097e-125);
        m[(1, 3)] = C64::new(-1.575830299761179e-141, -5.580716054811111e-142);
        m[(2, 0)] = C64::new(-0.25650382918604153, 0.5531563513313945);
        m[(2, 2)] = C64::new(-0.0048804926378807345, -0.4502166309094323);
        m[(3, 1)] = C64::new(6.503123421889651e-127, -1.6564410540635455e-128);
        m[(3, 3)] = C64::new(1.667110863470539e-143, -7.95123979906303e-144);
        let (sigma, _, _) = top_singular_triple(&m);
        assert!(sigma.is_finite());
        assert!(sigma > 0.5 && sigma < 1.2, "{sigma}");
        assert!(op_norm(&m).is_finite());
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.5, 0.5),
                C64::new(0.5, -0.5),
                C64::new(1.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eigen(&a);
        let d = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new(vals[i], 0.0)
            } else {
                czero()
            }
        });
        let r = &vecs * d * vecs.adjoint() - a;
        assert!(op_norm(&r) < 1e-10);
    }
}
