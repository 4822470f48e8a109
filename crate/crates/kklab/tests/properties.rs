//! Randomized invariants over the matrix primitives and the audit
//! arithmetic. Complements the deterministic pins in the unit tests.

use kklab::matrix::{
    hermitian_eigen, identity, op_norm, polar_unitary, random_gaussian, singular_values,
    svd_dilation, CMat, C64,
};
use kklab::{audit_chain, full_matrix_algebra, multi_matrix_algebra};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seeded(seed: u64, k: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_gaussian(&mut rng, k, k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn op_norm_triangle_and_scaling(seed in 0u64..1 << 20, k in 1usize..5) {
        let a = seeded(seed, k);
        let b = seeded(seed ^ 0xbeef, k);
        let na = op_norm(&a);
        let nb = op_norm(&b);
        let slack = 1e-10 * (1.0 + na + nb);
        prop_assert!(op_norm(&(&a + &b)) <= na + nb + slack);
        prop_assert!(op_norm(&(&a * &b)) <= na * nb + slack);
        prop_assert!((op_norm(&(&a * C64::new(2.0, 0.0))) - 2.0 * na).abs() <= slack);
    }

    #[test]
    fn eigen_reconstructs_hermitian(seed in 0u64..1 << 20, k in 1usize..6) {
        let g = seeded(seed, k);
        let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        let (vals, vecs) = hermitian_eigen(&h);
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let mut d = CMat::zeros(k, k);
        for (i, &v) in vals.iter().enumerate() {
            d[(i, i)] = C64::new(v, 0.0);
        }
        let scale = 1.0 + op_norm(&h);
        prop_assert!(op_norm(&(&vecs * &d * vecs.adjoint() - &h)) <= 1e-12 * scale);
        prop_assert!(op_norm(&(vecs.adjoint() * &vecs - identity(k))) <= 1e-12);
    }

    #[test]
    fn svd_halves_are_isometric(seed in 0u64..1 << 20, k in 1usize..5) {
        let m = seeded(seed, k);
        let svd = svd_dilation(&m);
        let scale = 1.0 + op_norm(&m);
        for i in 0..k {
            let u = svd.u.column(i);
            let v = svd.v.column(i);
            prop_assert!((u.norm() - 1.0).abs() <= 1e-10);
            prop_assert!((v.norm() - 1.0).abs() <= 1e-10);
            let res = (&m * v.clone_owned() - u * C64::new(svd.singular_values[i], 0.0)).norm();
            prop_assert!(res <= 1e-10 * scale, "triple {i}: residual {res:.2e}");
        }
    }

    #[test]
    fn singular_values_match_norms(seed in 0u64..1 << 20, k in 1usize..5) {
        let m = seeded(seed, k);
        let sv = singular_values(&m);
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((sv[0] - op_norm(&m)).abs() <= 1e-10 * (1.0 + sv[0]));
        let hs: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let sv_hs: f64 = sv.iter().map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((hs - sv_hs).abs() <= 1e-10 * (1.0 + hs));
    }

    #[test]
    fn polar_factor_is_unitary_for_invertible(seed in 0u64..1 << 20, k in 1usize..5) {
        let m = seeded(seed, k) + identity(k) * C64::new(4.0, 0.0);
        let u = polar_unitary(&m);
        prop_assert!(op_norm(&(u.adjoint() * &u - identity(k))) <= 1e-10);
        // u^* m is the positive part: must be Hermitian PSD.
        let p = u.adjoint() * &m;
        prop_assert!(op_norm(&(&p - p.adjoint())) <= 1e-9 * (1.0 + op_norm(&m)));
    }

    #[test]
    fn audit_chain_is_monotone(a in 1u32..990, b in 1u32..990) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let g1 = lo as f64 / 8000.0;
        let g2 = hi as f64 / 8000.0;
        let a1 = audit_chain(g1, 1.0).unwrap();
        let a2 = audit_chain(g2, 1.0).unwrap();
        prop_assert!(a1.eps <= a2.eps + 1e-15);
        prop_assert!(a1.final_check_1 <= a2.final_check_1 + 1e-15);
        prop_assert!(a1.final_check_2 <= a2.final_check_2 + 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_contractive(seed in 0u64..1 << 20) {
        let a = multi_matrix_algebra(&[2, 1], 3).unwrap();
        let x = seeded(seed, 3);
        let p = a.space().project(&x);
        let pp = a.space().project(&p);
        prop_assert!(op_norm(&(&pp - &p)) <= 1e-12 * (1.0 + op_norm(&x)));
        prop_assert!(a.space().membership_residual(&p) <= 1e-10 * (1.0 + op_norm(&x)));
    }
}

#[test]
fn full_algebra_units_are_a_matrix_basis() {
    for k in 1..=4 {
        let a = full_matrix_algebra(k);
        assert_eq!(a.dim(), k * k);
        assert_eq!(a.ambient_dim(), k);
        assert!(a.is_selfadjoint());
    }
}
