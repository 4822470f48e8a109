//! Operator-norm distances to subspaces and to unit balls of
//! subspaces, computed by bisection on the ball radius combined with
//! Dykstra alternating projections, with dual certificates for the
//! lower bounds.
//!
//! The lower bounds are always certified: any G that annihilates F in
//! the Hilbert-Schmidt pairing gives min_{y in F} ||x-y|| >=
//! |Re tr(G^* x)| / ||G||_1, and for the unit-ball variant any G gives
//! (Re tr(G^* x) - ||P_F G||_1) / ||G||_1. Dykstra only improves the
//! quality of the chosen G, never its validity.

use crate::error::{KkError, Result};
use crate::maps::NormInterval;
use crate::matrix::*;
use crate::OperatorSpace;

const MAX_BISECTIONS: usize = 80;
const MAX_CYCLES: usize = 400;

/// Clamp the singular values of `m` at `t`: the HS projection onto the
/// spectral-norm ball of radius t (centered at 0).
fn clamp_spectral(m: &CMat, t: f64) -> CMat {
    if op_norm(m) <= t {
        return m.clone();
    }
    let svd = svd_dilation(m);
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i].min(t);
        if s > 0.0 {
            let u = svd.u.column(i).into_owned();
            let v = svd.v.column(i).into_owned();
            out += &u * v.adjoint() * C64::new(s, 0.0);
        }
    }
    out
}

/// One Dykstra run over the cyclic family of projections. Returns the
/// last projection point of each set and whether the cycle collapsed
/// (all points within feas_eps, i.e. the intersection is nonempty).
fn dykstra_run(
    start: &CMat,
    projections: &[&dyn Fn(&CMat) -> CMat],
    feas_eps: f64,
) -> (Vec<CMat>, bool) {
    let m = projections.len();
    let mut z = start.clone();
    let mut incr: Vec<CMat> = vec![CMat::zeros(start.nrows(), start.ncols()); m];
    let mut points: Vec<CMat> = vec![start.clone(); m];
    let mut prev_gap = f64::INFINITY;
    let mut stall = 0usize;
    for _cycle in 0..MAX_CYCLES {
        for i in 0..m {
            let y = projections[i](&(&z + &incr[i]));
            incr[i] = &z + &incr[i] - &y;
            z = y.clone();
            points[i] = y;
        }
        let mut gap: f64 = 0.0;
        for i in 1..m {
            gap = gap.max(fro_norm(&(&points[i] - &points[0])));
        }
        if gap <= feas_eps {
            return (points, true);
        }
        if (prev_gap - gap).abs() <= 1e-13 * (1.0 + gap) {
            stall += 1;
            if stall >= 5 {
                break;
            }
        } else {
            stall = 0;
        }
        prev_gap = gap;
    }
    (points, false)
}

struct DistProblem<'a> {
    x: &'a CMat,
    /// HS-orthogonal projection onto the target subspace F.
    proj_f: &'a dyn Fn(&CMat) -> CMat,
    /// Restrict the search to the unit ball of F as in the KK metric.
    unit_ball: bool,
    dist_tol: f64,
}

fn shrink_to_ball(y: &CMat) -> CMat {
    let n = op_norm(y);
    if n > 1.0 {
        y / C64::new(n, 0.0)
    } else {
        y.clone()
    }
}

/// Full solver output: the certified interval plus the artifacts the
/// outer nonconvex searches need (best feasible approximant and the
/// dual certificate behind the lower bound).
#[derive(Debug, Clone)]
pub struct DistOutcome {
    pub interval: NormInterval,
    pub best_point: CMat,
    pub certificate: Option<CMat>,
}

fn solve(p: &DistProblem) -> DistOutcome {
    let x = p.x;
    let annihilate = |g: &CMat| g - (p.proj_f)(g);
    // Feasible point and dual certificate from the HS projection alone.
    let y0 = if p.unit_ball {
        shrink_to_ball(&(p.proj_f)(x))
    } else {
        (p.proj_f)(x)
    };
    let mut best_point = y0.clone();
    let mut best_upper = op_norm(&(x - &y0));
    let mut best_lower: f64 = 0.0;
    let mut best_cert: Option<CMat> = None;
    let lower_from = |g: &CMat, best: &mut f64, cert: &mut Option<CMat>| {
        let nuc = nuclear_norm(g);
        if nuc <= 1e-14 {
            return;
        }
        let pairing = hs_inner(g, x).re;
        let cand = if p.unit_ball {
            (pairing.abs() - nuclear_norm(&(p.proj_f)(g))) / nuc
        } else {
            pairing.abs() / nuc
        };
        if cand > *best {
            *best = cand;
            *cert = Some(g / C64::new(nuc, 0.0));
        }
    };
    lower_from(&annihilate(x), &mut best_lower, &mut best_cert);
    if p.unit_ball {
        best_lower = best_lower.max(op_norm(x) - 1.0);
    }
    best_lower = best_lower.max(0.0).min(best_upper);

    let feas_eps = 1e-10 * (1.0 + fro_norm(x));
    let mut lo = best_lower;
    let mut hi = best_upper;
    let mut steps = 0usize;
    while hi - lo > 0.25 * p.dist_tol && best_upper - best_lower > 0.5 * p.dist_tol {
        steps += 1;
        if steps > MAX_BISECTIONS {
            break;
        }
        let t = 0.5 * (lo + hi);
        let pf = |z: &CMat| (p.proj_f)(z);
        let pball = |z: &CMat| x + clamp_spectral(&(z - x), t);
        let punit = |z: &CMat| clamp_spectral(z, 1.0);
        let projections: Vec<&dyn Fn(&CMat) -> CMat> = if p.unit_ball {
            vec![&pf, &punit, &pball]
        } else {
            vec![&pf, &pball]
        };
        let (points, feasible) = dykstra_run(x, &projections, feas_eps);
        // The F-projection point always yields a feasible candidate.
        let y = if p.unit_ball {
            shrink_to_ball(&(p.proj_f)(&points[0]))
        } else {
            points[0].clone()
        };
        let cand_upper = op_norm(&(x - &y));
        if cand_upper < best_upper {
            best_upper = cand_upper;
            best_point = y;
        }
        if feasible {
            hi = t;
        } else {
            let ball_point = points.last().unwrap();
            let g = if p.unit_ball {
                ball_point - &points[0]
            } else {
                annihilate(&(&points[0] - ball_point))
            };
            lower_from(&g, &mut best_lower, &mut best_cert);
            lo = t;
        }
        best_lower = best_lower.min(best_upper);
        lo = lo.max(best_lower);
        hi = hi.min(best_upper);
        if hi < lo {
            hi = lo;
        }
    }
    let converged = best_upper - best_lower <= p.dist_tol;
    DistOutcome {
        interval: NormInterval {
            lower: best_lower,
            upper: best_upper,
            method_tags: vec![
                "dykstra-bisection".to_string(),
                "dual-certificate".to_string(),
            ],
            converged,
        },
        best_point,
        certificate: best_cert,
    }
}

/// Certified interval for min_{y in F} ||x - y|| in operator norm.
pub fn dist_to_subspace(x: &CMat, f: &OperatorSpace, dist_tol: f64) -> Result<NormInterval> {
    if x.nrows() != f.ambient_dim() || x.ncols() != f.ambient_dim() {
        return Err(KkError::DimensionMismatch {
            expected: f.ambient_dim(),
            got: x.nrows().max(x.ncols()),
        });
    }
    let proj = |z: &CMat| f.project(z);
    Ok(solve(&DistProblem {
        x,
        proj_f: &proj,
        unit_ball: false,
        dist_tol,
    })
    .interval)
}

/// Certified interval for min { ||x - y|| : y in F, ||y|| <= 1 }, the
/// directed deviation used by the Kadison-Kastler metric.
pub fn dist_to_unit_ball(x: &CMat, f: &OperatorSpace, dist_tol: f64) -> Result<NormInterval> {
    if x.nrows() != f.ambient_dim() || x.ncols() != f.ambient_dim() {
        return Err(KkError::DimensionMismatch {
            expected: f.ambient_dim(),
            got: x.nrows().max(x.ncols()),
        });
    }
    let proj = |z: &CMat| f.project(z);
    Ok(solve(&DistProblem {
        x,
        proj_f: &proj,
        unit_ball: true,
        dist_tol,
    })
    .interval)
}

/// Distance with a caller-supplied projection, for ampliated targets
/// M_n(F) where the projection acts blockwise.
pub fn dist_with_projection(
    x: &CMat,
    proj_f: &dyn Fn(&CMat) -> CMat,
    unit_ball: bool,
    dist_tol: f64,
) -> DistOutcome {
    solve(&DistProblem {
        x,
        proj_f,
        unit_ball,
        dist_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{build_space, full_matrix_space};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_space() -> OperatorSpace {
        build_space(2, vec![unit(2, 0, 0), unit(2, 1, 1)]).unwrap()
    }

    #[test]
    fn member_has_zero_distance() {
        let f = diag_space();
        let x = unit(2, 0, 0) * C64::new(3.0, -1.0);
        let iv = dist_to_subspace(&x, &f, 1e-7).unwrap();
        assert!(iv.upper <= 1e-10, "upper {}", iv.upper);
        assert!(iv.lower <= iv.upper + 1e-12);
    }

    #[test]
    fn offdiagonal_unit_distance_one() {
        let f = diag_space();
        let x = unit(2, 0, 1);
        let iv = dist_to_subspace(&x, &f, 1e-7).unwrap();
        assert!(iv.converged, "width {}", iv.width());
        assert!((iv.lower - 1.0).abs() < 1e-7, "lower {}", iv.lower);
        assert!((iv.upper - 1.0).abs() < 1e-7, "upper {}", iv.upper);
    }

    #[test]
    fn scalar_line_matches_scan_oracle() {
        // min_c || (1-c) I + e12 || by a 1-parameter complex scan.
        let f = build_space(2, vec![identity(2)]).unwrap();
        let x = identity(2) + unit(2, 0, 1);
        let iv = dist_to_subspace(&x, &f, 1e-6).unwrap();
        let mut oracle = f64::INFINITY;
        for re in -60..=60 {
            for im in -20..=20 {
                let c = C64::new(re as f64 / 30.0, im as f64 / 30.0);
                let m = &x - identity(2) * c;
                oracle = oracle.min(op_norm(&m));
            }
        }
        assert!(iv.lower <= oracle + 1e-6, "lower {} oracle {}", iv.lower, oracle);
        assert!(iv.upper <= oracle + 1e-2, "upper {} oracle {}", iv.upper, oracle);
        assert!(iv.converged);
    }

    #[test]
    fn unit_ball_distance_dominates_subspace_distance() {
        let f = diag_space();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_gaussian(&mut rng, 2, 2);
            let sub = dist_to_subspace(&x, &f, 1e-6).unwrap();
            let ball = dist_to_unit_ball(&x, &f, 1e-6).unwrap();
            assert!(ball.upper + 1e-9 >= sub.lower);
            assert!(ball.lower >= op_norm(&x) - 1.0 - 1e-9);
        }
    }

    #[test]
    fn full_space_distance_is_zero() {
        let f = full_matrix_space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_gaussian(&mut rng, 3, 3);
        let iv = dist_to_subspace(&x, &f, 1e-7).unwrap();
        assert!(iv.upper <= 1e-10);
    }

    #[test]
    fn lower_never_exceeds_upper_randomized() {
        let f = build_space(3, vec![identity(3), unit(3, 0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let x = random_gaussian(&mut rng, 3, 3);
            let iv = dist_to_subspace(&x, &f, 1e-6).unwrap();
            assert!(iv.lower <= iv.upper + 1e-12);
            // Dual bound must be dominated by any feasible value.
            let y = f.project(&x);
            assert!(iv.lower <= op_norm(&(&x - &y)) + 1e-12);
        }
    }

    #[test]
    fn converges_to_tolerance_on_generic_input() {
        let f = diag_space();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut ok = 0;
        for _ in 0..10 {
            let x = random_gaussian(&mut rng, 2, 2);
            let iv = dist_to_subspace(&x, &f, 1e-6).unwrap();
            if iv.converged {
                ok += 1;
            }
        }
        assert!(ok >= 8, "only {ok}/10 converged");
    }
}
