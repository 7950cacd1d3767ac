//! Periodic orbits as simultaneous solutions of the multi-point system
//! F(A, p_i) = p_{i+1 mod k}, solved by a damped Newton iteration on all k
//! points at once. The multi-point formulation keeps each Jacobian block
//! bounded where the composed map F^k would be violently ill-conditioned.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::family::{FamilySpec, Vec2};

/// A multiplier within this distance of the unit circle makes an orbit
/// nonhyperbolic; classification then leaves the index unset.
pub const HYPERBOLICITY_MARGIN: f64 = 1e-6;

/// Tolerances and limits for the Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Sup-norm residual required for convergence.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Distance below which two orbit points are identified (least-period
    /// normalization, orbit identity).
    pub point_tol: f64,
    /// Iterates beyond this Euclidean norm abort the solve.
    pub escape_norm: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_iter: 50,
            point_tol: 1e-7,
            escape_norm: 1e6,
        }
    }
}

impl SolveOptions {
    /// Escape guard at ten times the certification square's half-width.
    pub fn for_square(q: f64) -> Self {
        Self {
            escape_norm: 10.0 * q,
            ..Self::default()
        }
    }
}

/// A periodic orbit at one parameter value, with its linearization summary.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicOrbit {
    /// Parameter value.
    pub a: f64,
    /// Least period.
    pub k: usize,
    /// Orbit points in dynamical order: points[i+1] = F(A, points[i]).
    pub points: Vec<Vec2>,
    /// Eigenvalues of the ordered product of the k Jacobians, sorted by
    /// real part (real case) or as a conjugate pair (complex case).
    pub multipliers: [Complex64; 2],
    /// Exactly one real multiplier below -1.
    pub flip: bool,
    /// No multiplier within `HYPERBOLICITY_MARGIN` of the unit circle.
    pub hyperbolic: bool,
    /// Orbit index in {-1, 0, +1}; unset when nonhyperbolic.
    pub index: Option<i8>,
}

impl PeriodicOrbit {
    /// Assembles an orbit record from solved points, computing multipliers
    /// and classification.
    pub fn classified(spec: &FamilySpec, a: f64, points: Vec<Vec2>) -> Self {
        let (multipliers, _, _) = multipliers(spec, a, &points);
        let (flip, hyperbolic, index) = classify_multipliers(&multipliers);
        Self {
            a,
            k: points.len(),
            points,
            multipliers,
            flip,
            hyperbolic,
            index,
        }
    }

    /// det D(F^k) = product of the two multipliers (exact by construction).
    pub fn det(&self) -> f64 {
        (self.multipliers[0] * self.multipliers[1]).re
    }

    /// trace D(F^k) = sum of the two multipliers.
    pub fn trace(&self) -> f64 {
        (self.multipliers[0] + self.multipliers[1]).re
    }
}

/// Re-derives multipliers and classification for an orbit's points.
pub fn classify(spec: &FamilySpec, orbit: &PeriodicOrbit) -> PeriodicOrbit {
    PeriodicOrbit::classified(spec, orbit.a, orbit.points.clone())
}

/// Multipliers of the orbit through `points`: eigenvalues of
/// M = DF(p_{k-1}) ... DF(p_0), with the determinant taken as the product
/// of the per-step determinants (the composed matrix loses it to
/// cancellation), and the small eigenvalue recovered as det / lambda_big.
///
/// Returns (eigenvalue pair, det M, trace M).
pub fn multipliers(spec: &FamilySpec, a: f64, points: &[Vec2]) -> ([Complex64; 2], f64, f64) {
    let mut m = crate::family::Mat2::identity();
    let mut det = 1.0f64;
    for &p in points {
        let j = spec.jacobian(a, p);
        det *= j.determinant();
        m = j * m;
    }
    let tr = m.trace();
    let disc = tr * tr - 4.0 * det;
    let eig = if disc >= 0.0 {
        let root = disc.sqrt();
        let big = 0.5 * (tr + if tr >= 0.0 { root } else { -root });
        let (lo, hi) = if big == 0.0 {
            // tr = 0 and det = 0 cannot happen here (det = (-B)^k != 0)
            (-0.5 * root, 0.5 * root)
        } else {
            let small = det / big;
            (big.min(small), big.max(small))
        };
        [Complex64::new(lo, 0.0), Complex64::new(hi, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(0.5 * tr, -im), Complex64::new(0.5 * tr, im)]
    };
    (eig, det, tr)
}

/// (flip, hyperbolic, index) from a multiplier pair.
///
/// Index rule on the intervals I- = (-inf,-1), I0 = (-1,1), I+ = (1,inf):
/// +1 when both multipliers share an interval or form a complex pair;
/// -1 for (I0, I+); 0 when exactly one lies in I- (the flip case).
pub fn classify_multipliers(m: &[Complex64; 2]) -> (bool, bool, Option<i8>) {
    let hyperbolic = m
        .iter()
        .all(|z| (z.norm() - 1.0).abs() > HYPERBOLICITY_MARGIN);
    if m[0].im != 0.0 {
        // complex pair: never a flip; index +1 when hyperbolic
        return (false, hyperbolic, hyperbolic.then_some(1));
    }
    let (s1, s2) = (m[0].re, m[1].re);
    let flip = (s1 < -1.0) ^ (s2 < -1.0);
    if !hyperbolic {
        return (flip, false, None);
    }
    let interval = |s: f64| -> i8 {
        if s < -1.0 {
            -1
        } else if s > 1.0 {
            1
        } else {
            0
        }
    };
    let (i1, i2) = (interval(s1), interval(s2));
    let index = if i1 == i2 {
        1
    } else if i1 == 0 && i2 == 1 {
        -1
    } else if i1 == -1 {
        0
    } else {
        // s1 <= s2 rules out (I0, I-) and (I+, anything lower)
        unreachable!("multipliers out of order")
    };
    (flip, true, Some(index))
}

/// Residual of the cyclic system: rows 2i..2i+1 hold F(A, p_i) - p_{i+1}.
pub(crate) fn cyclic_residual(spec: &FamilySpec, a: f64, pts: &[Vec2]) -> Result<DVector<f64>> {
    let k = pts.len();
    let mut g = DVector::zeros(2 * k);
    for i in 0..k {
        let image = spec.evaluate(a, pts[i])?;
        let next = pts[(i + 1) % k];
        g[2 * i] = image.x - next.x;
        g[2 * i + 1] = image.y - next.y;
    }
    Ok(g)
}

/// Jacobian of the cyclic system with respect to the points (2k x 2k):
/// block row i carries DF(A, p_i) at column block i and -I at block i+1.
pub(crate) fn cyclic_jacobian(spec: &FamilySpec, a: f64, pts: &[Vec2]) -> DMatrix<f64> {
    let k = pts.len();
    let mut jac = DMatrix::zeros(2 * k, 2 * k);
    for (i, p) in pts.iter().enumerate() {
        let df = spec.jacobian(a, *p);
        let (r, c, cn) = (2 * i, 2 * i, 2 * ((i + 1) % k));
        for a_ in 0..2 {
            for b_ in 0..2 {
                jac[(r + a_, c + b_)] += df[(a_, b_)];
            }
            jac[(r + a_, cn + a_)] -= 1.0;
        }
    }
    jac
}

/// Parameter derivative of the cyclic system (2k entries).
pub(crate) fn cyclic_residual_da(spec: &FamilySpec, a: f64, pts: &[Vec2]) -> DVector<f64> {
    let k = pts.len();
    let mut col = DVector::zeros(2 * k);
    for i in 0..k {
        let d = spec.df_da(a, pts[i]);
        col[2 * i] = d.x;
        col[2 * i + 1] = d.y;
    }
    col
}

/// Solves the cyclic system at fixed parameter `a` from `seeds`, normalizes
/// to the least period, and classifies the result.
pub fn newton_solve(
    spec: &FamilySpec,
    a: f64,
    seeds: &[Vec2],
    opts: &SolveOptions,
) -> Result<PeriodicOrbit> {
    let k = seeds.len();
    assert!(k >= 1, "at least one seed point required");
    let mut pts = seeds.to_vec();
    let mut residual = cyclic_residual(spec, a, &pts)?;
    let mut res_norm = residual.amax();

    for iter in 0..opts.max_iter {
        if res_norm < opts.residual_tol {
            let pts = normalize_least_period(pts, opts.point_tol);
            return Ok(PeriodicOrbit::classified(spec, a, pts));
        }
        if let Some(p) = pts.iter().find(|p| p.norm() > opts.escape_norm) {
            return Err(CoreError::EscapedRegion {
                norm: p.norm(),
                limit: opts.escape_norm,
            });
        }
        let jac = cyclic_jacobian(spec, a, &pts);
        let delta = jac.lu().solve(&(-&residual)).ok_or_else(|| {
            CoreError::SingularJacobian {
                context: format!("cyclic Newton at A={a}, iteration {iter}"),
            }
        })?;

        // damped update: halve the step until the residual decreases
        let mut step = 1.0f64;
        loop {
            let candidate: Vec<Vec2> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| Vec2::new(p.x + step * delta[2 * i], p.y + step * delta[2 * i + 1]))
                .collect();
            match cyclic_residual(spec, a, &candidate) {
                Ok(g) if g.amax() < res_norm || step <= 1.0 / 64.0 => {
                    res_norm = g.amax();
                    residual = g;
                    pts = candidate;
                    break;
                }
                Ok(_) => step *= 0.5,
                Err(_) if step > 1.0 / 64.0 => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
    }
    if res_norm < opts.residual_tol {
        let pts = normalize_least_period(pts, opts.point_tol);
        return Ok(PeriodicOrbit::classified(spec, a, pts));
    }
    Err(CoreError::NoConvergence {
        iterations: opts.max_iter,
        residual: res_norm,
    })
}

/// Least d dividing the list length with points[i + d] = points[i] within
/// `point_tol` (sup-norm), cyclically.
pub(crate) fn least_period(pts: &[Vec2], point_tol: f64) -> usize {
    let k = pts.len();
    for d in 1..k {
        if !k.is_multiple_of(d) {
            continue;
        }
        let collapses = (0..k).all(|i| {
            let q = pts[(i + d) % k];
            (pts[i] - q).amax() < point_tol
        });
        if collapses {
            return d;
        }
    }
    k
}

/// Truncates a solved point list to its least period.
fn normalize_least_period(pts: Vec<Vec2>, point_tol: f64) -> Vec<Vec2> {
    let d = least_period(&pts, point_tol);
    pts[..d].to_vec()
}

/// Orbit identity: same least period, parameters within `tol`, and point
/// sets matching under some cyclic rotation (sup-norm within `tol`).
pub fn orbit_equal(a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    if a.k != b.k || (a.a - b.a).abs() > tol {
        return false;
    }
    cyclic_distance(&a.points, &b.points) <= tol
}

/// Min over cyclic rotations of the max point distance (sup-norm).
pub fn cyclic_distance(p: &[Vec2], q: &[Vec2]) -> f64 {
    let k = p.len();
    debug_assert_eq!(k, q.len());
    (0..k)
        .map(|r| {
            (0..k)
                .map(|i| (p[i] - q[(i + r) % k]).amax())
                .fold(0.0f64, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilySpec;

    fn henon(b: f64) -> FamilySpec {
        FamilySpec::unperturbed(b).unwrap()
    }

    /// Larger fixed point of the unperturbed family, from the quadratic
    /// x^2 + (1 - B) x - A = 0.
    fn fixed_point_oracle(a: f64, b: f64) -> f64 {
        (-(1.0 - b) + ((1.0 - b) * (1.0 - b) + 4.0 * a).sqrt()) / 2.0
    }

    #[test]
    fn finds_the_attracting_fixed_point() {
        let spec = henon(0.3);
        let orbit = newton_solve(
            &spec,
            1.0,
            &[Vec2::new(0.8, 0.8)],
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(orbit.k, 1);
        let x = fixed_point_oracle(1.0, 0.3);
        assert!((orbit.points[0].x - x).abs() < 1e-9, "x = {}", orbit.points[0].x);
        assert!((orbit.points[0].y - x).abs() < 1e-9);
        // at A = 1 this fixed point is past its doubling: a flip saddle
        assert!(orbit.flip);
        assert!(orbit.hyperbolic);
        assert_eq!(orbit.index, Some(0));
        assert!(orbit.multipliers[0].re < -1.0 && orbit.multipliers[1].re.abs() < 1.0);
    }

    #[test]
    fn diverges_where_no_orbit_exists() {
        // A below the fold at -(1-B)^2/4 = -0.1225: no fixed points at all
        let spec = henon(0.3);
        let err = newton_solve(
            &spec,
            -0.2,
            &[Vec2::new(0.0, 0.0)],
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                CoreError::NoConvergence { .. } | CoreError::EscapedRegion { .. }
            ),
            "{err}"
        );
    }

    #[test]
    fn collapses_to_least_period() {
        let spec = henon(0.3);
        let x = fixed_point_oracle(1.0, 0.3);
        let near = Vec2::new(x + 1e-3, x - 1e-3);
        let orbit = newton_solve(&spec, 1.0, &[near, near], &SolveOptions::default()).unwrap();
        assert_eq!(orbit.k, 1, "double cover of a fixed point collapses");
    }

    #[test]
    fn left_band_fixed_point_is_a_nonflip_saddle() {
        let spec = henon(0.3);
        let orbit = newton_solve(
            &spec,
            20.0,
            &[Vec2::new(-5.59, -5.59)],
            &SolveOptions::default(),
        )
        .unwrap();
        let x = (-(1.0 - 0.3) - ((1.0 - 0.3f64).powi(2) + 80.0).sqrt()) / 2.0;
        assert!((orbit.points[0].x - x).abs() < 1e-9);
        assert!(!orbit.flip);
        assert_eq!(orbit.index, Some(-1));
        // expanding multiplier greater than 1 in the left band
        assert!(orbit.multipliers[1].re > 1.0);
        assert!(orbit.multipliers[0].re.abs() < 1.0);
    }

    #[test]
    fn period_two_matches_the_quadratic_oracle() {
        // the two-cycle x-coordinates solve x1+x2 = 1-B, x1 x2 = (1-B)^2 - A
        let spec = henon(0.3);
        let orbit = newton_solve(
            &spec,
            1.0,
            &[Vec2::new(1.1, -0.45), Vec2::new(-0.45, 1.1)],
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(orbit.k, 2);
        let sum = orbit.points[0].x + orbit.points[1].x;
        let prod = orbit.points[0].x * orbit.points[1].x;
        assert!((sum - 0.7).abs() < 1e-9, "sum = {sum}");
        assert!((prod - (0.49 - 1.0)).abs() < 1e-9, "prod = {prod}");
        // dynamical consistency: y-coordinates copy the partner's x
        assert!((orbit.points[0].y - orbit.points[1].x).abs() < 1e-9);
        // past its own doubling at A = 0.9125, the two-cycle is a flip
        assert!(orbit.flip);
    }

    #[test]
    fn composed_determinant_stays_exact() {
        let spec = henon(0.3);
        // eight-cycle of the horseshoe at A = 20, seeded from alternating bands
        let seeds: Vec<Vec2> = (0..8)
            .map(|i| {
                let x = if i % 3 == 0 { -5.59 } else { 5.59 };
                let xp = if (i + 7) % 8 % 3 == 0 { -5.59 } else { 5.59 };
                Vec2::new(x, xp)
            })
            .collect();
        let orbit = newton_solve(&spec, 20.0, &seeds, &SolveOptions::for_square(8.95)).unwrap();
        let want = (-0.3f64).powi(orbit.k as i32);
        let got = orbit.det();
        assert!(
            ((got - want) / want).abs() < 1e-8,
            "det {got} vs (-B)^k {want} at k={}",
            orbit.k
        );
    }

    #[test]
    fn nonhyperbolic_multipliers_leave_index_unset() {
        let m = [Complex64::new(-1.0, 0.0), Complex64::new(0.3, 0.0)];
        let (_, hyperbolic, index) = classify_multipliers(&m);
        assert!(!hyperbolic);
        assert_eq!(index, None);
    }

    #[test]
    fn index_table() {
        let real = |a: f64, b: f64| [Complex64::new(a, 0.0), Complex64::new(b, 0.0)];
        // both in one interval, or complex: +1
        assert_eq!(classify_multipliers(&real(-3.0, -2.0)), (false, true, Some(1)));
        assert_eq!(classify_multipliers(&real(-0.5, 0.5)), (false, true, Some(1)));
        assert_eq!(classify_multipliers(&real(2.0, 3.0)), (false, true, Some(1)));
        let complex = [Complex64::new(0.3, -0.4), Complex64::new(0.3, 0.4)];
        assert_eq!(classify_multipliers(&complex), (false, true, Some(1)));
        // split (I0, I+): -1
        assert_eq!(classify_multipliers(&real(0.5, 2.0)), (false, true, Some(-1)));
        // one multiplier below -1: flip, index 0
        assert_eq!(classify_multipliers(&real(-2.0, 0.5)), (true, true, Some(0)));
        assert_eq!(classify_multipliers(&real(-2.0, 1.5)), (true, true, Some(0)));
    }

    #[test]
    fn orbit_identity_is_rotation_invariant() {
        let spec = henon(0.3);
        let orbit = newton_solve(
            &spec,
            1.0,
            &[Vec2::new(1.1, -0.45), Vec2::new(-0.45, 1.1)],
            &SolveOptions::default(),
        )
        .unwrap();
        let mut rotated = orbit.clone();
        rotated.points.rotate_left(1);
        assert!(orbit_equal(&orbit, &rotated, 1e-7));

        let mut other_a = orbit.clone();
        other_a.a += 1e-3;
        assert!(!orbit_equal(&orbit, &other_a, 1e-7));

        let fixed = newton_solve(&spec, 1.0, &[Vec2::new(0.8, 0.8)], &SolveOptions::default())
            .unwrap();
        assert!(!orbit_equal(&orbit, &fixed, 1e-7), "cardinality mismatch");
    }

    #[test]
    fn orbit_points_respect_the_confinement_bound() {
        let spec = henon(0.3);
        for a in [0.0, 1.0, 5.0, 20.0] {
            let seed = fixed_point_oracle(a, 0.3);
            let orbit = newton_solve(
                &spec,
                a,
                &[Vec2::new(seed, seed)],
                &SolveOptions::default(),
            )
            .unwrap();
            let bound = spec.orbit_x_bound(a);
            for p in &orbit.points {
                assert!(p.x.abs() <= bound, "x = {} exceeds bound {bound}", p.x);
            }
        }
    }
}
