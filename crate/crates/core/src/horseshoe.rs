//! Sampled certification that the family at the window's right endpoint A1
//! traps a full two-symbol horseshoe on the square E = [-Q, Q]^2, plus the
//! complementary emptiness checks at the left endpoint A0 and the orbit
//! census that pins one periodic orbit to every primitive symbol cycle.
//!
//! Every geometric inequality is checked either in closed form or by
//! sampling a midpoint grid; each check reports its worst margin, and a
//! check passes only when that margin is strictly positive.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::family::{geometry_for, FamilySpec, HorseshoeGeometry, Interval, Vec2};
use crate::orbit::{newton_solve, orbit_equal, PeriodicOrbit, SolveOptions};
use crate::symbolic::{census, enumerate_cycles, seed_points, SymbolCycle};

/// Sampling resolution for the certification checks. Grids are midpoint
/// grids: `per_axis` cells per axis, sampled at cell centers, so a check
/// never lands exactly on a band edge where a sharp inequality has margin
/// zero in exact arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    pub per_axis: usize,
    /// Directions sampled across each cone when checking invariance.
    pub directions: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            per_axis: 200,
            directions: 64,
        }
    }
}

impl SampleGrid {
    /// Cell-center coordinates of a 1-D midpoint grid over `iv`.
    fn midpoints(&self, iv: Interval) -> impl Iterator<Item = f64> + '_ {
        let h = iv.length() / self.per_axis as f64;
        (0..self.per_axis).map(move |i| iv.lo + (i as f64 + 0.5) * h)
    }

    /// Evenly spaced values over `[lo, hi]` including both endpoints.
    fn spread(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        let n = self.directions.max(1);
        (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
    }
}

/// One named certification check with its worst observed margin.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Strictly positive `margin` and no sampling failure.
    pub ok: bool,
    /// Worst (minimal) slack over all samples; the check holds with room
    /// to spare iff this is positive.
    pub margin: f64,
    pub detail: String,
}

impl CheckReport {
    fn from_margin(name: &str, margin: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            ok: margin > 0.0,
            margin,
            detail,
        }
    }
}

/// Full certification outcome at one parameter value.
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub a1: f64,
    pub geometry: HorseshoeGeometry,
    pub checks: Vec<CheckReport>,
    /// True iff every check passed.
    pub ok: bool,
}

impl CertificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Appends further checks (e.g. the left-endpoint emptiness pair) and
    /// refreshes the overall verdict.
    pub fn extend(&mut self, more: Vec<CheckReport>) {
        self.checks.extend(more);
        self.ok = self.checks.iter().all(|c| c.ok);
    }
}

/// Conventional left endpoint for the onset window: far enough below the
/// square that the first coordinate exits E in a single step, with unit
/// slack. Closed-form emptiness holds there with a wide margin.
pub fn default_pre_onset(spec: &FamilySpec, geo: &HorseshoeGeometry) -> f64 {
    let beta = spec.beta;
    -(beta + (spec.b.abs() + 1.0) * geo.q + beta * beta / 4.0) - 1.0
}

/// Escape of the middle strip: every point of E between the two coding
/// bands leaves the square in one step. Margin: min over the strip of
/// max(|F1|, |F2|) - Q.
pub fn check_f1(spec: &FamilySpec, geo: &HorseshoeGeometry, grid: &SampleGrid) -> Result<CheckReport> {
    let strip_x = Interval {
        lo: -geo.s / 2.0,
        hi: geo.s / 2.0,
    };
    let range_y = Interval {
        lo: -geo.q,
        hi: geo.q,
    };
    let mut margin = f64::INFINITY;
    for x in grid.midpoints(strip_x) {
        for y in grid.midpoints(range_y) {
            let image = spec.evaluate(geo.a1, Vec2::new(x, y))?;
            margin = margin.min(image.x.abs().max(image.y.abs()) - geo.q);
        }
    }
    Ok(CheckReport::from_margin(
        "middle-strip-escape",
        margin,
        format!(
            "image of [-s/2, s/2] x [-Q, Q] clears the square; {n}x{n} midpoint grid",
            n = grid.per_axis
        ),
    ))
}

/// Crossing geometry of the two coding bands:
/// - `band-monotonicity`: dF1/dx keeps one sign on each band (positive on
///   the left band, negative on the right), so x-sections are arcs;
/// - `band-covering`: the image of each band's x-section stretches past
///   both edges of the square, at every height y;
/// - `band-return-coordinate`: the second image coordinate stays inside
///   the band it started from, so the symbol coding survives one step.
pub fn check_f3(
    spec: &FamilySpec,
    geo: &HorseshoeGeometry,
    grid: &SampleGrid,
) -> Result<Vec<CheckReport>> {
    let range_y = Interval {
        lo: -geo.q,
        hi: geo.q,
    };
    let bands = [(geo.j1, 1.0f64), (geo.j2, -1.0f64)];

    let mut mono_margin = f64::INFINITY;
    let mut cover_margin = f64::INFINITY;
    let mut return_margin = f64::INFINITY;

    for (band, slope_sign) in bands {
        for y in grid.midpoints(range_y) {
            // covering: evaluated at the exact band endpoints, where the
            // image must straddle the square
            let left = spec.evaluate(geo.a1, Vec2::new(band.lo, y))?.x;
            let right = spec.evaluate(geo.a1, Vec2::new(band.hi, y))?.x;
            let (low_end, high_end) = (left.min(right), left.max(right));
            cover_margin = cover_margin.min(-geo.q - low_end).min(high_end - geo.q);

            for x in grid.midpoints(band) {
                let slope = spec.jacobian(geo.a1, Vec2::new(x, y))[(0, 0)];
                mono_margin = mono_margin.min(slope * slope_sign);
                let ret = spec.evaluate(geo.a1, Vec2::new(x, y))?.y;
                return_margin = return_margin.min(ret - band.lo).min(band.hi - ret);
            }
        }
    }

    Ok(vec![
        CheckReport::from_margin(
            "band-monotonicity",
            mono_margin,
            "dF1/dx is one-signed on each coding band".to_string(),
        ),
        CheckReport::from_margin(
            "band-covering",
            cover_margin,
            "each band's image crosses the full square in x at every height".to_string(),
        ),
        CheckReport::from_margin(
            "band-return-coordinate",
            return_margin,
            format!(
                "F2 of a band point stays in that band (grid-limited slack ~{:.3})",
                geo.j1.length() / (2.0 * grid.per_axis as f64)
            ),
        ),
    ])
}

/// Cone-field hyperbolicity over the coding bands.
///
/// Unstable: every unit vector (1, t) with |t| <= 1/N maps under DF to a
/// vector w with |w1| >= N |w2| and |w1| >= N — the horizontal cone S+_N
/// returns to itself and stretches sup-norm lengths by at least N.
///
/// Stable: every unit vector (t, 1) with |t| <= 1 maps under DF^{-1} to a
/// vector u with |u2| > |u1| (the vertical cone S-_1 contracts strictly
/// into itself backwards) and |u1| <= N1 |u2| (membership in the wide
/// vertical cone S-_{N1} that the published rate names). Backward
/// sup-norm growth of the vertical cone is reported in the detail line.
pub fn check_cones(
    spec: &FamilySpec,
    geo: &HorseshoeGeometry,
    grid: &SampleGrid,
) -> Vec<CheckReport> {
    debug_assert!(geo.n > 1.0, "cone rate must exceed 1 for disjoint cones");
    let range_y = Interval {
        lo: -geo.q,
        hi: geo.q,
    };

    let mut unstable_margin = f64::INFINITY;
    let mut stable_margin = f64::INFINITY;
    let mut back_growth = f64::INFINITY;
    let mut singular = false;

    for band in [geo.j1, geo.j2] {
        for x in grid.midpoints(band) {
            for y in grid.midpoints(range_y) {
                let df = spec.jacobian(geo.a1, Vec2::new(x, y));
                for t in grid.spread(-1.0 / geo.n, 1.0 / geo.n) {
                    let w = df * Vec2::new(1.0, t);
                    unstable_margin = unstable_margin
                        .min(w.x.abs() - geo.n * w.y.abs())
                        .min(w.x.abs() - geo.n);
                }
                let Some(inv) = df.try_inverse() else {
                    singular = true;
                    continue;
                };
                for t in grid.spread(-1.0, 1.0) {
                    let u = inv * Vec2::new(t, 1.0);
                    stable_margin = stable_margin
                        .min(u.y.abs() - u.x.abs())
                        .min(geo.n1 * u.y.abs() - u.x.abs());
                    back_growth = back_growth.min(u.y.abs().max(u.x.abs()));
                }
            }
        }
    }
    if singular {
        stable_margin = f64::NEG_INFINITY;
    }

    vec![
        CheckReport::from_margin(
            "unstable-cone",
            unstable_margin,
            format!(
                "S+_N with N = {:.6}: DF-invariant and sup-norm expanding by N",
                geo.n
            ),
        ),
        CheckReport::from_margin(
            "stable-cone",
            stable_margin,
            format!(
                "S-_1 strictly DF^-1-invariant inside S-_N1, N1 = {:.6}; backward growth >= {:.4}",
                geo.n1, back_growth
            ),
        ),
    ]
}

/// Emptiness at the left endpoint `a0`:
/// - `pre-onset-closed-form`: a0 + beta + rho^2 < 0, which makes the
///   confinement inequality m^2 <= 2 rho m + a0 + beta unsolvable, so no
///   periodic orbit exists anywhere in the plane;
/// - `pre-onset-exit-grid`: sampled confirmation that F1(a0, x, y) < -Q
///   throughout E, i.e. the whole square exits left in one step.
pub fn check_a0(
    spec: &FamilySpec,
    geo: &HorseshoeGeometry,
    a0: f64,
    grid: &SampleGrid,
) -> Result<Vec<CheckReport>> {
    let closed = -(a0 + spec.beta + geo.rho * geo.rho);
    let range = Interval {
        lo: -geo.q,
        hi: geo.q,
    };
    let mut exit_margin = f64::INFINITY;
    for x in grid.midpoints(range) {
        for y in grid.midpoints(range) {
            let image = spec.evaluate(a0, Vec2::new(x, y))?;
            exit_margin = exit_margin.min(-geo.q - image.x);
        }
    }
    Ok(vec![
        CheckReport::from_margin(
            "pre-onset-closed-form",
            closed,
            format!("A0 + beta + rho^2 < 0 at A0 = {a0}; no periodic orbits below"),
        ),
        CheckReport::from_margin(
            "pre-onset-exit-grid",
            exit_margin,
            format!(
                "F1(A0, x, y) < -Q over E on a {n}x{n} midpoint grid",
                n = grid.per_axis
            ),
        ),
    ])
}

/// Runs the full right-endpoint certification: geometry thresholds (hard
/// errors when violated), strip escape, band crossing, and cone fields.
pub fn certify(spec: &FamilySpec, a1: f64, grid: &SampleGrid) -> Result<CertificationReport> {
    let geometry = geometry_for(spec, a1)?;
    let mut checks = vec![check_f1(spec, &geometry, grid)?];
    checks.extend(check_f3(spec, &geometry, grid)?);
    checks.extend(check_cones(spec, &geometry, grid));
    let ok = checks.iter().all(|c| c.ok);
    Ok(CertificationReport {
        a1,
        geometry,
        checks,
        ok,
    })
}

/// Reads off the symbol cycle of an orbit from band membership of each
/// point: left band J1 codes +1, right band J2 codes -1.
pub fn code_orbit(orbit: &PeriodicOrbit, geo: &HorseshoeGeometry) -> Result<SymbolCycle> {
    let mut word = Vec::with_capacity(orbit.k);
    for (i, p) in orbit.points.iter().enumerate() {
        if p.y.abs() > geo.q {
            return Err(CoreError::UncodableOrbit {
                point_index: i,
                x: p.x,
                y: p.y,
            });
        }
        if geo.j1.contains(p.x) {
            word.push(1);
        } else if geo.j2.contains(p.x) {
            word.push(-1);
        } else {
            return Err(CoreError::UncodableOrbit {
                point_index: i,
                x: p.x,
                y: p.y,
            });
        }
    }
    SymbolCycle::new(word)
}

/// One census row: a primitive symbol cycle and the periodic orbit
/// realizing it at A1.
#[derive(Debug, Clone, Serialize)]
pub struct CensusEntry {
    pub cycle: SymbolCycle,
    pub orbit: PeriodicOrbit,
}

/// Solves for every periodic orbit of period <= kmax at A1, seeded from
/// the primitive symbol cycles, and cross-checks the numerics against the
/// combinatorial count from the two-symbol shift:
/// - each solve must keep its seeded least period and code back to the
///   cycle that seeded it;
/// - every orbit must be hyperbolic;
/// - per period, the number of orbits (and of even-parity orbits) must
///   equal the shift's count, and all orbits must be pairwise distinct.
///
/// Entries are returned sorted by (period, cycle).
pub fn census_at(spec: &FamilySpec, geo: &HorseshoeGeometry, kmax: u32) -> Result<Vec<CensusEntry>> {
    let opts = SolveOptions::for_square(geo.q);
    let mut out = Vec::new();
    for k in 1..=kmax {
        let cycles = enumerate_cycles(k)?;
        let expected = census(k)?;
        let solved: Vec<Result<CensusEntry>> = cycles
            .par_iter()
            .map(|cycle| {
                let seeds = seed_points(cycle, geo);
                let orbit = newton_solve(spec, geo.a1, &seeds, &opts)?;
                if orbit.k != k as usize {
                    return Err(CoreError::CensusMismatch {
                        k,
                        detail: format!(
                            "cycle {cycle} collapsed to least period {}",
                            orbit.k
                        ),
                    });
                }
                let coded = code_orbit(&orbit, geo)?;
                if &coded != cycle {
                    return Err(CoreError::CensusMismatch {
                        k,
                        detail: format!("seeded {cycle} but converged onto {coded}"),
                    });
                }
                if !orbit.hyperbolic {
                    return Err(CoreError::CensusMismatch {
                        k,
                        detail: format!("orbit {cycle} is not hyperbolic at A1"),
                    });
                }
                Ok(CensusEntry {
                    cycle: cycle.clone(),
                    orbit,
                })
            })
            .collect();
        let entries = solved.into_iter().collect::<Result<Vec<_>>>()?;

        if entries.len() as u128 != expected.orbits {
            return Err(CoreError::CensusMismatch {
                k,
                detail: format!(
                    "solved {} orbits, shift predicts {}",
                    entries.len(),
                    expected.orbits
                ),
            });
        }
        let even = entries.iter().filter(|e| e.cycle.is_even()).count() as u128;
        if even != expected.even_orbits {
            return Err(CoreError::CensusMismatch {
                k,
                detail: format!(
                    "{even} even-parity orbits, shift predicts {}",
                    expected.even_orbits
                ),
            });
        }
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if orbit_equal(&entries[i].orbit, &entries[j].orbit, opts.point_tol) {
                    return Err(CoreError::CensusMismatch {
                        k,
                        detail: format!(
                            "orbits {} and {} coincide",
                            entries[i].cycle, entries[j].cycle
                        ),
                    });
                }
            }
        }
        out.extend(entries);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilySpec;

    fn spec() -> FamilySpec {
        FamilySpec::unperturbed(0.3).unwrap()
    }

    #[test]
    fn full_certification_passes_at_a1_20() {
        let spec = spec();
        let report = certify(&spec, 20.0, &SampleGrid::default()).unwrap();
        assert!(report.ok, "checks: {:#?}", report.checks);
        // worst strip-escape corner: (3/4) A1 - |B| Q - Q ~ 3.37
        let f1 = report.check("middle-strip-escape").unwrap();
        assert!(f1.margin > 3.3 && f1.margin < 3.5, "{}", f1.margin);
        let cover = report.check("band-covering").unwrap();
        assert!(cover.margin > 3.3 && cover.margin < 3.5, "{}", cover.margin);
        let mono = report.check("band-monotonicity").unwrap();
        assert!(mono.margin > 4.4, "{}", mono.margin);
        let unstable = report.check("unstable-cone").unwrap();
        assert!(unstable.margin > 0.2, "{}", unstable.margin);
        let stable = report.check("stable-cone").unwrap();
        assert!(stable.margin > 1.0, "{}", stable.margin);
    }

    #[test]
    fn strip_escape_fails_at_a1_9_but_cones_hold() {
        // at A1 = 9, B = 0.3 the inner band edge maps to x ~ 4.95 < Q = 6,
        // so escape and covering genuinely fail; hyperbolicity does not
        let spec = spec();
        let report = certify(&spec, 9.0, &SampleGrid::default()).unwrap();
        assert!(!report.ok);
        let f1 = report.check("middle-strip-escape").unwrap();
        assert!(!f1.ok && f1.margin < 0.0);
        let cover = report.check("band-covering").unwrap();
        assert!(!cover.ok && cover.margin < -1.0 && cover.margin > -1.1, "{}", cover.margin);
        assert!(report.check("band-monotonicity").unwrap().ok);
        assert!(report.check("unstable-cone").unwrap().ok);
        assert!(report.check("stable-cone").unwrap().ok);
    }

    #[test]
    fn cone_margins_at_a1_9() {
        let spec = spec();
        let geo = geometry_for(&spec, 9.0).unwrap();
        assert!((geo.n - 2.7).abs() < 1e-12);
        assert!((geo.n1 - 9.0).abs() < 1e-12);
        let checks = check_cones(&spec, &geo, &SampleGrid::default());
        // sharp unstable corner: 2|x| - |B|/N - N at the inner band edge
        assert!(checks[0].margin > 0.15 && checks[0].margin < 0.3, "{}", checks[0].margin);
        // stable narrowing: (2|x| - 1)/|B| - 1 at the inner band edge
        assert!(checks[1].margin > 5.0 && checks[1].margin < 6.0, "{}", checks[1].margin);
    }

    #[test]
    fn pre_onset_emptiness_certifies_at_the_default_a0() {
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let a0 = default_pre_onset(&spec, &geo);
        assert!((a0 + 1.3 * geo.q + 1.0).abs() < 1e-12, "{a0}");
        let checks = check_a0(&spec, &geo, a0, &SampleGrid::default()).unwrap();
        assert!(checks.iter().all(|c| c.ok), "{checks:#?}");
        // exit margin is the built-in unit slack
        assert!(checks[1].margin > 0.99 && checks[1].margin < 1.05, "{}", checks[1].margin);
    }

    #[test]
    fn pre_onset_routes_disagree_when_only_confinement_applies() {
        // A0 = -0.5 sits below the fold (no orbits exist: closed form
        // certifies) yet points of E do not exit in one step (grid fails)
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let checks = check_a0(&spec, &geo, -0.5, &SampleGrid::default()).unwrap();
        assert!(checks[0].ok, "closed form: {:?}", checks[0]);
        assert!(!checks[1].ok, "exit grid: {:?}", checks[1]);
    }

    #[test]
    fn pre_onset_cannot_certify_above_the_confinement_bound() {
        // -0.3 is below the actual fold at -0.1225 but above the provable
        // bound -beta - rho^2 = -0.4225: the certificate honestly declines
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let checks = check_a0(&spec, &geo, -0.3, &SampleGrid::default()).unwrap();
        assert!(!checks[0].ok);
    }

    #[test]
    fn census_counts_match_the_shift_through_k6() {
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let entries = census_at(&spec, &geo, 6).unwrap();
        let per_k = |k: usize| entries.iter().filter(|e| e.orbit.k == k).count();
        assert_eq!(
            (1..=6).map(per_k).collect::<Vec<_>>(),
            vec![2, 1, 2, 3, 6, 9]
        );
        assert_eq!(entries.len(), 23);
    }

    #[test]
    fn census_orbits_obey_the_parity_law() {
        // even symbol parity <=> positive unstable multiplier <=> index -1;
        // odd parity <=> flip with index 0 — no exceptions
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        for e in census_at(&spec, &geo, 6).unwrap() {
            if e.cycle.is_even() {
                assert!(!e.orbit.flip, "{}", e.cycle);
                assert_eq!(e.orbit.index, Some(-1), "{}", e.cycle);
            } else {
                assert!(e.orbit.flip, "{}", e.cycle);
                assert_eq!(e.orbit.index, Some(0), "{}", e.cycle);
            }
        }
    }

    #[test]
    fn census_coding_roundtrips() {
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        for e in census_at(&spec, &geo, 5).unwrap() {
            assert_eq!(code_orbit(&e.orbit, &geo).unwrap(), e.cycle);
            // multiplier product stays pinned to (-B)^k
            let want = (-spec.b).powi(e.orbit.k as i32);
            assert!(((e.orbit.det() - want) / want).abs() < 1e-10);
        }
    }

    #[test]
    fn census_is_deterministic() {
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let a = serde_json::to_string(&census_at(&spec, &geo, 4).unwrap()).unwrap();
        let b = serde_json::to_string(&census_at(&spec, &geo, 4).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uncodable_orbits_are_rejected() {
        let spec = spec();
        let geo = geometry_for(&spec, 20.0).unwrap();
        // the attracting fixed point near the origin at A = 1 exists, but
        // at A1 = 20 geometry its x sits in neither band
        let orbit = newton_solve(
            &spec,
            1.0,
            &[Vec2::new(0.8, 0.8)],
            &SolveOptions::default(),
        )
        .unwrap();
        let err = code_orbit(&orbit, &geo).unwrap_err();
        assert!(matches!(err, CoreError::UncodableOrbit { point_index: 0, .. }), "{err}");
    }

    #[test]
    fn compactly_supported_perturbation_leaves_the_census_bitwise_unchanged() {
        // the bump vanishes identically outside radius 2, and every point
        // the census ever evaluates has |(A, x, y)| >= A1 = 20
        let plain = spec();
        let (g, alpha) = crate::family::builtin_perturbations("compact-bump", 1.0, 2.0).unwrap();
        let window = crate::family::SampleWindow::covering(-13.0, 20.0);
        let bumped = FamilySpec::new(0.3, g, alpha, 0.01, 2.0, window).unwrap();
        assert!(bumped.beta > 0.0, "bump must inflate beta near the origin");

        let geo_p = geometry_for(&plain, 20.0).unwrap();
        let geo_b = geometry_for(&bumped, 20.0).unwrap();
        let a = census_at(&plain, &geo_p, 5).unwrap();
        let b = census_at(&bumped, &geo_b, 5).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cycle, y.cycle);
            assert_eq!(x.orbit.points, y.orbit.points, "bitwise point equality");
            assert_eq!(x.orbit.multipliers, y.orbit.multipliers);
        }
    }
}
