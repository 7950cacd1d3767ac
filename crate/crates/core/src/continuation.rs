//! Pseudo-arclength continuation of periodic orbits in the parameter A.
//!
//! A branch is the solution curve of the cyclic system G(A, p_0..p_{k-1}) = 0
//! in R^{2k+1}, followed with tangent predictors and a bordered Newton
//! corrector. Arclength parameterization carries the tracer through folds,
//! where fixed-parameter continuation would die; fold (saddle-node) and
//! doubling crossings are flagged by the test functions
//!     t_sn = det M - tr M + 1   (zero iff M has eigenvalue +1)
//!     t_pd = det M + tr M + 1   (zero iff M has eigenvalue -1)
//! on the composed linearization M, localized by bisection along the arc,
//! and a Neimark-Sacker crossing by det M - 1 while the pair is complex.
//! A doubled branch followed down in A ends by collapsing onto its
//! half-period stem at the stem's doubling; the collapse is detected by
//! least-period degeneration and localized with t_sn of the doubled system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::family::{FamilySpec, Vec2};
use crate::orbit::{
    self, cyclic_jacobian, cyclic_residual, cyclic_residual_da, newton_solve, PeriodicOrbit,
    SolveOptions,
};

/// Which way a trace initially moves in A.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    DecreasingA,
    IncreasingA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BifurcationKind {
    SaddleNode,
    PeriodDoubling,
    NeimarkSacker,
}

/// A localized bifurcation on a branch.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationEvent {
    pub kind: BifurcationKind,
    pub a: f64,
    /// Branch orbit at (or within the localization bracket of) the event.
    pub orbit: PeriodicOrbit,
    /// Two test functions changed sign inside the final bracket, or the
    /// bracket could not be shrunk to the requested width.
    pub degenerate: bool,
    /// Index of the first branch sample at or past the event along the
    /// arc; the event lies between samples `step - 1` and `step`.
    pub step: usize,
}

/// Why a trace stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndpointStatus {
    /// Landed exactly on the window's right edge.
    HitRightEdge,
    /// Landed exactly on the window's left edge.
    HitLeftEdge,
    /// Collapsed onto the half-period stem at the stem's doubling.
    JoinedStem,
    /// Stopped at the branch's own first doubling (cascade mode).
    StoppedAtDoubling,
    /// An orbit point escaped the trapping region.
    LeftRegion,
    /// The arclength step shrank below the minimum.
    StepFailure,
    /// The step-count guard tripped.
    StepLimit,
}

/// One traced branch: ordered samples, events encountered, terminal status.
#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    /// Period of the cyclic system traced (samples may end on a shorter
    /// orbit only through a stem join, which terminates the branch).
    pub k: usize,
    pub samples: Vec<PeriodicOrbit>,
    pub events: Vec<BifurcationEvent>,
    pub end: EndpointStatus,
}

impl Branch {
    /// Events of one kind, in encounter order.
    pub fn events_of(&self, kind: BifurcationKind) -> Vec<&BifurcationEvent> {
        self.events.iter().filter(|e| e.kind == kind).collect()
    }
}

/// Tracing tolerances and window.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    /// Parameter window (left edge, right edge); the tracer lands exactly
    /// on an edge it crosses.
    pub a_window: (f64, f64),
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Sup-norm residual the corrector must reach.
    pub corrector_tol: f64,
    pub corrector_iters: usize,
    /// Bisection width |delta A| at which an event counts as localized.
    pub bif_tol: f64,
    /// Point-identity tolerance (least-period collapse detection).
    pub point_tol: f64,
    /// Orbit points beyond this norm abandon the branch.
    pub escape_norm: f64,
    pub max_steps: usize,
    /// Stop at the branch's first own period-doubling instead of passing
    /// through it (cascade construction).
    pub stop_at_pd: bool,
    /// Parameter offset used when stepping onto a freshly doubled branch.
    pub switch_offset: f64,
}

impl ContinuationOptions {
    pub fn for_window(a0: f64, a1: f64) -> Self {
        Self {
            a_window: (a0, a1),
            initial_step: 1e-2,
            min_step: 1e-6,
            max_step: 1e-1,
            corrector_tol: 1e-9,
            corrector_iters: 16,
            bif_tol: 1e-8,
            point_tol: 1e-7,
            escape_norm: 1e6,
            max_steps: 200_000,
            stop_at_pd: false,
            switch_offset: 1e-4,
        }
    }
}

/// Branch tracer for one family.
pub struct Continuer<'s> {
    pub spec: &'s FamilySpec,
    pub opts: ContinuationOptions,
}

fn points_of(z: &DVector<f64>, k: usize) -> Vec<Vec2> {
    (0..k)
        .map(|i| Vec2::new(z[1 + 2 * i], z[2 + 2 * i]))
        .collect()
}

fn state_of(a: f64, pts: &[Vec2]) -> DVector<f64> {
    let mut z = DVector::zeros(1 + 2 * pts.len());
    z[0] = a;
    for (i, p) in pts.iter().enumerate() {
        z[1 + 2 * i] = p.x;
        z[2 + 2 * i] = p.y;
    }
    z
}

impl<'s> Continuer<'s> {
    pub fn new(spec: &'s FamilySpec, opts: ContinuationOptions) -> Self {
        Self { spec, opts }
    }

    /// G(z) for z = (a, p_0, ..., p_{k-1}).
    fn residual(&self, z: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        cyclic_residual(self.spec, z[0], &points_of(z, k))
    }

    /// dG/dz, 2k rows by 2k+1 columns; column 0 is the A-derivative.
    fn extended_jacobian(&self, z: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let pts = points_of(z, k);
        let da = cyclic_residual_da(self.spec, z[0], &pts);
        let spatial = cyclic_jacobian(self.spec, z[0], &pts);
        let mut jac = DMatrix::zeros(2 * k, 2 * k + 1);
        jac.column_mut(0).copy_from(&da);
        jac.view_mut((0, 1), (2 * k, 2 * k)).copy_from(&spatial);
        jac
    }

    /// Unit tangent to the branch at z. Bordering with the previous
    /// tangent keeps the orientation continuous; without one, the border
    /// row selects the A-direction and the caller fixes the sign.
    fn tangent(&self, z: &DVector<f64>, k: usize, prev: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        let n = 2 * k + 1;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (2 * k, n))
            .copy_from(&self.extended_jacobian(z, k));
        match prev {
            Some(t) => m.row_mut(2 * k).copy_from(&t.transpose()),
            None => m[(2 * k, 0)] = 1.0,
        }
        let mut rhs = DVector::zeros(n);
        rhs[2 * k] = 1.0;
        let t = m.lu().solve(&rhs).ok_or_else(|| CoreError::SingularJacobian {
            context: format!("branch tangent at A = {}", z[0]),
        })?;
        Ok(&t / t.norm())
    }

    /// Bordered Newton corrector on the hyperplane through `pred`
    /// orthogonal to `t`. Returns the solution and iterations used.
    fn correct(
        &self,
        pred: &DVector<f64>,
        t: &DVector<f64>,
        k: usize,
    ) -> Result<(DVector<f64>, usize)> {
        let n = 2 * k + 1;
        let mut z = pred.clone();
        for it in 0..self.opts.corrector_iters {
            let g = self.residual(&z, k)?;
            let slack = t.dot(&(&z - pred));
            if g.amax() < self.opts.corrector_tol && slack.abs() < self.opts.corrector_tol.sqrt() {
                return Ok((z, it));
            }
            let mut m = DMatrix::zeros(n, n);
            m.view_mut((0, 0), (2 * k, n))
                .copy_from(&self.extended_jacobian(&z, k));
            m.row_mut(2 * k).copy_from(&t.transpose());
            let mut rhs = DVector::zeros(n);
            rhs.rows_mut(0, 2 * k).copy_from(&(-&g));
            rhs[2 * k] = -slack;
            let dz = m.lu().solve(&rhs).ok_or_else(|| CoreError::SingularJacobian {
                context: format!("arclength corrector at A = {}", z[0]),
            })?;
            z += dz;
        }
        let res = self.residual(&z, k)?.amax();
        Err(CoreError::NoConvergence {
            iterations: self.opts.corrector_iters,
            residual: res,
        })
    }

    fn orbit_at(&self, z: &DVector<f64>, k: usize) -> PeriodicOrbit {
        PeriodicOrbit::classified(self.spec, z[0], points_of(z, k))
    }

    /// Fixed-parameter landing used when the arc crosses a window edge.
    fn land_at(&self, a: f64, pts: &[Vec2]) -> Result<PeriodicOrbit> {
        let opts = SolveOptions {
            residual_tol: self.opts.corrector_tol.min(1e-10),
            point_tol: self.opts.point_tol,
            escape_norm: self.opts.escape_norm,
            ..SolveOptions::default()
        };
        newton_solve(self.spec, a, pts, &opts)
    }

    /// Bisection along the arc from `z_lo` (tangent `t_lo`, arc span `h`)
    /// until the sign of `test` flips inside a bracket of A-width below
    /// `bif_tol`. Returns the bracket endpoint closer to the zero, and
    /// whether the localization is degenerate.
    fn locate_on_arc<F>(
        &self,
        k: usize,
        mut z_lo: DVector<f64>,
        mut t_lo: DVector<f64>,
        mut h: f64,
        mut z_hi: DVector<f64>,
        test: F,
    ) -> Result<(DVector<f64>, bool)>
    where
        F: Fn(&PeriodicOrbit) -> f64,
    {
        let mut f_lo = test(&self.orbit_at(&z_lo, k));
        let mut f_hi = test(&self.orbit_at(&z_hi, k));
        let mut narrowed = true;
        for _ in 0..90 {
            if (z_hi[0] - z_lo[0]).abs() < self.opts.bif_tol {
                break;
            }
            if h < 1e-13 {
                narrowed = false;
                break;
            }
            h *= 0.5;
            let pred = &z_lo + &t_lo * h;
            let Ok((z_mid, _)) = self.correct(&pred, &t_lo, k) else {
                continue; // shrink h and retry from the same bracket
            };
            let f_mid = test(&self.orbit_at(&z_mid, k));
            if f_mid.signum() == f_lo.signum() {
                t_lo = self.tangent(&z_mid, k, Some(&t_lo)).unwrap_or(t_lo);
                z_lo = z_mid;
                f_lo = f_mid;
            } else {
                z_hi = z_mid;
                f_hi = f_mid;
            }
        }
        let z_star = if f_lo.abs() <= f_hi.abs() { z_lo } else { z_hi };
        Ok((z_star, !narrowed))
    }

    /// Investigates an A-direction reversal between `z_lo` and `z_hi`:
    /// bisects along the arc to the turning point and, if the two
    /// half-orbits coincide there and their midpoints solve the
    /// half-period system, identifies the stem and its doubling. Returns
    /// None for an ordinary fold.
    fn probe_join(
        &self,
        k: usize,
        step: usize,
        mut z_lo: DVector<f64>,
        mut t_lo: DVector<f64>,
        mut h: f64,
        mut z_hi: DVector<f64>,
    ) -> Result<Option<BifurcationEvent>> {
        let sign0 = t_lo[0].signum();
        for _ in 0..90 {
            if (z_hi[0] - z_lo[0]).abs() < self.opts.bif_tol || h < 1e-13 {
                break;
            }
            h *= 0.5;
            let pred = &z_lo + &t_lo * h;
            let Ok((z_mid, _)) = self.correct(&pred, &t_lo, k) else {
                continue;
            };
            let Ok(t_mid) = self.tangent(&z_mid, k, Some(&t_lo)) else {
                break;
            };
            if t_mid[0].signum() == sign0 {
                z_lo = z_mid;
                t_lo = t_mid;
            } else {
                z_hi = z_mid;
            }
        }
        let pts = points_of(&z_lo, k);
        let half = k / 2;
        let gap = (0..k)
            .map(|i| (pts[i] - pts[(i + half) % k]).amax())
            .fold(0.0f64, f64::max);
        if gap > 5e-2 {
            return Ok(None);
        }
        let mids: Vec<Vec2> = (0..half).map(|i| (pts[i] + pts[i + half]) * 0.5).collect();
        let Ok(stem) = self.land_at(z_lo[0], &mids) else {
            return Ok(None);
        };
        if stem.k != half {
            return Ok(None);
        }
        let drift = (0..k)
            .map(|i| (pts[i] - stem.points[i % half]).amax())
            .fold(0.0f64, f64::max);
        if drift > 10.0 * gap.max(1e-6) {
            return Ok(None);
        }
        Ok(Some(BifurcationEvent {
            kind: BifurcationKind::PeriodDoubling,
            a: z_lo[0],
            orbit: stem,
            degenerate: false,
            step,
        }))
    }

    /// Traces the branch through `start` until it leaves the window, joins
    /// its stem, fails, or (in cascade mode) meets its first doubling.
    pub fn trace(&self, start: &PeriodicOrbit, direction: Direction) -> Result<Branch> {
        let k = start.k;
        let (a_left, a_right) = self.opts.a_window;
        let mut z = state_of(start.a, &start.points);
        let mut t = self.tangent(&z, k, None)?;
        let downward = direction == Direction::DecreasingA;
        if (downward && t[0] > 0.0) || (!downward && t[0] < 0.0) {
            t = -t;
        }

        let mut samples = vec![start.clone()];
        let mut events: Vec<BifurcationEvent> = Vec::new();
        let mut prev_orbit = start.clone();
        let mut h = self.opts.initial_step;

        for _ in 0..self.opts.max_steps {
            // predictor-corrector step with halving
            let mut stepped = None;
            while h >= self.opts.min_step {
                let pred = &z + &t * h;
                match self.correct(&pred, &t, k) {
                    Ok((z_new, iters)) => {
                        stepped = Some((z_new, iters));
                        break;
                    }
                    Err(_) => h *= 0.5,
                }
            }
            let Some((z_new, iters)) = stepped else {
                return Ok(Branch {
                    k,
                    samples,
                    events,
                    end: EndpointStatus::StepFailure,
                });
            };

            let new_pts = points_of(&z_new, k);
            if new_pts.iter().any(|p| p.norm() > self.opts.escape_norm) {
                return Ok(Branch {
                    k,
                    samples,
                    events,
                    end: EndpointStatus::LeftRegion,
                });
            }

            // a corrector landing squarely on the doubled stem means the
            // branch ran out: resolve the stem right here (rare; the fold
            // probe below is the usual join detector)
            if orbit::least_period(&new_pts, self.opts.point_tol) < k {
                let stem = self.land_at(z_new[0], &new_pts)?;
                events.push(BifurcationEvent {
                    kind: BifurcationKind::PeriodDoubling,
                    a: z_new[0],
                    orbit: stem,
                    degenerate: true,
                    step: samples.len(),
                });
                return Ok(Branch {
                    k,
                    samples,
                    events,
                    end: EndpointStatus::JoinedStem,
                });
            }

            // window-edge crossing: land exactly on the edge
            let mut edge = None;
            if z_new[0] < a_left {
                edge = Some((a_left, EndpointStatus::HitLeftEdge));
            } else if z_new[0] > a_right {
                edge = Some((a_right, EndpointStatus::HitRightEdge));
            }
            let (new_orbit, ended) = match edge {
                Some((a_edge, status)) => (self.land_at(a_edge, &new_pts)?, Some(status)),
                None => (self.orbit_at(&z_new, k), None),
            };

            // bifurcation tests between the previous and the new sample
            let fired = fired_tests(&prev_orbit, &new_orbit);
            for kind in fired {
                let (z_star, degenerate) = self.locate_on_arc(
                    k,
                    z.clone(),
                    t.clone(),
                    h,
                    state_of(new_orbit.a, &new_orbit.points),
                    test_fn(kind),
                )?;
                let at = self.orbit_at(&z_star, k);
                let other_fired = fired_tests(&prev_orbit, &new_orbit).len() > 1;
                events.push(BifurcationEvent {
                    kind,
                    a: z_star[0],
                    orbit: at.clone(),
                    degenerate: degenerate || other_fired,
                    step: samples.len(),
                });
                if kind == BifurcationKind::PeriodDoubling && self.opts.stop_at_pd {
                    samples.push(at);
                    return Ok(Branch {
                        k,
                        samples,
                        events,
                        end: EndpointStatus::StoppedAtDoubling,
                    });
                }
            }

            samples.push(new_orbit.clone());
            if let Some(status) = ended {
                return Ok(Branch {
                    k,
                    samples,
                    events,
                    end: status,
                });
            }

            let t_new = self.tangent(&z_new, k, Some(&t))?;
            // A-direction reversal: either an ordinary fold (already
            // reported through t_sn) or — when the half-orbits coincide at
            // the turning point — the pitchfork where a doubled branch
            // rejoins its stem, which t_sn only grazes
            if k.is_multiple_of(2) && t[0] * t_new[0] < 0.0 {
                if let Some(event) =
                    self.probe_join(k, samples.len() - 1, z.clone(), t.clone(), h, z_new.clone())?
                {
                    events.push(event);
                    return Ok(Branch {
                        k,
                        samples,
                        events,
                        end: EndpointStatus::JoinedStem,
                    });
                }
            }
            t = t_new;
            z = z_new;
            prev_orbit = new_orbit;
            if iters <= 3 {
                h = (h * 1.5).min(self.opts.max_step);
            }
        }
        Ok(Branch {
            k,
            samples,
            events,
            end: EndpointStatus::StepLimit,
        })
    }

    /// Steps from a doubling event onto the doubled branch: displaces a
    /// doubled copy of the stem along the propagated eigenvector of the
    /// composed linearization at eigenvalue -1, then corrects at fixed
    /// parameter just past the event. The solved orbit must have the full
    /// doubled least period.
    pub fn switch_branch(&self, event: &BifurcationEvent) -> Result<PeriodicOrbit> {
        if event.kind != BifurcationKind::PeriodDoubling {
            return Err(CoreError::SwitchFailure {
                a_star: event.a,
                detail: format!("cannot switch at a {:?} event", event.kind),
            });
        }
        let stem = &event.orbit;
        let k = stem.k;

        // eigenvector of the composed linearization for the eigenvalue
        // nearest -1, from the 2x2 adjugate structure
        let mut m = crate::family::Mat2::identity();
        for &p in &stem.points {
            m = self.spec.jacobian(event.a, p) * m;
        }
        let lambda = -1.0;
        let r1 = Vec2::new(m[(0, 1)], lambda - m[(0, 0)]);
        let r2 = Vec2::new(lambda - m[(1, 1)], m[(1, 0)]);
        let v0 = if r1.norm() >= r2.norm() { r1 } else { r2 };
        if v0.norm() == 0.0 {
            return Err(CoreError::SwitchFailure {
                a_star: event.a,
                detail: "degenerate eigenvector at the doubling".into(),
            });
        }
        let mut vs = vec![v0 / v0.norm()];
        for i in 1..2 * k {
            let w = self.spec.jacobian(event.a, stem.points[(i - 1) % k]) * vs[i - 1];
            vs.push(w / w.norm());
        }

        let off = self.opts.switch_offset;
        let amp0 = off.sqrt();
        for a_new in [event.a + off, event.a - off] {
            for amp in [3.0 * amp0, amp0, 0.3 * amp0, off] {
                let seeds: Vec<Vec2> = (0..2 * k)
                    .map(|i| stem.points[i % k] + vs[i] * amp)
                    .collect();
                let Ok(orbit) = self.land_at(a_new, &seeds) else {
                    continue;
                };
                if orbit.k == 2 * k {
                    return Ok(orbit);
                }
            }
        }
        Err(CoreError::SwitchFailure {
            a_star: event.a,
            detail: format!("no period-{} orbit found beside the doubling", 2 * k),
        })
    }
}

fn test_fn(kind: BifurcationKind) -> impl Fn(&PeriodicOrbit) -> f64 {
    move |o: &PeriodicOrbit| match kind {
        BifurcationKind::SaddleNode => o.det() - o.trace() + 1.0,
        BifurcationKind::PeriodDoubling => o.det() + o.trace() + 1.0,
        BifurcationKind::NeimarkSacker => o.det() - 1.0,
    }
}

/// Test functions changing sign between two consecutive branch samples.
fn fired_tests(prev: &PeriodicOrbit, new: &PeriodicOrbit) -> Vec<BifurcationKind> {
    let mut fired = Vec::new();
    for kind in [BifurcationKind::SaddleNode, BifurcationKind::PeriodDoubling] {
        let f = test_fn(kind);
        if f(prev).signum() * f(new).signum() < 0.0 {
            fired.push(kind);
        }
    }
    let complex = |o: &PeriodicOrbit| o.multipliers[0].im != 0.0;
    if complex(prev) && complex(new) {
        let f = test_fn(BifurcationKind::NeimarkSacker);
        if f(prev).signum() * f(new).signum() < 0.0 {
            fired.push(BifurcationKind::NeimarkSacker);
        }
    }
    fired
}
