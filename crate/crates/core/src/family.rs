//! The one-parameter family under study,
//!
//! ```text
//! F(A, x, y) = (A + B y - x^2 + g(A, x) + alpha1(A, x, y),  x + alpha2(A, x, y))
//! ```
//!
//! with B != 0 fixed, together with the window geometry (bands, cone rates,
//! confinement constants) derived from a right endpoint A1.
//!
//! `g` is a bounded scalar perturbation (small value at x = 0, small x-slope
//! everywhere); `alpha` is a planar perturbation whose C1 norm decays past a
//! radius `r`. Both enter every evaluation and every Jacobian, so all
//! downstream certification sees the perturbed map, never a shortcut.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{CoreError, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Scalar perturbation g(A, x) with analytic first derivatives.
pub trait GTerm: Send + Sync {
    fn value(&self, a: f64, x: f64) -> f64;
    /// dg/dx
    fn dx(&self, a: f64, x: f64) -> f64;
    /// dg/dA
    fn da(&self, a: f64, x: f64) -> f64;
}

/// Planar perturbation alpha(A, x, y) with analytic first derivatives.
pub trait AlphaTerm: Send + Sync {
    fn value(&self, a: f64, x: f64, y: f64) -> Vec2;
    /// Spatial derivative d(alpha1, alpha2)/d(x, y).
    fn jacobian_xy(&self, a: f64, x: f64, y: f64) -> Mat2;
    /// d(alpha1, alpha2)/dA
    fn da(&self, a: f64, x: f64, y: f64) -> Vec2;
}

/// g identically zero.
pub struct ZeroG;

impl GTerm for ZeroG {
    fn value(&self, _a: f64, _x: f64) -> f64 {
        0.0
    }
    fn dx(&self, _a: f64, _x: f64) -> f64 {
        0.0
    }
    fn da(&self, _a: f64, _x: f64) -> f64 {
        0.0
    }
}

/// alpha identically zero.
pub struct ZeroAlpha;

impl AlphaTerm for ZeroAlpha {
    fn value(&self, _a: f64, _x: f64, _y: f64) -> Vec2 {
        Vec2::zeros()
    }
    fn jacobian_xy(&self, _a: f64, _x: f64, _y: f64) -> Mat2 {
        Mat2::zeros()
    }
    fn da(&self, _a: f64, _x: f64, _y: f64) -> Vec2 {
        Vec2::zeros()
    }
}

/// g(A, x) = magnitude * sin(x): zero at x = 0, slope bounded by `magnitude`.
pub struct BoundedWave {
    pub magnitude: f64,
}

impl GTerm for BoundedWave {
    fn value(&self, _a: f64, x: f64) -> f64 {
        self.magnitude * x.sin()
    }
    fn dx(&self, _a: f64, x: f64) -> f64 {
        self.magnitude * x.cos()
    }
    fn da(&self, _a: f64, _x: f64) -> f64 {
        0.0
    }
}

/// Smooth bump in (A, x, y)-space: both components equal
/// `magnitude * phi(u)` with `u = (A^2 + x^2 + y^2) / r^2` and
/// `phi(u) = exp(1 - 1/(1 - u))` for `u < 1`, zero otherwise.
///
/// The cutoff and all its derivatives vanish identically outside the open
/// ball of radius `r`, so the far-field C1 bound holds for every positive
/// declared `delta`.
pub struct CompactBump {
    pub magnitude: f64,
    pub r: f64,
}

impl CompactBump {
    fn u(&self, a: f64, x: f64, y: f64) -> f64 {
        (a * a + x * x + y * y) / (self.r * self.r)
    }

    fn phi(u: f64) -> f64 {
        if u < 1.0 {
            (1.0 - 1.0 / (1.0 - u)).exp()
        } else {
            0.0
        }
    }

    /// dphi/du = -phi(u) / (1 - u)^2, zero outside the support.
    fn dphi(u: f64) -> f64 {
        if u < 1.0 {
            let w = 1.0 - u;
            -Self::phi(u) / (w * w)
        } else {
            0.0
        }
    }
}

impl AlphaTerm for CompactBump {
    fn value(&self, a: f64, x: f64, y: f64) -> Vec2 {
        let v = self.magnitude * Self::phi(self.u(a, x, y));
        Vec2::new(v, v)
    }

    fn jacobian_xy(&self, a: f64, x: f64, y: f64) -> Mat2 {
        let u = self.u(a, x, y);
        let scale = self.magnitude * Self::dphi(u) * 2.0 / (self.r * self.r);
        let dx = scale * x;
        let dy = scale * y;
        Mat2::new(dx, dy, dx, dy)
    }

    fn da(&self, a: f64, x: f64, y: f64) -> Vec2 {
        let u = self.u(a, x, y);
        let d = self.magnitude * Self::dphi(u) * 2.0 * a / (self.r * self.r);
        Vec2::new(d, d)
    }
}

/// Builtin perturbation selection by name: `none`, `bounded-wave`
/// (g = magnitude * sin x), or `compact-bump` (alpha supported in
/// ||(A,x,y)|| < r with peak `magnitude`).
pub fn builtin_perturbations(
    name: &str,
    magnitude: f64,
    r: f64,
) -> Result<(Arc<dyn GTerm>, Arc<dyn AlphaTerm>)> {
    match name {
        "none" => Ok((Arc::new(ZeroG), Arc::new(ZeroAlpha))),
        "bounded-wave" => Ok((Arc::new(BoundedWave { magnitude }), Arc::new(ZeroAlpha))),
        "compact-bump" => {
            if r <= 0.0 {
                return Err(CoreError::ThresholdViolation {
                    inequality: format!("compact-bump support radius r <= 0 (r = {r})"),
                });
            }
            Ok((Arc::new(ZeroG), Arc::new(CompactBump { magnitude, r })))
        }
        other => Err(CoreError::UnknownPerturbation(other.to_string())),
    }
}

/// Rectangular sampling region used to bound the perturbations numerically.
#[derive(Debug, Clone, Copy)]
pub struct SampleWindow {
    /// Parameter range sampled.
    pub a: (f64, f64),
    /// Half-width of the spatial square sampled in x and y.
    pub halfwidth: f64,
}

impl SampleWindow {
    pub fn new(a_lo: f64, a_hi: f64, halfwidth: f64) -> Self {
        Self {
            a: (a_lo, a_hi),
            halfwidth,
        }
    }

    /// Window comfortably covering the certification square for `a1`.
    pub fn covering(a0: f64, a1: f64) -> Self {
        let q = 2.0 * a1.max(1.0).sqrt();
        Self::new(a0.min(0.0), a1, 1.2 * q)
    }
}

const BETA_SAMPLES: usize = 41;
/// Sampled perturbation bounds are inflated by this factor before use.
const BETA_INFLATION: f64 = 1.1;

/// The family with its perturbations and verified class bounds.
#[derive(Clone)]
pub struct FamilySpec {
    /// Fixed second parameter, nonzero.
    pub b: f64,
    pub g: Arc<dyn GTerm>,
    pub alpha: Arc<dyn AlphaTerm>,
    /// Uniform perturbation bound: |g(A,0)| + |alpha|_1 <= beta and
    /// |dg/dx| <= beta over the sampled window.
    pub beta: f64,
    /// Declared far-field C1 bound for alpha (verified by shell sampling).
    pub delta: f64,
    /// Radius past which the far-field bound applies.
    pub r: f64,
}

impl std::fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilySpec")
            .field("b", &self.b)
            .field("beta", &self.beta)
            .field("delta", &self.delta)
            .field("r", &self.r)
            .finish_non_exhaustive()
    }
}

impl FamilySpec {
    /// Builds a spec, deriving `beta` by sampling the perturbations over
    /// `window` (sup inflated by 10%) and verifying the declared far-field
    /// bound `delta` outside radius `r`.
    pub fn new(
        b: f64,
        g: Arc<dyn GTerm>,
        alpha: Arc<dyn AlphaTerm>,
        delta: f64,
        r: f64,
        window: SampleWindow,
    ) -> Result<Self> {
        if b == 0.0 || !b.is_finite() {
            return Err(CoreError::ThresholdViolation {
                inequality: format!("B must be finite and nonzero (B = {b})"),
            });
        }
        if delta <= 0.0 {
            return Err(CoreError::ThresholdViolation {
                inequality: format!("delta <= 0 (delta = {delta})"),
            });
        }
        if r < 0.0 {
            return Err(CoreError::ThresholdViolation {
                inequality: format!("r < 0 (r = {r})"),
            });
        }

        let beta = sample_beta(g.as_ref(), alpha.as_ref(), window);
        verify_far_field(alpha.as_ref(), delta, r, window)?;

        Ok(Self {
            b,
            g,
            alpha,
            beta,
            delta,
            r,
        })
    }

    /// The unperturbed family (g = alpha = 0, beta = 0).
    pub fn unperturbed(b: f64) -> Result<Self> {
        Self::new(
            b,
            Arc::new(ZeroG),
            Arc::new(ZeroAlpha),
            1e-3,
            0.0,
            SampleWindow::new(-1.0, 1.0, 1.0),
        )
    }

    /// One application of the map at parameter `a`.
    pub fn evaluate(&self, a: f64, p: Vec2) -> Result<Vec2> {
        let (x, y) = (p.x, p.y);
        let al = self.alpha.value(a, x, y);
        let out = Vec2::new(
            a + self.b * y - x * x + self.g.value(a, x) + al.x,
            x + al.y,
        );
        if out.x.is_finite() && out.y.is_finite() {
            Ok(out)
        } else {
            Err(CoreError::NumericOverflow { a, x, y })
        }
    }

    /// Spatial derivative dF/d(x, y) at (a, p).
    pub fn jacobian(&self, a: f64, p: Vec2) -> Mat2 {
        let (x, y) = (p.x, p.y);
        let aj = self.alpha.jacobian_xy(a, x, y);
        Mat2::new(
            -2.0 * x + self.g.dx(a, x) + aj[(0, 0)],
            self.b + aj[(0, 1)],
            1.0 + aj[(1, 0)],
            aj[(1, 1)],
        )
    }

    /// Parameter derivative dF/dA at (a, p).
    pub fn df_da(&self, a: f64, p: Vec2) -> Vec2 {
        let (x, y) = (p.x, p.y);
        let ad = self.alpha.da(a, x, y);
        Vec2::new(1.0 + self.g.da(a, x) + ad.x, ad.y)
    }

    /// Confinement bound: every periodic-orbit point at parameter `a`
    /// satisfies |x| <= rho + sqrt(a + beta + rho^2).
    pub fn orbit_x_bound(&self, a: f64) -> f64 {
        let rho = (self.b.abs() + self.beta + 1.0) / 2.0;
        rho + (a + self.beta + rho * rho).max(0.0).sqrt()
    }
}

/// beta = 1.1 * max( sup |g(A,0)| + |alpha|_1 , sup |dg/dx| ) over the window.
fn sample_beta(g: &dyn GTerm, alpha: &dyn AlphaTerm, window: SampleWindow) -> f64 {
    let n = BETA_SAMPLES;
    let mut sup = 0.0f64;
    for i in 0..n {
        let a = lerp(window.a.0, window.a.1, i as f64 / (n - 1) as f64);
        for j in 0..n {
            let x = lerp(-window.halfwidth, window.halfwidth, j as f64 / (n - 1) as f64);
            sup = sup.max(g.dx(a, x).abs());
            for l in 0..n {
                let y = lerp(-window.halfwidth, window.halfwidth, l as f64 / (n - 1) as f64);
                let v = alpha.value(a, x, y);
                sup = sup.max(g.value(a, 0.0).abs() + v.x.abs() + v.y.abs());
            }
        }
    }
    BETA_INFLATION * sup
}

/// Checks the declared C1 bound on alpha at sample points outside radius `r`.
fn verify_far_field(
    alpha: &dyn AlphaTerm,
    delta: f64,
    r: f64,
    window: SampleWindow,
) -> Result<()> {
    let n = BETA_SAMPLES;
    for i in 0..n {
        let a = lerp(window.a.0, window.a.1, i as f64 / (n - 1) as f64);
        for j in 0..n {
            let x = lerp(-window.halfwidth, window.halfwidth, j as f64 / (n - 1) as f64);
            for l in 0..n {
                let y = lerp(-window.halfwidth, window.halfwidth, l as f64 / (n - 1) as f64);
                if (a * a + x * x + y * y).sqrt() <= r {
                    continue;
                }
                let v = alpha.value(a, x, y);
                let m = alpha.jacobian_xy(a, x, y);
                let d = alpha.da(a, x, y);
                let c1 = v.x.abs()
                    + v.y.abs()
                    + m.iter().map(|e| e.abs()).sum::<f64>()
                    + d.x.abs()
                    + d.y.abs();
                if c1 >= delta {
                    return Err(CoreError::ThresholdViolation {
                        inequality: format!(
                            "C1 norm of alpha >= delta outside radius r \
                             ({c1:.6e} >= {delta:.6e} at A={a}, x={x}, y={y})"
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * t
}

/// Closed interval on the x-axis.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Window geometry at a right endpoint A1: certification square, coding
/// bands, confinement constant, and cone rates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HorseshoeGeometry {
    pub a1: f64,
    /// s = sqrt(A1)
    pub s: f64,
    /// Half-width of the certification square E = [-Q, Q]^2; Q = 2s.
    pub q: f64,
    /// Left coding band J1 = [-2s, -s/2], coded +1.
    pub j1: Interval,
    /// Right coding band J2 = [s/2, 2s], coded -1.
    pub j2: Interval,
    /// Confinement constant rho = (|B| + beta + 1)/2.
    pub rho: f64,
    /// Unstable-cone rate N = s - beta - |B|.
    pub n: f64,
    /// Stable-cone rate N1 = N / |B|.
    pub n1: f64,
}

/// Derives the window geometry for `a1`, enforcing every inequality the
/// construction needs; the error names the first violated inequality.
// Guards stay in negated form so a NaN on either side counts as a violation.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn geometry_for(spec: &FamilySpec, a1: f64) -> Result<HorseshoeGeometry> {
    if !(a1 > 0.0) {
        return Err(CoreError::ThresholdViolation {
            inequality: format!("A1 <= 0 (A1 = {a1})"),
        });
    }
    let s = a1.sqrt();
    let b_abs = spec.b.abs();
    let rhs = spec.beta + b_abs + 1.0f64.max(b_abs);
    if !(s > rhs) {
        return Err(CoreError::ThresholdViolation {
            inequality: format!("sqrt(A1) <= beta+|B|+max(1,|B|) ({s} <= {rhs})"),
        });
    }
    if !(a1 > spec.r) {
        return Err(CoreError::ThresholdViolation {
            inequality: format!("A1 <= r ({a1} <= {})", spec.r),
        });
    }
    let q = 2.0 * s;
    if !(a1 > q) {
        return Err(CoreError::ThresholdViolation {
            inequality: format!("A1 <= Q ({a1} <= {q})"),
        });
    }
    let rho = (b_abs + spec.beta + 1.0) / 2.0;
    let confinement = rho + (a1 + spec.beta + rho * rho).sqrt();
    if !(confinement < q) {
        return Err(CoreError::ThresholdViolation {
            inequality: format!("rho+sqrt(A1+beta+rho^2) >= Q ({confinement} >= {q})"),
        });
    }
    let n = s - spec.beta - b_abs;
    let n1 = n / b_abs;
    Ok(HorseshoeGeometry {
        a1,
        s,
        q,
        j1: Interval {
            lo: -2.0 * s,
            hi: -s / 2.0,
        },
        j2: Interval {
            lo: s / 2.0,
            hi: 2.0 * s,
        },
        rho,
        n,
        n1,
    })
}
