//! Shared error type for all core modules.

use thiserror::Error;

/// Errors surfaced by the certification, solving, and continuation layers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Map evaluation produced a non-finite component.
    #[error("non-finite map value at A={a}, point=({x}, {y})")]
    NumericOverflow { a: f64, x: f64, y: f64 },

    /// Requested builtin perturbation name is not known.
    #[error("unknown perturbation `{0}` (expected one of: none, bounded-wave, compact-bump)")]
    UnknownPerturbation(String),

    /// A derived-constant inequality failed; the message names the first
    /// violated inequality with its evaluated sides.
    #[error("threshold violation: {inequality}")]
    ThresholdViolation { inequality: String },

    /// A symbol word that cannot form a primitive cycle.
    #[error("invalid symbol cycle: {reason}")]
    InvalidCycle { reason: String },

    /// Exhaustive cycle enumeration asked for a period beyond its cap.
    #[error("enumeration window exceeded: k={k} (cap {cap})")]
    EnumerationWindow { k: u32, cap: u32 },

    /// Newton iteration did not reach the residual tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Newton iterates left the guarded region around E.
    #[error("iterates escaped the region (norm {norm:.3e} > {limit:.3e})")]
    EscapedRegion { norm: f64, limit: f64 },

    /// A linear solve met a numerically singular matrix.
    #[error("singular jacobian: {context}")]
    SingularJacobian { context: String },

    /// An orbit point fell outside the coding bands J1/J2 x L.
    #[error("uncodable orbit: point {point_index} = ({x}, {y}) lies outside J x L")]
    UncodableOrbit { point_index: usize, x: f64, y: f64 },

    /// Found orbits disagree with the two-shift census.
    #[error("census mismatch at k={k}: {detail}")]
    CensusMismatch { k: u32, detail: String },

    /// Continuation step failed after exhausting step halvings.
    #[error("continuation step failure at arclength {arclength:.6} (A={a:.6})")]
    StepFailure { arclength: f64, a: f64 },

    /// Branch switching at a period-doubling could not produce the doubled orbit.
    #[error("branch switch failure at A={a_star:.8}: {detail}")]
    SwitchFailure { a_star: f64, detail: String },

    /// Neither traversal direction satisfies the index orientation rule.
    #[error("orientation failure: {detail}")]
    OrientationFailure { detail: String },

    /// Period chain with a non-power-of-two ratio between consecutive entries.
    #[error("invalid period chain: {detail}")]
    InvalidChain { detail: String },

    /// Two cascades shared an orbit, or an anchor was not unique at A1.
    #[error("uniqueness violation: {detail}")]
    UniquenessViolation { detail: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;
