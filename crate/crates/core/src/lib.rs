//! Periodic-orbit census and cascade tracing for a one-parameter family of
//! planar maps with a certified horseshoe at the right end of the parameter
//! window.
//!
//! The crate is organized bottom-up:
//!
//! - [`family`]: the map, its perturbations, and the window geometry;
//! - [`symbolic`]: two-shift cycles, the closed-form census, Newton seeds;
//! - [`orbit`]: multi-point Newton solving and orbit classification;
//! - [`horseshoe`]: grid certification of the covering/cone estimates and
//!   the orbit census against the symbolic count;
//! - [`continuation`]: pseudo-arclength branch tracing with bifurcation
//!   detection and branch switching;
//! - [`cascade`]: period-doubling cascade assembly and the census of
//!   cascades anchored at even cycles.

pub mod cascade;
pub mod continuation;
pub mod error;
pub mod family;
pub mod horseshoe;
pub mod orbit;
pub mod symbolic;

pub use error::{CoreError, Result};
pub use family::{
    builtin_perturbations, geometry_for, AlphaTerm, FamilySpec, GTerm, HorseshoeGeometry,
    Interval, Mat2, SampleWindow, Vec2,
};
pub use cascade::{
    branch_fates, build_cascade, AnchorFate, BranchFate, Cascade, CascadeOptions, CascadeStatus,
    FateReport,
};
pub use continuation::{
    BifurcationEvent, BifurcationKind, Branch, ContinuationOptions, Continuer, Direction,
    EndpointStatus,
};
pub use horseshoe::{
    census_at, certify, check_a0, check_cones, check_f1, check_f3, code_orbit,
    default_pre_onset, CensusEntry, CertificationReport, CheckReport, SampleGrid,
};
pub use orbit::{
    classify, classify_multipliers, multipliers, newton_solve, orbit_equal, PeriodicOrbit,
    SolveOptions,
};
pub use symbolic::{census, enumerate_cycles, seed_points, ShiftCensus, SymbolCycle};
