//! Period-doubling cascades and whole-window branch bookkeeping.
//!
//! A cascade is reconstructed in two phases. The descent phase follows the
//! starting orbit down in A, stepping onto the half-period stem at every
//! join, until it reaches a branch that runs back to the window's right
//! edge — the stem branch, whose first doubling starts the chain. The climb
//! phase then alternates branch switching (onto the freshly doubled orbit)
//! with upward tracing to the next doubling, recording the doubling
//! parameter values until the configured depth, the window edge, or a
//! failure ends the chain.

use serde::Serialize;

use crate::continuation::{
    BifurcationEvent, BifurcationKind, Branch, ContinuationOptions, Continuer, Direction,
    EndpointStatus,
};
use crate::error::{CoreError, Result};
use crate::family::{FamilySpec, HorseshoeGeometry};
use crate::horseshoe::census_at;
use crate::orbit::{orbit_equal, PeriodicOrbit};
use crate::symbolic::SymbolCycle;

/// How a cascade reconstruction ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CascadeStatus {
    /// A branch reached the window's right edge before doubling again.
    ReachedWindowLimit,
    /// The depth cap was reached; the gap sequence does not (yet) certify
    /// that the accumulation stays inside the window.
    ConfirmedDepth(usize),
    /// The depth cap was reached with strictly shrinking doubling gaps;
    /// the geometric tail bound keeps the accumulation below the right
    /// edge.
    Bounded { accumulation_bound: f64 },
    /// A switch or trace failed before the depth cap.
    Unresolved { detail: String },
}

/// A reconstructed doubling chain.
#[derive(Debug, Clone, Serialize)]
pub struct Cascade {
    /// Least period in the chain (the stem's period).
    pub stem_period: usize,
    /// Periods of the chained branches: stem first, doubling each level.
    pub periods: Vec<usize>,
    /// Parameter values of the successive doublings.
    pub doubling_a: Vec<f64>,
    /// Differences of consecutive doubling values.
    pub gaps: Vec<f64>,
    pub status: CascadeStatus,
    /// Every branch traced while reconstructing, in trace order
    /// (descent branches first, then the climb).
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy)]
pub struct CascadeOptions {
    /// Number of doublings to confirm before stopping.
    pub max_depth: usize,
    pub continuation: ContinuationOptions,
}

impl CascadeOptions {
    pub fn for_window(a0: f64, a1: f64) -> Self {
        Self {
            max_depth: 5,
            continuation: ContinuationOptions::for_window(a0, a1),
        }
    }
}

fn last_doubling(branch: &Branch) -> Option<BifurcationEvent> {
    branch
        .events
        .iter()
        .rev()
        .find(|e| e.kind == BifurcationKind::PeriodDoubling)
        .cloned()
}

fn gaps_of(doubling_a: &[f64]) -> Vec<f64> {
    doubling_a.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Bounded when the gaps shrink strictly and the geometric tail estimate
/// stays below the right edge; otherwise just the reached depth.
fn depth_status(doubling_a: &[f64], depth: usize, a_right: f64) -> CascadeStatus {
    let gaps = gaps_of(doubling_a);
    if gaps.len() >= 2
        && gaps.iter().all(|&g| g > 0.0)
        && gaps.windows(2).all(|w| w[1] < w[0])
    {
        let ratio = gaps[gaps.len() - 1] / gaps[gaps.len() - 2];
        let tail = gaps[gaps.len() - 1] * ratio / (1.0 - ratio);
        let bound = doubling_a[doubling_a.len() - 1] + tail;
        if bound < a_right {
            return CascadeStatus::Bounded {
                accumulation_bound: bound,
            };
        }
    }
    CascadeStatus::ConfirmedDepth(depth)
}

/// Reconstructs the doubling chain through `start`.
pub fn build_cascade(
    spec: &FamilySpec,
    start: &PeriodicOrbit,
    opts: &CascadeOptions,
) -> Result<Cascade> {
    let (_, a_right) = opts.continuation.a_window;
    let mut branches = Vec::new();

    // descent: ride joins down to the stem branch
    let mut down_opts = opts.continuation;
    down_opts.stop_at_pd = false;
    let descender = Continuer::new(spec, down_opts);
    let mut current = start.clone();
    let mut last_join: Option<BifurcationEvent> = None;
    let stem_branch = loop {
        let branch = descender.trace(&current, Direction::DecreasingA)?;
        if branch.end == EndpointStatus::JoinedStem {
            let join = last_doubling(&branch).ok_or_else(|| CoreError::InvalidChain {
                detail: "stem join recorded no doubling event".into(),
            })?;
            branches.push(branch);
            current = join.orbit.clone();
            last_join = Some(join);
        } else {
            break branch;
        }
    };

    let stem_period = stem_branch.k;
    let mut periods = vec![stem_period];
    let mut doubling_a: Vec<f64> = Vec::new();

    if stem_branch.end != EndpointStatus::HitRightEdge {
        let status = CascadeStatus::Unresolved {
            detail: format!("stem branch ended with {:?}", stem_branch.end),
        };
        branches.push(stem_branch);
        return Ok(finish(stem_period, periods, doubling_a, status, branches));
    }

    // The chain's first doubling: the deepest join seen on the way down,
    // or — when the start orbit already sat on the stem's curve — the
    // first doubling along the stem's own arc, at which point the chain
    // leaves the stem (the tail past it is trimmed off the record).
    let first = match last_join {
        Some(join) => {
            branches.push(stem_branch);
            Some(join)
        }
        None => {
            let mut stem_branch = stem_branch;
            let first = stem_branch
                .events
                .iter()
                .find(|e| e.kind == BifurcationKind::PeriodDoubling)
                .cloned();
            if let Some(ev) = &first {
                stem_branch.samples.truncate(ev.step);
                stem_branch.samples.push(ev.orbit.clone());
                stem_branch.events.retain(|e| e.step <= ev.step);
                stem_branch.end = EndpointStatus::StoppedAtDoubling;
            }
            branches.push(stem_branch);
            first
        }
    };

    let Some(mut event) = first else {
        // the stem never doubles inside the window
        return Ok(finish(
            stem_period,
            periods,
            doubling_a,
            CascadeStatus::ReachedWindowLimit,
            branches,
        ));
    };

    // climb: switch onto each doubled branch and ride to its doubling
    let mut up_opts = opts.continuation;
    up_opts.stop_at_pd = true;
    let climber = Continuer::new(spec, up_opts);
    let status = loop {
        doubling_a.push(event.a);
        // Rung gaps contract geometrically, so past the second rung the
        // next doubling sits about a quarter of the last gap up; the
        // default switch offset would step over that entire scale and can
        // land Newton on a neighboring curve. Shrink it to the local gap,
        // floored at the event-localization width.
        let mut sw_opts = up_opts;
        if doubling_a.len() >= 2 {
            let g = doubling_a[doubling_a.len() - 1] - doubling_a[doubling_a.len() - 2];
            if g > 0.0 {
                let local = (g / 8.0).max(4.0 * sw_opts.bif_tol);
                sw_opts.switch_offset = sw_opts.switch_offset.min(local);
            }
        }
        let next = match Continuer::new(spec, sw_opts).switch_branch(&event) {
            Ok(orbit) => orbit,
            Err(e) => {
                break CascadeStatus::Unresolved {
                    detail: e.to_string(),
                }
            }
        };
        periods.push(next.k);
        if doubling_a.len() >= opts.max_depth {
            break depth_status(&doubling_a, doubling_a.len(), a_right);
        }
        // A switch lands a fixed step past the doubling it left. Deep in a
        // compressed chain the next rung can sit closer than that step, in
        // which case the landing orbit is already flip; ride back down to
        // pick up the doubling that was stepped over.
        let dir = if next.flip {
            Direction::DecreasingA
        } else {
            Direction::IncreasingA
        };
        let branch = match climber.trace(&next, dir) {
            Ok(b) => b,
            Err(e) => {
                break CascadeStatus::Unresolved {
                    detail: e.to_string(),
                }
            }
        };
        let end = branch.end;
        let pd = last_doubling(&branch);
        branches.push(branch);
        match (end, pd) {
            (EndpointStatus::StoppedAtDoubling, Some(ev)) => event = ev,
            (EndpointStatus::HitRightEdge, _) => break CascadeStatus::ReachedWindowLimit,
            (other, _) => {
                break CascadeStatus::Unresolved {
                    detail: format!("climb branch ended with {other:?}"),
                }
            }
        }
    };
    Ok(finish(stem_period, periods, doubling_a, status, branches))
}

fn finish(
    stem_period: usize,
    periods: Vec<usize>,
    doubling_a: Vec<f64>,
    status: CascadeStatus,
    branches: Vec<Branch>,
) -> Cascade {
    let gaps = gaps_of(&doubling_a);
    Cascade {
        stem_period,
        periods,
        doubling_a,
        gaps,
        status,
        branches,
    }
}

/// What became of one census anchor traced down from the right edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BranchFate {
    /// The branch folded and returned to the right edge as another census
    /// anchor: the two orbits annihilate at the fold.
    PartneredWith { cycle: SymbolCycle, fold_a: f64 },
    /// The branch collapsed onto its half-period stem; the stem's own
    /// curve meets the right edge at the named census anchor.
    JoinsStem { cycle: SymbolCycle, a: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct AnchorFate {
    pub cycle: SymbolCycle,
    pub fate: BranchFate,
}

/// Window-wide connection report for all census anchors through `kmax`.
#[derive(Debug, Clone, Serialize)]
pub struct FateReport {
    pub a1: f64,
    pub a0: f64,
    pub kmax: u32,
    pub fates: Vec<AnchorFate>,
    /// Same-period non-partner branch pairs that were verified disjoint.
    pub disjoint_pairs_checked: usize,
}

/// Traces every census orbit of period <= kmax down from A1 and verifies
/// the window's connection structure:
/// - each branch either folds back to the right edge (and its endpoint is
///   another census anchor — the fold partner) or joins its half-period
///   stem (whose curve tops out at a census anchor of half the period);
/// - fold partnering is a mutual pairing with no orbit partnered to
///   itself;
/// - branches of equal period that are not fold partners share no orbit
///   anywhere in the window.
pub fn branch_fates(
    spec: &FamilySpec,
    geo: &HorseshoeGeometry,
    a0: f64,
    kmax: u32,
) -> Result<FateReport> {
    let entries = census_at(spec, geo, kmax)?;
    let mut opts = ContinuationOptions::for_window(a0, geo.a1);
    opts.escape_norm = 10.0 * geo.q;
    let tracer = Continuer::new(spec, opts);

    let mut fates: Vec<AnchorFate> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    for e in &entries {
        let branch = tracer.trace(&e.orbit, Direction::DecreasingA)?;
        let fate = match branch.end {
            EndpointStatus::HitRightEdge => {
                let last = branch.samples.last().expect("non-empty branch");
                let partner = entries
                    .iter()
                    .find(|c| c.cycle != e.cycle && orbit_equal(&c.orbit, last, 1e-6))
                    .ok_or_else(|| CoreError::InvalidChain {
                        detail: format!(
                            "branch of {} returned to the right edge off-census",
                            e.cycle
                        ),
                    })?;
                // the annihilation fold is the bottom saddle-node event;
                // fall back to the lowest sample if none was localized
                let fold_a = branch
                    .events
                    .iter()
                    .filter(|e| e.kind == BifurcationKind::SaddleNode)
                    .map(|e| e.a)
                    .chain(branch.samples.iter().map(|o| o.a))
                    .fold(f64::INFINITY, f64::min);
                BranchFate::PartneredWith {
                    cycle: partner.cycle.clone(),
                    fold_a,
                }
            }
            EndpointStatus::JoinedStem => {
                let join = last_doubling(&branch).ok_or_else(|| CoreError::InvalidChain {
                    detail: format!("join of {} recorded no doubling", e.cycle),
                })?;
                if join.orbit.k * 2 != e.cycle.k() {
                    return Err(CoreError::InvalidChain {
                        detail: format!(
                            "{} joined a stem of period {}, not half its own",
                            e.cycle, join.orbit.k
                        ),
                    });
                }
                let up = tracer.trace(&join.orbit, Direction::IncreasingA)?;
                if up.end != EndpointStatus::HitRightEdge {
                    return Err(CoreError::InvalidChain {
                        detail: format!(
                            "stem of {} failed to reach the right edge: {:?}",
                            e.cycle, up.end
                        ),
                    });
                }
                let top = up.samples.last().expect("non-empty stem branch");
                let anchor = entries
                    .iter()
                    .find(|c| orbit_equal(&c.orbit, top, 1e-6))
                    .ok_or_else(|| CoreError::InvalidChain {
                        detail: format!("stem of {} tops out off-census", e.cycle),
                    })?;
                BranchFate::JoinsStem {
                    cycle: anchor.cycle.clone(),
                    a: join.a,
                }
            }
            other => {
                return Err(CoreError::InvalidChain {
                    detail: format!("branch of {} ended with {other:?}", e.cycle),
                })
            }
        };
        fates.push(AnchorFate {
            cycle: e.cycle.clone(),
            fate,
        });
        branches.push(branch);
    }

    // fold partnering must be a mutual pairing
    for af in &fates {
        if let BranchFate::PartneredWith { cycle, .. } = &af.fate {
            if cycle == &af.cycle {
                return Err(CoreError::UniquenessViolation {
                    detail: format!("{} partnered with itself", af.cycle),
                });
            }
            let back = fates
                .iter()
                .find(|x| &x.cycle == cycle)
                .ok_or_else(|| CoreError::UniquenessViolation {
                    detail: format!("partner {cycle} of {} is not an anchor", af.cycle),
                })?;
            match &back.fate {
                BranchFate::PartneredWith { cycle: c2, .. } if c2 == &af.cycle => {}
                _ => {
                    return Err(CoreError::UniquenessViolation {
                        detail: format!("partnering of {} and {cycle} is not mutual", af.cycle),
                    })
                }
            }
        }
    }

    // distinct curves of the same period never meet
    let mut checked = 0;
    for i in 0..fates.len() {
        for j in i + 1..fates.len() {
            if entries[i].cycle.k() != entries[j].cycle.k() {
                continue;
            }
            let partners = matches!(
                &fates[i].fate,
                BranchFate::PartneredWith { cycle, .. } if cycle == &fates[j].cycle
            );
            if partners {
                continue;
            }
            checked += 1;
            for oi in &branches[i].samples {
                for oj in &branches[j].samples {
                    if orbit_equal(oi, oj, 1e-3) {
                        return Err(CoreError::UniquenessViolation {
                            detail: format!(
                                "branches of {} and {} meet near A = {}",
                                entries[i].cycle, entries[j].cycle, oi.a
                            ),
                        });
                    }
                }
            }
        }
    }

    Ok(FateReport {
        a1: geo.a1,
        a0,
        kmax,
        fates,
        disjoint_pairs_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::geometry_for;
    use crate::horseshoe::default_pre_onset;

    fn setup() -> (FamilySpec, HorseshoeGeometry, f64) {
        let spec = FamilySpec::unperturbed(0.3).unwrap();
        let geo = geometry_for(&spec, 20.0).unwrap();
        let a0 = default_pre_onset(&spec, &geo);
        (spec, geo, a0)
    }

    fn anchor<'e>(entries: &'e [crate::horseshoe::CensusEntry], label: &str) -> &'e PeriodicOrbit {
        &entries
            .iter()
            .find(|e| e.cycle.label() == label)
            .unwrap_or_else(|| panic!("no anchor {label}"))
            .orbit
    }

    #[test]
    fn fixed_point_cascade_doubles_to_depth_five() {
        let (spec, geo, a0) = setup();
        let entries = census_at(&spec, &geo, 1).unwrap();
        let mut opts = CascadeOptions::for_window(a0, 20.0);
        opts.continuation.escape_norm = 10.0 * geo.q;
        let cascade = build_cascade(&spec, anchor(&entries, "p"), &opts).unwrap();

        assert_eq!(cascade.stem_period, 1);
        assert_eq!(cascade.periods, vec![1, 2, 4, 8, 16, 32]);
        assert_eq!(cascade.doubling_a.len(), 5);
        // first two doublings have closed forms
        assert!((cascade.doubling_a[0] - 0.3675).abs() < 1e-6, "{}", cascade.doubling_a[0]);
        assert!((cascade.doubling_a[1] - 0.9125).abs() < 1e-6, "{}", cascade.doubling_a[1]);
        assert!(
            cascade.doubling_a[2] > 1.0 && cascade.doubling_a[2] < 1.05,
            "{}",
            cascade.doubling_a[2]
        );
        assert!(
            cascade.gaps.windows(2).all(|w| w[1] < w[0]),
            "gaps {:?}",
            cascade.gaps
        );
        match cascade.status {
            CascadeStatus::Bounded { accumulation_bound } => {
                assert!(
                    accumulation_bound > cascade.doubling_a[4] && accumulation_bound < 1.08,
                    "{accumulation_bound}"
                );
            }
            ref other => panic!("expected a bounded cascade, got {other:?}"),
        }
        // the chain leaves the stem at its first doubling, so it touches
        // the right edge only at its anchor
        let at_edge = cascade
            .branches
            .iter()
            .flat_map(|b| &b.samples)
            .filter(|o| o.a == 20.0)
            .count();
        assert_eq!(at_edge, 1);
    }

    #[test]
    fn the_two_cycle_rides_the_same_chain() {
        let (spec, geo, a0) = setup();
        let mut opts = CascadeOptions::for_window(a0, 20.0);
        opts.continuation.escape_norm = 10.0 * geo.q;
        let fp = census_at(&spec, &geo, 1).unwrap();
        let two = census_at(&spec, &geo, 2).unwrap();
        let from_fp = build_cascade(&spec, anchor(&fp, "p"), &opts).unwrap();
        let from_two = build_cascade(&spec, anchor(&two, "mp"), &opts).unwrap();

        assert_eq!(from_two.stem_period, 1);
        assert_eq!(from_two.periods, from_fp.periods);
        for (a, b) in from_fp.doubling_a.iter().zip(&from_two.doubling_a) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn shallow_depth_cannot_certify_a_bound() {
        let (spec, geo, a0) = setup();
        let entries = census_at(&spec, &geo, 1).unwrap();
        let mut opts = CascadeOptions::for_window(a0, 20.0);
        opts.continuation.escape_norm = 10.0 * geo.q;
        opts.max_depth = 1;
        let cascade = build_cascade(&spec, anchor(&entries, "p"), &opts).unwrap();
        assert_eq!(cascade.periods, vec![1, 2]);
        assert_eq!(cascade.status, CascadeStatus::ConfirmedDepth(1));
    }

    #[test]
    fn compressed_chain_resolves_rungs_finer_than_the_default_offset() {
        // The even 4-cycle's fold spawns a chain whose rungs shrink below
        // the default switch offset within three doublings; resolving it
        // needs both the flip-overshoot recovery and the gap-scaled
        // offset, and the gap ratios must approach the doubling-rate
        // constant (~0.214) rather than jumping to a neighboring curve.
        let (spec, geo, a0) = setup();
        let entries = census_at(&spec, &geo, 4).unwrap();
        let mut opts = CascadeOptions::for_window(a0, 20.0);
        opts.continuation.escape_norm = 10.0 * geo.q;
        let cascade = build_cascade(&spec, anchor(&entries, "mmpp"), &opts).unwrap();

        assert_eq!(cascade.stem_period, 4);
        assert_eq!(cascade.periods, vec![4, 8, 16, 32, 64, 128]);
        assert!(
            (cascade.doubling_a[0] - 2.59981).abs() < 1e-4,
            "first rung at {}",
            cascade.doubling_a[0]
        );
        assert!(
            cascade.gaps.iter().all(|&g| g > 0.0)
                && cascade.gaps.windows(2).all(|w| w[1] < w[0]),
            "gaps {:?}",
            cascade.gaps
        );
        let last_ratio = cascade.gaps[3] / cascade.gaps[2];
        assert!(
            (0.15..0.3).contains(&last_ratio),
            "tail gap ratio {last_ratio}"
        );
        match cascade.status {
            CascadeStatus::Bounded { accumulation_bound } => {
                assert!(
                    accumulation_bound > *cascade.doubling_a.last().unwrap()
                        && accumulation_bound < 2.6003,
                    "{accumulation_bound}"
                );
            }
            ref other => panic!("expected a bounded chain, got {other:?}"),
        }
        let at_edge = cascade
            .branches
            .iter()
            .flat_map(|b| &b.samples)
            .filter(|o| o.a == 20.0)
            .count();
        assert_eq!(at_edge, 1);
    }

    #[test]
    fn fates_connect_every_anchor_through_period_four() {
        let (spec, geo, a0) = setup();
        let report = branch_fates(&spec, &geo, a0, 4).unwrap();
        assert_eq!(report.fates.len(), 2 + 1 + 2 + 3);

        let fate_of = |label: &str| -> &BranchFate {
            &report
                .fates
                .iter()
                .find(|f| f.cycle.label() == label)
                .unwrap_or_else(|| panic!("no fate for {label}"))
                .fate
        };

        // the fixed points annihilate at the fold of the pair
        match fate_of("p") {
            BranchFate::PartneredWith { cycle, fold_a } => {
                assert_eq!(cycle.label(), "m");
                assert!((fold_a + 0.1225).abs() < 1e-6, "fold at {fold_a}");
            }
            other => panic!("fixed point fate {other:?}"),
        }
        assert!(matches!(fate_of("m"), BranchFate::PartneredWith { cycle, .. } if cycle.label() == "p"));

        // the two-cycle joins the fixed-point stem at its doubling
        match fate_of("mp") {
            BranchFate::JoinsStem { cycle, a } => {
                assert_eq!(cycle.k(), 1);
                assert!((a - 0.3675).abs() < 1e-6, "join at {a}");
            }
            other => panic!("two-cycle fate {other:?}"),
        }

        // the three-cycles are a fold pair
        assert!(matches!(fate_of("mmp"), BranchFate::PartneredWith { cycle, .. } if cycle.k() == 3));
        assert!(matches!(fate_of("mpp"), BranchFate::PartneredWith { cycle, .. } if cycle.k() == 3));

        // of the three four-cycles, exactly one joins the two-cycle stem
        // (at the two-cycle's own doubling) and the other two are a pair
        let four: Vec<_> = report
            .fates
            .iter()
            .filter(|f| f.cycle.k() == 4)
            .collect();
        let joins: Vec<_> = four
            .iter()
            .filter_map(|f| match &f.fate {
                BranchFate::JoinsStem { cycle, a } => Some((cycle, *a)),
                _ => None,
            })
            .collect();
        assert_eq!(joins.len(), 1);
        assert_eq!(joins[0].0.label(), "mp");
        assert!((joins[0].1 - 0.9125).abs() < 1e-6);
        let partners: Vec<_> = four
            .iter()
            .filter(|f| matches!(f.fate, BranchFate::PartneredWith { .. }))
            .collect();
        assert_eq!(partners.len(), 2);

        assert_eq!(report.disjoint_pairs_checked, 2);
    }
}
