//! cascade-forge: horseshoe certification, periodic-orbit census, branch
//! tracing, and period-doubling cascade assembly for a one-parameter
//! quadratic planar family, emitting plot-ready CSV and JSON files.
//!
//! Exit codes: 0 on success, 2 for configuration or threshold violations
//! (invalid config, failed certification inequality, missing stamp), 1 for
//! runtime verification failures (census mismatch, broken chains). Set
//! `CASCADE_FORGE_LOG=debug` for diagnostics.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use cascade_core::{
    branch_fates, build_cascade, census_at, certify, check_a0, default_pre_onset, geometry_for,
    symbolic, BranchFate, CascadeOptions, CascadeStatus, CensusEntry, ContinuationOptions,
    Continuer, CoreError, Direction, FamilySpec, HorseshoeGeometry, SampleGrid,
};

use cascade_forge::config::{ConfigError, RunConfig};
use cascade_forge::emit::{
    read_json, sample_distance, stamp_path, write_csv, write_json, CascadeFile, CascadeRow,
    CensusRow, CountRow, ErrorFile, Stamp, TraceEvents, TraceRow,
};

#[derive(Parser)]
#[command(
    name = "cascade-forge",
    version,
    about = "Certify a horseshoe window, census its periodic orbits, and trace their doubling cascades"
)]
struct Cli {
    /// Run configuration file (flat key = value); defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap the worker thread count
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Proceed without a matching certification stamp
    #[arg(long, global = true)]
    force: bool,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify the window geometry, covering, cones, and left-edge
    /// emptiness; write the report and the stamp
    Certify,
    /// Emit the closed-form two-shift count table
    Count {
        /// Largest period (default: limits.kmax)
        #[arg(long)]
        kmax: Option<u32>,
    },
    /// Solve every periodic orbit at the right edge and verify the census
    Census,
    /// Trace each census anchor down through the window
    Trace {
        /// Largest anchor period (default: limits.kmax)
        #[arg(long)]
        kmax: Option<u32>,
    },
    /// Build the doubling cascade of every even census anchor
    Cascade {
        /// Largest anchor period (default: limits.kmax capped at 4; deep
        /// stems double to period 32*k)
        #[arg(long)]
        kmax: Option<u32>,
        /// Doublings to confirm per cascade (default: limits.depth)
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Verify the window's branch connection structure (fold partners,
    /// stem joins, disjointness)
    Report {
        /// Largest anchor period (default: limits.kmax capped at 4)
        #[arg(long)]
        kmax: Option<u32>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Certify => "certify",
            Cmd::Count { .. } => "count",
            Cmd::Census => "census",
            Cmd::Trace { .. } => "trace",
            Cmd::Cascade { .. } => "cascade",
            Cmd::Report { .. } => "report",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter("CASCADE_FORGE_LOG")
            .write_style("CASCADE_FORGE_LOG_STYLE"),
    )
    .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = classify(&err);
            eprintln!("error: {err:#}");
            let record = ErrorFile {
                command: cli.cmd.name().to_string(),
                code: i32::from(code),
                message: format!("{err:#}"),
            };
            if let Ok(out) = out_dir(&cli) {
                let _ = write_json(&out.join("error.json"), &record);
            }
            ExitCode::from(code)
        }
    }
}

/// 2 for configuration and threshold violations, 1 for everything else.
fn classify(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::ThresholdViolation { .. }) | Some(CoreError::EnumerationWindow { .. }) => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir)
}

fn run(cli: &Cli) -> Result<u8> {
    let cfg = load_config(cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(anyhow!(ConfigError("--jobs must be at least 1".into())));
        }
        // ignore the error when a pool already exists (e.g. under tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    fs::create_dir_all(&cfg.out_dir)?;
    match &cli.cmd {
        Cmd::Certify => cmd_certify(&cfg),
        Cmd::Count { kmax } => cmd_count(&cfg, kmax.unwrap_or(cfg.kmax)),
        Cmd::Census => cmd_census(&cfg, cli.force),
        Cmd::Trace { kmax } => cmd_trace(&cfg, cli.force, kmax.unwrap_or(cfg.kmax)),
        Cmd::Cascade { kmax, depth } => cmd_cascade(
            &cfg,
            cli.force,
            kmax.unwrap_or_else(|| cfg.kmax.min(4)),
            depth.unwrap_or(cfg.depth),
        ),
        Cmd::Report { kmax } => cmd_report(&cfg, cli.force, kmax.unwrap_or_else(|| cfg.kmax.min(4))),
    }
}

/// Family, geometry, and the resolved left endpoint for one run.
fn resolve(cfg: &RunConfig) -> Result<(FamilySpec, HorseshoeGeometry, f64)> {
    let spec = cfg.family()?;
    let geo = geometry_for(&spec, cfg.a1)?;
    let a0 = cfg.a0.unwrap_or_else(|| default_pre_onset(&spec, &geo));
    if a0 >= 0.0 {
        return Err(anyhow!(ConfigError(format!(
            "window needs a0 < 0 (a0 = {a0})"
        ))));
    }
    Ok((spec, geo, a0))
}

fn grid_of(cfg: &RunConfig) -> SampleGrid {
    SampleGrid {
        per_axis: cfg.grid,
        ..SampleGrid::default()
    }
}

/// Continuation options carrying the configured tolerances.
fn continuation_options(cfg: &RunConfig, geo: &HorseshoeGeometry, a0: f64) -> ContinuationOptions {
    let mut opts = ContinuationOptions::for_window(a0, geo.a1);
    opts.corrector_tol = cfg.tol_newton.max(1e-12);
    opts.bif_tol = cfg.tol_bifurcation;
    opts.point_tol = cfg.tol_point;
    opts.escape_norm = 10.0 * geo.q;
    opts
}

fn require_stamp(cfg: &RunConfig, a0: f64, force: bool) -> Result<()> {
    let path = stamp_path(&cfg.out_dir);
    let found: Result<Stamp> = read_json(&path);
    match found {
        Ok(stamp) if stamp.ok && stamp.matches(cfg, a0) => Ok(()),
        other => {
            let reason = match other {
                Ok(stamp) if !stamp.ok => "the stamped certification failed".to_string(),
                Ok(_) => "the stamp was made for a different configuration".to_string(),
                Err(e) => format!("no readable stamp ({e:#})"),
            };
            if force {
                println!("warning: proceeding without certification: {reason}");
                warn!("--force bypassed the certification stamp: {reason}");
                Ok(())
            } else {
                Err(anyhow!(ConfigError(format!(
                    "{reason}; run `cascade-forge certify` first or pass --force"
                ))))
            }
        }
    }
}

fn cmd_certify(cfg: &RunConfig) -> Result<u8> {
    let (spec, geo, a0) = resolve(cfg)?;
    let grid = grid_of(cfg);
    let mut report = certify(&spec, cfg.a1, &grid)?;
    report.extend(check_a0(&spec, &geo, a0, &grid)?);
    for check in &report.checks {
        println!(
            "{}  {:<24} margin {:+.6e}  {}",
            if check.ok { "PASS" } else { "FAIL" },
            check.name,
            check.margin,
            check.detail
        );
    }
    println!(
        "{}: A in [{}, {}], B = {}, beta = {:.3e}",
        if report.ok { "certified" } else { "NOT certified" },
        a0,
        cfg.a1,
        cfg.b,
        spec.beta
    );
    write_json(&cfg.out_dir.join("certify.json"), &report)?;
    write_json(&stamp_path(&cfg.out_dir), &Stamp::for_run(cfg, a0, report.ok))?;
    Ok(if report.ok { 0 } else { 2 })
}

fn cmd_count(cfg: &RunConfig, kmax: u32) -> Result<u8> {
    let mut rows = Vec::new();
    for k in 1..=kmax {
        let c = symbolic::census(k)?;
        rows.push(CountRow {
            k,
            points: u64::try_from(c.points).map_err(|_| anyhow!("count overflow at k = {k}"))?,
            orbits: u64::try_from(c.orbits).unwrap(),
            even_orbits: u64::try_from(c.even_orbits).unwrap(),
            l: u64::try_from(c.l).unwrap(),
        });
    }
    println!("k,points,orbits,even_orbits,l");
    for r in &rows {
        println!("{},{},{},{},{}", r.k, r.points, r.orbits, r.even_orbits, r.l);
    }
    write_csv(&cfg.out_dir.join("count.csv"), &rows)?;
    Ok(0)
}

fn cmd_census(cfg: &RunConfig, force: bool) -> Result<u8> {
    let (spec, geo, a0) = resolve(cfg)?;
    require_stamp(cfg, a0, force)?;
    let entries = census_at(&spec, &geo, cfg.kmax)?;
    let mut rows = Vec::new();
    for k in 1..=cfg.kmax {
        let expected = symbolic::census(k)?;
        let found = entries.iter().filter(|e| e.cycle.k() == k as usize).count() as u64;
        let even = entries
            .iter()
            .filter(|e| e.cycle.k() == k as usize && e.cycle.is_even())
            .count() as u64;
        rows.push(CensusRow {
            k,
            orbits_found: found,
            orbits_expected: u64::try_from(expected.orbits).unwrap(),
            even_found: even,
            even_expected: u64::try_from(expected.even_orbits).unwrap(),
        });
    }
    for r in &rows {
        println!(
            "k = {}: {} orbits ({} expected), {} even ({} expected)",
            r.k, r.orbits_found, r.orbits_expected, r.even_found, r.even_expected
        );
    }
    write_csv(&cfg.out_dir.join("census.csv"), &rows)?;
    write_json(&cfg.out_dir.join("census_orbits.json"), &entries)?;
    info!("census wrote {} orbits", entries.len());
    Ok(0)
}

fn cmd_trace(cfg: &RunConfig, force: bool, kmax: u32) -> Result<u8> {
    let (spec, geo, a0) = resolve(cfg)?;
    require_stamp(cfg, a0, force)?;
    let entries = census_at(&spec, &geo, kmax)?;
    let opts = continuation_options(cfg, &geo, a0);
    let tracer = Continuer::new(&spec, opts);
    let branches = entries
        .par_iter()
        .map(|e| tracer.trace(&e.orbit, Direction::DecreasingA))
        .collect::<cascade_core::Result<Vec<_>>>()?;
    for (entry, branch) in entries.iter().zip(&branches) {
        let label = entry.cycle.label();
        let mut rows = Vec::with_capacity(branch.samples.len());
        let mut arclength = 0.0;
        for (i, orbit) in branch.samples.iter().enumerate() {
            if i > 0 {
                arclength += sample_distance(&branch.samples[i - 1], orbit);
            }
            rows.push(TraceRow::from_orbit(arclength, orbit));
        }
        write_csv(&cfg.out_dir.join(format!("trace_{label}.csv")), &rows)?;
        write_json(
            &cfg.out_dir.join(format!("trace_{label}.events.json")),
            &TraceEvents {
                cycle: label.clone(),
                end: branch.end,
                events: branch.events.clone(),
            },
        )?;
        println!(
            "{label}: {} samples, {} events, ends {:?}",
            branch.samples.len(),
            branch.events.len(),
            branch.end
        );
    }
    Ok(0)
}

fn cmd_cascade(cfg: &RunConfig, force: bool, kmax: u32, depth: usize) -> Result<u8> {
    let (spec, geo, a0) = resolve(cfg)?;
    require_stamp(cfg, a0, force)?;
    let entries = census_at(&spec, &geo, kmax)?;
    let anchors: Vec<&CensusEntry> = entries.iter().filter(|e| e.cycle.is_even()).collect();
    let opts = CascadeOptions {
        max_depth: depth,
        continuation: continuation_options(cfg, &geo, a0),
    };
    let cascades = anchors
        .par_iter()
        .map(|e| build_cascade(&spec, &e.orbit, &opts))
        .collect::<cascade_core::Result<Vec<_>>>()?;

    // a cascade is verified unique when it shares no orbit with any other
    let shares = |i: usize, j: usize| -> bool {
        cascades[i].branches.iter().any(|bi| {
            cascades[j].branches.iter().any(|bj| {
                bi.k == bj.k
                    && bi.samples.iter().any(|oi| {
                        bj.samples
                            .iter()
                            .any(|oj| cascade_core::orbit_equal(oi, oj, 1e-3))
                    })
            })
        })
    };
    let built: Vec<bool> = cascades
        .iter()
        .map(|c| !matches!(c.status, CascadeStatus::Unresolved { .. }))
        .collect();
    let unique: Vec<bool> = (0..cascades.len())
        .map(|i| built[i] && (0..cascades.len()).all(|j| j == i || !shares(i, j)))
        .collect();

    for (idx, (anchor, cascade)) in anchors.iter().zip(&cascades).enumerate() {
        let label = anchor.cycle.label();
        write_json(
            &cfg.out_dir.join(format!("cascade_{label}.json")),
            &CascadeFile {
                anchor: label.clone(),
                k: anchor.cycle.k() as u32,
                stem_period: cascade.stem_period,
                periods: cascade.periods.clone(),
                doubling_a: cascade.doubling_a.clone(),
                gaps: cascade.gaps.clone(),
                status: cascade.status.clone(),
            },
        )?;
        println!(
            "{label}: stem {}, periods {:?}, doublings {:?}, {}",
            cascade.stem_period,
            cascade.periods,
            cascade.doubling_a,
            if unique[idx] { "unique" } else { "NOT verified unique" }
        );
    }

    let mut rows = Vec::new();
    for k in 1..=kmax {
        let expected = symbolic::census(k)?;
        let of_k = |flags: &[bool]| {
            anchors
                .iter()
                .zip(flags)
                .filter(|(a, &f)| a.cycle.k() == k as usize && f)
                .count() as u64
        };
        rows.push(CascadeRow {
            k,
            expected: u64::try_from(expected.even_orbits).unwrap(),
            built: of_k(&built),
            verified_unique: of_k(&unique),
        });
    }
    write_csv(&cfg.out_dir.join("cascades.csv"), &rows)?;
    Ok(0)
}

fn cmd_report(cfg: &RunConfig, force: bool, kmax: u32) -> Result<u8> {
    let (spec, geo, a0) = resolve(cfg)?;
    require_stamp(cfg, a0, force)?;
    let report = branch_fates(&spec, &geo, a0, kmax)?;
    for f in &report.fates {
        match &f.fate {
            BranchFate::PartneredWith { cycle, fold_a } => {
                println!("{}: folds at A = {fold_a} against {}", f.cycle, cycle);
            }
            BranchFate::JoinsStem { cycle, a } => {
                println!("{}: joins the stem of {} at A = {a}", f.cycle, cycle);
            }
        }
    }
    println!(
        "{} anchors connected; {} same-period branch pairs verified disjoint",
        report.fates.len(),
        report.disjoint_pairs_checked
    );
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    Ok(0)
}
