//! Output record types and deterministic file emission.
//!
//! Every CSV row type here round-trips through serde, so emitted tables
//! can be parsed back into the originating records. All writers are
//! single-threaded and field order is fixed by the struct definitions,
//! which keeps repeated runs byte-identical.

use std::fs;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cascade_core::{
    BifurcationEvent, CascadeStatus, EndpointStatus, PeriodicOrbit,
};

use crate::config::RunConfig;

/// One row of the closed-form two-shift count table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub k: u32,
    pub points: u64,
    pub orbits: u64,
    pub even_orbits: u64,
    pub l: u64,
}

/// One row of the per-period census comparison table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub k: u32,
    pub orbits_found: u64,
    pub orbits_expected: u64,
    pub even_found: u64,
    pub even_expected: u64,
}

/// One branch polyline sample: the leading orbit point with the orbit's
/// multipliers and index, against cumulative arclength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub arclength: f64,
    pub a: f64,
    pub k: usize,
    pub x0: f64,
    pub y0: f64,
    pub sigma1_re: f64,
    pub sigma1_im: f64,
    pub sigma2_re: f64,
    pub sigma2_im: f64,
    pub index: Option<i8>,
}

impl TraceRow {
    pub fn from_orbit(arclength: f64, o: &PeriodicOrbit) -> Self {
        Self {
            arclength,
            a: o.a,
            k: o.k,
            x0: o.points[0].x,
            y0: o.points[0].y,
            sigma1_re: o.multipliers[0].re,
            sigma1_im: o.multipliers[0].im,
            sigma2_re: o.multipliers[1].re,
            sigma2_im: o.multipliers[1].im,
            index: o.index,
        }
    }
}

/// Events and endpoint of one traced branch.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvents {
    pub cycle: String,
    pub end: EndpointStatus,
    pub events: Vec<BifurcationEvent>,
}

/// Per-cascade output: the chain skeleton without branch polylines.
#[derive(Debug, Clone, Serialize)]
pub struct CascadeFile {
    pub anchor: String,
    pub k: u32,
    pub stem_period: usize,
    pub periods: Vec<usize>,
    pub doubling_a: Vec<f64>,
    pub gaps: Vec<f64>,
    pub status: CascadeStatus,
}

/// One row of the cascade summary table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeRow {
    pub k: u32,
    pub expected: u64,
    pub built: u64,
    pub verified_unique: u64,
}

/// Certification stamp: fingerprint of the certified configuration. The
/// census, trace, cascade, and report subcommands require a matching stamp
/// with `ok = true` (or `--force`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub b: f64,
    pub a1: f64,
    pub a0: f64,
    pub perturbation_name: String,
    pub perturbation_magnitude: f64,
    pub perturbation_r: f64,
    pub ok: bool,
}

impl Stamp {
    pub fn for_run(cfg: &RunConfig, a0: f64, ok: bool) -> Self {
        Self {
            b: cfg.b,
            a1: cfg.a1,
            a0,
            perturbation_name: cfg.perturbation_name.clone(),
            perturbation_magnitude: cfg.perturbation_magnitude,
            perturbation_r: cfg.perturbation_r,
            ok,
        }
    }

    pub fn matches(&self, cfg: &RunConfig, a0: f64) -> bool {
        self.b == cfg.b
            && self.a1 == cfg.a1
            && self.a0 == a0
            && self.perturbation_name == cfg.perturbation_name
            && self.perturbation_magnitude == cfg.perturbation_magnitude
            && self.perturbation_r == cfg.perturbation_r
    }
}

pub fn stamp_path(out: &Path) -> PathBuf {
    out.join("stamp.json")
}

/// Machine-readable failure record written next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorFile {
    pub command: String,
    pub code: i32,
    pub message: String,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Euclidean distance between consecutive branch samples in the extended
/// (A, points) state, for the arclength column.
pub fn sample_distance(a: &PeriodicOrbit, b: &PeriodicOrbit) -> f64 {
    let mut sq = (a.a - b.a).powi(2);
    for (p, q) in a.points.iter().zip(&b.points) {
        sq += (p - q).norm_squared();
    }
    sq.sqrt()
}
