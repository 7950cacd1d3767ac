//! Flat key = value run configuration.
//!
//! The format is line-oriented text: one `key = value` per line, `#`
//! starts a comment, blank lines are ignored. Dotted keys group related
//! settings. Unknown and duplicate keys are rejected so that a typo never
//! silently falls back to a default.
//!
//! ```text
//! b = 0.3
//! a1 = 20.0
//! a0 = auto                      # number, or auto for the built-in left endpoint
//! perturbation.name = none       # none | bounded-wave | compact-bump
//! perturbation.magnitude = 0.0
//! perturbation.r = 2.0
//! tolerances.newton = 1e-10
//! tolerances.bifurcation = 1e-8
//! tolerances.point = 1e-7
//! limits.kmax = 8
//! limits.depth = 5
//! limits.grid = 200
//! output.dir = out
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cascade_core::symbolic::ENUMERATION_CAP;
use cascade_core::{builtin_perturbations, FamilySpec, SampleWindow};

/// A configuration problem: parse failure or violated invariant. These
/// exit with status 2, distinct from runtime computation failures.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub b: f64,
    pub a1: f64,
    /// None means "auto": the conventional pre-onset left endpoint.
    pub a0: Option<f64>,
    pub perturbation_name: String,
    pub perturbation_magnitude: f64,
    pub perturbation_r: f64,
    pub tol_newton: f64,
    pub tol_bifurcation: f64,
    pub tol_point: f64,
    pub kmax: u32,
    pub depth: usize,
    pub grid: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            b: 0.3,
            a1: 20.0,
            a0: None,
            perturbation_name: "none".into(),
            perturbation_magnitude: 0.0,
            perturbation_r: 2.0,
            tol_newton: 1e-10,
            tol_bifurcation: 1e-8,
            tol_point: 1e-7,
            kmax: 8,
            depth: 5,
            grid: 200,
            out_dir: PathBuf::from("out"),
        }
    }
}

const DEPTH_CAP: usize = 10;
const GRID_RANGE: (usize, usize) = (10, 5000);

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return bad(format!("line {}: expected `key = value`", lineno + 1));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if value.is_empty() {
                return bad(format!("line {}: empty value for `{key}`", lineno + 1));
            }
            if seen.insert(key.clone(), value).is_some() {
                return bad(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }

        let mut cfg = Self::default();
        for (key, value) in &seen {
            match key.as_str() {
                "b" => cfg.b = num(key, value)?,
                "a1" => cfg.a1 = num(key, value)?,
                "a0" => {
                    cfg.a0 = if value == "auto" {
                        None
                    } else {
                        Some(num(key, value)?)
                    }
                }
                "perturbation.name" => cfg.perturbation_name = value.clone(),
                "perturbation.magnitude" => cfg.perturbation_magnitude = num(key, value)?,
                "perturbation.r" => cfg.perturbation_r = num(key, value)?,
                "tolerances.newton" => cfg.tol_newton = num(key, value)?,
                "tolerances.bifurcation" => cfg.tol_bifurcation = num(key, value)?,
                "tolerances.point" => cfg.tol_point = num(key, value)?,
                "limits.kmax" => cfg.kmax = int(key, value)? as u32,
                "limits.depth" => cfg.depth = int(key, value)?,
                "limits.grid" => cfg.grid = int(key, value)?,
                "output.dir" => cfg.out_dir = PathBuf::from(value),
                other => return bad(format!("unknown key `{other}`")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.b.is_finite() || self.b == 0.0 {
            return bad(format!("b must be finite and nonzero (b = {})", self.b));
        }
        if !self.a1.is_finite() || self.a1 <= 0.0 {
            return bad(format!("window needs 0 < a1 (a1 = {})", self.a1));
        }
        if let Some(a0) = self.a0 {
            if !a0.is_finite() || a0 >= 0.0 {
                return bad(format!("window needs a0 < 0 (a0 = {a0})"));
            }
        }
        for (name, v) in [
            ("tolerances.newton", self.tol_newton),
            ("tolerances.bifurcation", self.tol_bifurcation),
            ("tolerances.point", self.tol_point),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        if self.kmax > ENUMERATION_CAP {
            return bad(format!(
                "limits.kmax exceeds the enumeration cap {ENUMERATION_CAP} (got {})",
                self.kmax
            ));
        }
        if self.depth == 0 || self.depth > DEPTH_CAP {
            return bad(format!(
                "limits.depth must be in 1..={DEPTH_CAP} (got {})",
                self.depth
            ));
        }
        if self.grid < GRID_RANGE.0 || self.grid > GRID_RANGE.1 {
            return bad(format!(
                "limits.grid must be in {}..={} (got {})",
                GRID_RANGE.0, GRID_RANGE.1, self.grid
            ));
        }
        if self.perturbation_magnitude < 0.0 {
            return bad(format!(
                "perturbation.magnitude must be nonnegative (got {})",
                self.perturbation_magnitude
            ));
        }
        if !matches!(
            self.perturbation_name.as_str(),
            "none" | "bounded-wave" | "compact-bump"
        ) {
            return bad(format!(
                "perturbation.name must be none, bounded-wave, or compact-bump (got `{}`)",
                self.perturbation_name
            ));
        }
        Ok(())
    }

    /// Builds the family, sampling perturbation bounds over a window that
    /// covers the whole configured parameter range.
    pub fn family(&self) -> Result<FamilySpec, ConfigError> {
        let (g, alpha) = builtin_perturbations(
            &self.perturbation_name,
            self.perturbation_magnitude,
            self.perturbation_r,
        )
        .map_err(|e| ConfigError(e.to_string()))?;
        // cover any auto left endpoint: -(beta + (|B|+1)Q + beta^2/4) - 1
        // stays above this for the small beta of the built-ins
        let lo = self
            .a0
            .unwrap_or(-((self.b.abs() + 1.0) * 2.0 * self.a1.max(1.0).sqrt() + 2.0));
        let delta = self.perturbation_magnitude.max(1e-3);
        FamilySpec::new(
            self.b,
            g,
            alpha,
            delta,
            self.perturbation_r,
            SampleWindow::covering(lo, self.a1),
        )
        .map_err(|e| ConfigError(e.to_string()))
    }

    /// Serializes in the same flat format `parse` reads (with `a0 = auto`
    /// left implicit as a comment when unset).
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("b = {}\n", self.b));
        s.push_str(&format!("a1 = {}\n", self.a1));
        match self.a0 {
            Some(a0) => s.push_str(&format!("a0 = {a0}\n")),
            None => s.push_str("a0 = auto\n"),
        }
        s.push_str(&format!("perturbation.name = {}\n", self.perturbation_name));
        s.push_str(&format!(
            "perturbation.magnitude = {}\n",
            self.perturbation_magnitude
        ));
        s.push_str(&format!("perturbation.r = {}\n", self.perturbation_r));
        s.push_str(&format!("tolerances.newton = {}\n", self.tol_newton));
        s.push_str(&format!(
            "tolerances.bifurcation = {}\n",
            self.tol_bifurcation
        ));
        s.push_str(&format!("tolerances.point = {}\n", self.tol_point));
        s.push_str(&format!("limits.kmax = {}\n", self.kmax));
        s.push_str(&format!("limits.depth = {}\n", self.depth));
        s.push_str(&format!("limits.grid = {}\n", self.grid));
        s.push_str(&format!("output.dir = {}\n", self.out_dir.display()));
        s
    }
}

fn num(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| ConfigError(format!("`{key}` expects a number, got `{value}`")))
}

fn int(key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| ConfigError(format!("`{key}` expects a nonnegative integer, got `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_example() {
        let text = "\
b = 0.3
a1 = 20.0
a0 = auto # left endpoint
perturbation.name = compact-bump
perturbation.magnitude = 1.0
perturbation.r = 2.0

# tolerances
tolerances.newton = 1e-10
limits.kmax = 6
output.dir = run1
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.b, 0.3);
        assert_eq!(cfg.a0, None);
        assert_eq!(cfg.perturbation_name, "compact-bump");
        assert_eq!(cfg.perturbation_magnitude, 1.0);
        assert_eq!(cfg.kmax, 6);
        assert_eq!(cfg.out_dir, PathBuf::from("run1"));
        // untouched keys keep their defaults
        assert_eq!(cfg.depth, 5);
        assert_eq!(cfg.tol_bifurcation, 1e-8);
    }

    #[test]
    fn render_parse_roundtrip() {
        let cfg = RunConfig {
            b: -0.25,
            a0: Some(-3.5),
            kmax: 4,
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back.b, cfg.b);
        assert_eq!(back.a0, cfg.a0);
        assert_eq!(back.kmax, cfg.kmax);
        assert_eq!(back.out_dir, cfg.out_dir);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("nonsense").is_err());
        assert!(RunConfig::parse("mystery.key = 1").is_err());
        assert!(RunConfig::parse("b = 0.3\nb = 0.4").is_err());
        assert!(RunConfig::parse("a0 = 1.0").is_err()); // must be negative
        assert!(RunConfig::parse("b = 0").is_err());
        assert!(RunConfig::parse("limits.depth = 0").is_err());
        assert!(RunConfig::parse("limits.kmax = 99").is_err());
        assert!(RunConfig::parse("tolerances.newton = -1e-10").is_err());
        assert!(RunConfig::parse("perturbation.name = exotic").is_err());
    }

    #[test]
    fn family_builds_for_each_builtin() {
        for name in ["none", "bounded-wave", "compact-bump"] {
            let cfg = RunConfig {
                perturbation_name: name.into(),
                perturbation_magnitude: 0.02,
                ..RunConfig::default()
            };
            let spec = cfg.family().unwrap();
            assert_eq!(spec.b, 0.3);
        }
    }
}
