//! Run configuration: plain-text `key = value` lines whose keys match the
//! CLI flag names (`t-range`, `theta-range`, …; underscores also accepted).
//! Blank lines and `#` comments are ignored.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Interpolation;
use crate::parallel::Execution;
use crate::registration::{AngleRange, IntRange, MiSource, SearchSpec};
use crate::structure_codes::{check_base, Backend, OrderingTag};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: Backend,
    pub base: u32,
    pub ordering: Option<OrderingTag>,
    pub t_range: (i64, i64),
    pub s_range: (i64, i64),
    pub theta_range: (f64, f64),
    /// Steps for t, s (pixels) and theta (degrees).
    pub steps: (i64, i64, f64),
    pub pyramid: usize,
    pub bins: usize,
    pub interp: Interpolation,
    /// Millimetres per pixel used for perturbation triples.
    pub spacing: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// 0 = all cores, 1 = sequential.
    pub workers: usize,
    pub mi_source: MiSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: Backend::Fwht4,
            base: 10,
            ordering: None,
            t_range: (-25, 25),
            s_range: (-25, 25),
            theta_range: (-25.0, 25.0),
            steps: (1, 1, 1.0),
            pyramid: 1,
            bins: 256,
            interp: Interpolation::Bilinear,
            spacing: 1.0,
            out: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            mi_source: MiSource::Intensity,
        }
    }
}

/// Every accepted key, in canonical (hyphenated) form.
pub const KEYS: &[&str] = &[
    "backend",
    "base",
    "ordering",
    "t-range",
    "s-range",
    "theta-range",
    "steps",
    "pyramid",
    "bins",
    "interp",
    "spacing",
    "out",
    "seed",
    "workers",
    "mi-source",
];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = `{value}`: {why}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

/// `MIN:MAX`.
fn parse_pair<T: FromStr>(key: &str, value: &str) -> Result<(T, T)>
where
    T::Err: std::fmt::Display,
{
    let (lo, hi) = value
        .split_once(':')
        .ok_or_else(|| bad(key, value, "expected MIN:MAX"))?;
    Ok((parse(key, lo)?, parse(key, hi)?))
}

impl RunConfig {
    /// Sets one key. Values are checked for syntax here and for
    /// consistency in [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let canonical = key.trim().to_ascii_lowercase().replace('_', "-");
        let v = value.trim();
        match canonical.as_str() {
            "backend" => self.backend = v.parse().map_err(|e| bad(key, v, e))?,
            "base" => self.base = parse(key, v)?,
            "ordering" => self.ordering = Some(v.parse().map_err(|e| bad(key, v, e))?),
            "t-range" => self.t_range = parse_pair(key, v)?,
            "s-range" => self.s_range = parse_pair(key, v)?,
            "theta-range" => self.theta_range = parse_pair(key, v)?,
            "steps" => {
                let parts: Vec<&str> = v.split(',').collect();
                let [t, s, theta] = parts[..] else {
                    return Err(bad(key, v, "expected T,S,THETA"));
                };
                self.steps = (parse(key, t)?, parse(key, s)?, parse(key, theta)?);
            }
            "pyramid" => self.pyramid = parse(key, v)?,
            "bins" => self.bins = parse(key, v)?,
            "interp" => self.interp = v.parse().map_err(|e| bad(key, v, e))?,
            "spacing" => self.spacing = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "mi-source" => self.mi_source = v.parse().map_err(|e| bad(key, v, e))?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.merge_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |e: Error| Error::Config(e.to_string());
        check_base(self.base, self.backend).map_err(invalid)?;
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Config(format!("spacing must be > 0, got {}", self.spacing)));
        }
        self.search_spec().validate().map_err(invalid)
    }

    pub fn execution(&self) -> Execution {
        Execution::with_workers(self.workers)
    }

    pub fn search_spec(&self) -> SearchSpec {
        SearchSpec {
            t_range: IntRange {
                min: self.t_range.0,
                max: self.t_range.1,
                step: self.steps.0,
            },
            s_range: IntRange {
                min: self.s_range.0,
                max: self.s_range.1,
                step: self.steps.1,
            },
            theta_range: AngleRange {
                min: self.theta_range.0,
                max: self.theta_range.1,
                step: self.steps.2,
            },
            pyramid_levels: self.pyramid,
            backend: self.backend,
            base: self.base,
            ordering: self.ordering,
            bins: self.bins,
            interpolation: self.interp,
            mi_source: self.mi_source,
            execution: self.execution(),
            ..SearchSpec::default()
        }
    }
}
