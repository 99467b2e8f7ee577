//! CSV reports. Column names are the serde field names below and do not
//! change between runs; `None` values are written as empty cells.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::registration::{RegistrationResult, Status};
use crate::structure_codes::Backend;

/// One row of `report.csv` written by `register`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationRow {
    pub reference: String,
    pub moving: String,
    pub backend: &'static str,
    pub base: u32,
    pub ordering: &'static str,
    pub t: f64,
    pub s: f64,
    pub theta: f64,
    pub score: Option<f64>,
    pub mi_after: Option<f64>,
    pub cc_after: Option<f64>,
    pub elapsed_seconds: f64,
    pub status: Status,
    pub error_kind: Option<&'static str>,
}

impl RegistrationRow {
    pub fn new(
        reference: &str,
        moving: &str,
        backend: Backend,
        base: u32,
        ordering: &'static str,
        r: &RegistrationResult,
    ) -> Self {
        RegistrationRow {
            reference: reference.to_string(),
            moving: moving.to_string(),
            backend: backend.name(),
            base,
            ordering,
            t: r.params.t,
            s: r.params.s,
            theta: r.params.theta,
            score: r.score,
            mi_after: r.mi_after,
            cc_after: r.cc_after,
            elapsed_seconds: r.elapsed_seconds,
            status: r.status,
            error_kind: r.error_kind.map(|k| k.name()),
        }
    }
}

/// One perturbation registered with one backend. `x_mm`, `y_mm` and
/// `angle_deg` are the applied perturbation; `t`, `s`, `theta` the
/// recovered params; the residuals measure what is left after applying them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub index: usize,
    pub x_mm: f64,
    pub y_mm: f64,
    pub angle_deg: f64,
    pub backend: &'static str,
    pub base: u32,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub theta: Option<f64>,
    pub score: Option<f64>,
    pub mi_after: Option<f64>,
    pub cc_after: Option<f64>,
    pub residual_px: Option<f64>,
    pub residual_deg: Option<f64>,
    pub elapsed_seconds: f64,
    pub status: Status,
    pub error_kind: Option<&'static str>,
}

/// `metric,value` pairs of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub value: f64,
}

impl SummaryRow {
    pub fn new(metric: impl Into<String>, value: f64) -> Self {
        SummaryRow {
            metric: metric.into(),
            value,
        }
    }
}

/// Writes `rows` with a header line. The header is written even when
/// `rows` is empty.
pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>, header: &[&str]) -> Result<()> {
    let path = path.as_ref();
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    out.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        out.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if !matches!(e.kind(), csv::ErrorKind::Io(_)) {
        return Error::Csv(e);
    }
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        _ => unreachable!(),
    }
}

pub const REGISTRATION_HEADER: &[&str] = &[
    "reference",
    "moving",
    "backend",
    "base",
    "ordering",
    "t",
    "s",
    "theta",
    "score",
    "mi_after",
    "cc_after",
    "elapsed_seconds",
    "status",
    "error_kind",
];

pub const BENCHMARK_HEADER: &[&str] = &[
    "index",
    "x_mm",
    "y_mm",
    "angle_deg",
    "backend",
    "base",
    "t",
    "s",
    "theta",
    "score",
    "mi_after",
    "cc_after",
    "residual_px",
    "residual_deg",
    "elapsed_seconds",
    "status",
    "error_kind",
];

pub const SUMMARY_HEADER: &[&str] = &["metric", "value"];
