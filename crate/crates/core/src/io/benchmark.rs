//! Perturbation benchmark: warp a reference by each `(x_mm, y_mm, angle)`
//! triple, register it back with every backend and record metrics, the
//! residual misalignment and timings.

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{mm_to_px, warp, GrayImage, RigidParams};
use crate::io::config::RunConfig;
use crate::io::report::{BenchmarkRow, SummaryRow};
use crate::parallel::Execution;
use crate::registration::{alignment_residual, register, SearchSpec, Status};
use crate::structure_codes::{encode_image_with, Backend, DigitOrdering, TransformPath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub x_mm: f64,
    pub y_mm: f64,
    pub angle_deg: f64,
}

impl Perturbation {
    pub fn new(x_mm: f64, y_mm: f64, angle_deg: f64) -> Self {
        Perturbation { x_mm, y_mm, angle_deg }
    }

    /// Warp params at the given pixel spacing (mm per pixel).
    pub fn params(&self, spacing: f64) -> RigidParams {
        RigidParams::new(
            mm_to_px(self.x_mm, spacing) as f64,
            mm_to_px(self.y_mm, spacing) as f64,
            self.angle_deg,
        )
    }
}

/// The 21 `(X mm, Y mm, angle°)` sets of the clinical experiment tables.
pub const TABLE_PERTURBATIONS: [(f64, f64, f64); 21] = [
    (4.0, -10.0, 9.0),
    (-12.0, -7.0, 13.0),
    (5.0, -7.0, 5.0),
    (-14.0, -15.0, 2.0),
    (-8.0, -7.0, 1.0),
    (9.0, 7.0, -7.0),
    (7.0, -13.0, 11.0),
    (18.0, 1.0, 19.0),
    (-17.0, 0.0, -17.0),
    (0.0, -9.0, 12.0),
    (23.0, -6.0, 2.0),
    (-15.0, 5.0, -10.0),
    (22.0, 20.0, 2.0),
    (5.0, 15.0, 12.0),
    (-21.0, 16.0, -5.0),
    (-1.0, 19.0, 13.0),
    (5.0, 10.0, -25.0),
    (-3.0, 11.0, 25.0),
    (11.0, -9.0, 0.0),
    (0.0, 0.0, 12.0),
    (0.0, 0.0, 0.0),
];

pub fn default_perturbations() -> Vec<Perturbation> {
    TABLE_PERTURBATIONS
        .iter()
        .map(|&(x, y, a)| Perturbation::new(x, y, a))
        .collect()
}

/// One triple per line, separated by commas and/or whitespace. Blank
/// lines, `#` comments and a non-numeric header line are skipped.
pub fn parse_perturbations(text: &str) -> Result<Vec<Perturbation>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let values: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match values {
            Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => {
                out.push(Perturbation::new(v[0], v[1], v[2]))
            }
            Err(_) if out.is_empty() && fields.iter().all(|f| f.parse::<f64>().is_err()) => continue,
            _ => {
                return Err(Error::Config(format!(
                    "perturbations line {}: expected `x_mm, y_mm, angle`, got `{line}`",
                    n + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("perturbation list is empty".into()));
    }
    Ok(out)
}

pub fn load_perturbations(path: impl AsRef<Path>) -> Result<Vec<Perturbation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_perturbations(&text)
}

/// Best-of-`repeats` wall time, in seconds, to encode every pixel of `img`.
pub fn time_encoding(img: &GrayImage, backend: Backend, base: u32, path: TransformPath, repeats: usize) -> Result<f64> {
    let ordering = DigitOrdering::new(backend.default_ordering(), backend);
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let codes = encode_image_with(img, backend, base, &ordering, path, Execution::Sequential)?;
        best = best.min(start.elapsed().as_secs_f64());
        std::hint::black_box(codes);
    }
    Ok(best)
}

/// Encoding times of the three configurations the summary compares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeTimings {
    /// 3×3 Walsh through the general matrix-product path.
    pub wt_direct: f64,
    /// 4×4 Walsh–Hadamard through the general matrix-product path.
    pub fwht_direct: f64,
    /// 4×4 Walsh–Hadamard through the butterfly kernel.
    pub fwht_fast: f64,
}

impl EncodeTimings {
    /// Rounds run the three configurations back to back and keep the best
    /// time of each, so slow phases of the host hit all of them alike.
    pub fn measure(img: &GrayImage, base: u32, repeats: usize) -> Result<Self> {
        let mut t = EncodeTimings { wt_direct: f64::INFINITY, fwht_direct: f64::INFINITY, fwht_fast: f64::INFINITY };
        for _ in 0..repeats.max(1) {
            t.wt_direct = t.wt_direct.min(time_encoding(img, Backend::Walsh3, base, TransformPath::DirectOracle, 1)?);
            t.fwht_direct = t.fwht_direct.min(time_encoding(img, Backend::Fwht4, base, TransformPath::DirectOracle, 1)?);
            t.fwht_fast = t.fwht_fast.min(time_encoding(img, Backend::Fwht4, base, TransformPath::Fast, 1)?);
        }
        Ok(t)
    }

    /// Direct 4×4 matrix products over the fast butterfly, same patch size.
    pub fn fast_speedup(&self) -> f64 {
        self.fwht_direct / self.fwht_fast
    }

    /// Direct 3×3 Walsh over the fast 4×4 Walsh–Hadamard path.
    pub fn wt_over_fwht(&self) -> f64 {
        self.wt_direct / self.fwht_fast
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<SummaryRow>,
}

impl BenchmarkReport {
    pub fn summary_value(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.metric == metric).map(|r| r.value)
    }
}

/// Runs every perturbation with each backend in `backends`, in input
/// order. Rows are numbered from 1. Per-case failures become `error` rows;
/// only an invalid configuration aborts the run.
pub fn run_benchmark(
    reference: &GrayImage,
    perturbations: &[Perturbation],
    cfg: &RunConfig,
    backends: &[Backend],
    encode_repeats: usize,
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(perturbations.len() * backends.len());
    let mut totals = vec![0.0f64; backends.len()];
    let mut ok_counts = vec![0usize; backends.len()];
    for (i, p) in perturbations.iter().enumerate() {
        let applied = p.params(cfg.spacing);
        let (moving, _) = warp(reference, &applied, cfg.interp);
        for (k, &backend) in backends.iter().enumerate() {
            let spec = SearchSpec {
                backend,
                ..cfg.search_spec()
            };
            let r = register(reference, &moving, &spec)?;
            totals[k] += r.elapsed_seconds;
            let ok = r.status == Status::Ok;
            ok_counts[k] += ok as usize;
            let residual = ok.then(|| alignment_residual(&applied, &r.params));
            rows.push(BenchmarkRow {
                index: i + 1,
                x_mm: p.x_mm,
                y_mm: p.y_mm,
                angle_deg: p.angle_deg,
                backend: backend.name(),
                base: cfg.base,
                t: ok.then_some(r.params.t),
                s: ok.then_some(r.params.s),
                theta: ok.then_some(r.params.theta),
                score: r.score,
                mi_after: r.mi_after,
                cc_after: r.cc_after,
                residual_px: residual.map(|r| r.0),
                residual_deg: residual.map(|r| r.1),
                elapsed_seconds: r.elapsed_seconds,
                status: r.status,
                error_kind: r.error_kind.map(|k| k.name()),
            });
        }
    }

    let mut summary = vec![SummaryRow::new("cases", perturbations.len() as f64)];
    for (k, backend) in backends.iter().enumerate() {
        summary.push(SummaryRow::new(format!("{backend}_ok"), ok_counts[k] as f64));
        summary.push(SummaryRow::new(format!("{backend}_registration_seconds"), totals[k]));
    }
    if let (Some(w), Some(f)) = (
        backends.iter().position(|&b| b == Backend::Walsh3),
        backends.iter().position(|&b| b == Backend::Fwht4),
    ) {
        summary.push(SummaryRow::new("registration_time_ratio_wt_over_fwht", totals[w] / totals[f]));
    }
    if encode_repeats > 0 {
        let t = EncodeTimings::measure(reference, cfg.base, encode_repeats)?;
        summary.extend([
            SummaryRow::new("encode_seconds_wt_direct", t.wt_direct),
            SummaryRow::new("encode_seconds_fwht_direct", t.fwht_direct),
            SummaryRow::new("encode_seconds_fwht_fast", t.fwht_fast),
            SummaryRow::new("encode_time_ratio_wt_direct_over_fwht_fast", t.wt_over_fwht()),
            SummaryRow::new("encode_speedup_fwht_fast_over_direct", t.fast_speedup()),
        ]);
    }
    Ok(BenchmarkReport { rows, summary })
}
