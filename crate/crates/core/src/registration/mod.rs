//! Rigid registration by exhaustive maximization of the structure-code
//! correlation coefficient over a `(t, s, θ)` grid, with an optional
//! coarse-to-fine pyramid.

mod engine;
mod pyramid;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, MetricError, Result};
use crate::geometry::{nearest_shifted, sin_cos_deg, warp_into, GrayImage, Interpolation, RigidMap, RigidParams};
use crate::metrics::{
    correlation_coefficient, intensity_correlation, mutual_information, mutual_information_codes, OverlapMask,
};
use crate::parallel::Execution;
use crate::structure_codes::{encode_image_with, Backend, DigitOrdering, OrderingTag, StructureCodeImage, TransformPath};

pub use pyramid::pyramid_search;

/// Integer grid `min, min + step, …` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: i64,
    pub max: i64,
    pub step: i64,
}

impl IntRange {
    pub fn new(min: i64, max: i64, step: i64) -> Result<Self> {
        let r = IntRange { min, max, step };
        r.validate("range")?;
        Ok(r)
    }

    pub fn symmetric(radius: i64) -> Self {
        IntRange {
            min: -radius,
            max: radius,
            step: 1,
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.step <= 0 {
            return Err(Error::parameter(name, format!("step must be > 0, got {}", self.step)));
        }
        if self.min > self.max {
            return Err(Error::parameter(name, format!("empty interval [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<i64> {
        (0..=(self.max - self.min) / self.step).map(|k| self.min + k * self.step).collect()
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.min && v <= self.max && (v - self.min) % self.step == 0
    }
}

/// Angle grid in degrees, `min + k·step` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AngleRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let r = AngleRange { min, max, step };
        r.validate()?;
        Ok(r)
    }

    pub fn symmetric(radius: f64) -> Self {
        AngleRange {
            min: -radius,
            max: radius,
            step: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::parameter("theta_range", format!("step must be > 0, got {}", self.step)));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::parameter(
                "theta_range",
                format!("empty interval [{}, {}]", self.min, self.max),
            ));
        }
        if self.max - self.min > 360.0 {
            return Err(Error::parameter("theta_range", "interval wider than a full turn"));
        }
        Ok(())
    }

    /// Number of grid angles. A small slack keeps `max` on the grid when
    /// `(max - min) / step` lands just below an integer.
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }
}

/// Which images the reported mutual information is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MiSource {
    /// Reference vs registered intensities.
    #[default]
    Intensity,
    /// Reference vs registered structure codes.
    Structure,
}

impl std::str::FromStr for MiSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "intensity" => Ok(MiSource::Intensity),
            "structure" => Ok(MiSource::Structure),
            other => Err(Error::parameter("mi_source", format!("unknown source `{other}`"))),
        }
    }
}

/// Search grid and encoding settings for one registration.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub t_range: IntRange,
    pub s_range: IntRange,
    pub theta_range: AngleRange,
    pub pyramid_levels: usize,
    pub backend: Backend,
    pub base: u32,
    /// `None` selects the backend's default ordering.
    pub ordering: Option<OrderingTag>,
    /// Histogram bins for the reported mutual information.
    pub bins: usize,
    /// Interpolator used to resample `moving` for the reported metrics.
    pub interpolation: Interpolation,
    pub mi_source: MiSource,
    /// A grid cell is skipped when fewer than this fraction of the
    /// reference's valid pixels overlap valid moving pixels.
    pub min_overlap: f64,
    pub execution: Execution,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            t_range: IntRange::symmetric(25),
            s_range: IntRange::symmetric(25),
            theta_range: AngleRange::symmetric(25.0),
            pyramid_levels: 1,
            backend: Backend::Fwht4,
            base: 10,
            ordering: None,
            bins: 256,
            interpolation: Interpolation::Bilinear,
            mi_source: MiSource::Intensity,
            min_overlap: 0.05,
            execution: Execution::default(),
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        self.t_range.validate("t_range")?;
        self.s_range.validate("s_range")?;
        self.theta_range.validate()?;
        if self.pyramid_levels < 1 {
            return Err(Error::parameter("pyramid", "need at least one level"));
        }
        if self.bins < 2 {
            return Err(Error::parameter("bins", format!("need at least 2 bins, got {}", self.bins)));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::parameter("min_overlap", "must be in (0, 1]"));
        }
        crate::structure_codes::check_base(self.base, self.backend)?;
        Ok(())
    }

    pub fn digit_ordering(&self) -> DigitOrdering {
        DigitOrdering::new(self.ordering.unwrap_or(self.backend.default_ordering()), self.backend)
    }

    pub fn grid_size(&self) -> usize {
        self.t_range.values().len() * self.s_range.values().len() * self.theta_range.len()
    }

    pub(crate) fn encode(&self, img: &GrayImage) -> Result<StructureCodeImage> {
        encode_image_with(
            img,
            self.backend,
            self.base,
            &self.digit_ordering(),
            TransformPath::Fast,
            self.execution,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Error => "error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    EmptyOverlap,
    ZeroVariance,
    DegenerateInput,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::EmptyOverlap => "empty_overlap",
            ErrorKind::ZeroVariance => "zero_variance",
            ErrorKind::DegenerateInput => "degenerate_input",
        }
    }
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl From<MetricError> for ErrorKind {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::EmptyOverlap => ErrorKind::EmptyOverlap,
            MetricError::ZeroVariance => ErrorKind::ZeroVariance,
        }
    }
}

/// Outcome of one registration. On error `params` holds the best grid
/// point found (identity if none) and the metric fields are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub params: RigidParams,
    pub score: Option<f64>,
    pub mi_after: Option<f64>,
    pub cc_after: Option<f64>,
    pub elapsed_seconds: f64,
    pub status: Status,
    pub error_kind: Option<ErrorKind>,
}

impl RegistrationResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub(crate) fn failed(params: RigidParams, kind: ErrorKind, start: Instant) -> Self {
        RegistrationResult {
            params,
            score: None,
            mi_after: None,
            cc_after: None,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            status: Status::Error,
            error_kind: Some(kind),
        }
    }
}

/// Registers `moving` onto `reference`: the returned params map reference
/// pixels into `moving` (see [`crate::geometry::warp`]), so
/// `warp(moving, params)` lines up with `reference`.
///
/// Uses the pyramid when `spec.pyramid_levels > 1`. `Err` is returned only
/// for an invalid spec; unusable inputs yield `status = error`.
pub fn register(reference: &GrayImage, moving: &GrayImage, spec: &SearchSpec) -> Result<RegistrationResult> {
    spec.validate()?;
    if spec.pyramid_levels > 1 {
        return pyramid_search(reference, moving, spec);
    }
    let start = Instant::now();
    let (s1, s2) = match (spec.encode(reference), spec.encode(moving)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::Input(_)), _) | (_, Err(Error::Input(_))) => {
            return Ok(RegistrationResult::failed(RigidParams::identity(), ErrorKind::DegenerateInput, start))
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let grid = engine::Grid {
        ts: spec.t_range.values(),
        ss: spec.s_range.values(),
        thetas: spec.theta_range.values(),
    };
    let outcome = engine::search(&s1, &s2, &grid, spec.min_overlap, spec.execution);
    Ok(finish(reference, moving, &s1, &s2, outcome, spec, start))
}

/// Turns a grid search outcome into a full result: recomputes the score at
/// the winner through [`correlation_coefficient`] and fills the metrics.
pub(crate) fn finish(
    reference: &GrayImage,
    moving: &GrayImage,
    s1: &StructureCodeImage,
    s2: &StructureCodeImage,
    outcome: engine::Outcome,
    spec: &SearchSpec,
    start: Instant,
) -> RegistrationResult {
    let best = match outcome.best {
        Some(b) => b,
        None => return RegistrationResult::failed(RigidParams::identity(), outcome.failure_kind(), start),
    };
    let params = best.params;
    let score = match correlation_coefficient(s1, s2, &params) {
        Ok(v) => v,
        Err(Error::Metric(e)) => return RegistrationResult::failed(params, e.into(), start),
        Err(_) => best.score,
    };
    let (registered, mask) = warp_into(moving, &params, reference.width(), reference.height(), spec.interpolation);
    let metrics = evaluate_pair(reference, &registered, &mask).and_then(|(mi, cc)| match spec.mi_source {
        MiSource::Intensity if spec.bins == 256 => Ok((mi, cc)),
        MiSource::Intensity => Ok((mutual_information(reference, &registered, &mask, spec.bins)?, cc)),
        MiSource::Structure => {
            let warped = warp_codes(s2, &params, s1.width(), s1.height())?;
            Ok((mutual_information_codes(s1, &warped, &mask, spec.bins)?, cc))
        }
    });
    match metrics {
        Ok((mi, cc)) => RegistrationResult {
            params,
            score: Some(score),
            mi_after: Some(mi),
            cc_after: Some(cc),
            elapsed_seconds: start.elapsed().as_secs_f64(),
            status: Status::Ok,
            error_kind: None,
        },
        Err(Error::Metric(e)) => RegistrationResult::failed(params, e.into(), start),
        Err(_) => RegistrationResult::failed(params, ErrorKind::DegenerateInput, start),
    }
}

/// Mutual information (256 bins, bits) and intensity correlation of a
/// registered pair over `mask`.
pub fn evaluate_pair(reference: &GrayImage, registered: &GrayImage, mask: &OverlapMask) -> Result<(f64, f64)> {
    let mi = mutual_information(reference, registered, mask, 256)?;
    let cc = intensity_correlation(reference, registered, mask)?;
    Ok((mi, cc))
}

/// Resamples a code image (nearest neighbour) onto a `width × height`
/// grid; pixels mapping outside the valid source region become invalid.
pub fn warp_codes(
    codes: &StructureCodeImage,
    params: &RigidParams,
    width: usize,
    height: usize,
) -> Result<StructureCodeImage> {
    let map = RigidMap::new(params, (width, height), (codes.width(), codes.height()));
    let mut out = vec![0u64; width * height];
    let mut valid = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let (rx, ry) = map.rotate(x as f64, y as f64);
            let (nx, ny) = (nearest_shifted(rx, params.t), nearest_shifted(ry, params.s));
            if nx < 0.0 || ny < 0.0 || nx >= codes.width() as f64 || ny >= codes.height() as f64 {
                continue;
            }
            if let Some(c) = codes.get(nx as usize, ny as usize) {
                out[y * width + x] = c;
                valid[y * width + x] = true;
            }
        }
    }
    StructureCodeImage::from_parts(width, height, out, valid, codes.base(), codes.digit_count())
}

/// Params that undo `applied` when `moving = warp(reference, applied)` on
/// same-sized images: rotation `-θ` and translation `-R(-θ)·(t, s)`.
pub fn inverse_params(applied: &RigidParams) -> RigidParams {
    let (sin, cos) = sin_cos_deg(-applied.theta);
    RigidParams::new(
        -(cos * applied.t - sin * applied.s),
        -(sin * applied.t + cos * applied.s),
        -applied.theta,
    )
}

/// Misalignment left after registering `warp(reference, applied)` with
/// `recovered`: the displacement of the image center in pixels and the
/// rotation error in degrees.
pub fn alignment_residual(applied: &RigidParams, recovered: &RigidParams) -> (f64, f64) {
    // Composite source position of a reference pixel p is
    // R0·R·(p - c) + c - R0·T - T0; at p = c the offset is -(R0·T + T0).
    let (sin, cos) = sin_cos_deg(applied.theta);
    let dx = cos * recovered.t - sin * recovered.s + applied.t;
    let dy = sin * recovered.t + cos * recovered.s + applied.s;
    let dtheta = crate::geometry::normalize_angle(applied.theta + recovered.theta);
    (dx.hypot(dy), dtheta.abs())
}
