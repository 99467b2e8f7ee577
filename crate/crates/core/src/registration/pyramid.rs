//! Coarse-to-fine search. Each level halves the resolution with 2×2 box
//! averaging; the coarsest level scans the whole (scaled) grid and each
//! finer level scans translations within ±2 steps of twice the previous
//! optimum. Every level scans the full angle grid: angles do not scale with
//! resolution and half-resolution codes often rank neighbouring angles
//! wrongly.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{downsample2, GrayImage, RigidParams};

use super::engine::{self, Candidate, Grid};
use super::{finish, ErrorKind, IntRange, RegistrationResult, SearchSpec};

/// Levels stop once either side would drop below this many pixels.
const MIN_LEVEL_SIDE: usize = 16;

/// Search radius, in grid steps, around the seed from the coarser level.
const WINDOW_STEPS: i64 = 2;

/// Pyramid-accelerated [`super::register`]. With one level this is the
/// exhaustive search. Fewer levels than requested are used when the images
/// are too small to halve again.
pub fn pyramid_search(reference: &GrayImage, moving: &GrayImage, spec: &SearchSpec) -> Result<RegistrationResult> {
    spec.validate()?;
    let start = Instant::now();
    let mut refs = vec![reference.clone()];
    let mut movs = vec![moving.clone()];
    while refs.len() < spec.pyramid_levels {
        let (r, m) = (&refs[refs.len() - 1], &movs[movs.len() - 1]);
        let too_small = [r.width(), r.height(), m.width(), m.height()]
            .iter()
            .any(|&d| d / 2 < MIN_LEVEL_SIDE);
        if too_small {
            break;
        }
        let (r, m) = (downsample2(r)?, downsample2(m)?);
        refs.push(r);
        movs.push(m);
    }

    let mut codes = Vec::with_capacity(refs.len());
    for (r, m) in refs.iter().zip(&movs) {
        match (spec.encode(r), spec.encode(m)) {
            (Ok(a), Ok(b)) => codes.push((a, b)),
            (Err(Error::Input(_)), _) | (_, Err(Error::Input(_))) => {
                return Ok(RegistrationResult::failed(
                    RigidParams::identity(),
                    ErrorKind::DegenerateInput,
                    start,
                ));
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }

    let top = codes.len() - 1;
    let mut seed: Option<Candidate> = None;
    let mut outcome = engine::Outcome::default();
    for level in (0..=top).rev() {
        let grid = match seed {
            None => Grid {
                ts: level_range(&spec.t_range, level).values(),
                ss: level_range(&spec.s_range, level).values(),
                thetas: spec.theta_range.values(),
            },
            Some(c) => refine_grid(spec, level, &c),
        };
        let (s1, s2) = &codes[level];
        outcome = engine::search(s1, s2, &grid, spec.min_overlap, spec.execution);
        match outcome.best {
            Some(c) => seed = Some(c),
            None => break,
        }
    }
    // `outcome` is level 0's unless a coarser level failed, in which case
    // it has no winner and `finish` reports the failure.
    let (s1, s2) = &codes[0];
    Ok(finish(reference, moving, s1, s2, outcome, spec, start))
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Translation lattice at `level`, in that level's pixels. Level 0 is the
/// requested range itself.
fn level_range(r: &IntRange, level: usize) -> IntRange {
    let scale = 1i64 << level;
    IntRange {
        min: div_floor(r.min, scale),
        max: div_ceil(r.max, scale),
        step: (r.step / scale).max(1),
    }
}

fn window(r: &IntRange, center: i64) -> Vec<i64> {
    let radius = WINDOW_STEPS * r.step;
    let all = r.values();
    let near: Vec<i64> = all.iter().copied().filter(|v| (v - center).abs() <= radius).collect();
    if !near.is_empty() {
        return near;
    }
    // Seed outside the lattice; fall back to the closest admissible value.
    let closest = all.iter().copied().min_by_key(|v| (v - center).abs()).unwrap_or(r.min);
    vec![closest]
}

fn refine_grid(spec: &SearchSpec, level: usize, seed: &Candidate) -> Grid {
    Grid {
        ts: window(&level_range(&spec.t_range, level), 2 * seed.params.t as i64),
        ss: window(&level_range(&spec.s_range, level), 2 * seed.params.s as i64),
        thetas: spec.theta_range.values(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{warp, Interpolation};
    use crate::parallel::Execution;
    use crate::registration::{register, AngleRange};

    fn scene(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64 - w as f64 / 2.0, y as f64 - h as f64 / 2.0);
            let body = (fx * fx / 900.0 + fy * fy / 500.0) < 1.0;
            let spot = (fx - 8.0).hypot(fy + 5.0) < 6.0;
            let bar = (fx + 12.0).abs() < 3.0 && fy.abs() < 12.0;
            let v = if spot {
                200.0
            } else if bar {
                40.0
            } else if body {
                110.0 + 30.0 * (fx / 7.0).sin() * (fy / 5.0).cos()
            } else {
                0.0
            };
            v as u8
        })
        .unwrap()
    }

    #[test]
    fn level_ranges() {
        let r = IntRange::symmetric(25);
        assert_eq!(level_range(&r, 0), r);
        assert_eq!(level_range(&r, 1), IntRange { min: -13, max: 13, step: 1 });
        let stepped = IntRange { min: -8, max: 8, step: 4 };
        assert_eq!(level_range(&stepped, 1).step, 2);
        assert_eq!(level_range(&stepped, 3).step, 1);
        assert_eq!(window(&r, 100), vec![25]);
        assert_eq!(window(&r, 3), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn one_level_equals_exhaustive() {
        let img = scene(64, 60);
        let (moving, _) = warp(&img, &RigidParams::new(3.0, 2.0, 4.0), Interpolation::Bilinear);
        let spec = SearchSpec {
            t_range: IntRange::symmetric(5),
            s_range: IntRange::symmetric(5),
            theta_range: AngleRange::symmetric(5.0),
            execution: Execution::Sequential,
            ..SearchSpec::default()
        };
        let a = pyramid_search(&img, &moving, &spec).unwrap();
        let b = register(&img, &moving, &spec).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn two_levels_match_exhaustive_on_a_shift() {
        let img = scene(128, 128);
        let (moving, _) = warp(&img, &RigidParams::new(6.0, -4.0, 0.0), Interpolation::Nearest);
        let mut spec = SearchSpec {
            t_range: IntRange::symmetric(10),
            s_range: IntRange::symmetric(10),
            theta_range: AngleRange::symmetric(3.0),
            execution: Execution::Sequential,
            ..SearchSpec::default()
        };
        let exhaustive = register(&img, &moving, &spec).unwrap();
        spec.pyramid_levels = 2;
        let pyramid = pyramid_search(&img, &moving, &spec).unwrap();
        assert_eq!(pyramid.params, exhaustive.params);
        assert_eq!(pyramid.params, RigidParams::new(-6.0, 4.0, 0.0));
    }

    #[test]
    fn small_images_use_fewer_levels() {
        let img = scene(40, 40);
        let spec = SearchSpec {
            t_range: IntRange::symmetric(2),
            s_range: IntRange::symmetric(2),
            theta_range: AngleRange::symmetric(1.0),
            pyramid_levels: 4,
            execution: Execution::Sequential,
            ..SearchSpec::default()
        };
        let r = pyramid_search(&img, &img, &spec).unwrap();
        assert_eq!(r.params, RigidParams::identity());
    }
}
