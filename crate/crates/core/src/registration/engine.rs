//! Grid evaluation of the structure-code correlation.
//!
//! For a fixed angle every valid reference pixel `p` lands on the moving
//! grid at `q(p) = nearest(R·(p - c1) + c2)`, and a translation `T` samples
//! the moving image at `q(p) - T`. Scattering the reference values onto
//! `q` gives count, sum and sum-of-squares fields `W`, `A`, `AA`. For each
//! `T` the overlap is the moving valid rectangle shifted by `T`, so
//! `n`, `Σa`, `Σa²` are summed-area lookups and `Σab` is a contiguous dot
//! product of `A` rows against moving rows. Within each row `W` is 1 apart
//! from a few rounding holes and double hits, so `Σb` and `Σb²` come from
//! row prefix sums of the moving image plus a sparse correction.

use crate::error::MetricError;
use crate::geometry::{nearest, RigidMap, RigidParams};
use crate::metrics::Moments;
use crate::parallel::{map_indexed, Execution};
use crate::structure_codes::StructureCodeImage;
use wide::f64x4;

use super::ErrorKind;

#[derive(Debug, Clone, PartialEq)]
/// Grid axes; `ss` must be strictly ascending.
pub(crate) struct Grid {
    pub ts: Vec<i64>,
    pub ss: Vec<i64>,
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub params: RigidParams,
    pub score: f64,
}

/// Scores closer than this are ties; the geometric rules below decide.
const SCORE_RESOLUTION: f64 = 1e-12;

impl Candidate {
    /// Strict preference: higher score, then smaller |θ|, then smaller
    /// |t| + |s|, then lexicographically smaller (t, s, θ).
    pub fn beats(&self, other: &Candidate) -> bool {
        let key = |c: &Candidate| (c.score / SCORE_RESOLUTION).round() as i64;
        let (a, b) = (&self.params, &other.params);
        let by_score = key(self).cmp(&key(other)).reverse();
        let by_angle = a.theta.abs().total_cmp(&b.theta.abs());
        let by_shift = (a.t.abs() + a.s.abs()).total_cmp(&(b.t.abs() + b.s.abs()));
        let lexical = a.t.total_cmp(&b.t).then(a.s.total_cmp(&b.s)).then(a.theta.total_cmp(&b.theta));
        by_score.then(by_angle).then(by_shift).then(lexical).is_lt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Outcome {
    pub best: Option<Candidate>,
    pub evaluated: usize,
    pub empty: usize,
    pub zero_variance: usize,
}

impl Outcome {
    fn record(&mut self, params: RigidParams, result: Result<f64, MetricError>) {
        match result {
            Ok(score) => {
                self.evaluated += 1;
                let c = Candidate { params, score };
                if self.best.is_none_or(|b| c.beats(&b)) {
                    self.best = Some(c);
                }
            }
            Err(MetricError::EmptyOverlap) => self.empty += 1,
            Err(MetricError::ZeroVariance) => self.zero_variance += 1,
        }
    }

    fn merge(&mut self, other: Outcome) {
        self.evaluated += other.evaluated;
        self.empty += other.empty;
        self.zero_variance += other.zero_variance;
        if let Some(c) = other.best {
            if self.best.is_none_or(|b| c.beats(&b)) {
                self.best = Some(c);
            }
        }
    }

    /// Why no cell produced a score.
    pub fn failure_kind(&self) -> ErrorKind {
        if self.zero_variance > 0 {
            ErrorKind::ZeroVariance
        } else {
            ErrorKind::EmptyOverlap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kernel {
    /// Summed-area tables; needs the moving valid region to be a rectangle.
    Summed,
    /// Per-pixel lookups for arbitrary masks.
    Gather,
}

struct Context<'a> {
    s1: &'a StructureCodeImage,
    a: &'a [f64],
    s2: &'a StructureCodeImage,
    b: &'a [f64],
    grid: &'a Grid,
    min_n: f64,
    /// Row prefix sums of `b` and `b²` (summed kernel only).
    prefix_b: Vec<f64>,
    prefix_bb: Vec<f64>,
}

/// Evaluates every grid cell and returns the preferred one.
pub(crate) fn search(
    s1: &StructureCodeImage,
    s2: &StructureCodeImage,
    grid: &Grid,
    min_overlap: f64,
    exec: Execution,
) -> Outcome {
    let kernel = if s2.valid_rect().is_some() {
        Kernel::Summed
    } else {
        Kernel::Gather
    };
    search_with(s1, s2, grid, min_overlap, exec, kernel)
}

pub(crate) fn search_with(
    s1: &StructureCodeImage,
    s2: &StructureCodeImage,
    grid: &Grid,
    min_overlap: f64,
    exec: Execution,
    kernel: Kernel,
) -> Outcome {
    debug_assert!(grid.ss.windows(2).all(|w| w[0] < w[1]), "s values must ascend");
    let a = s1.centered_values();
    let b = s2.centered_values();
    let rect = s2.valid_rect();
    let summed = kernel == Kernel::Summed && rect.is_some();
    let (prefix_b, prefix_bb) = if summed {
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        (row_prefix(&b, s2.width()), row_prefix(&bb, s2.width()))
    } else {
        (Vec::new(), Vec::new())
    };
    let ctx = Context {
        s1,
        a: &a,
        s2,
        b: &b,
        grid,
        min_n: (min_overlap * s1.valid_count() as f64).ceil().max(2.0),
        prefix_b,
        prefix_bb,
    };
    let per_angle = map_indexed(exec, grid.thetas.len(), |k| {
        let theta = grid.thetas[k];
        let points = rotated_points(&ctx, theta);
        match rect {
            Some(rect) if summed => summed_angle(&ctx, theta, &points, rect),
            _ => gather_angle(&ctx, theta, &points),
        }
    });
    let mut total = Outcome::default();
    for o in per_angle {
        total.merge(o);
    }
    total
}

/// `(qx, qy, a)` for every valid reference pixel at angle `theta`.
fn rotated_points(ctx: &Context, theta: f64) -> Vec<(i64, i64, f64)> {
    let (w1, h1) = (ctx.s1.width(), ctx.s1.height());
    let map = RigidMap::new(&RigidParams::new(0.0, 0.0, theta), (w1, h1), (ctx.s2.width(), ctx.s2.height()));
    let mut points = Vec::with_capacity(ctx.s1.valid_count());
    for y in 0..h1 {
        for x in 0..w1 {
            let i = y * w1 + x;
            if ctx.s1.valid_mask()[i] {
                let (rx, ry) = map.rotate(x as f64, y as f64);
                points.push((nearest(rx) as i64, nearest(ry) as i64, ctx.a[i]));
            }
        }
    }
    points
}

fn gather_angle(ctx: &Context, theta: f64, points: &[(i64, i64, f64)]) -> Outcome {
    let (w2, h2) = (ctx.s2.width() as i64, ctx.s2.height() as i64);
    let mut out = Outcome::default();
    for &t in &ctx.grid.ts {
        for &s in &ctx.grid.ss {
            let mut m = Moments::default();
            for &(qx, qy, a) in points {
                let (mx, my) = (qx - t, qy - s);
                if mx < 0 || my < 0 || mx >= w2 || my >= h2 {
                    continue;
                }
                let j = (my * w2 + mx) as usize;
                if ctx.s2.valid_mask()[j] {
                    m.push(a, ctx.b[j]);
                }
            }
            let r = if m.n < ctx.min_n {
                Err(MetricError::EmptyOverlap)
            } else {
                m.correlation()
            };
            out.record(RigidParams::new(t as f64, s as f64, theta), r);
        }
    }
    out
}

/// Inclusive prefix sums with a zero first row and column.
fn summed_area(field: &[f64], w: usize, h: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut sat = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += field[y * w + x];
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    sat
}

#[inline]
fn rect_sum(sat: &[f64], stride: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0]
}

/// Per-row prefix sums, `w + 1` entries per row starting at 0.
fn row_prefix(values: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() / w * (w + 1));
    for row in values.chunks_exact(w) {
        let mut acc = 0.0;
        out.push(0.0);
        for &v in row {
            acc += v;
            out.push(acc);
        }
    }
    out
}

/// Count field of one angle in run-length form: per row, the nonzero span
/// and the sparse positions inside it where the count differs from 1
/// (rounding a rotation leaves a few holes and double hits).
struct CountRows {
    spans: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    fixes: Vec<(usize, f64)>,
}

impl CountRows {
    fn new(count: &[f64], bw: usize) -> Self {
        let mut spans = Vec::new();
        let mut offsets = vec![0];
        let mut fixes = Vec::new();
        for row in count.chunks_exact(bw) {
            let span = match row.iter().position(|&c| c != 0.0) {
                Some(first) => (first, bw - row.iter().rev().position(|&c| c != 0.0).unwrap_or(0)),
                None => (0, 0),
            };
            for x in span.0..span.1 {
                if row[x] != 1.0 {
                    fixes.push((x, row[x] - 1.0));
                }
            }
            spans.push(span);
            offsets.push(fixes.len());
        }
        CountRows { spans, offsets, fixes }
    }

    fn fixes(&self, row: usize) -> &[(usize, f64)] {
        &self.fixes[self.offsets[row]..self.offsets[row + 1]]
    }
}

fn summed_angle(
    ctx: &Context,
    theta: f64,
    points: &[(i64, i64, f64)],
    rect: (usize, usize, usize, usize),
) -> Outcome {
    let mut out = Outcome::default();
    let cells = ctx.grid.ts.len() * ctx.grid.ss.len();
    if points.is_empty() {
        out.empty = cells;
        return out;
    }
    let qx0 = points.iter().map(|p| p.0).min().unwrap_or(0);
    let qx1 = points.iter().map(|p| p.0).max().unwrap_or(0) + 1;
    let qy0 = points.iter().map(|p| p.1).min().unwrap_or(0);
    let qy1 = points.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    let (bw, bh) = ((qx1 - qx0) as usize, (qy1 - qy0) as usize);
    let mut count = vec![0.0; bw * bh];
    let mut sum = vec![0.0; bw * bh];
    let mut sum_sq = vec![0.0; bw * bh];
    for &(qx, qy, a) in points {
        let k = (qy - qy0) as usize * bw + (qx - qx0) as usize;
        count[k] += 1.0;
        sum[k] += a;
        sum_sq[k] += a * a;
    }
    let stride = bw + 1;
    let sat_n = summed_area(&count, bw, bh);
    let sat_a = summed_area(&sum, bw, bh);
    let sat_aa = summed_area(&sum_sq, bw, bh);
    let rows = CountRows::new(&count, bw);
    drop((count, sum_sq));

    let (rx0, ry0, rx1, ry1) = (rect.0 as i64, rect.1 as i64, rect.2 as i64, rect.3 as i64);
    let w2 = ctx.s2.width();
    let (b, pb, pbb) = (ctx.b, ctx.prefix_b.as_slice(), ctx.prefix_bb.as_slice());
    // Per-s state for the current t.
    struct Cell {
        s: i64,
        ly0: usize,
        ly1: usize,
        n: f64,
        sb: f64,
        sbb: f64,
        ab: Dot,
    }
    for &t in &ctx.grid.ts {
        let (xa, xb) = ((rx0 + t).max(qx0), (rx1 + t).min(qx1));
        let mut cells: Vec<Cell> = Vec::with_capacity(ctx.grid.ss.len());
        for &s in &ctx.grid.ss {
            let (ya, yb) = ((ry0 + s).max(qy0), (ry1 + s).min(qy1));
            if xa >= xb || ya >= yb {
                out.record(RigidParams::new(t as f64, s as f64, theta), Err(MetricError::EmptyOverlap));
                continue;
            }
            let (ly0, ly1) = ((ya - qy0) as usize, (yb - qy0) as usize);
            let n = rect_sum(&sat_n, stride, (xa - qx0) as usize, ly0, (xb - qx0) as usize, ly1);
            if n < ctx.min_n {
                out.record(RigidParams::new(t as f64, s as f64, theta), Err(MetricError::EmptyOverlap));
                continue;
            }
            cells.push(Cell {
                s,
                ly0,
                ly1,
                n,
                sb: 0.0,
                sbb: 0.0,
                ab: Dot::default(),
            });
        }
        if cells.is_empty() {
            continue;
        }
        let (lx0, lx1) = ((xa - qx0) as usize, (xb - qx0) as usize);
        let first = cells.iter().map(|c| c.ly0).min().unwrap_or(0);
        let last = cells.iter().map(|c| c.ly1).max().unwrap_or(0);
        for ly in first..last {
            let (c0, c1) = (rows.spans[ly].0.max(lx0), rows.spans[ly].1.min(lx1));
            if c0 >= c1 {
                continue;
            }
            let len = c1 - c0;
            let arow = &sum[ly * bw + c0..ly * bw + c1];
            let fixes = rows.fixes(ly);
            let fixes = &fixes[fixes.partition_point(|f| f.0 < c0)..fixes.partition_point(|f| f.0 < c1)];
            // Moving column of field column c0 under translation t.
            let mx = (c0 as i64 + qx0 - t) as usize;
            // Active cells form a contiguous run: both row bounds grow with s.
            let i0 = cells.partition_point(|c| c.ly1 <= ly);
            let i1 = cells.partition_point(|c| c.ly0 <= ly);
            let active = &mut cells[i0..i1];
            let start = |cell: &Cell| (ly as i64 + qy0 - cell.s) as usize * w2 + mx;
            for cell in active.iter_mut() {
                let st = start(cell);
                let p = st + st / w2;
                cell.sb += pb[p + len] - pb[p];
                cell.sbb += pbb[p + len] - pbb[p];
                for &(x, e) in fixes {
                    let v = b[st + x - c0];
                    cell.sb += e * v;
                    cell.sbb += e * v * v;
                }
            }
            let mut groups = active.chunks_exact_mut(4);
            for g in &mut groups {
                let rows = [0, 1, 2, 3].map(|k| {
                    let st = start(&g[k]);
                    &b[st..st + len]
                });
                let mut dots = [g[0].ab, g[1].ab, g[2].ab, g[3].ab];
                Dot::add4(&mut dots, arow, rows);
                for (cell, d) in g.iter_mut().zip(dots) {
                    cell.ab = d;
                }
            }
            for cell in groups.into_remainder() {
                let st = start(cell);
                cell.ab.add(arow, &b[st..st + len]);
            }
        }
        for cell in cells {
            let m = Moments {
                n: cell.n,
                sa: rect_sum(&sat_a, stride, lx0, cell.ly0, lx1, cell.ly1),
                sb: cell.sb,
                saa: rect_sum(&sat_aa, stride, lx0, cell.ly0, lx1, cell.ly1),
                sbb: cell.sbb,
                sab: cell.ab.total(),
            };
            out.record(RigidParams::new(t as f64, cell.s as f64, theta), m.correlation());
        }
    }
    out
}

/// Dot product accumulator: four independent lanes plus a scalar tail,
/// folded in a fixed order so results are reproducible.
#[derive(Clone, Copy)]
struct Dot {
    lanes: f64x4,
    tail: f64,
}

impl Default for Dot {
    fn default() -> Self {
        Dot {
            lanes: f64x4::ZERO,
            tail: 0.0,
        }
    }
}

impl Dot {
    #[inline]
    fn add(&mut self, a: &[f64], b: &[f64]) {
        let (ac, at) = a.as_chunks::<4>();
        let (bc, bt) = b[..a.len()].as_chunks::<4>();
        let mut acc = self.lanes;
        for (x, y) in ac.iter().zip(bc) {
            acc += f64x4::from(*x) * f64x4::from(*y);
        }
        self.lanes = acc;
        for (x, y) in at.iter().zip(bt) {
            self.tail += x * y;
        }
    }

    /// `add` of one row `a` against four rows, loading `a` once. Each
    /// accumulator sees exactly the arithmetic of `add`.
    #[inline]
    fn add4(acc: &mut [Dot; 4], a: &[f64], b: [&[f64]; 4]) {
        let n = a.len();
        let (ac, at) = a.as_chunks::<4>();
        let [b0, b1, b2, b3] = b.map(|r| r[..n].as_chunks::<4>().0);
        let mut v = acc.map(|d| d.lanes);
        for ((((x, y0), y1), y2), y3) in ac.iter().zip(b0).zip(b1).zip(b2).zip(b3) {
            let x = f64x4::from(*x);
            v[0] += x * f64x4::from(*y0);
            v[1] += x * f64x4::from(*y1);
            v[2] += x * f64x4::from(*y2);
            v[3] += x * f64x4::from(*y3);
        }
        let start = n - at.len();
        for k in 0..4 {
            acc[k].lanes = v[k];
            for (x, y) in at.iter().zip(&b[k][start..n]) {
                acc[k].tail += x * y;
            }
        }
    }

    fn total(&self) -> f64 {
        let l = self.lanes.to_array();
        ((l[0] + l[1]) + (l[2] + l[3])) + self.tail
    }
}
