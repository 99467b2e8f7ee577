//! Gray images, rigid parameters and rigid warping.
//!
//! A warp by `(t, s, θ)` fills output pixel `(x, y)` from the source
//! position
//!
//! ```text
//! x' = (x - cx)·cosθ - (y - cy)·sinθ + cx' - t
//! y' = (x - cx)·sinθ + (y - cy)·cosθ + cy' - s
//! ```
//!
//! where `(cx, cy)` and `(cx', cy')` are the output and input image centers.
//! Angles are degrees, positive counterclockwise in a y-up frame (which is
//! clockwise on screen, since image rows grow downward).

use crate::error::{Error, Result};
use crate::metrics::OverlapMask;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Millimetres per pixel.
    spacing: f64,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::dimension(width * height, pixels.len()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            spacing: 1.0,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::parameter("spacing", format!("must be > 0, got {spacing}")));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn center(&self) -> (f64, f64) {
        center_of(self.width, self.height)
    }

    /// Applies `f` to every pixel, keeping shape and spacing.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            spacing: self.spacing,
        }
    }
}

/// Nearest grid coordinate, ties rounded up. Used by every nearest-neighbour
/// lookup so that shifting by whole pixels commutes with rounding.
#[inline]
pub fn nearest(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Nearest grid coordinate of `r - shift`. A whole-pixel shift is applied
/// after rounding, so grid searches over integer translations can round
/// each rotated position once.
#[inline]
pub(crate) fn nearest_shifted(r: f64, shift: f64) -> f64 {
    if shift.fract() == 0.0 {
        nearest(r) - shift
    } else {
        nearest(r - shift)
    }
}

pub(crate) fn center_of(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Translation `(t, s)` in pixels and rotation `theta` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RigidParams {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
}

impl RigidParams {
    /// Builds parameters with `theta` wrapped into `(-180, 180]`.
    pub fn new(t: f64, s: f64, theta: f64) -> Self {
        RigidParams {
            t,
            s,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        RigidParams::new(0.0, 0.0, 0.0)
    }
}

pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(theta: f64) -> (f64, f64) {
    let r = theta.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        theta.to_radians().sin_cos()
    }
}

/// Output-to-source coordinate map for one set of rigid parameters.
#[derive(Debug, Clone, Copy)]
pub struct RigidMap {
    sin: f64,
    cos: f64,
    t: f64,
    s: f64,
    out_center: (f64, f64),
    src_center: (f64, f64),
}

impl RigidMap {
    pub fn new(p: &RigidParams, out_dims: (usize, usize), src_dims: (usize, usize)) -> Self {
        let (sin, cos) = sin_cos_deg(p.theta);
        RigidMap {
            sin,
            cos,
            t: p.t,
            s: p.s,
            out_center: center_of(out_dims.0, out_dims.1),
            src_center: center_of(src_dims.0, src_dims.1),
        }
    }

    /// Source position of output pixel `(x, y)` before the translation.
    #[inline]
    pub fn rotate(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.out_center.0;
        let dy = y - self.out_center.1;
        (
            dx * self.cos - dy * self.sin + self.src_center.0,
            dx * self.sin + dy * self.cos + self.src_center.1,
        )
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (rx, ry) = self.rotate(x, y);
        (rx - self.t, ry - self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(Interpolation::Nearest),
            "bilinear" => Ok(Interpolation::Bilinear),
            other => Err(Error::parameter("interp", format!("unknown interpolator `{other}`"))),
        }
    }
}

const EDGE_EPS: f64 = 1e-9;

/// Warps `img` onto a grid of the same size.
pub fn warp(img: &GrayImage, p: &RigidParams, interp: Interpolation) -> (GrayImage, OverlapMask) {
    warp_into(img, p, img.width, img.height, interp)
}

/// Warps `img` onto a `out_width × out_height` grid. Pixels whose source
/// position falls outside `img` are set to 0 and masked out.
pub fn warp_into(
    img: &GrayImage,
    p: &RigidParams,
    out_width: usize,
    out_height: usize,
    interp: Interpolation,
) -> (GrayImage, OverlapMask) {
    let map = RigidMap::new(p, (out_width, out_height), (img.width, img.height));
    let mut pixels = vec![0u8; out_width * out_height];
    let mut inside = vec![false; out_width * out_height];
    let (w, h) = (img.width as f64, img.height as f64);
    for y in 0..out_height {
        for x in 0..out_width {
            let (sx, sy) = map.apply(x as f64, y as f64);
            let idx = y * out_width + x;
            let sample = match interp {
                Interpolation::Nearest => {
                    let (nx, ny) = (nearest(sx), nearest(sy));
                    if nx >= 0.0 && ny >= 0.0 && nx < w && ny < h {
                        Some(img.get(nx as usize, ny as usize))
                    } else {
                        None
                    }
                }
                Interpolation::Bilinear => bilinear(img, sx, sy),
            };
            if let Some(v) = sample {
                pixels[idx] = v;
                inside[idx] = true;
            }
        }
    }
    let out = GrayImage {
        width: out_width,
        height: out_height,
        pixels,
        spacing: img.spacing,
    };
    (out, OverlapMask::from_vec(out_width, out_height, inside))
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> Option<u8> {
    let (w, h) = (img.width, img.height);
    if x < -EDGE_EPS || y < -EDGE_EPS || x > (w - 1) as f64 + EDGE_EPS || y > (h - 1) as f64 + EDGE_EPS {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
    let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
    let v = top * (1.0 - fy) + bottom * fy;
    Some(v.round().clamp(0.0, 255.0) as u8)
}

/// Millimetres to whole pixels at the given spacing.
pub fn mm_to_px(x_mm: f64, spacing: f64) -> i64 {
    assert!(spacing > 0.0, "pixel spacing must be positive");
    (x_mm / spacing).round() as i64
}

/// `|a - b|` inside `mask`, 0 elsewhere.
pub fn difference_image(a: &GrayImage, b: &GrayImage, mask: &OverlapMask) -> Result<GrayImage> {
    if !a.same_shape(b) {
        return Err(Error::dimension(
            format!("{}x{}", a.width, a.height),
            format!("{}x{}", b.width, b.height),
        ));
    }
    if mask.width() != a.width || mask.height() != a.height {
        return Err(Error::dimension(
            format!("{}x{} mask", a.width, a.height),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    let pixels = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .zip(mask.inside())
        .map(|((&u, &v), &m)| if m { u.abs_diff(v) } else { 0 })
        .collect();
    GrayImage::new(a.width, a.height, pixels).and_then(|img| img.with_spacing(a.spacing))
}

/// Half-resolution image by 2×2 box averaging; odd trailing rows/columns
/// are dropped.
pub fn downsample2(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width / 2, img.height / 2);
    if w == 0 || h == 0 {
        return Err(Error::Input(format!("{}x{} image is too small to downsample", img.width, img.height)));
    }
    let out = GrayImage::from_fn(w, h, |x, y| {
        let sum = img.get(2 * x, 2 * y) as u32
            + img.get(2 * x + 1, 2 * y) as u32
            + img.get(2 * x, 2 * y + 1) as u32
            + img.get(2 * x + 1, 2 * y + 1) as u32;
        ((sum + 2) / 4) as u8
    })?;
    out.with_spacing(img.spacing * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> GrayImage {
        GrayImage::new(3, 3, vec![10, 20, 30, 40, 50, 60, 70, 80, 90]).unwrap()
    }

    #[test]
    fn identity_warp() {
        let img = GrayImage::from_fn(7, 5, |x, y| (x * 31 + y * 7) as u8).unwrap();
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            let (out, mask) = warp(&img, &RigidParams::identity(), interp);
            assert_eq!(out, img);
            assert!(mask.inside().iter().all(|&m| m));
        }
    }

    #[test]
    fn unit_shift_on_3x3() {
        // out(x, y) = img(x - 1, y): column 0 has no source.
        let (out, mask) = warp(&grid3(), &RigidParams::new(1.0, 0.0, 0.0), Interpolation::Nearest);
        assert_eq!(out.pixels(), &[0, 10, 20, 0, 40, 50, 0, 70, 80]);
        assert_eq!(
            mask.inside(),
            &[false, true, true, false, true, true, false, true, true]
        );
        let (bl, bl_mask) = warp(&grid3(), &RigidParams::new(1.0, 0.0, 0.0), Interpolation::Bilinear);
        assert_eq!(bl, out);
        assert_eq!(bl_mask, mask);
    }

    #[test]
    fn quarter_turn_is_an_index_permutation() {
        for n in [4usize, 5, 8] {
            let img = GrayImage::from_fn(n, n, |x, y| (x * 17 + y * 3 + 1) as u8).unwrap();
            let (out, mask) = warp(&img, &RigidParams::new(0.0, 0.0, 90.0), Interpolation::Nearest);
            assert!(mask.inside().iter().all(|&m| m));
            for y in 0..n {
                for x in 0..n {
                    assert_eq!(out.get(x, y), img.get(n - 1 - y, x));
                }
            }
        }
    }

    #[test]
    fn shift_and_back_restores_inside_both_masks() {
        let img = GrayImage::from_fn(12, 9, |x, y| (x * 13 + y * 29) as u8).unwrap();
        let (a, ma) = warp(&img, &RigidParams::new(3.0, -2.0, 0.0), Interpolation::Nearest);
        let (b, mb) = warp(&a, &RigidParams::new(-3.0, 2.0, 0.0), Interpolation::Nearest);
        // b(x) = a(x + d) = img(x), valid when a was valid at x + d.
        let mut checked = 0;
        for y in 0..9 {
            for x in 0..12 {
                let src = (x as i64 + 3, y as i64 - 2);
                let src_ok = src.0 >= 0 && src.0 < 12 && src.1 >= 0 && src.1 < 9 && ma.get(src.0 as usize, src.1 as usize);
                if mb.get(x, y) && src_ok {
                    assert_eq!(b.get(x, y), img.get(x, y));
                    checked += 1;
                }
            }
        }
        assert!(checked > 40);
    }

    #[test]
    fn mask_marks_exactly_in_bounds_sources() {
        let img = GrayImage::filled(20, 16, 9).unwrap();
        let p = RigidParams::new(2.5, -1.25, 17.0);
        let map = RigidMap::new(&p, (20, 16), (20, 16));
        let (_, mask) = warp(&img, &p, Interpolation::Nearest);
        for y in 0..16 {
            for x in 0..20 {
                let (sx, sy) = map.apply(x as f64, y as f64);
                let (nx, ny) = (nearest(sx), nearest(sy));
                let inside = nx >= 0.0 && ny >= 0.0 && nx < 20.0 && ny < 16.0;
                assert_eq!(mask.get(x, y), inside);
            }
        }
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(RigidParams::new(0.0, 0.0, 180.0).theta, 180.0);
        assert_eq!(RigidParams::new(0.0, 0.0, -180.0).theta, 180.0);
        assert_eq!(RigidParams::new(0.0, 0.0, 270.0).theta, -90.0);
        assert_eq!(RigidParams::new(0.0, 0.0, -25.0).theta, -25.0);
    }

    #[test]
    fn mm_conversion() {
        assert_eq!(mm_to_px(4.0, 1.0), 4);
        assert_eq!(mm_to_px(4.0, 2.0), 2);
        assert_eq!(mm_to_px(-10.0, 1.0), -10);
    }

    #[test]
    fn differences() {
        let a = GrayImage::filled(4, 3, 200).unwrap();
        let b = GrayImage::filled(4, 3, 50).unwrap();
        let all = OverlapMask::full(4, 3);
        assert!(difference_image(&a, &a, &all).unwrap().pixels().iter().all(|&v| v == 0));
        assert!(difference_image(&a, &b, &all).unwrap().pixels().iter().all(|&v| v == 150));
        let c = GrayImage::filled(3, 3, 0).unwrap();
        assert!(matches!(difference_image(&a, &c, &all), Err(Error::Dimension { .. })));
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = GrayImage::new(4, 2, vec![0, 4, 8, 8, 4, 4, 8, 9]).unwrap();
        let d = downsample2(&img).unwrap();
        assert_eq!((d.width(), d.height()), (2, 1));
        assert_eq!(d.pixels(), &[3, 8]);
        assert_eq!(d.spacing(), 2.0);
    }
}
