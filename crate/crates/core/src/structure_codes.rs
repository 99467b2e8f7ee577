//! Per-pixel local-structure codes.
//!
//! Around every interior pixel a small neighborhood is transformed, the
//! non-DC coefficients are divided by the DC coefficient, each ratio is
//! quantized to one digit in the chosen base, and the digits are read as a
//! positional number. Dividing by the DC term makes the code independent of
//! a global intensity scale.

use std::fmt;
use std::str::FromStr;

use wide::f64x4;

use crate::error::{Error, Result};
use crate::geometry::GrayImage;
use crate::parallel::{map_indexed, Execution};
use crate::transforms::{
    direct_oracle, fwht4_columns_sequency, fwht4_sequency, walsh3_basis, walsh3_sandwich, CoefficientBlock, HadamardOrder, HadamardPlan,
    Matrix, Patch,
};

/// Which transform produces the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// 3×3 Walsh transform, pixel at the patch center.
    Walsh3,
    /// 4×4 sequency-ordered fast Walsh-Hadamard transform, pixel at
    /// offset (1, 1) of the patch.
    Fwht4,
}

impl Backend {
    pub fn side(self) -> usize {
        match self {
            Backend::Walsh3 => 3,
            Backend::Fwht4 => 4,
        }
    }

    /// Offset of the encoded pixel inside its patch (same on both axes).
    pub fn anchor(self) -> usize {
        1
    }

    pub fn digit_count(self) -> usize {
        self.side() * self.side() - 1
    }

    /// `a_00` of a constant patch of value 1.
    fn dc_gain(self) -> f64 {
        match self {
            Backend::Walsh3 => 1.0,
            Backend::Fwht4 => 16.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Walsh3 => "walsh3",
            Backend::Fwht4 => "fwht4",
        }
    }

    pub fn default_ordering(self) -> OrderingTag {
        match self {
            Backend::Walsh3 => OrderingTag::IA,
            Backend::Fwht4 => OrderingTag::RowMajor,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "walsh3" | "wt" => Ok(Backend::Walsh3),
            "fwht4" | "fwht" => Ok(Backend::Fwht4),
            other => Err(Error::parameter("backend", format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderingTag {
    IA,
    IB,
    IIA,
    IIB,
    RowMajor,
}

impl OrderingTag {
    pub fn name(self) -> &'static str {
        match self {
            OrderingTag::IA => "IA",
            OrderingTag::IB => "IB",
            OrderingTag::IIA => "IIA",
            OrderingTag::IIB => "IIB",
            OrderingTag::RowMajor => "rowmajor",
        }
    }

    /// Coefficient `(i, j)` positions of the eight 3×3 digits, most
    /// significant first.
    fn pairs3(self) -> [(usize, usize); 8] {
        match self {
            OrderingTag::IA => [(0, 1), (1, 0), (2, 0), (0, 2), (1, 1), (2, 1), (1, 2), (2, 2)],
            OrderingTag::IB => [(1, 0), (0, 1), (0, 2), (2, 0), (1, 1), (1, 2), (2, 1), (2, 2)],
            OrderingTag::IIA => [(2, 2), (2, 1), (1, 2), (1, 1), (0, 2), (2, 0), (1, 0), (0, 1)],
            OrderingTag::IIB => [(2, 2), (1, 2), (2, 1), (1, 1), (2, 0), (0, 2), (0, 1), (1, 0)],
            OrderingTag::RowMajor => [(0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)],
        }
    }
}

impl fmt::Display for OrderingTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrderingTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IA" => Ok(OrderingTag::IA),
            "IB" => Ok(OrderingTag::IB),
            "IIA" => Ok(OrderingTag::IIA),
            "IIB" => Ok(OrderingTag::IIB),
            "ROWMAJOR" => Ok(OrderingTag::RowMajor),
            other => Err(Error::parameter("ordering", format!("unknown ordering `{other}`"))),
        }
    }
}

/// Assignment of non-DC coefficients to digit positions.
///
/// `permutation()[k]` is the row-major non-DC index (`i·side + j - 1`) of
/// the coefficient that becomes digit `k` (most significant first).
///
/// On 4×4 blocks the named 3×3 orderings place the eight coefficients with
/// `i, j < 3` first, in their named order, followed by the seven
/// coefficients with `i = 3` or `j = 3` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitOrdering {
    tag: OrderingTag,
    side: usize,
    permutation: Vec<usize>,
}

impl DigitOrdering {
    pub fn new(tag: OrderingTag, backend: Backend) -> Self {
        let side = backend.side();
        let permutation = if tag == OrderingTag::RowMajor {
            (0..side * side - 1).collect()
        } else {
            let mut perm: Vec<usize> = tag.pairs3().iter().map(|&(i, j)| i * side + j - 1).collect();
            for i in 0..side {
                for j in 0..side {
                    if i >= 3 || j >= 3 {
                        perm.push(i * side + j - 1);
                    }
                }
            }
            perm
        };
        DigitOrdering { tag, side, permutation }
    }

    pub fn tag(&self) -> OrderingTag {
        self.tag
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }
}

/// `α_ij = a_ij / a_00` for every non-DC coefficient, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCoefficients {
    pub values: Vec<f64>,
    pub dc: f64,
}

/// DC magnitudes below this fraction of the largest coefficient count as 0.
const DEGENERATE_DC: f64 = 1e-12;

pub fn normalize(g: &CoefficientBlock) -> NormalizedCoefficients {
    let mut values = vec![0.0; g.coeffs().len() - 1];
    normalize_into(g.coeffs(), &mut values);
    NormalizedCoefficients { values, dc: g.dc() }
}

/// Writes the normalized non-DC coefficients of `coeffs` into `out`. A
/// vanishing DC term yields all zeros.
#[inline]
fn normalize_into(coeffs: &[f64], out: &mut [f64]) {
    let dc = coeffs[0];
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 || dc.abs() < DEGENERATE_DC * max {
        out.fill(0.0);
        return;
    }
    for (o, &c) in out.iter_mut().zip(&coeffs[1..]) {
        *o = c / dc;
    }
}

/// Maps `α ∈ [-1, 1]` uniformly onto digits `0..base`; values outside are
/// clamped first.
pub fn quantize_digit(alpha: f64, base: u32) -> Result<u32> {
    if base < 1 {
        return Err(Error::parameter("base", "base must be >= 1"));
    }
    Ok(quantize_unchecked(alpha, base))
}

#[inline]
fn quantize_unchecked(alpha: f64, base: u32) -> u32 {
    let a = alpha.clamp(-1.0, 1.0);
    // Non-negative after clamping, so truncation is floor.
    ((((a + 1.0) / 2.0) * base as f64) as u32).min(base - 1)
}

/// Positional value of `digits` (most significant first). Base 1 always
/// encodes to 0.
pub fn encode_code(digits: &[u32], base: u32) -> Result<u64> {
    if base < 1 {
        return Err(Error::parameter("base", "base must be >= 1"));
    }
    if let Some(&bad) = digits.iter().find(|&&d| d >= base) {
        return Err(Error::Encoding { digit: bad, base });
    }
    if base == 1 {
        return Ok(0);
    }
    let mut code: u64 = 0;
    for &d in digits {
        code = code
            .checked_mul(base as u64)
            .and_then(|c| c.checked_add(d as u64))
            .ok_or_else(|| Error::parameter("base", format!("{} digits overflow base {base}", digits.len())))?;
    }
    Ok(code)
}

/// Inverse of [`encode_code`] for a known digit count.
pub fn decode_code(mut code: u64, base: u32, len: usize) -> Result<Vec<u32>> {
    if base < 2 {
        return Err(Error::parameter("base", "decoding needs base >= 2"));
    }
    let mut digits = vec![0; len];
    for d in digits.iter_mut().rev() {
        *d = (code % base as u64) as u32;
        code /= base as u64;
    }
    if code != 0 {
        return Err(Error::parameter("code", format!("does not fit in {len} base-{base} digits")));
    }
    Ok(digits)
}

/// Largest structure code magnitude that is still exact as an `f64`.
const MAX_EXACT_CODE: u64 = 1 << 53;

/// Rejects bases whose largest code would not fit exactly in an `f64`.
pub fn check_base(base: u32, backend: Backend) -> Result<()> {
    if base < 1 {
        return Err(Error::parameter("base", "base must be >= 1"));
    }
    let fits = (base as u64)
        .checked_pow(backend.digit_count() as u32)
        .is_some_and(|max| max <= MAX_EXACT_CODE);
    if !fits {
        return Err(Error::parameter(
            "base",
            format!(
                "base {base} with {} digits exceeds 2^53 and cannot be correlated exactly",
                backend.digit_count()
            ),
        ));
    }
    Ok(())
}

/// Per-pixel structure values. Pixels whose neighborhood leaves the image
/// are invalid and hold 0.
///
/// For bases >= 2 every valid code is below `base^digits`. With base 1 all
/// digits are 0, so the value is the local mean intensity (`a_00` divided
/// by the DC gain, floored to `0..=255`) instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureCodeImage {
    width: usize,
    height: usize,
    codes: Vec<u64>,
    valid_mask: Vec<bool>,
    base: u32,
    digits: usize,
}

impl StructureCodeImage {
    /// Assembles a code image from raw parts; invalid pixels are zeroed.
    pub fn from_parts(
        width: usize,
        height: usize,
        mut codes: Vec<u64>,
        valid_mask: Vec<bool>,
        base: u32,
        digits: usize,
    ) -> Result<Self> {
        if codes.len() != width * height || valid_mask.len() != width * height {
            return Err(Error::dimension(
                width * height,
                format!("{} codes / {} mask entries", codes.len(), valid_mask.len()),
            ));
        }
        if base < 1 {
            return Err(Error::parameter("base", "base must be >= 1"));
        }
        for (c, &v) in codes.iter_mut().zip(&valid_mask) {
            if !v {
                *c = 0;
            }
        }
        Ok(StructureCodeImage {
            width,
            height,
            codes,
            valid_mask,
            base,
            digits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid_mask
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn digit_count(&self) -> usize {
        self.digits
    }

    pub fn get(&self, x: usize, y: usize) -> Option<u64> {
        let i = y * self.width + x;
        self.valid_mask[i].then_some(self.codes[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask.iter().filter(|&&v| v).count()
    }

    /// Codes as `f64` minus the mean over valid pixels; invalid pixels
    /// are 0. Correlation is shift-invariant, and centering keeps the
    /// moment sums well conditioned.
    pub fn centered_values(&self) -> Vec<f64> {
        let n = self.valid_count();
        let mean = if n == 0 {
            0.0
        } else {
            self.codes
                .iter()
                .zip(&self.valid_mask)
                .filter(|(_, &v)| v)
                .map(|(&c, _)| c as f64)
                .sum::<f64>()
                / n as f64
        };
        self.codes
            .iter()
            .zip(&self.valid_mask)
            .map(|(&c, &v)| if v { c as f64 - mean } else { 0.0 })
            .collect()
    }

    /// `(x0, y0, x1, y1)` (exclusive end) when the valid pixels form one
    /// filled axis-aligned rectangle, which is always the case for encoded
    /// images.
    pub fn valid_rect(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.valid_mask[y * self.width + x] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return None;
        }
        let filled = (y0..y1).all(|y| (x0..x1).all(|x| self.valid_mask[y * self.width + x]));
        filled.then_some((x0, y0, x1, y1))
    }
}

/// How the coefficient blocks are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformPath {
    /// Fixed-size stack kernels (Walsh sandwich / 4×4 butterflies).
    #[default]
    Fast,
    /// General `m^T·f·m` products through [`direct_oracle`], with the
    /// allocating per-step API. Baseline for timing comparisons.
    DirectOracle,
}

/// Encodes every interior pixel of `img`.
pub fn encode_image(img: &GrayImage, backend: Backend, base: u32, ordering: &DigitOrdering) -> Result<StructureCodeImage> {
    encode_image_with(img, backend, base, ordering, TransformPath::Fast, Execution::Sequential)
}

pub fn encode_image_with(
    img: &GrayImage,
    backend: Backend,
    base: u32,
    ordering: &DigitOrdering,
    path: TransformPath,
    exec: Execution,
) -> Result<StructureCodeImage> {
    check_base(base, backend)?;
    let side = backend.side();
    if ordering.side != side {
        return Err(Error::parameter(
            "ordering",
            format!("ordering built for {0}x{0} patches, backend uses {1}x{1}", ordering.side, side),
        ));
    }
    let (w, h) = (img.width(), img.height());
    if w < side || h < side {
        return Err(Error::Input(format!("{w}x{h} image is smaller than the {side}x{side} neighborhood")));
    }
    let anchor = backend.anchor();
    let oracle = match path {
        TransformPath::Fast => None,
        TransformPath::DirectOracle => Some(oracle_matrix(backend)?),
    };
    let fwht4 = match (path, backend) {
        (TransformPath::Fast, Backend::Fwht4) => Some((fwht4_row_passes(img, exec), Fwht4Coder::new(base, ordering))),
        _ => None,
    };

    let rows: Vec<Result<Vec<u64>>> = map_indexed(exec, h, |y| {
        let mut row = vec![0u64; w];
        if y < anchor || y - anchor + side > h {
            return Ok(row);
        }
        for (x, code) in row.iter_mut().enumerate() {
            if x < anchor || x - anchor + side > w {
                continue;
            }
            let (x0, y0) = (x - anchor, y - anchor);
            *code = match (&oracle, &fwht4) {
                (Some(m), _) => encode_pixel_oracle(img, x0, y0, backend, base, ordering, m)?,
                (None, Some((passes, coder))) => coder.code(std::array::from_fn(|r| passes[(y0 + r) * w + x0])),
                (None, None) => encode_walsh3_fast(img, x0, y0, base, ordering),
            };
        }
        Ok(row)
    });

    let mut codes = Vec::with_capacity(w * h);
    for row in rows {
        codes.extend(row?);
    }
    let valid_mask = (0..h)
        .flat_map(|y| {
            (0..w).map(move |x| {
                x >= anchor && x - anchor + side <= w && y >= anchor && y - anchor + side <= h
            })
        })
        .collect();
    StructureCodeImage::from_parts(w, h, codes, valid_mask, base, backend.digit_count())
}

fn oracle_matrix(backend: Backend) -> Result<Matrix> {
    Ok(match backend {
        Backend::Walsh3 => walsh3_basis().w_inv_matrix(),
        Backend::Fwht4 => HadamardPlan::new(2, HadamardOrder::Sequency)?.matrix().transpose(),
    })
}

#[inline]
fn dc_fallback(dc: f64, backend: Backend) -> u64 {
    (dc / backend.dc_gain()).floor().clamp(0.0, 255.0) as u64
}

#[inline]
fn digits_to_code(coeffs: &[f64], alphas: &mut [f64], base: u32, ordering: &DigitOrdering) -> u64 {
    normalize_into(coeffs, alphas);
    let b = base as u64;
    ordering
        .permutation
        .iter()
        .fold(0u64, |code, &k| code * b + quantize_unchecked(alphas[k], base) as u64)
}

fn encode_walsh3_fast(img: &GrayImage, x0: usize, y0: usize, base: u32, ordering: &DigitOrdering) -> u64 {
    let mut f = [0.0; 9];
    for r in 0..3 {
        let start = (y0 + r) * img.width() + x0;
        for (d, &v) in f[r * 3..r * 3 + 3].iter_mut().zip(&img.pixels()[start..start + 3]) {
            *d = v as f64;
        }
    }
    let g = walsh3_sandwich(&f, &WALSH3_INV);
    if base == 1 {
        return dc_fallback(g[0], Backend::Walsh3);
    }
    let mut alphas = [0.0; 8];
    digits_to_code(&g, &mut alphas, base, ordering)
}

/// Row pass of the 4×4 transform for every 4-wide window, indexed
/// `y * width + x`. Windows that would leave the image stay zero.
fn fwht4_row_passes(img: &GrayImage, exec: Execution) -> Vec<f64x4> {
    let w = img.width();
    map_indexed(exec, img.height(), |y| {
        let px = &img.pixels()[y * w..(y + 1) * w];
        let mut row = vec![f64x4::ZERO; w];
        for (x, win) in px.windows(4).enumerate() {
            row[x] = f64x4::new(fwht4_sequency([win[0] as f64, win[1] as f64, win[2] as f64, win[3] as f64]));
        }
        row
    })
    .concat()
}

/// Per-pixel fwht4 coding from precomputed row passes. Lane-wise IEEE
/// operations match [`digits_to_code`] bit for bit.
struct Fwht4Coder {
    base: u32,
    /// Place value of each row-major coefficient; the DC slot is 0.
    weights: [u64; 16],
    /// Code of a block whose normalized coefficients are all zero.
    flat_code: u64,
}

impl Fwht4Coder {
    fn new(base: u32, ordering: &DigitOrdering) -> Self {
        let mut weights = [0u64; 16];
        let mut place = 1u64;
        for &k in ordering.permutation.iter().rev() {
            weights[k + 1] = place;
            place = place.saturating_mul(base as u64);
        }
        let zero = quantize_unchecked(0.0, base) as u64;
        Fwht4Coder { base, weights, flat_code: weights.iter().map(|w| w * zero).sum() }
    }

    #[inline]
    fn code(&self, rows: [f64x4; 4]) -> u64 {
        let g = fwht4_columns_sequency(rows);
        let dc = g[0].to_array()[0];
        if self.base == 1 {
            return dc_fallback(dc, Backend::Fwht4);
        }
        let max = g.iter().fold(f64x4::ZERO, |m, v| m.max(v.abs())).to_array().into_iter().fold(0.0, f64::max);
        if max == 0.0 || dc.abs() < DEGENERATE_DC * max {
            return self.flat_code;
        }
        let (dc, one, two, base) = (f64x4::splat(dc), f64x4::ONE, f64x4::splat(2.0), f64x4::splat(self.base as f64));
        let top = self.base - 1;
        let mut code = 0u64;
        for (k, v) in g.iter().enumerate() {
            let a = (*v / dc).max(-one).min(one);
            let q = ((a + one) / two * base).to_array();
            for (c, q) in q.into_iter().enumerate() {
                code += (q as u32).min(top) as u64 * self.weights[k * 4 + c];
            }
        }
        code
    }
}

const WALSH3_INV: [[f64; 3]; 3] = [[0.5, 0.0, 0.5], [0.0, 0.5, -0.5], [0.5, -0.5, 0.0]];

fn encode_pixel_oracle(
    img: &GrayImage,
    x0: usize,
    y0: usize,
    backend: Backend,
    base: u32,
    ordering: &DigitOrdering,
    m: &Matrix,
) -> Result<u64> {
    let side = backend.side();
    let patch = Patch::from_fn(side, |r, c| img.get(x0 + c, y0 + r) as f64)?;
    let block = direct_oracle(&patch, m)?;
    if base == 1 {
        return Ok(dc_fallback(block.dc(), backend));
    }
    let alphas = normalize(&block);
    let digits = ordering
        .permutation
        .iter()
        .map(|&k| quantize_digit(alphas.values[k], base))
        .collect::<Result<Vec<_>>>()?;
    encode_code(&digits, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walsh3_inverse_constant_matches_basis() {
        assert_eq!(WALSH3_INV, walsh3_basis().w_inv);
    }

    #[test]
    fn normalize_examples() {
        let mut c = vec![0.0; 9];
        c[0] = 2.0;
        c[1] = 1.0;
        let n = normalize(&CoefficientBlock::new(3, c).unwrap());
        assert_eq!(n.values[0], 0.5);
        assert!(n.values[1..].iter().all(|&v| v == 0.0));
        assert_eq!(n.values.len(), 8);

        let mut dc_only = vec![0.0; 16];
        dc_only[0] = 80.0;
        let n = normalize(&CoefficientBlock::new(4, dc_only).unwrap());
        assert_eq!(n.values, vec![0.0; 15]);
    }

    #[test]
    fn degenerate_dc_gives_zero_alphas() {
        let mut c = vec![0.0; 9];
        c[3] = 5.0;
        c[0] = 1e-14;
        assert_eq!(normalize(&CoefficientBlock::new(3, c).unwrap()).values, vec![0.0; 8]);
        assert_eq!(normalize(&CoefficientBlock::new(3, vec![0.0; 9]).unwrap()).values, vec![0.0; 8]);
    }

    #[test]
    fn quantizer_examples() {
        assert_eq!(quantize_digit(-1.0, 10).unwrap(), 0);
        assert_eq!(quantize_digit(1.0, 10).unwrap(), 9);
        assert_eq!(quantize_digit(0.0, 2).unwrap(), 1);
        for a in [-3.0, -0.2, 0.0, 0.7, 2.0] {
            assert_eq!(quantize_digit(a, 1).unwrap(), 0);
        }
        assert_eq!(quantize_digit(7.5, 10).unwrap(), 9);
        assert_eq!(quantize_digit(-7.5, 10).unwrap(), 0);
        assert!(matches!(quantize_digit(0.0, 0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn quantizer_is_monotone() {
        let mut prev = 0;
        for i in -1000..=1000 {
            let d = quantize_digit(i as f64 / 1000.0, 7).unwrap();
            assert!(d >= prev && d < 7);
            prev = d;
        }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_code(&[9; 8], 10).unwrap(), 99_999_999);
        assert_eq!(encode_code(&[0; 8], 10).unwrap(), 0);
        assert_eq!(encode_code(&[0; 15], 3).unwrap(), 0);
        assert_eq!(encode_code(&[1, 0, 1], 2).unwrap(), 5);
        assert_eq!(encode_code(&[0, 0], 1).unwrap(), 0);
        assert!(matches!(encode_code(&[1, 2], 2), Err(Error::Encoding { digit: 2, base: 2 })));
        assert_eq!(decode_code(5, 2, 3).unwrap(), vec![1, 0, 1]);
        assert!(decode_code(8, 2, 3).is_err());
    }

    #[test]
    fn orderings_are_bijections() {
        for backend in [Backend::Walsh3, Backend::Fwht4] {
            for tag in [OrderingTag::IA, OrderingTag::IB, OrderingTag::IIA, OrderingTag::IIB, OrderingTag::RowMajor] {
                let o = DigitOrdering::new(tag, backend);
                let mut p = o.permutation().to_vec();
                p.sort_unstable();
                assert_eq!(p, (0..backend.digit_count()).collect::<Vec<_>>(), "{tag} {backend}");
            }
        }
        // IA on 3×3: α01, α10, α20, α02, ...
        assert_eq!(DigitOrdering::new(OrderingTag::IA, Backend::Walsh3).permutation(), &[0, 2, 5, 1, 3, 6, 4, 7]);
    }

    #[test]
    fn base_limits() {
        let img = GrayImage::filled(8, 8, 10).unwrap();
        let o = DigitOrdering::new(OrderingTag::RowMajor, Backend::Fwht4);
        assert!(encode_image(&img, Backend::Fwht4, 11, &o).is_ok());
        assert!(matches!(encode_image(&img, Backend::Fwht4, 12, &o), Err(Error::Parameter { .. })));
        assert!(matches!(encode_image(&img, Backend::Fwht4, 0, &o), Err(Error::Parameter { .. })));
    }

    #[test]
    fn too_small_and_mismatched_ordering() {
        let small = GrayImage::filled(3, 5, 1).unwrap();
        let o4 = DigitOrdering::new(OrderingTag::RowMajor, Backend::Fwht4);
        assert!(matches!(encode_image(&small, Backend::Fwht4, 10, &o4), Err(Error::Input(_))));
        let o3 = DigitOrdering::new(OrderingTag::IA, Backend::Walsh3);
        assert!(encode_image(&small, Backend::Walsh3, 10, &o3).is_ok());
        assert!(matches!(encode_image(&small, Backend::Walsh3, 10, &o4), Err(Error::Parameter { .. })));
    }

    #[test]
    fn valid_region_layout() {
        let img = GrayImage::filled(7, 6, 50).unwrap();
        let o = DigitOrdering::new(OrderingTag::RowMajor, Backend::Fwht4);
        let codes = encode_image(&img, Backend::Fwht4, 5, &o).unwrap();
        // 4×4 patch anchored at (1, 1): x in 1..=w-3.
        assert_eq!(codes.valid_rect(), Some((1, 1, 5, 4)));
        let o3 = DigitOrdering::new(OrderingTag::IA, Backend::Walsh3);
        let codes3 = encode_image(&img, Backend::Walsh3, 5, &o3).unwrap();
        assert_eq!(codes3.valid_rect(), Some((1, 1, 6, 5)));
        assert!(codes3.codes().iter().zip(codes3.valid_mask()).all(|(&c, &v)| v || c == 0));
    }

    #[test]
    fn base_one_falls_back_to_local_mean() {
        let img = GrayImage::from_fn(6, 6, |x, _| (x * 40) as u8).unwrap();
        for backend in [Backend::Walsh3, Backend::Fwht4] {
            let o = DigitOrdering::new(backend.default_ordering(), backend);
            let codes = encode_image(&img, backend, 1, &o).unwrap();
            let vals: Vec<u64> = (1..4).map(|x| codes.get(x, 1).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] < w[1]), "{backend}: {vals:?}");
            assert!(vals.iter().all(|&v| v <= 255));
        }
    }

    #[test]
    fn fast_paths_match_the_oracle_for_every_base_and_ordering() {
        // Mixes flat regions (degenerate DC), edges and texture.
        let img = crate::synthetic::phantom(40, 3, 200);
        for backend in [Backend::Walsh3, Backend::Fwht4] {
            let top = if backend == Backend::Fwht4 { 11 } else { 12 };
            for base in 1..=top {
                for tag in [OrderingTag::IA, OrderingTag::IB, OrderingTag::IIA, OrderingTag::IIB, OrderingTag::RowMajor] {
                    let o = DigitOrdering::new(tag, backend);
                    let run = |path| encode_image_with(&img, backend, base, &o, path, Execution::Sequential).unwrap();
                    assert_eq!(run(TransformPath::Fast), run(TransformPath::DirectOracle), "{backend} base {base} {tag:?}");
                }
            }
        }
    }
}
