//! Patch transforms: the 3×3 Walsh sandwich, the fast Walsh-Hadamard
//! butterfly for power-of-two patches, and a naive matrix-product oracle.
//!
//! Forward transforms are unnormalized (pure ±1 sums for Hadamard), so
//! integer patches give exact integer coefficients. Scaling only happens in
//! the inverses.

use std::ops::{Add, Sub};

use wide::f64x4;

use crate::error::{Error, Result};

/// A square neighborhood of samples, stored row-major (`row * side + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    side: usize,
    samples: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, samples: Vec<f64>) -> Result<Self> {
        if side < 2 {
            return Err(Error::parameter("side", format!("patch side must be >= 2, got {side}")));
        }
        if samples.len() != side * side {
            return Err(Error::dimension(side * side, samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("patch samples must be finite".into()));
        }
        Ok(Patch { side, samples })
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                samples.push(f(r, c));
            }
        }
        Patch::new(side, samples)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.side + col]
    }
}

/// Transform coefficients `a_ij` of one patch, row-major. The DC term
/// `a_00` is always `coeffs[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    side: usize,
    coeffs: Vec<f64>,
}

impl CoefficientBlock {
    pub fn new(side: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != side * side || side == 0 {
            return Err(Error::dimension(side * side, coeffs.len()));
        }
        Ok(CoefficientBlock { side, coeffs })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.side + j]
    }

    pub fn dc(&self) -> f64 {
        self.coeffs[0]
    }
}

/// Dense square matrix used by the oracle paths and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::dimension(n, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Matrix { n, data }
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n != other.n {
            return Err(Error::dimension(self.n, other.n));
        }
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.data[i * n + k] * other.data[k * n + j];
                }
                data[i * n + j] = acc;
            }
        }
        Ok(Matrix { n, data })
    }
}

/// Sampled 3-point Walsh functions and their inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshBasis3 {
    pub w: [[f64; 3]; 3],
    pub w_inv: [[f64; 3]; 3],
}

impl WalshBasis3 {
    pub fn w_matrix(&self) -> Matrix {
        Matrix {
            n: 3,
            data: self.w.iter().flatten().copied().collect(),
        }
    }

    pub fn w_inv_matrix(&self) -> Matrix {
        Matrix {
            n: 3,
            data: self.w_inv.iter().flatten().copied().collect(),
        }
    }
}

/// Rows are the Walsh functions W0, W1, W2 sampled at t = 0, 1/3, 2/3.
///
/// The inverse is written out in closed form (det W = -4); all entries are
/// 0 or ±1/2, so the forward sandwich is exact for integer patches.
pub fn walsh3_basis() -> WalshBasis3 {
    WalshBasis3 {
        w: [[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, -1.0]],
        w_inv: [[0.5, 0.0, 0.5], [0.0, 0.5, -0.5], [0.5, -0.5, 0.0]],
    }
}

/// `g = (W^-1)^T · f · W^-1` on a 3×3 patch.
pub fn walsh3_forward(f: &Patch, basis: &WalshBasis3) -> Result<CoefficientBlock> {
    if f.side != 3 {
        return Err(Error::dimension("3x3 patch", format!("{0}x{0}", f.side)));
    }
    let mut samples = [0.0; 9];
    samples.copy_from_slice(&f.samples);
    let coeffs = walsh3_sandwich(&samples, &basis.w_inv);
    CoefficientBlock::new(3, coeffs.to_vec())
}

/// Inverse of [`walsh3_forward`]: `f = W^T · g · W`.
pub fn walsh3_inverse(g: &CoefficientBlock, basis: &WalshBasis3) -> Result<Patch> {
    if g.side != 3 {
        return Err(Error::dimension("3x3 block", format!("{0}x{0}", g.side)));
    }
    let mut coeffs = [0.0; 9];
    coeffs.copy_from_slice(&g.coeffs);
    Patch::new(3, walsh3_sandwich(&coeffs, &basis.w).to_vec())
}

/// `m^T · x · m` for 3×3 row-major `x`, fully on the stack.
#[inline]
pub(crate) fn walsh3_sandwich(x: &[f64; 9], m: &[[f64; 3]; 3]) -> [f64; 9] {
    // tmp = x · m
    let mut tmp = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            tmp[r * 3 + c] = x[r * 3] * m[0][c] + x[r * 3 + 1] * m[1][c] + x[r * 3 + 2] * m[2][c];
        }
    }
    // out = m^T · tmp
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[0][r] * tmp[c] + m[1][r] * tmp[3 + c] + m[2][r] * tmp[6 + c];
        }
    }
    out
}

/// Row arrangement of a Walsh-Hadamard transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HadamardOrder {
    /// Sylvester (natural, Hadamard) order.
    Natural,
    /// Rows sorted by number of sign changes.
    Sequency,
}

/// Precomputed description of a radix-2 transform of size `2^stages`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardPlan {
    size: usize,
    stages: u32,
    order: HadamardOrder,
    /// `output[k] = natural[perm[k]]`.
    perm: Vec<usize>,
}

impl HadamardPlan {
    pub fn new(stages: u32, order: HadamardOrder) -> Result<Self> {
        if stages < 1 {
            return Err(Error::parameter("k", "Hadamard order must be >= 1"));
        }
        if stages > 20 {
            return Err(Error::parameter("k", format!("2^{stages} is too large")));
        }
        let size = 1usize << stages;
        let perm = match order {
            HadamardOrder::Natural => (0..size).collect(),
            HadamardOrder::Sequency => (0..size).map(|k| sequency_to_natural(k, stages)).collect(),
        };
        Ok(HadamardPlan {
            size,
            stages,
            order,
            perm,
        })
    }

    /// Plan for a patch of the given side, which must be a power of two.
    pub fn for_side(side: usize, order: HadamardOrder) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(Error::parameter("side", format!("{side} is not a power of two >= 2")));
        }
        HadamardPlan::new(side.trailing_zeros(), order)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    pub fn order(&self) -> HadamardOrder {
        self.order
    }

    /// Natural-order index of the row placed at position `k`.
    pub fn natural_index(&self, k: usize) -> usize {
        self.perm[k]
    }

    /// The transform matrix this plan applies, rows in plan order.
    pub fn matrix(&self) -> Matrix {
        let natural = sylvester(self.stages);
        let n = self.size;
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n {
            data.extend_from_slice(natural.row(self.perm[k]));
        }
        Matrix { n, data }
    }

    fn permute(&self, natural: &[f64], out: &mut [f64]) {
        for (k, dst) in out.iter_mut().enumerate() {
            *dst = natural[self.perm[k]];
        }
    }

    fn unpermute(&self, ordered: &[f64], out: &mut [f64]) {
        for (k, &v) in ordered.iter().enumerate() {
            out[self.perm[k]] = v;
        }
    }
}

/// Sequency index -> natural index: bit-reversal of the Gray code.
fn sequency_to_natural(k: usize, bits: u32) -> usize {
    let gray = k ^ (k >> 1);
    gray.reverse_bits() >> (usize::BITS - bits)
}

fn sylvester(k: u32) -> Matrix {
    let mut n = 1;
    let mut data = vec![1.0];
    for _ in 0..k {
        let m = n * 2;
        let mut next = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let v = data[i * n + j];
                next[i * m + j] = v;
                next[i * m + j + n] = v;
                next[(i + n) * m + j] = v;
                next[(i + n) * m + j + n] = -v;
            }
        }
        data = next;
        n = m;
    }
    Matrix { n, data }
}

/// Sylvester Hadamard matrix `H_{2^k}`, built by `H_2n = [[H, H], [H, -H]]`.
pub fn hadamard_matrix(k: u32) -> Result<Matrix> {
    if k < 1 {
        return Err(Error::parameter("k", "Hadamard order must be >= 1"));
    }
    if k > 12 {
        return Err(Error::parameter("k", format!("2^{k} is too large for a dense matrix")));
    }
    Ok(sylvester(k))
}

/// In-place natural-order butterfly. `data.len()` must be a power of two.
///
/// Every one of the `log2(n)` stages pairs elements `half` apart and writes
/// back `(a + b, a - b)`; a length-`n` input costs exactly `n·log2(n)`
/// additions and subtractions.
pub fn fwht_in_place<T>(data: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(half * 2) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// `H · v` with rows in the plan's order.
pub fn fwht_1d(v: &[f64], plan: &HadamardPlan) -> Result<Vec<f64>> {
    if v.len() != plan.size {
        return Err(Error::dimension(plan.size, v.len()));
    }
    let mut work = v.to_vec();
    fwht_in_place(&mut work);
    let mut out = vec![0.0; plan.size];
    plan.permute(&work, &mut out);
    Ok(out)
}

/// `H^-1 · v = H^T · v / n`.
pub fn inverse_fwht_1d(v: &[f64], plan: &HadamardPlan) -> Result<Vec<f64>> {
    if v.len() != plan.size {
        return Err(Error::dimension(plan.size, v.len()));
    }
    let mut work = vec![0.0; plan.size];
    plan.unpermute(v, &mut work);
    fwht_in_place(&mut work);
    let scale = plan.size as f64;
    for x in &mut work {
        *x /= scale;
    }
    Ok(work)
}

/// Separable 2-D transform `H · f · H^T`: every row, then every column.
pub fn fwht_2d(f: &Patch, plan: &HadamardPlan) -> Result<CoefficientBlock> {
    if f.side != plan.size {
        return Err(Error::dimension(plan.size, f.side));
    }
    let coeffs = separable(&f.samples, plan, |line, out| {
        let mut work = line.to_vec();
        fwht_in_place(&mut work);
        plan.permute(&work, out);
    });
    CoefficientBlock::new(plan.size, coeffs)
}

/// `H^-1 · g · H^-T`, i.e. the same butterflies scaled by `1 / size²`.
pub fn inverse_fwht_2d(g: &CoefficientBlock, plan: &HadamardPlan) -> Result<Patch> {
    if g.side != plan.size {
        return Err(Error::dimension(plan.size, g.side));
    }
    let mut samples = separable(&g.coeffs, plan, |line, out| {
        plan.unpermute(line, out);
        fwht_in_place(out);
    });
    let scale = (plan.size * plan.size) as f64;
    for x in &mut samples {
        *x /= scale;
    }
    Patch::new(plan.size, samples)
}

fn separable(input: &[f64], plan: &HadamardPlan, mut line: impl FnMut(&[f64], &mut [f64])) -> Vec<f64> {
    let n = plan.size;
    let mut rows = vec![0.0; n * n];
    for r in 0..n {
        line(&input[r * n..(r + 1) * n], &mut rows[r * n..(r + 1) * n]);
    }
    let mut out = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    let mut res = vec![0.0; n];
    for c in 0..n {
        for r in 0..n {
            col[r] = rows[r * n + c];
        }
        line(&col, &mut res);
        for r in 0..n {
            out[r * n + c] = res[r];
        }
    }
    out
}

/// Sequency-ordered length-4 transform, the butterfly with its outputs
/// permuted from natural to sequency order.
#[inline]
pub(crate) fn fwht4_sequency(x: [f64; 4]) -> [f64; 4] {
    let (a, b) = (x[0] + x[1], x[0] - x[1]);
    let (c, d) = (x[2] + x[3], x[2] - x[3]);
    [a + c, a - c, b - d, b + d]
}

/// Column pass of the 4×4 transform. `rows[r]` holds the row transform of
/// sample row `r`; result `k` is coefficient row `k`.
#[inline]
pub(crate) fn fwht4_columns_sequency(rows: [f64x4; 4]) -> [f64x4; 4] {
    let (a, b) = (rows[0] + rows[1], rows[0] - rows[1]);
    let (c, d) = (rows[2] + rows[3], rows[2] - rows[3]);
    [a + c, a - c, b - d, b + d]
}

/// Sequency-ordered 4×4 transform on the stack.
#[cfg(test)]
pub(crate) fn fwht4x4_sequency(f: &[f64; 16]) -> [f64; 16] {
    let rows: [f64x4; 4] =
        std::array::from_fn(|r| f64x4::new(fwht4_sequency([f[r * 4], f[r * 4 + 1], f[r * 4 + 2], f[r * 4 + 3]])));
    let mut out = [0.0; 16];
    for (k, v) in fwht4_columns_sequency(rows).iter().enumerate() {
        out[k * 4..k * 4 + 4].copy_from_slice(&v.to_array());
    }
    out
}

/// Naive `m^T · f · m` by explicit triple loops.
///
/// With `m = W^-1` this is the Walsh sandwich; with `m = H^T` (rows of `H`
/// in plan order) it is the 2-D Hadamard transform.
pub fn direct_oracle(f: &Patch, m: &Matrix) -> Result<CoefficientBlock> {
    if f.side != m.n {
        return Err(Error::dimension(m.n, f.side));
    }
    let n = m.n;
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += f.samples[i * n + k] * m.data[k * n + j];
            }
            tmp[i * n + j] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += m.data[k * n + i] * tmp[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    CoefficientBlock::new(n, out)
}
