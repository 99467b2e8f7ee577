//! Similarity measures over the overlap of two images: mutual information
//! from a joint histogram (in bits) and the Pearson correlation coefficient.

use crate::error::{Error, MetricError, Result};
use crate::geometry::{nearest_shifted, GrayImage, RigidMap, RigidParams};
use crate::structure_codes::StructureCodeImage;

/// Pixels that take part in a comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
}

impl OverlapMask {
    pub fn full(width: usize, height: usize) -> Self {
        OverlapMask {
            width,
            height,
            inside: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, inside: Vec<bool>) -> Self {
        assert_eq!(inside.len(), width * height, "mask length must match its dimensions");
        OverlapMask { width, height, inside }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&m| m).count()
    }

    pub fn intersect(&self, other: &OverlapMask) -> Result<OverlapMask> {
        self.check_shape(other.width, other.height)?;
        Ok(OverlapMask {
            width: self.width,
            height: self.height,
            inside: self.inside.iter().zip(&other.inside).map(|(&a, &b)| a && b).collect(),
        })
    }

    fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dimension(
                format!("{}x{}", width, height),
                format!("{}x{} mask", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Joint counts of binned values `(x, y)` with both marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    marginal_x: Vec<u64>,
    marginal_y: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn new(bins: usize) -> Result<Self> {
        check_bins(bins)?;
        Ok(JointHistogram {
            bins,
            counts: vec![0; bins * bins],
            marginal_x: vec![0; bins],
            marginal_y: vec![0; bins],
            total: 0,
        })
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize) {
        self.counts[x * self.bins + y] += 1;
        self.marginal_x[x] += 1;
        self.marginal_y[y] += 1;
        self.total += 1;
    }

    /// Adds the counts of another histogram with the same bin count.
    pub fn merge(&mut self, other: &JointHistogram) -> Result<()> {
        if other.bins != self.bins {
            return Err(Error::dimension(self.bins, other.bins));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.marginal_x.iter_mut().zip(&other.marginal_x) {
            *a += b;
        }
        for (a, b) in self.marginal_y.iter_mut().zip(&other.marginal_y) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[x * self.bins + y]
    }

    pub fn marginal_x(&self) -> &[u64] {
        &self.marginal_x
    }

    pub fn marginal_y(&self) -> &[u64] {
        &self.marginal_y
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `Σ p(x,y) log2(p(x,y) / (p1(x) p2(y)))`, skipping empty cells.
    pub fn mutual_information(&self) -> std::result::Result<f64, MetricError> {
        if self.total == 0 {
            return Err(MetricError::EmptyOverlap);
        }
        let n = self.total as f64;
        let mut mi = 0.0;
        for x in 0..self.bins {
            let px = self.marginal_x[x];
            if px == 0 {
                continue;
            }
            for y in 0..self.bins {
                let c = self.counts[x * self.bins + y];
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                mi += c / n * (c * n / (px as f64 * self.marginal_y[y] as f64)).log2();
            }
        }
        Ok(mi.max(0.0))
    }

    /// Shannon entropy of the x marginal, in bits.
    pub fn entropy_x(&self) -> std::result::Result<f64, MetricError> {
        entropy_of(&self.marginal_x, self.total)
    }
}

fn entropy_of(counts: &[u64], total: u64) -> std::result::Result<f64, MetricError> {
    if total == 0 {
        return Err(MetricError::EmptyOverlap);
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::parameter("bins", format!("need at least 2 bins, got {bins}")));
    }
    Ok(())
}

/// Fixed-range binning of 8-bit intensities; 256 bins is the identity.
#[inline]
fn intensity_bin(v: u8, bins: usize) -> usize {
    (v as usize * bins) >> 8
}

fn check_pair(a: &GrayImage, b: &GrayImage, mask: &OverlapMask) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::dimension(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    mask.check_shape(a.width(), a.height())
}

pub fn joint_histogram(a: &GrayImage, b: &GrayImage, mask: &OverlapMask, bins: usize) -> Result<JointHistogram> {
    check_pair(a, b, mask)?;
    let mut hist = JointHistogram::new(bins)?;
    for ((&u, &v), &m) in a.pixels().iter().zip(b.pixels()).zip(mask.inside()) {
        if m {
            hist.add(intensity_bin(u, bins), intensity_bin(v, bins));
        }
    }
    Ok(hist)
}

/// Mutual information of two intensity images over `mask`, in bits.
pub fn mutual_information(a: &GrayImage, b: &GrayImage, mask: &OverlapMask, bins: usize) -> Result<f64> {
    Ok(joint_histogram(a, b, mask, bins)?.mutual_information()?)
}

/// Entropy of the binned intensities of `a` inside `mask`, in bits.
pub fn entropy(a: &GrayImage, mask: &OverlapMask, bins: usize) -> Result<f64> {
    check_bins(bins)?;
    mask.check_shape(a.width(), a.height())?;
    let mut counts = vec![0u64; bins];
    let mut total = 0;
    for (&v, &m) in a.pixels().iter().zip(mask.inside()) {
        if m {
            counts[intensity_bin(v, bins)] += 1;
            total += 1;
        }
    }
    Ok(entropy_of(&counts, total)?)
}

/// Mutual information of two structure-code images, each binned linearly
/// over its own value range inside the overlap. Pixels must be valid in both
/// code images and inside `mask`.
pub fn mutual_information_codes(
    a: &StructureCodeImage,
    b: &StructureCodeImage,
    mask: &OverlapMask,
    bins: usize,
) -> Result<f64> {
    check_bins(bins)?;
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::dimension(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    mask.check_shape(a.width(), a.height())?;
    let keep: Vec<usize> = (0..a.width() * a.height())
        .filter(|&i| mask.inside[i] && a.valid_mask()[i] && b.valid_mask()[i])
        .collect();
    let range = |codes: &[u64]| {
        let lo = keep.iter().map(|&i| codes[i]).min().unwrap_or(0);
        let hi = keep.iter().map(|&i| codes[i]).max().unwrap_or(0);
        (lo, hi)
    };
    let bin_of = |v: u64, (lo, hi): (u64, u64)| -> usize {
        if hi == lo {
            0
        } else {
            (((v - lo) as f64 / (hi - lo) as f64 * bins as f64) as usize).min(bins - 1)
        }
    };
    let (ra, rb) = (range(a.codes()), range(b.codes()));
    let mut hist = JointHistogram::new(bins)?;
    for &i in &keep {
        hist.add(bin_of(a.codes()[i], ra), bin_of(b.codes()[i], rb));
    }
    Ok(hist.mutual_information()?)
}

/// Running sums for a Pearson correlation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: f64,
    pub sa: f64,
    pub sb: f64,
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1.0;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    pub fn correlation(&self) -> std::result::Result<f64, MetricError> {
        if self.n < 1.0 {
            return Err(MetricError::EmptyOverlap);
        }
        let cov = self.sab - self.sa * self.sb / self.n;
        let va = self.saa - self.sa * self.sa / self.n;
        let vb = self.sbb - self.sb * self.sb / self.n;
        if !(va > ZERO_VARIANCE * self.saa) || !(vb > ZERO_VARIANCE * self.sbb) {
            return Err(MetricError::ZeroVariance);
        }
        Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Variance below this fraction of the raw second moment is treated as
/// zero (it is rounding noise).
const ZERO_VARIANCE: f64 = 1e-12;

/// Pearson correlation of two intensity images over `mask`.
pub fn intensity_correlation(a: &GrayImage, b: &GrayImage, mask: &OverlapMask) -> Result<f64> {
    check_pair(a, b, mask)?;
    let mut m = Moments::default();
    for ((&u, &v), &inside) in a.pixels().iter().zip(b.pixels()).zip(mask.inside()) {
        if inside {
            m.push(u as f64, v as f64);
        }
    }
    Ok(m.correlation()?)
}

/// Correlation of reference structure values `s1(x, y)` with moving values
/// `s2` sampled (nearest neighbour) at the rigidly mapped position of each
/// reference pixel. Only pixels valid in both code images count.
pub fn correlation_coefficient(
    s1: &StructureCodeImage,
    s2: &StructureCodeImage,
    params: &RigidParams,
) -> Result<f64> {
    let a = s1.centered_values();
    let b = s2.centered_values();
    Ok(correlation_of_values(s1, &a, s2, &b, params)?)
}

/// [`correlation_coefficient`] on explicit per-pixel values laid out like
/// `s1` and `s2`; validity still comes from the code images.
pub(crate) fn correlation_of_values(
    s1: &StructureCodeImage,
    a: &[f64],
    s2: &StructureCodeImage,
    b: &[f64],
    params: &RigidParams,
) -> std::result::Result<f64, MetricError> {
    let map = RigidMap::new(params, (s1.width(), s1.height()), (s2.width(), s2.height()));
    let (w2, h2) = (s2.width() as f64, s2.height() as f64);
    let mut m = Moments::default();
    for y in 0..s1.height() {
        for x in 0..s1.width() {
            let i = y * s1.width() + x;
            if !s1.valid_mask()[i] {
                continue;
            }
            let (rx, ry) = map.rotate(x as f64, y as f64);
            let (nx, ny) = (nearest_shifted(rx, params.t), nearest_shifted(ry, params.s));
            if nx < 0.0 || ny < 0.0 || nx >= w2 || ny >= h2 {
                continue;
            }
            let j = ny as usize * s2.width() + nx as usize;
            if s2.valid_mask()[j] {
                m.push(a[i], b[j]);
            }
        }
    }
    m.correlation()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
    }

    #[test]
    fn mi_of_eight_equiprobable_levels_is_three_bits() {
        let img = GrayImage::from_fn(64, 8, |x, _| (x % 8) as u8 * 30).unwrap();
        let mask = OverlapMask::full(64, 8);
        let mi = mutual_information(&img, &img, &mask, 256).unwrap();
        assert!((mi - 3.0).abs() < 1e-12, "{mi}");
    }

    #[test]
    fn constant_image_has_zero_mi_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = GrayImage::filled(32, 32, 77).unwrap();
        let n = noise(&mut rng, 32, 32);
        let mask = OverlapMask::full(32, 32);
        assert_eq!(mutual_information(&c, &n, &mask, 256).unwrap(), 0.0);
        assert_eq!(entropy(&c, &mask, 256).unwrap(), 0.0);
    }

    #[test]
    fn two_levels_is_one_bit() {
        let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 0 } else { 255 }).unwrap();
        let h = entropy(&img, &OverlapMask::full(10, 10), 16).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_overlap_is_a_metric_error() {
        let img = GrayImage::filled(4, 4, 1).unwrap();
        let none = OverlapMask::from_vec(4, 4, vec![false; 16]);
        assert!(matches!(
            mutual_information(&img, &img, &none, 16),
            Err(Error::Metric(MetricError::EmptyOverlap))
        ));
        assert!(matches!(
            entropy(&img, &none, 16),
            Err(Error::Metric(MetricError::EmptyOverlap))
        ));
        assert!(matches!(mutual_information(&img, &img, &none, 1), Err(Error::Parameter { .. })));
    }

    #[test]
    fn mi_matches_entropy_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = noise(&mut rng, 40, 30);
            let b = a.map(|v| v / 3 + (v % 7));
            let mask = OverlapMask::full(40, 30);
            for bins in [2, 16, 256] {
                let h = entropy(&a, &mask, bins).unwrap();
                let mi_aa = mutual_information(&a, &a, &mask, bins).unwrap();
                assert!((mi_aa - h).abs() <= 1e-12);
                let ab = mutual_information(&a, &b, &mask, bins).unwrap();
                let ba = mutual_information(&b, &a, &mask, bins).unwrap();
                assert!((ab - ba).abs() <= 1e-12);
                assert!(ab >= 0.0);
            }
        }
    }

    #[test]
    fn sharded_histograms_merge_to_the_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = noise(&mut rng, 30, 20);
        let b = noise(&mut rng, 30, 20);
        let full = joint_histogram(&a, &b, &OverlapMask::full(30, 20), 32).unwrap();
        assert_eq!(full.total(), 600);
        let top = OverlapMask::from_vec(30, 20, (0..600).map(|i| i < 290).collect());
        let bottom = OverlapMask::from_vec(30, 20, (0..600).map(|i| i >= 290).collect());
        let mut merged = joint_histogram(&a, &b, &top, 32).unwrap();
        merged.merge(&joint_histogram(&a, &b, &bottom, 32).unwrap()).unwrap();
        assert_eq!(merged, full);
        assert_eq!(merged.marginal_x().iter().sum::<u64>(), merged.total());
    }

    #[test]
    fn intensity_correlation_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = noise(&mut rng, 20, 20);
        let neg = a.map(|v| 255 - v);
        let mask = OverlapMask::full(20, 20);
        assert_eq!(intensity_correlation(&a, &a, &mask).unwrap(), 1.0);
        assert!((intensity_correlation(&a, &neg, &mask).unwrap() + 1.0).abs() < 1e-12);
        let c = GrayImage::filled(20, 20, 4).unwrap();
        assert!(matches!(
            intensity_correlation(&a, &c, &mask),
            Err(Error::Metric(MetricError::ZeroVariance))
        ));
    }
}
