//! Seeded synthetic test images: a head-like phantom for registration
//! suites and uniform noise for metric checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GrayImage, RigidParams};

/// Content stays inside this fraction of the half-size, so rotations of
/// ±25° and shifts of ±25 px on a 256 image do not cut it off.
const CONTENT_RADIUS: f64 = 0.34;

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn new(cx: f64, cy: f64, rx: f64, ry: f64, angle_deg: f64) -> Self {
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        Ellipse { cx, cy, rx, ry, cos, sin }
    }

    /// Squared normalized radius; < 1 inside.
    fn rho2(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.rx).powi(2) + (v / self.ry).powi(2)
    }
}

/// A `size × size` head-like phantom: bright skull ring, textured tissue,
/// dark ventricles and a few seeded inclusions, on a black background.
/// Intensities span `0..=peak`.
pub fn phantom(size: usize, seed: u64, peak: u8) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (size as f64 - 1.0) / 2.0;
    let r = CONTENT_RADIUS * size as f64;
    let skull = Ellipse::new(c, c, r, 0.86 * r, 0.0);
    let brain = Ellipse::new(c, c, 0.9 * r, 0.77 * r, 0.0);
    let ventricles = [
        Ellipse::new(c - 0.16 * r, c - 0.05 * r, 0.1 * r, 0.28 * r, 18.0),
        Ellipse::new(c + 0.15 * r, c - 0.02 * r, 0.08 * r, 0.25 * r, -22.0),
    ];
    let inclusions: Vec<(Ellipse, f64)> = (0..6)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(0.2..0.6) * r;
            let e = Ellipse::new(
                c + dist * angle.cos(),
                c + 0.8 * dist * angle.sin(),
                rng.random_range(0.04..0.12) * r,
                rng.random_range(0.04..0.12) * r,
                rng.random_range(0.0..180.0),
            );
            (e, rng.random_range(-0.3..0.35))
        })
        .collect();
    // Low-frequency texture: a few random plane waves.
    let waves: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.04..0.16);
            (freq * dir.cos(), freq * dir.sin(), rng.random_range(0.0..6.3), rng.random_range(0.02..0.06))
        })
        .collect();

    let value = |x: f64, y: f64| -> f64 {
        if skull.rho2(x, y) >= 1.0 {
            return 0.0;
        }
        if brain.rho2(x, y) >= 1.0 {
            return 0.95;
        }
        let mut v = 0.55;
        for (wx, wy, phase, amp) in &waves {
            v += amp * (wx * x + wy * y + phase).sin();
        }
        for (e, dv) in &inclusions {
            if e.rho2(x, y) < 1.0 {
                v += dv;
            }
        }
        if ventricles.iter().any(|e| e.rho2(x, y) < 1.0) {
            v = 0.15;
        }
        v.clamp(0.05, 0.9)
    };
    GrayImage::from_fn(size, size, |x, y| (value(x as f64, y as f64) * peak as f64).round() as u8)
        .expect("phantom size must be nonzero")
}

/// Uniform i.i.d. intensities.
pub fn noise(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(width, height, |_, _| rng.random()).expect("noise size must be nonzero")
}

/// `count` rigid perturbations with whole-pixel shifts in
/// `[-max_shift, max_shift]` and whole-degree angles in
/// `[-max_angle, max_angle]`.
pub fn random_params(seed: u64, count: usize, max_shift: i64, max_angle: i64) -> Vec<RigidParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            RigidParams::new(
                rng.random_range(-max_shift..=max_shift) as f64,
                rng.random_range(-max_shift..=max_shift) as f64,
                rng.random_range(-max_angle..=max_angle) as f64,
            )
        })
        .collect()
}
