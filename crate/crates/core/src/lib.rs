//! Rigid registration of gray images through per-pixel structure codes.
//!
//! Each pixel's neighborhood is transformed (3×3 Walsh or 4×4 fast
//! Walsh–Hadamard), the AC coefficients are normalized by the DC term and
//! quantized to base-N digits, and the digits form one integer code per
//! pixel. Registration then maximizes the correlation of the two code
//! images over a grid of translations and rotations.
//!
//! ```
//! use walshreg::{register, warp, GrayImage, Interpolation, RigidParams, SearchSpec, IntRange, AngleRange};
//!
//! let img = GrayImage::from_fn(48, 48, |x, y| ((x * 7) ^ (y * 5)) as u8).unwrap();
//! let (moving, _) = warp(&img, &RigidParams::new(2.0, -1.0, 0.0), Interpolation::Nearest);
//! let spec = SearchSpec {
//!     t_range: IntRange::symmetric(3),
//!     s_range: IntRange::symmetric(3),
//!     theta_range: AngleRange::symmetric(0.0),
//!     ..SearchSpec::default()
//! };
//! let result = register(&img, &moving, &spec).unwrap();
//! assert_eq!(result.params, RigidParams::new(-2.0, 1.0, 0.0));
//! ```

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod registration;
pub mod structure_codes;
pub mod synthetic;
pub mod transforms;

pub use error::{Error, MetricError, Result};
pub use geometry::{difference_image, mm_to_px, warp, warp_into, GrayImage, Interpolation, RigidParams};
pub use metrics::{
    correlation_coefficient, entropy, intensity_correlation, joint_histogram, mutual_information,
    mutual_information_codes, JointHistogram, OverlapMask,
};
pub use parallel::Execution;
pub use registration::{
    alignment_residual, evaluate_pair, inverse_params, pyramid_search, register, AngleRange, ErrorKind, IntRange,
    MiSource, RegistrationResult, SearchSpec, Status,
};
pub use structure_codes::{
    decode_code, encode_code, encode_image, encode_image_with, normalize, quantize_digit, Backend, DigitOrdering,
    NormalizedCoefficients, OrderingTag, StructureCodeImage, TransformPath,
};
pub use transforms::{
    direct_oracle, fwht_1d, fwht_2d, hadamard_matrix, inverse_fwht_1d, inverse_fwht_2d, walsh3_basis, walsh3_forward,
    walsh3_inverse, CoefficientBlock, HadamardOrder, HadamardPlan, Patch,
};
