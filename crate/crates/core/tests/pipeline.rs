use walshreg::synthetic::{noise, phantom};
use walshreg::{
    alignment_residual, correlation_coefficient, difference_image, encode_image, evaluate_pair, inverse_params,
    mutual_information, register, warp, warp_into, AngleRange, Backend, DigitOrdering, Execution, GrayImage,
    Interpolation, IntRange, OrderingTag, OverlapMask, RigidParams, SearchSpec, StructureCodeImage,
};

/// Codes of a 5×5 zero image with a single 100 at the centre (walsh3,
/// base 10, IA), frozen from a step-by-step 3×3 matrix-product oracle.
#[test]
fn bright_pixel_codes_match_the_frozen_oracle() {
    let img = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 100 } else { 0 }).unwrap();
    let ord = DigitOrdering::new(OrderingTag::IA, Backend::Walsh3);
    let codes = encode_image(&img, Backend::Walsh3, 10, &ord).unwrap();
    let expected = [
        [559555, 55555555, 50595505],
        [55555555, 55555555, 55555555],
        [5955055, 55555555, 55995559],
    ];
    for (dy, row) in expected.iter().enumerate() {
        for (dx, &code) in row.iter().enumerate() {
            assert_eq!(codes.get(dx + 1, dy + 1), Some(code), "({}, {})", dx + 1, dy + 1);
        }
    }
    for i in 0..5 {
        for (x, y) in [(i, 0), (i, 4), (0, i), (4, i)] {
            assert_eq!(codes.get(x, y), None);
        }
    }
}

fn spec(radius: i64, angle: f64) -> SearchSpec {
    SearchSpec {
        t_range: IntRange::symmetric(radius),
        s_range: IntRange::symmetric(radius),
        theta_range: AngleRange::symmetric(angle),
        ..SearchSpec::default()
    }
}

#[test]
fn integer_shift_is_undone_exactly() {
    let reference = phantom(128, 4, 200);
    let applied = RigidParams::new(5.0, -3.0, 0.0);
    let (moving, _) = warp(&reference, &applied, Interpolation::Bilinear);
    for backend in [Backend::Walsh3, Backend::Fwht4] {
        let r = register(&reference, &moving, &SearchSpec { backend, ..spec(10, 0.0) }).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.params, inverse_params(&applied));
        assert_eq!(r.params, RigidParams::new(-5.0, 3.0, 0.0));
        assert_eq!(alignment_residual(&applied, &r.params), (0.0, 0.0));
    }
}

#[test]
fn first_table_triple_is_recovered_within_a_pixel_and_a_degree() {
    let reference = phantom(256, 1, 200);
    let applied = RigidParams::new(4.0, -10.0, 9.0);
    let (moving, _) = warp(&reference, &applied, Interpolation::Bilinear);
    let r = register(&reference, &moving, &spec(15, 15.0)).unwrap();
    assert!(r.is_ok());
    let (px, deg) = alignment_residual(&applied, &r.params);
    assert!(px <= 1.0 && deg <= 1.0, "{:?} leaves {px} px, {deg} deg", r.params);
}

#[test]
fn registration_removes_almost_all_difference_energy() {
    let reference = phantom(128, 9, 200);
    let applied = RigidParams::new(-6.0, 4.0, 0.0);
    let (moving, _) = warp(&reference, &applied, Interpolation::Nearest);
    let energy = |a: &GrayImage, b: &GrayImage, mask: &OverlapMask| -> f64 {
        difference_image(a, b, mask).unwrap().pixels().iter().map(|&v| (v as f64).powi(2)).sum()
    };
    let full = OverlapMask::full(128, 128);
    let before = energy(&reference, &moving, &full);
    let r = register(&reference, &moving, &spec(8, 0.0)).unwrap();
    let (registered, mask) = warp_into(&moving, &r.params, 128, 128, Interpolation::Nearest);
    let after = energy(&reference, &registered, &mask);
    assert!(before > 0.0);
    assert!(after < 0.01 * before, "{after} vs {before}");
}

#[test]
fn self_registration_is_perfect() {
    let reference = phantom(96, 2, 220);
    for backend in [Backend::Walsh3, Backend::Fwht4] {
        let r = register(&reference, &reference, &SearchSpec { backend, ..spec(4, 3.0) }).unwrap();
        assert_eq!(r.params, RigidParams::identity());
        assert_eq!(r.score, Some(1.0));
        assert!(r.cc_after.unwrap() >= 0.99);
    }
}

#[test]
fn registration_ignores_worker_count() {
    let reference = phantom(96, 5, 200);
    let (moving, _) = warp(&reference, &RigidParams::new(3.0, 2.0, -4.0), Interpolation::Bilinear);
    let results: Vec<RigidParams> = [Execution::Sequential, Execution::Parallel { workers: 3 }]
        .into_iter()
        .map(|execution| register(&reference, &moving, &SearchSpec { execution, ..spec(5, 6.0) }).unwrap().params)
        .collect();
    assert_eq!(results[0], results[1]);
}

#[test]
fn negated_codes_correlate_to_minus_one() {
    let img = phantom(32, 3, 200);
    let ord = DigitOrdering::new(OrderingTag::RowMajor, Backend::Fwht4);
    let s1 = encode_image(&img, Backend::Fwht4, 5, &ord).unwrap();
    let max = s1.codes().iter().copied().max().unwrap();
    let flipped: Vec<u64> = s1.codes().iter().map(|&c| max - c).collect();
    let s2 = StructureCodeImage::from_parts(32, 32, flipped, s1.valid_mask().to_vec(), 5, 15).unwrap();
    let cc = correlation_coefficient(&s1, &s2, &RigidParams::identity()).unwrap();
    assert!((cc + 1.0).abs() <= 1e-12, "{cc}");
}

/// Hand-evaluated double sums on a 4×4 code image against a shifted copy.
#[test]
fn small_correlation_matches_the_direct_formula() {
    let codes1: Vec<u64> = vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7, 9, 3];
    let codes2: Vec<u64> = vec![2, 7, 1, 8, 2, 8, 1, 8, 2, 8, 4, 5, 9, 0, 4, 5];
    let all = vec![true; 16];
    let s1 = StructureCodeImage::from_parts(4, 4, codes1.clone(), all.clone(), 10, 1).unwrap();
    let s2 = StructureCodeImage::from_parts(4, 4, codes2.clone(), all, 10, 1).unwrap();
    // t = 1: reference pixel (x, y) reads moving pixel (x - 1, y).
    let mut pairs = Vec::new();
    for y in 0..4 {
        for x in 1..4 {
            pairs.push((codes1[y * 4 + x] as f64, codes2[y * 4 + x - 1] as f64));
        }
    }
    let n = pairs.len() as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum();
    let va: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
    let vb: f64 = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum();
    let expected = cov / (va * vb).sqrt();
    let cc = correlation_coefficient(&s1, &s2, &RigidParams::new(1.0, 0.0, 0.0)).unwrap();
    assert!((cc - expected).abs() <= 1e-12, "{cc} vs {expected}");
}

#[test]
fn independent_noise_has_little_mi_and_correlation() {
    let (a, b) = (noise(400, 250, 1), noise(400, 250, 2));
    let mask = OverlapMask::full(400, 250);
    let mi = mutual_information(&a, &b, &mask, 16).unwrap();
    assert!((0.0..=0.05).contains(&mi), "{mi}");
    let (_, cc) = evaluate_pair(&a, &b, &mask).unwrap();
    assert!(cc.abs() <= 0.02, "{cc}");
}
