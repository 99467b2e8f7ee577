use proptest::prelude::*;

use walshreg::{
    correlation_coefficient, decode_code, encode_image, encode_image_with, entropy, joint_histogram,
    mutual_information, warp, Backend, DigitOrdering, Execution, GrayImage, Interpolation, OrderingTag, OverlapMask,
    RigidParams, TransformPath,
};

fn image(max_side: usize, max_value: u8) -> impl Strategy<Value = GrayImage> {
    (4..=max_side, 4..=max_side).prop_flat_map(move |(w, h)| {
        proptest::collection::vec(0..=max_value, w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn image_pair(max_side: usize) -> impl Strategy<Value = (GrayImage, GrayImage)> {
    (4..=max_side, 4..=max_side).prop_flat_map(|(w, h)| {
        let one = move || proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap());
        (one(), one())
    })
}

fn backend() -> impl Strategy<Value = Backend> {
    prop_oneof![Just(Backend::Walsh3), Just(Backend::Fwht4)]
}

fn ordering(b: Backend) -> DigitOrdering {
    DigitOrdering::new(b.default_ordering(), b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mi_is_symmetric_nonnegative_and_bounded_by_entropy((a, b) in image_pair(24), bins in 2usize..=256) {
        let mask = OverlapMask::full(a.width(), a.height());
        let ab = mutual_information(&a, &b, &mask, bins).unwrap();
        let ba = mutual_information(&b, &a, &mask, bins).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab >= 0.0);
        let ha = entropy(&a, &mask, bins).unwrap();
        prop_assert!(ab <= ha + 1e-9);
        let aa = mutual_information(&a, &a, &mask, bins).unwrap();
        prop_assert!((aa - ha).abs() <= 1e-9);
    }

    #[test]
    fn histogram_counts_the_overlap((a, b) in image_pair(20), keep in proptest::collection::vec(any::<bool>(), 400)) {
        let n = a.width() * a.height();
        let mask = OverlapMask::from_vec(a.width(), a.height(), keep[..n].to_vec());
        let h = joint_histogram(&a, &b, &mask, 32).unwrap();
        prop_assert_eq!(h.total(), mask.count() as u64);
        prop_assert_eq!(h.marginal_x().iter().sum::<u64>(), mask.count() as u64);
    }

    #[test]
    fn cc_is_bounded_and_self_cc_is_one(
        (a, b) in image_pair(20),
        backend in backend(),
        t in -3i64..=3, s in -3i64..=3, theta in -30.0f64..30.0,
    ) {
        let ord = ordering(backend);
        let (ca, cb) = (encode_image(&a, backend, 5, &ord).unwrap(), encode_image(&b, backend, 5, &ord).unwrap());
        if let Ok(cc) = correlation_coefficient(&ca, &cb, &RigidParams::new(t as f64, s as f64, theta)) {
            prop_assert!((-1.0..=1.0).contains(&cc), "cc = {}", cc);
        }
        if let Ok(cc) = correlation_coefficient(&ca, &ca, &RigidParams::identity()) {
            prop_assert!((cc - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn codes_ignore_uniform_illumination(img in image(16, 85), c in 2u8..=3, base in prop_oneof![Just(2u32), Just(5), Just(10)], backend in backend()) {
        let ord = ordering(backend);
        let bright = img.map(|v| v * c);
        prop_assert_eq!(
            encode_image(&img, backend, base, &ord).unwrap(),
            encode_image(&bright, backend, base, &ord).unwrap()
        );
    }

    #[test]
    fn codes_stay_below_the_digit_bound(img in image(12, 255), base in 2u32..=10, backend in backend()) {
        let codes = encode_image(&img, backend, base, &ordering(backend)).unwrap();
        let bound = (base as u64).pow(backend.digit_count() as u32);
        prop_assert!(codes.codes().iter().all(|&c| c < bound));
    }

    #[test]
    fn orderings_only_relabel_digits(img in image(10, 255), base in 2u32..=10, backend in backend()) {
        let ia = DigitOrdering::new(OrderingTag::IA, backend);
        let iia = DigitOrdering::new(OrderingTag::IIA, backend);
        let a = encode_image(&img, backend, base, &ia).unwrap();
        let b = encode_image(&img, backend, base, &iia).unwrap();
        let n = ia.len();
        for (&ca, &cb) in a.codes().iter().zip(b.codes()) {
            let (da, db) = (decode_code(ca, base, n).unwrap(), decode_code(cb, base, n).unwrap());
            for (k, &coef) in ia.permutation().iter().enumerate() {
                let k2 = iia.permutation().iter().position(|&c| c == coef).unwrap();
                prop_assert_eq!(da[k], db[k2]);
            }
        }
    }

    #[test]
    fn encoding_ignores_thread_count_and_path(img in image(20, 255), backend in backend()) {
        let ord = ordering(backend);
        let seq = encode_image_with(&img, backend, 10, &ord, TransformPath::Fast, Execution::Sequential).unwrap();
        let par = encode_image_with(&img, backend, 10, &ord, TransformPath::Fast, Execution::Parallel { workers: 4 }).unwrap();
        let oracle = encode_image_with(&img, backend, 10, &ord, TransformPath::DirectOracle, Execution::Sequential).unwrap();
        prop_assert_eq!(&seq, &par);
        prop_assert_eq!(&seq, &oracle);
    }

    #[test]
    fn shift_and_back_restores_the_overlap(img in image(16, 255), t in -5i64..=5, s in -5i64..=5) {
        let p = RigidParams::new(t as f64, s as f64, 0.0);
        let back = RigidParams::new(-t as f64, -s as f64, 0.0);
        let (moved, m1) = warp(&img, &p, Interpolation::Nearest);
        let (restored, m2) = warp(&moved, &back, Interpolation::Nearest);
        for y in 0..img.height() {
            for x in 0..img.width() {
                // restored(x) samples moved(x + T), which samples img(x).
                let (mx, my) = (x as i64 + t, y as i64 + s);
                let inside_first = m2.get(x, y) && m1.get(mx as usize, my as usize);
                if inside_first {
                    prop_assert_eq!(restored.get(x, y), img.get(x, y));
                }
            }
        }
    }

    #[test]
    fn identity_warp_is_exact(img in image(16, 255), interp in prop_oneof![Just(Interpolation::Nearest), Just(Interpolation::Bilinear)]) {
        let (out, mask) = warp(&img, &RigidParams::identity(), interp);
        prop_assert_eq!(&out, &img);
        prop_assert_eq!(mask.count(), img.width() * img.height());
    }
}
