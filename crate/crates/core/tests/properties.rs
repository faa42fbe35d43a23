//! Randomized invariants over the kernel layer.

use proptest::prelude::*;

use corrupt_bench_core::corrupt::{apply_corruption, CorruptionKind, SeverityTable};
use corrupt_bench_core::image::{convolve, gaussian_kernel, ImageBuf, Rng64};

// Lower bound 40: the largest severity-3 kernel (elastic's smoothing
// blur, 37 taps) must fit inside the image.
fn arb_image(max: usize) -> impl Strategy<Value = ImageBuf> {
    (40usize..=max, 40usize..=max, any::<u64>()).prop_map(|(w, h, seed)| {
        let mut rng = Rng64::new(seed);
        ImageBuf::from_fn(w, h, |_, _, _| rng.next_f64()).unwrap()
    })
}

proptest! {
    // failure_persistence off: integration tests have no lib.rs for
    // proptest's source-parallel regression files
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(24)
    })]

    /// Every kernel keeps pixels inside the unit range.
    #[test]
    fn outputs_stay_in_unit_range(img in arb_image(64), seed in any::<u64>(), severity in 1u8..=3) {
        let table = SeverityTable::v1();
        for kind in CorruptionKind::ALL {
            let out = apply_corruption(&img, kind, severity, seed, &table).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
        }
    }

    /// Corruption is a pure function of (image, kind, severity, seed).
    #[test]
    fn corruption_is_deterministic(img in arb_image(48), seed in any::<u64>()) {
        let table = SeverityTable::v1();
        for kind in CorruptionKind::ALL {
            let a = apply_corruption(&img, kind, 2, seed, &table).unwrap();
            let b = apply_corruption(&img, kind, 2, seed, &table).unwrap();
            prop_assert_eq!(a, b, "{}", kind);
        }
    }

    /// Convolution is linear: K(a*x + b*y) = a*K(x) + b*K(y), checked
    /// without the exit clamp by keeping inputs in a safe interior
    /// range.
    #[test]
    fn convolution_is_linear(seed in any::<u64>(), alpha in 0.1f64..0.9) {
        let mut rng = Rng64::new(seed);
        let x = ImageBuf::from_fn(16, 16, |_, _, _| rng.next_f64() * 0.4 + 0.1).unwrap();
        let y = ImageBuf::from_fn(16, 16, |_, _, _| rng.next_f64() * 0.4 + 0.1).unwrap();
        let beta = 1.0 - alpha;
        let mixed = ImageBuf::from_fn(16, 16, |px, py, c| {
            alpha * x.get(px, py, c) + beta * y.get(px, py, c)
        }).unwrap();
        let k = gaussian_kernel(1.2).unwrap();
        let kx = convolve(&x, &k).unwrap();
        let ky = convolve(&y, &k).unwrap();
        let km = convolve(&mixed, &k).unwrap();
        for i in 0..km.data().len() {
            let expect = alpha * kx.data()[i] + beta * ky.data()[i];
            prop_assert!((km.data()[i] - expect).abs() < 1e-5);
        }
    }
}
