//! Property tests for the structural invariants.

use faithbench_core::attribution::Explanation;
use faithbench_core::baseline::{apply, build_context, BaselineKind, DatasetStats};
use faithbench_core::fft::{irfft2, rfft2};
use faithbench_core::stats::kendall_tau;
use faithbench_core::tensor::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_round_trip_identity(
        h in 1usize..12,
        w in 1usize..12,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor::new(vec![h, w], (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let back = irfft2(&rfft2(&img).unwrap());
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ordering_is_a_tie_broken_permutation(scores in prop::collection::vec(-3i32..=3, 1..12)) {
        // Coarse integer scores force frequent ties.
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let e = Explanation::new(scores.clone()).unwrap();
        let u = e.ordering();
        let mut seen = vec![false; scores.len()];
        for &i in u {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        for pair in u.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            prop_assert!(
                scores[a] > scores[b] || (scores[a] == scores[b] && a < b),
                "tie-break violated at {a},{b}"
            );
        }
    }

    #[test]
    fn baseline_apply_is_idempotent_and_nested(
        seed in 0u64..500,
        kind_pick in 0usize..11,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor::new(vec![4, 4], (0..16).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let kind = BaselineKind::from_name(BaselineKind::STATIC_NAMES[kind_pick], None).unwrap();
        let stats = DatasetStats { mean: 0.4, median: 0.35 };
        let ctx = build_context(&kind, &img, &stats, seed).unwrap();
        let subset = [3usize, 7, 8];
        let once = apply(&img, &subset, &ctx).unwrap();
        let twice = apply(&once, &subset, &ctx).unwrap();
        prop_assert_eq!(once.data(), twice.data());

        // Nested prefixes agree on previously replaced indices.
        let one = apply(&img, &subset[..1], &ctx).unwrap();
        let two = apply(&img, &subset[..2], &ctx).unwrap();
        prop_assert_eq!(one.data()[subset[0]], two.data()[subset[0]]);
    }

    #[test]
    fn kendall_tau_is_symmetric_and_bounded(
        a in prop::collection::vec(-10.0f64..10.0, 2..10),
        seed in 0u64..100,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..a.len()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let t1 = kendall_tau(&a, &b).unwrap();
        let t2 = kendall_tau(&b, &a).unwrap();
        prop_assert_eq!(t1, t2);
        prop_assert!((-1.0..=1.0).contains(&t1));
        prop_assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
    }
}
