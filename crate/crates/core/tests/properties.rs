//! Randomized invariants over the mask algebra, shuffling, and losses.

use ndarray::Array3;
use proptest::prelude::*;

use outpaint_core::data::{local_crop, make_masked_input, shuffled_indices, Mask};
use outpaint_core::objectives::rec_loss;

fn geometry() -> impl Strategy<Value = (usize, usize)> {
    (1usize..24, 0usize..24).prop_map(|(half_band, inner)| (inner + 2 * half_band, inner))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_is_binary_with_exact_ones_count((outer, inner) in geometry()) {
        let m = Mask::band(outer, inner).unwrap();
        prop_assert!(m.data.iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert_eq!(m.ones_count(), outer * outer - inner * inner);
    }

    #[test]
    fn crop_is_idempotent_and_complements_masked_input(
        (outer, inner) in geometry(),
        seed in 0u64..1000,
    ) {
        let m = Mask::band(outer, inner).unwrap();
        let mut img = Array3::<f32>::zeros((3, outer, outer));
        for (i, v) in img.iter_mut().enumerate() {
            *v = ((i as u64).wrapping_mul(seed + 1) % 251) as f32 / 250.0;
        }
        let once = local_crop(&img, &m).unwrap();
        let twice = local_crop(&once, &m).unwrap();
        prop_assert_eq!(&once, &twice);

        let mi = make_masked_input(&img, &m).unwrap();
        for c in 0..3 {
            for y in 0..outer {
                for x in 0..outer {
                    let sum = mi[[c, y, x]] + once[[c, y, x]];
                    prop_assert!((sum - img[[c, y, x]]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn shuffle_is_always_a_permutation(n in 0usize..200, seed in any::<u64>(), epoch in 0u32..100) {
        let mut idx = shuffled_indices(n, seed, epoch);
        idx.sort_unstable();
        prop_assert_eq!(idx, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn rec_loss_is_a_metric_on_small_tensors(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
        c in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let arr = |v: &[f64]| Array3::from_shape_vec((3, 2, 2), v.to_vec()).unwrap();
        let (a, b, c) = (arr(&a), arr(&b), arr(&c));
        let ab = rec_loss(&a, &b).unwrap();
        let ba = rec_loss(&b, &a).unwrap();
        let ac = rec_loss(&a, &c).unwrap();
        let cb = rec_loss(&c, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(rec_loss(&a, &a).unwrap() == 0.0);
        prop_assert!(ab <= ac + cb + 1e-12);
    }
}
