//! Descriptor similarity from +/-1 responses equals K - 2 * Hamming, for
//! codes produced by the real extractors.

use bindesc::bad::{self, weak_response};
use bindesc::bad_train::random_model;
use bindesc::hashsift::random_projection_model;
use bindesc::Patch;
use proptest::prelude::*;

fn patch_from(seed: &[u8]) -> Patch<f64> {
    Patch::from_fn(|x, y| f64::from(seed[(x * 7 + y * 13) % seed.len()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bad_similarity_identity(
        a in prop::collection::vec(any::<u8>(), 1..64),
        b in prop::collection::vec(any::<u8>(), 1..64),
        bits in 1usize..300,
        seed in any::<u64>(),
    ) {
        let m = random_model(bits, seed).unwrap();
        let (x, y) = (patch_from(&a), patch_from(&b));
        let dot: i64 = m
            .features()
            .iter()
            .map(|f| i64::from(weak_response(&x, f).unwrap() * weak_response(&y, f).unwrap()))
            .sum();
        let h = bad::describe(&x, &m).hamming(&bad::describe(&y, &m)).unwrap();
        prop_assert_eq!(dot, bits as i64 - 2 * i64::from(h));
    }

    #[test]
    fn hashsift_similarity_identity(
        a in prop::collection::vec(any::<u8>(), 1..64),
        b in prop::collection::vec(any::<u8>(), 1..64),
        bits in 1usize..200,
        seed in any::<u64>(),
    ) {
        let m = random_projection_model::<f64>(bits, 0.25, seed % 2 == 0, seed).unwrap();
        let (x, y) = (patch_from(&a), patch_from(&b));
        let sign = |p: &Patch<f64>| -> Vec<i64> {
            m.matrix.project(&m.features(p)).iter().map(|z| if *z >= 0.0 { 1 } else { -1 }).collect()
        };
        let dot: i64 = sign(&x).iter().zip(sign(&y)).map(|(u, v)| u * v).sum();
        let h = m.describe(&x).hamming(&m.describe(&y)).unwrap();
        prop_assert_eq!(dot, bits as i64 - 2 * i64::from(h));
    }
}
