use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trecim::adc::*;

fn refs(bits: u8) -> AdcConfig {
    let levels: Vec<f64> = (0..1u32 << bits).map(|k| k as f64).collect();
    design_references(&levels, bits).unwrap()
}

#[test]
fn three_bit_has_seven_comparators() {
    let a = refs(3);
    assert_eq!(a.references.len(), 7);
    assert_eq!(comparator_count(3), 7);
    assert_eq!(comparator_count(5), 31);
    assert_eq!(a.references, vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
    assert_eq!(a.full_scale_code(), 7);
}

#[test]
fn ties_are_not_above() {
    let a = refs(3);
    assert_eq!(flash_convert(0.5, &a), 0);
    assert_eq!(flash_convert(0.5 + 1e-12, &a), 1);
    assert_eq!(flash_convert(6.5, &a), 6);
    assert_eq!(flash_convert(100.0, &a), 7);
    assert_eq!(flash_convert(-1.0, &a), 0);
}

#[test]
fn bounds_must_be_disjoint() {
    assert!(design_references_from_bounds(&[(0.0, 1.0), (0.5, 2.0)], 1).is_err());
    let a = design_references_from_bounds(&[(0.0, 1.0), (2.0, 3.0), (4.0, 4.0)], 2).unwrap();
    assert_eq!(a.references[..2], [1.5, 3.5]);
}

#[test]
fn invalid_tables_rejected() {
    assert!(AdcConfig::new(3, vec![0.0, 1.0]).is_err());
    assert!(AdcConfig::new(2, vec![0.0, 2.0, 1.0]).is_err());
    AdcConfig::new(2, vec![0.0, 1.0, 2.0]).unwrap();
}

#[test]
fn zero_offset_noisy_equals_ideal() {
    let a = refs(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..80 {
        let i = n as f64 * 0.1;
        assert_eq!(flash_convert_noisy(i, &a, &mut rng), flash_convert(i, &a));
    }
}

proptest! {
    #[test]
    fn monotone(bits in 1u8..6, a in -2.0f64..40.0, b in -2.0f64..40.0) {
        let cfg = refs(bits);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(flash_convert(lo, &cfg) <= flash_convert(hi, &cfg));
    }

    #[test]
    fn thermometer_matches_code(bits in 1u8..6, i in -2.0f64..40.0) {
        let cfg = refs(bits);
        let th = thermometer(i, &cfg);
        let ones = th.iter().filter(|&&b| b).count() as u32;
        prop_assert_eq!(ones, flash_convert(i, &cfg));
        // Thermometer code: all ones precede all zeros.
        prop_assert!(th.windows(2).all(|w| w[0] || !w[1]));
    }

    #[test]
    fn crossing_a_reference_steps_by_one(bits in 1u8..6, idx in 0usize..31) {
        let cfg = refs(bits);
        let r = cfg.references[idx % cfg.references.len()];
        let below = flash_convert(r - 1e-9, &cfg);
        let above = flash_convert(r + 1e-9, &cfg);
        prop_assert_eq!(above, below + 1);
    }

    #[test]
    fn deterministic(bits in 1u8..6, i in -2.0f64..40.0) {
        let cfg = refs(bits);
        prop_assert_eq!(flash_convert(i, &cfg), flash_convert(i, &cfg));
    }

    #[test]
    fn references_strictly_increasing(levels in prop::collection::vec(0.0f64..1.0, 2..20), bits in 1u8..5) {
        let mut l = levels;
        l.sort_by(f64::total_cmp);
        l.dedup();
        prop_assume!(l.len() >= 2 && l.windows(2).all(|w| w[1] - w[0] > 1e-9));
        let cfg = design_references(&l, bits).unwrap();
        prop_assert_eq!(cfg.references.len(), (1usize << bits) - 1);
        prop_assert!(cfg.references.windows(2).all(|w| w[1] > w[0]));
    }
}
