use bandsel::hypercube::{GroundTruth, HyperCube};
use bandsel::infotheory::{
    conditional_entropy, entropy, fano_bounds, joint_histogram, mi_curve, mutual_information,
    quantize, Axis, Quantizer, Reference,
};
use proptest::prelude::*;

fn paired_symbols() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..6, n),
            prop::collection::vec(0usize..5, n),
        )
    })
}

proptest! {
    #[test]
    fn mi_is_symmetric_and_nonnegative((a, b) in paired_symbols()) {
        let ab = mutual_information(&joint_histogram(&a, &b).unwrap());
        let ba = mutual_information(&joint_histogram(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_holds((a, b) in paired_symbols()) {
        let h = joint_histogram(&a, &b).unwrap();
        let (ha, hb, hab) = (entropy(&h.marginal_a()), entropy(&h.marginal_b()), h.joint_entropy());
        prop_assert!((hab - (hb + conditional_entropy(&h, Axis::B))).abs() < 1e-9);
        prop_assert!((hab - (ha + conditional_entropy(&h, Axis::A))).abs() < 1e-9);
        prop_assert!((mutual_information(&h) - (ha + hb - hab)).abs() < 1e-9);
    }

    #[test]
    fn mi_with_itself_is_entropy(a in prop::collection::vec(0usize..8, 1..300)) {
        let h = joint_histogram(&a, &a).unwrap();
        prop_assert!((mutual_information(&h) - entropy(&h.marginal_a())).abs() < 1e-9);
        prop_assert!(conditional_entropy(&h, Axis::B).abs() < 1e-12);
    }

    #[test]
    fn mi_bounded_by_marginal_entropies((a, b) in paired_symbols()) {
        let h = joint_histogram(&a, &b).unwrap();
        let mi = mutual_information(&h);
        prop_assert!(mi <= entropy(&h.marginal_a()) + 1e-9);
        prop_assert!(mi <= entropy(&h.marginal_b()) + 1e-9);
    }

    #[test]
    fn quantize_stays_in_range_and_is_monotone(
        values in prop::collection::vec(-1e6f64..1e6, 1..200),
        bins in 2usize..300,
    ) {
        let q = Quantizer::new(bins).unwrap();
        let out = quantize(&values, &q).unwrap();
        prop_assert_eq!(out.len(), values.len());
        prop_assert!(out.iter().all(|&b| b < bins));
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        prop_assert!(idx.windows(2).all(|w| out[w[0]] <= out[w[1]]));
    }

    #[test]
    fn fano_bounds_are_ordered_and_clamped(h in 0.0f64..10.0, nc in 2usize..64) {
        let b = fano_bounds(h, nc).unwrap();
        prop_assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0);
        prop_assert!((b.upper_unclamped - b.lower_unclamped - 1.0 / (nc as f64).log2()).abs() < 1e-12);
    }

    /// Min–max binning makes the MI curve invariant to a positive affine map of a band.
    #[test]
    fn mi_curve_ignores_exact_rescaling(
        seed_values in prop::collection::vec(0u16..1000, 64),
        offset in 0u16..1000,
    ) {
        let labels: Vec<u16> = (0..64).map(|i| (i % 3 + 1) as u16).collect();
        let gt = GroundTruth::new(8, 8, labels).unwrap();
        let scaled: Vec<u16> = seed_values.iter().map(|&v| 4 * v + offset).collect();
        let values = [seed_values.clone(), scaled].concat();
        let cube = HyperCube::new(8, 8, 2, values).unwrap();
        let curve = mi_curve(&cube, Reference::Labels(&gt), &Quantizer::default(), true).unwrap();
        prop_assert!((curve.mi(1) - curve.mi(2)).abs() < 1e-12);
    }
}

#[test]
fn constant_band_has_zero_mi() {
    let gt = GroundTruth::new(2, 2, vec![1, 2, 1, 2]).unwrap();
    let cube = HyperCube::new(2, 2, 1, vec![7; 4]).unwrap();
    let curve = mi_curve(&cube, Reference::Labels(&gt), &Quantizer::default(), true).unwrap();
    assert_eq!(curve.mi(1), 0.0);
}
