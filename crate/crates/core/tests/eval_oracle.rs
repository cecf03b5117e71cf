mod common;

use common::{all_sequences, edit_distance_oracle};
use phonoglot::eval::{edit_distance, macro_average, rate_percent, ward};
use proptest::prelude::*;

#[test]
fn edit_distance_matches_recursion_on_short_sequences() {
    let seqs = all_sequences(3, 4);
    for r in &seqs {
        for h in &seqs {
            let c = edit_distance(r, h);
            assert_eq!(c.errors(), edit_distance_oracle(r, h), "{r:?} / {h:?}");
        }
    }
}

#[test]
fn ward_reference_value() {
    let w = ward(52.0, 7.61).unwrap();
    assert!((w - 48.0).abs() <= 0.5, "{w}");
    assert!(ward(10.0, 100.0).is_err());
}

proptest! {
    #[test]
    fn alignment_counts_are_consistent(
        r in prop::collection::vec(0u8..4, 0..10),
        h in prop::collection::vec(0u8..4, 0..10),
    ) {
        let c = edit_distance(&r, &h);
        prop_assert_eq!(c.errors(), edit_distance_oracle(&r, &h));
        prop_assert_eq!(c.reference_length, r.len());
        prop_assert!(c.substitutions + c.deletions <= r.len());
        // hypothesis length = matches + substitutions + insertions
        prop_assert_eq!(r.len() - c.deletions + c.insertions, h.len());
        prop_assert_eq!(edit_distance(&r, &r).errors(), 0);
    }

    #[test]
    fn rates_are_percentages(r in prop::collection::vec(0u8..3, 1..10), h in prop::collection::vec(0u8..3, 0..10)) {
        let rate = rate_percent(&edit_distance(&r, &h)).unwrap();
        prop_assert!(rate >= 0.0);
        prop_assert!(rate <= 100.0 * (r.len().max(h.len()) as f64) / r.len() as f64 + 1e-9);
    }

    #[test]
    fn macro_average_is_bounded(xs in prop::collection::vec(0.0f64..100.0, 1..8)) {
        let m = macro_average(&xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
    }
}
