//! Property tests for the spec-level invariants.

mod common;

use proptest::prelude::*;

use navctx_core::features::{azimuth_distribution_factor, cn0_statistics, RATIO_MAX};
use navctx_core::nmea::parse_epochs;
use navctx_core::svm::temporal_filter;

use common::epoch_with;

fn sats_strategy(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..360.0f64, 10.0..55.0f64), 0..max)
}

proptest! {
    #[test]
    fn factor_is_at_least_one(sats in sats_strategy(24)) {
        let factor = azimuth_distribution_factor(&epoch_with(&sats));
        prop_assert!((1.0..=RATIO_MAX).contains(&factor), "factor {factor}");
    }

    #[test]
    fn factor_is_rotation_covariant(sats in sats_strategy(24), delta in 0.0..360.0f64) {
        let base = azimuth_distribution_factor(&epoch_with(&sats));
        let rotated: Vec<(f64, f64)> = sats
            .iter()
            .map(|&(az, cn0)| ((az + delta).rem_euclid(360.0), cn0))
            .collect();
        let turned = azimuth_distribution_factor(&epoch_with(&rotated));
        prop_assert!((base - turned).abs() <= 1e-12 * base.abs().max(1.0),
            "rotation by {delta} changed factor {base} -> {turned}");
    }

    #[test]
    fn factor_is_scale_invariant(sats in sats_strategy(24), k in 0.5..2.0f64) {
        // scaling commutes with the ratio only while neither the
        // denominator floor nor the clamp engages: every candidate
        // bisector must keep a comfortably positive second half
        let min_second_half = sats
            .iter()
            .flat_map(|&(az, _)| [az, (az + 180.0).rem_euclid(360.0)])
            .map(|bisector| {
                sats.iter()
                    .filter(|&&(az, _)| (az - bisector).rem_euclid(360.0) >= 180.0)
                    .map(|&(_, cn0)| cn0)
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        prop_assume!(min_second_half.is_finite() && min_second_half * 0.5 >= 2.0);
        let base = azimuth_distribution_factor(&epoch_with(&sats));
        prop_assume!(base < RATIO_MAX);
        let scaled: Vec<(f64, f64)> = sats.iter().map(|&(az, cn0)| (az, cn0 * k)).collect();
        let factor = azimuth_distribution_factor(&epoch_with(&scaled));
        prop_assert!((base - factor).abs() <= 1e-12 * base.max(1.0),
            "scaling by {k} changed factor {base} -> {factor}");
    }

    #[test]
    fn statistics_are_ordered(sats in sats_strategy(32)) {
        let stats = cn0_statistics(&epoch_with(&sats));
        prop_assert!(stats.min <= stats.median && stats.median <= stats.max);
        prop_assert!(stats.range == stats.max - stats.min);
        prop_assert!(stats.iqr >= 0.0);
        prop_assert!(stats.std >= 0.0);
        if stats.num == 0 {
            prop_assert_eq!(stats.sum, 0.0);
        }
    }

    #[test]
    fn parsing_is_total(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        // any byte soup yields an epoch stream without aborting
        let parsed = parse_epochs(&bytes[..]);
        prop_assert!(parsed.is_ok());
    }

    #[test]
    fn filter_is_causal(raw in prop::collection::vec(0usize..7, 1..80)) {
        let full = temporal_filter(&raw, 6);
        for t in 0..raw.len() {
            let prefix = temporal_filter(&raw[..=t], 6);
            prop_assert_eq!(prefix[t], full[t], "output at {} depends on the future", t);
        }
    }

    #[test]
    fn filter_output_labels_come_from_input(raw in prop::collection::vec(0usize..7, 1..80)) {
        let filtered = temporal_filter(&raw, 6);
        prop_assert_eq!(filtered.len(), raw.len());
        for (t, &label) in filtered.iter().enumerate() {
            let start = (t + 1).saturating_sub(6);
            prop_assert!(raw[start..=t].contains(&label));
        }
    }
}
