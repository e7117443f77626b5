//! Independent reference implementations ("oracles") shared by the
//! integration and acceptance suites. Everything here is deliberately
//! written from the definitions, not by calling the library code it checks.

use navctx_core::features::{RATIO_DENOMINATOR_FLOOR, RATIO_MAX};
use navctx_core::nmea::{Constellation, Epoch, SatelliteObservation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Brute-force azimuth distribution factor: sweep the bisector over a
/// 0.01 degree grid and take the best half-sky C/N0 ratio, with the same
/// denominator floor and clamp as the production operation.
pub fn brute_force_factor(epoch: &Epoch) -> f64 {
    let sats: Vec<(f64, f64)> = epoch
        .observations
        .iter()
        .filter(|o| o.cn0.is_some() && o.azimuth.is_some())
        .map(|o| (o.azimuth.unwrap().rem_euclid(360.0), o.cn0.unwrap()))
        .collect();
    if sats.is_empty() {
        return 1.0;
    }
    let mut best = f64::NEG_INFINITY;
    let steps = 36_000;
    for i in 0..steps {
        let bisector = i as f64 * 0.01;
        let mut first = 0.0;
        let mut second = 0.0;
        for &(azimuth, cn0) in &sats {
            if (azimuth - bisector).rem_euclid(360.0) < 180.0 {
                first += cn0;
            } else {
                second += cn0;
            }
        }
        let ratio = first / second.max(RATIO_DENOMINATOR_FLOOR);
        if ratio > best {
            best = ratio;
        }
    }
    best.clamp(1.0, RATIO_MAX)
}

/// Reference C/N0 statistics computed directly from the definitions:
/// population moments, excess kurtosis, quartiles by linear interpolation
/// at rank `p * (n - 1)`. Returns the feature values in x_t order.
pub fn reference_statistics(values: &[f64]) -> [f64; 11] {
    let n = values.len();
    if n == 0 {
        return [0.0; 11];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let nf = n as f64;
    let sum: f64 = sorted.iter().sum();
    let mean = sum / nf;
    let central = |k: i32| sorted.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
    let variance = central(2);
    let std = variance.sqrt();
    let (skewness, kurtosis) = if variance > 0.0 {
        (central(3) / variance.powf(1.5), central(4) / (variance * variance) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let quantile = |p: f64| {
        let rank = p * (n as f64 - 1.0);
        let lower = rank.floor() as usize;
        let upper = rank.ceil() as usize;
        let weight = rank - lower as f64;
        sorted[lower] * (1.0 - weight) + sorted[upper] * weight
    };
    let max = sorted[n - 1];
    let min = sorted[0];
    [
        nf,
        sum,
        mean,
        std,
        max,
        min,
        max - min,
        skewness,
        kurtosis,
        quantile(0.5),
        quantile(0.75) - quantile(0.25),
    ]
}

/// Epoch with the given (azimuth, cn0) satellites, all GPS, unit PRNs.
pub fn epoch_with(sats: &[(f64, f64)]) -> Epoch {
    Epoch {
        time_of_day: None,
        partial: false,
        observations: sats
            .iter()
            .enumerate()
            .map(|(i, &(azimuth, cn0))| SatelliteObservation {
                constellation: Constellation::Gps,
                prn: i as u16 + 1,
                elevation: Some(45.0),
                azimuth: Some(azimuth),
                cn0: Some(cn0),
            })
            .collect(),
    }
}

/// Random epoch for the oracle comparison: 3–30 satellites, azimuths on a
/// 0.05 degree lattice (finer than any arc the 0.01 degree sweep could
/// miss), C/N0 uniform in [10, 55].
pub fn random_epoch(rng: &mut ChaCha8Rng) -> Epoch {
    let count = rng.gen_range(3..=30);
    let sats: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let azimuth = rng.gen_range(0..7200) as f64 * 0.05;
            let cn0 = rng.gen_range(10.0..55.0);
            (azimuth, cn0)
        })
        .collect();
    epoch_with(&sats)
}

/// Relative difference with an absolute guard for near-zero pairs.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
