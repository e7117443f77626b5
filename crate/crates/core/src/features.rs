//! Per-epoch features: C/N0 statistics and the C/N0-weighted azimuth
//! distribution factor.
//!
//! Conventions are fixed so every implementation agrees bit-for-bit with
//! the reference oracle: population (N-divisor) moments, excess kurtosis,
//! and quartiles by linear interpolation between closest ranks. Zero
//! variance forces skewness and kurtosis to 0.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::nmea::Epoch;

/// Denominator floor for the azimuth distribution factor, in dB-Hz.
/// The half-sky ratio is undefined when one half is empty; the floor keeps
/// the feature finite so normalization stays stable.
pub const RATIO_DENOMINATOR_FLOOR: f64 = 1.0;

/// Upper clamp for the azimuth distribution factor.
pub const RATIO_MAX: f64 = 100.0;

/// Statistics over the C/N0 values of an epoch's available satellites.
///
/// `num == 0` forces every other field to 0; `num == 1` gives zero
/// dispersion (std, range, iqr) and zero skewness/kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSet {
    pub num: usize,
    pub sum: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub range: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub median: f64,
    pub iqr: f64,
}

impl StatSet {
    pub fn zeros() -> Self {
        StatSet {
            num: 0,
            sum: 0.0,
            mean: 0.0,
            std: 0.0,
            max: 0.0,
            min: 0.0,
            range: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
            median: 0.0,
            iqr: 0.0,
        }
    }
}

/// Which feature vector layout to emit.
///
/// `Xt` is the 11-feature layout with the redundant `sum` and `range`
/// kept; `Yt` drops them; `Zt` appends the azimuth distribution factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Xt,
    Yt,
    Zt,
}

impl FeatureMode {
    /// Number of features this mode produces.
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Xt => 11,
            FeatureMode::Yt => 9,
            FeatureMode::Zt => 10,
        }
    }

    pub fn from_dim(dim: usize) -> Option<Self> {
        match dim {
            11 => Some(FeatureMode::Xt),
            9 => Some(FeatureMode::Yt),
            10 => Some(FeatureMode::Zt),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Xt => "xt",
            FeatureMode::Yt => "yt",
            FeatureMode::Zt => "zt",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xt" => Ok(FeatureMode::Xt),
            "yt" => Ok(FeatureMode::Yt),
            "zt" => Ok(FeatureMode::Zt),
            other => Err(format!("unknown feature mode {other:?} (expected xt, yt or zt)")),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered per-epoch feature values in one of the three layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Computes C/N0 statistics over the epoch's available satellites.
pub fn cn0_statistics(epoch: &Epoch) -> StatSet {
    let mut values: Vec<f64> = epoch.available().filter_map(|o| o.cn0).collect();
    if values.is_empty() {
        return StatSet::zeros();
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let nf = n as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / nf;
    let min = values[0];
    let max = values[n - 1];

    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in &values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;

    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    StatSet {
        num: n,
        sum,
        mean,
        std: m2.sqrt(),
        max,
        min,
        range: max - min,
        skewness,
        kurtosis,
        median: quantile_sorted(&values, 0.5),
        iqr: quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25),
    }
}

/// Quantile of an ascending-sorted slice by linear interpolation between
/// closest ranks (index `p * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// C/N0-weighted azimuth distribution factor of an epoch.
///
/// A bisector at heading `b` splits the sky into the half-open half
/// `[b, b+180°)` and its complement. Each half's weight is the sum of the
/// C/N0 of the available satellites whose azimuth falls inside it, and the
/// factor is the maximum over all bisectors of the first half's weight over
/// the second's, with the denominator floored at
/// [`RATIO_DENOMINATOR_FLOOR`] and the result clamped to
/// `[1, RATIO_MAX]`.
///
/// The ratio is piecewise constant in `b` with breakpoints only at the
/// satellite azimuths and their antipodes, so evaluating those candidate
/// headings finds the exact maximum without a grid sweep. Satellites
/// without an azimuth or C/N0 do not participate; an epoch with none
/// returns the neutral value 1.
pub fn azimuth_distribution_factor(epoch: &Epoch) -> f64 {
    let sats: Vec<(f64, f64)> = epoch
        .available()
        .filter_map(|o| o.azimuth.map(|az| (az.rem_euclid(360.0), o.cn0.unwrap())))
        .collect();
    if sats.is_empty() {
        return 1.0;
    }
    let mut best = f64::NEG_INFINITY;
    for &(az, _) in &sats {
        for bisector in [az, (az + 180.0).rem_euclid(360.0)] {
            let r = half_ratio(&sats, bisector);
            if r > best {
                best = r;
            }
        }
    }
    best.clamp(1.0, RATIO_MAX)
}

/// Ratio of C/N0 sums of the two halves split at `bisector`, floored.
/// A satellite exactly on the bisector belongs to the first half.
pub(crate) fn half_ratio(sats: &[(f64, f64)], bisector: f64) -> f64 {
    let mut first = 0.0;
    let mut second = 0.0;
    for &(az, cn0) in sats {
        if (az - bisector).rem_euclid(360.0) < 180.0 {
            first += cn0;
        } else {
            second += cn0;
        }
    }
    first / second.max(RATIO_DENOMINATOR_FLOOR)
}

/// Assembles the feature vector for an epoch in the requested layout.
pub fn feature_vector(epoch: &Epoch, mode: FeatureMode) -> FeatureVector {
    let s = cn0_statistics(epoch);
    let num = s.num as f64;
    let values = match mode {
        FeatureMode::Xt => vec![
            num, s.sum, s.mean, s.std, s.max, s.min, s.range, s.skewness, s.kurtosis, s.median,
            s.iqr,
        ],
        FeatureMode::Yt => vec![
            num, s.mean, s.std, s.max, s.min, s.skewness, s.kurtosis, s.median, s.iqr,
        ],
        FeatureMode::Zt => vec![
            num,
            s.mean,
            s.std,
            s.max,
            s.min,
            s.skewness,
            s.kurtosis,
            s.median,
            s.iqr,
            azimuth_distribution_factor(epoch),
        ],
    };
    FeatureVector { mode, values }
}

/// Feature vectors for a whole epoch series (parallel when enabled).
pub fn feature_series(epochs: &[Epoch], mode: FeatureMode) -> Vec<FeatureVector> {
    batch::map(epochs, |e| feature_vector(e, mode))
}

/// Always-sequential variant of [`feature_series`], for benchmarks.
pub fn feature_series_seq(epochs: &[Epoch], mode: FeatureMode) -> Vec<FeatureVector> {
    batch::map_seq(epochs, |e| feature_vector(e, mode))
}

#[derive(Debug, Error)]
pub enum FeatureCsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("feature CSV line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// One feature CSV row: epoch time of day, label (−1 when unlabeled), and
/// the feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub time_of_day: Option<f64>,
    pub label: i32,
    pub features: FeatureVector,
}

/// Writes rows as `t,label,f0..f{k-1}`. Floats use Rust's shortest
/// round-trip formatting, which preserves the exact value.
pub fn write_feature_csv<W: Write>(w: &mut W, rows: &[FeatureRow]) -> Result<(), FeatureCsvError> {
    let dim = match rows.first() {
        Some(r) => r.features.dim(),
        None => return Ok(()),
    };
    let header: Vec<String> = ["t".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut cells = Vec::with_capacity(dim + 2);
        cells.push(row.time_of_day.map(|t| t.to_string()).unwrap_or_default());
        cells.push(row.label.to_string());
        cells.extend(row.features.values.iter().map(|v| v.to_string()));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a feature CSV written by [`write_feature_csv`]; the mode is
/// inferred from the column count.
pub fn read_feature_csv<R: BufRead>(reader: R) -> Result<Vec<FeatureRow>, FeatureCsvError> {
    let mut rows = Vec::new();
    let mut mode: Option<FeatureMode> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            let cols = line.split(',').count();
            mode = FeatureMode::from_dim(cols.saturating_sub(2));
            if mode.is_none() {
                return Err(FeatureCsvError::Format {
                    line: 1,
                    reason: format!("{} feature columns do not match any mode", cols.saturating_sub(2)),
                });
            }
            continue;
        }
        let mode = mode.expect("header parsed first");
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != mode.dim() + 2 {
            return Err(FeatureCsvError::Format {
                line: idx + 1,
                reason: format!("expected {} cells, found {}", mode.dim() + 2, cells.len()),
            });
        }
        let time_of_day = if cells[0].is_empty() {
            None
        } else {
            Some(cells[0].parse::<f64>().map_err(|e| FeatureCsvError::Format {
                line: idx + 1,
                reason: format!("bad t: {e}"),
            })?)
        };
        let label: i32 = cells[1].parse().map_err(|e| FeatureCsvError::Format {
            line: idx + 1,
            reason: format!("bad label: {e}"),
        })?;
        let mut values = Vec::with_capacity(mode.dim());
        for c in &cells[2..] {
            values.push(c.parse::<f64>().map_err(|e| FeatureCsvError::Format {
                line: idx + 1,
                reason: format!("bad feature value: {e}"),
            })?);
        }
        rows.push(FeatureRow { time_of_day, label, features: FeatureVector { mode, values } });
    }
    Ok(rows)
}
