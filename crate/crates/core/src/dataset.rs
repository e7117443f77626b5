//! Labeled recordings, normalization, sliding windows, and leakage-free
//! set-wise train/test splits.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::{ContextClass, CLASS_COUNT};
use crate::features::{self, FeatureMode, FeatureVector};
use crate::nmea::{self, Epoch};

/// Classification window length: six consecutive 5 Hz epochs.
pub const WINDOW_LEN: usize = 6;

/// One contiguous labeled collection session parsed from a single log.
#[derive(Debug, Clone)]
pub struct LabeledRecording {
    pub class: ContextClass,
    pub set_id: String,
    pub epochs: Vec<Epoch>,
}

/// A recording reduced to its per-epoch feature vectors.
///
/// `epoch_labels` is present for transition traces where the class changes
/// within the recording; otherwise every epoch carries `class`.
#[derive(Debug, Clone)]
pub struct FeatureRecording {
    pub class: ContextClass,
    pub set_id: String,
    pub features: Vec<FeatureVector>,
    pub epoch_labels: Option<Vec<ContextClass>>,
}

impl LabeledRecording {
    pub fn to_features(&self, mode: FeatureMode) -> FeatureRecording {
        FeatureRecording {
            class: self.class,
            set_id: self.set_id.clone(),
            features: features::feature_series(&self.epochs, mode),
            epoch_labels: None,
        }
    }
}

/// Unit of classification: six consecutive feature vectors and the label
/// of the final epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub features: Vec<FeatureVector>,
    pub label: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing class directories under {root}: {missing:?}")]
    MissingClassDirs { root: PathBuf, missing: Vec<String> },
    #[error("class directory {0} contains no recordings")]
    EmptyClassDir(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no epochs parsed from {0}")]
    EmptyRecording(PathBuf),
    #[error("feature CSV {path}: {source}")]
    FeatureCsv {
        path: PathBuf,
        #[source]
        source: features::FeatureCsvError,
    },
    #[error("feature CSV {path} has mode {found} but {expected} was requested")]
    ModeMismatch { path: PathBuf, found: FeatureMode, expected: FeatureMode },
    #[error("class {class} has {sets} sets; cannot hold out {holdout}")]
    NotEnoughSets { class: ContextClass, sets: usize, holdout: usize },
    #[error("cannot fit a normalizer on an empty feature set")]
    EmptyFit,
}

/// Loads the on-disk dataset layout: one subdirectory per class name, each
/// holding one NMEA log per set. Files are taken in name order.
pub fn load_labeled_dataset(root: &Path) -> Result<Vec<LabeledRecording>, DatasetError> {
    let missing: Vec<String> = ContextClass::ALL
        .iter()
        .filter(|c| !root.join(c.dir_name()).is_dir())
        .map(|c| c.dir_name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingClassDirs { root: root.to_path_buf(), missing });
    }

    let mut recordings = Vec::new();
    for class in ContextClass::ALL {
        let dir = root.join(class.dir_name());
        for path in sorted_files(&dir)? {
            let file = File::open(&path)
                .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
            let (epochs, _) = nmea::parse_epochs(BufReader::new(file))
                .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
            if epochs.is_empty() {
                return Err(DatasetError::EmptyRecording(path));
            }
            recordings.push(LabeledRecording { class, set_id: set_id_for(&path), epochs });
        }
        if !recordings.iter().any(|r| r.class == class) {
            return Err(DatasetError::EmptyClassDir(dir));
        }
    }
    Ok(recordings)
}

/// Loads the same layout but skips parsing for recordings stored as
/// pre-extracted feature CSVs; NMEA logs are parsed and featurized at
/// `mode`. A CSV whose inferred mode differs from `mode` is an error.
pub fn load_feature_dataset(
    root: &Path,
    mode: FeatureMode,
) -> Result<Vec<FeatureRecording>, DatasetError> {
    let missing: Vec<String> = ContextClass::ALL
        .iter()
        .filter(|c| !root.join(c.dir_name()).is_dir())
        .map(|c| c.dir_name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingClassDirs { root: root.to_path_buf(), missing });
    }

    let mut recordings = Vec::new();
    for class in ContextClass::ALL {
        let dir = root.join(class.dir_name());
        let mut any = false;
        for path in sorted_files(&dir)? {
            let recording = if path.extension().is_some_and(|e| e == "csv") {
                let file = File::open(&path)
                    .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
                let rows = features::read_feature_csv(BufReader::new(file))
                    .map_err(|source| DatasetError::FeatureCsv { path: path.clone(), source })?;
                if rows.is_empty() {
                    return Err(DatasetError::EmptyRecording(path));
                }
                let found = rows[0].features.mode;
                if found != mode {
                    return Err(DatasetError::ModeMismatch { path, found, expected: mode });
                }
                FeatureRecording {
                    class,
                    set_id: set_id_for(&path),
                    features: rows.into_iter().map(|r| r.features).collect(),
                    epoch_labels: None,
                }
            } else {
                let file = File::open(&path)
                    .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
                let (epochs, _) = nmea::parse_epochs(BufReader::new(file))
                    .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
                if epochs.is_empty() {
                    return Err(DatasetError::EmptyRecording(path));
                }
                LabeledRecording { class, set_id: set_id_for(&path), epochs }.to_features(mode)
            };
            recordings.push(recording);
            any = true;
        }
        if !any {
            return Err(DatasetError::EmptyClassDir(dir));
        }
    }
    Ok(recordings)
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn set_id_for(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Per-feature z-score parameters fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits per-feature mean and population standard deviation.
    pub fn fit<'a, I>(vectors: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut iter = vectors.into_iter();
        let Some(first) = iter.next() else {
            return Err(DatasetError::EmptyFit);
        };
        let dim = first.dim();
        let mut n = 1.0;
        let mut sum = first.values.clone();
        let mut sum_sq: Vec<f64> = first.values.iter().map(|v| v * v).collect();
        for v in iter {
            debug_assert_eq!(v.dim(), dim);
            n += 1.0;
            for (i, &x) in v.values.iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
            .collect();
        Ok(Normalizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(v - mean) / max(std, 1e-8)` into `out`.
    pub fn apply(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.mean.len());
        for (i, (&v, o)) in values.iter().zip(out.iter_mut()).enumerate() {
            *o = (v - self.mean[i]) / self.std[i].max(1e-8);
        }
    }

    pub fn apply_vec(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.apply(values, &mut out);
        out
    }
}

/// Sliding windows over one recording; every window is `len` contiguous
/// vectors and the window label is the final epoch's label.
pub fn make_windows(recording: &FeatureRecording, len: usize, stride: usize) -> Vec<WindowSample> {
    assert!(len >= 1 && stride >= 1);
    let n = recording.features.len();
    if n < len {
        return Vec::new();
    }
    (0..=n - len)
        .step_by(stride)
        .map(|start| {
            let end = start + len;
            let label = match &recording.epoch_labels {
                Some(labels) => labels[end - 1].index(),
                None => recording.class.index(),
            };
            WindowSample { features: recording.features[start..end].to_vec(), label }
        })
        .collect()
}

/// Convenience: standard 6-long stride-1 windows over many recordings.
pub fn all_windows(recordings: &[FeatureRecording]) -> Vec<WindowSample> {
    recordings.iter().flat_map(|r| make_windows(r, WINDOW_LEN, 1)).collect()
}

/// Splits whole recordings into train/test, holding out `holdout_per_class`
/// sets per class, chosen by a seeded shuffle. No recording appears on both
/// sides, so adjacent 5 Hz samples never leak across the split.
pub fn split_by_sets(
    recordings: Vec<FeatureRecording>,
    holdout_per_class: usize,
    seed: u64,
) -> Result<(Vec<FeatureRecording>, Vec<FeatureRecording>), DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_ids: Vec<bool> = vec![false; recordings.len()];
    for class in ContextClass::ALL {
        let mut indices: Vec<usize> = recordings
            .iter()
            .enumerate()
            .filter(|(_, r)| r.class == class)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        if indices.len() <= holdout_per_class {
            return Err(DatasetError::NotEnoughSets {
                class,
                sets: indices.len(),
                holdout: holdout_per_class,
            });
        }
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(holdout_per_class) {
            test_ids[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in recordings.into_iter().enumerate() {
        if test_ids[i] {
            test.push(r);
        } else {
            train.push(r);
        }
    }
    Ok((train, test))
}

/// Total windows a recording list will produce with 6-long stride-1 windows.
pub fn window_count(recordings: &[FeatureRecording]) -> usize {
    recordings
        .iter()
        .map(|r| r.features.len().saturating_sub(WINDOW_LEN - 1))
        .sum()
}

/// Per-class set and sample counts for reporting.
pub fn class_counts(recordings: &[FeatureRecording]) -> [(usize, usize); CLASS_COUNT] {
    let mut counts = [(0usize, 0usize); CLASS_COUNT];
    for r in recordings {
        let slot = &mut counts[r.class.index()];
        slot.0 += 1;
        slot.1 += r.features.len();
    }
    counts
}
