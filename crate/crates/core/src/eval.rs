//! Evaluation: confusion matrices, accuracies, ablation comparison, and
//! transition-delay measurement.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::{ContextClass, CLASS_COUNT};
use crate::dataset::{self, FeatureRecording, LabeledRecording};
use crate::features::FeatureMode;
use crate::gru::{self, GruError, TrainConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and truth series have different lengths ({predictions} vs {truths})")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("cannot evaluate an empty series")]
    Empty,
    #[error(transparent)]
    Train(#[from] GruError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Confusion counts with actual classes in rows and predictions in columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_pairs(
        predictions: &[usize],
        truths: &[usize],
        classes: usize,
    ) -> Result<Self, EvalError> {
        if predictions.len() != truths.len() {
            return Err(EvalError::LengthMismatch {
                predictions: predictions.len(),
                truths: truths.len(),
            });
        }
        if predictions.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&pred, &truth) in predictions.iter().zip(truths) {
            cm.record(truth, pred)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<(), EvalError> {
        let classes = self.counts.len();
        if truth >= classes || pred >= classes {
            return Err(EvalError::LabelOutOfRange { label: truth.max(pred), classes });
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Row-percentage view; rows with no samples are all zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    /// Per-class recall (diagonal over row sum); None for empty rows.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[i] as f64 / total as f64)
            })
            .collect()
    }

    /// Writes the count matrix as CSV, one truth row per line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let classes = self.classes();
        let header: Vec<String> =
            std::iter::once("actual".to_string()).chain((0..classes).map(|c| format!("pred_{c}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> =
                std::iter::once(i.to_string()).chain(row.iter().map(|c| c.to_string())).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Trace/total over the matrix.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// One ground-truth context change and its detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    /// Sample index where the truth changes.
    pub truth_index: usize,
    /// Truth change instant in seconds from series start.
    pub truth_time_s: f64,
    pub new_class: usize,
    /// First index from which the predictions stay on the new class for the
    /// stability span; None when never reached before the next change.
    pub detection_index: Option<usize>,
    pub delay_s: Option<f64>,
    pub detected: bool,
}

/// Transition measurement over one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub events: Vec<TransitionEvent>,
    /// Fraction of samples where the prediction equals the truth.
    pub trace_accuracy: f64,
    /// Mean delay over detected transitions; missed ones are excluded.
    pub mean_delay_s: Option<f64>,
    pub missed: usize,
}

/// Measures detection delay for every truth change.
///
/// A change at index `i` to class `c` is detected at the first `j >= i`
/// (before the next change) where `predictions[j..j + stability]` are all
/// `c`; the delay is `(j - i) / rate_hz`. Changes with no such `j` are
/// missed: reported, but excluded from the mean delay.
pub fn transition_delays(
    predictions: &[usize],
    truths: &[usize],
    rate_hz: f64,
    stability: usize,
) -> Result<TransitionReport, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    assert!(stability >= 1 && rate_hz > 0.0);

    let n = truths.len();
    let change_points: Vec<usize> =
        (1..n).filter(|&i| truths[i] != truths[i - 1]).collect();

    let mut events = Vec::with_capacity(change_points.len());
    for (k, &at) in change_points.iter().enumerate() {
        let new_class = truths[at];
        let search_end = change_points.get(k + 1).copied().unwrap_or(n);
        let mut detection = None;
        for j in at..search_end {
            if j + stability <= n && predictions[j..j + stability].iter().all(|&p| p == new_class)
            {
                detection = Some(j);
                break;
            }
        }
        events.push(TransitionEvent {
            truth_index: at,
            truth_time_s: at as f64 / rate_hz,
            new_class,
            detection_index: detection,
            delay_s: detection.map(|j| (j - at) as f64 / rate_hz),
            detected: detection.is_some(),
        });
    }

    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    let delays: Vec<f64> = events.iter().filter_map(|e| e.delay_s).collect();
    let missed = events.iter().filter(|e| !e.detected).count();
    Ok(TransitionReport {
        events,
        trace_accuracy: correct as f64 / n as f64,
        mean_delay_s: if delays.is_empty() {
            None
        } else {
            Some(delays.iter().sum::<f64>() / delays.len() as f64)
        },
        missed,
    })
}

/// Writes a per-sample prediction trace as `t,truth,raw_pred,filtered_pred`.
pub fn write_prediction_trace<W: Write>(
    w: &mut W,
    times: &[f64],
    truths: &[usize],
    raw: &[usize],
    filtered: &[usize],
) -> io::Result<()> {
    writeln!(w, "t,truth,raw_pred,filtered_pred")?;
    for i in 0..truths.len() {
        writeln!(w, "{},{},{},{}", times[i], truths[i], raw[i], filtered[i])?;
    }
    Ok(())
}

/// One arm of the feature ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub mode: FeatureMode,
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    /// Counts in the (viaduct-down, shallow-indoor) cell pair, the
    /// confusion the azimuth distribution factor is designed to remove:
    /// `(viaduct predicted shallow, shallow predicted viaduct)`.
    pub viaduct_shallow_cells: (u64, u64),
}

/// Side-by-side ablation report over feature modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<AblationArm>,
    pub seed: u64,
    pub holdout_sets: usize,
}

/// Trains and evaluates one model per feature mode with identical seeds
/// and identical set-wise splits, so the arms differ only in features.
///
/// The held-out sets form the test side; one further set per class is
/// carved from the training side for validation snapshotting.
pub fn ablation_run(
    recordings: &[LabeledRecording],
    modes: &[FeatureMode],
    holdout_sets: usize,
    cfg: &TrainConfig,
) -> Result<AblationReport, EvalError> {
    let mut arms = Vec::with_capacity(modes.len());
    for &mode in modes {
        let featured: Vec<FeatureRecording> =
            recordings.iter().map(|r| r.to_features(mode)).collect();
        let (train_recs, test_recs) = dataset::split_by_sets(featured, holdout_sets, cfg.seed)?;
        let (train_recs, val_recs) = dataset::split_by_sets(train_recs, 1, cfg.seed.wrapping_add(0xA1))?;

        let train_windows = dataset::all_windows(&train_recs);
        let val_windows = dataset::all_windows(&val_recs);
        let test_windows = dataset::all_windows(&test_recs);

        let (model, _) = gru::train(&train_windows, &val_windows, cfg)?;
        let predictions = model.predict_series(&test_windows)?;
        let truths: Vec<usize> = test_windows.iter().map(|w| w.label).collect();
        let cm = ConfusionMatrix::from_pairs(&predictions, &truths, cfg.num_classes)?;

        let viaduct = ContextClass::ViaductDown.index();
        let shallow = ContextClass::ShallowIndoor.index();
        arms.push(AblationArm {
            mode,
            overall_accuracy: overall_accuracy(&cm)?,
            per_class_accuracy: cm.per_class_accuracy(),
            viaduct_shallow_cells: (cm.count(viaduct, shallow), cm.count(shallow, viaduct)),
            confusion: cm,
        });
    }
    Ok(AblationReport { arms, seed: cfg.seed, holdout_sets })
}

/// Evaluation summary for a model on an isolated (single-class) test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatedReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub samples: u64,
}

impl IsolatedReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, EvalError> {
        Ok(IsolatedReport {
            overall_accuracy: overall_accuracy(&cm)?,
            per_class_accuracy: cm.per_class_accuracy(),
            samples: cm.total(),
            confusion: cm,
        })
    }
}

/// Builds the canonical seven-class confusion matrix from labels.
pub fn confusion_matrix(predictions: &[usize], truths: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    ConfusionMatrix::from_pairs(predictions, truths, CLASS_COUNT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_make_diagonal() {
        let truths: Vec<usize> = (0..70).map(|i| i % 7).collect();
        let cm = confusion_matrix(&truths, &truths).unwrap();
        assert_eq!(cm.trace(), 70);
        assert_eq!(cm.total(), 70);
        assert_eq!(overall_accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn row_percentage_view() {
        // 1000 class-4 truths: 979 predicted 4, 21 predicted 5
        let mut predictions = vec![4usize; 979];
        predictions.extend(vec![5usize; 21]);
        let truths = vec![4usize; 1000];
        let cm = confusion_matrix(&predictions, &truths).unwrap();
        let pct = cm.row_percentages();
        assert!((pct[4][4] - 97.90).abs() < 1e-9);
        assert!((pct[4][5] - 2.10).abs() < 1e-9);
        let row_sum: f64 = pct[4].iter().sum();
        assert!((row_sum - 100.0).abs() < 0.01);
    }

    #[test]
    fn uniform_counts_give_one_seventh() {
        let mut cm = ConfusionMatrix::new(7);
        for t in 0..7 {
            for p in 0..7 {
                for _ in 0..3 {
                    cm.record(t, p).unwrap();
                }
            }
        }
        assert!((overall_accuracy(&cm).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn published_row_percentages_reconstruct_headline_accuracy() {
        // diagonal row percentages of the reference confusion table; with
        // equal row sizes the overall accuracy is their mean: 99.41%
        let diagonal = [100.00, 100.00, 99.67, 98.51, 97.90, 99.75, 100.00];
        let per_row = 10_000u64;
        let mut cm = ConfusionMatrix::new(7);
        for (class, &pct) in diagonal.iter().enumerate() {
            let hit = (pct / 100.0 * per_row as f64).round() as u64;
            cm.counts[class][class] = hit;
            let spill = if class == 5 { 2 } else { (class + 1) % 7 };
            cm.counts[class][spill] += per_row - hit;
        }
        let acc = overall_accuracy(&cm).unwrap();
        assert!((acc - 0.9941).abs() < 1e-3, "accuracy {acc}");
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        assert!(matches!(confusion_matrix(&[], &[]), Err(EvalError::Empty)));
        assert!(matches!(
            confusion_matrix(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[9], &[1]),
            Err(EvalError::LabelOutOfRange { .. })
        ));
    }

    fn step_series(n: usize, change_at: usize, adopt_at: usize) -> (Vec<usize>, Vec<usize>) {
        let truths: Vec<usize> = (0..n).map(|i| if i < change_at { 0 } else { 4 }).collect();
        let preds: Vec<usize> = (0..n).map(|i| if i < adopt_at { 0 } else { 4 }).collect();
        (preds, truths)
    }

    #[test]
    fn delay_arithmetic() {
        let (preds, truths) = step_series(200, 100, 111);
        let report = transition_delays(&preds, &truths, 5.0, 5).unwrap();
        assert_eq!(report.events.len(), 1);
        let e = &report.events[0];
        assert_eq!(e.truth_index, 100);
        assert_eq!(e.new_class, 4);
        assert_eq!(e.detection_index, Some(111));
        assert!((e.delay_s.unwrap() - 2.2).abs() < 1e-12);
        assert!(e.detected);
        assert_eq!(report.missed, 0);
    }

    #[test]
    fn exact_predictions_have_zero_delay() {
        let truths: Vec<usize> = (0..100).map(|i| if i < 40 { 2 } else { 6 }).collect();
        let report = transition_delays(&truths, &truths, 5.0, 5).unwrap();
        assert_eq!(report.events.len(), 1);
        assert_eq!(report.events[0].delay_s, Some(0.0));
        assert_eq!(report.trace_accuracy, 1.0);
    }

    #[test]
    fn constant_truth_has_no_transitions() {
        let truths = vec![3usize; 50];
        let preds = vec![1usize; 50];
        let report = transition_delays(&preds, &truths, 5.0, 5).unwrap();
        assert!(report.events.is_empty());
        assert_eq!(report.mean_delay_s, None);
    }

    #[test]
    fn flicker_does_not_count_as_detection() {
        let truths: Vec<usize> = (0..60).map(|i| if i < 20 { 0 } else { 1 }).collect();
        let mut preds = vec![0usize; 60];
        // a 3-sample flicker of the right class, then stable adoption at 30
        preds[22] = 1;
        preds[23] = 1;
        preds[24] = 1;
        for p in preds.iter_mut().skip(30) {
            *p = 1;
        }
        let report = transition_delays(&preds, &truths, 5.0, 5).unwrap();
        assert_eq!(report.events[0].detection_index, Some(30));
        assert!((report.events[0].delay_s.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missed_transition_reported_but_excluded_from_mean() {
        // truth changes to 1 then back to 0; predictions never adopt 1
        let mut truths = vec![0usize; 30];
        for t in truths.iter_mut().take(20).skip(10) {
            *t = 1;
        }
        let preds = vec![0usize; 30];
        let report = transition_delays(&preds, &truths, 5.0, 5).unwrap();
        assert_eq!(report.events.len(), 2);
        assert!(!report.events[0].detected);
        assert!(report.events[1].detected); // back to 0 detected immediately
        assert_eq!(report.missed, 1);
        assert_eq!(report.mean_delay_s, Some(0.0));
    }

    #[test]
    fn prefix_invariance_and_delay_shift() {
        let (preds, truths) = step_series(100, 40, 46);
        let base = transition_delays(&preds, &truths, 5.0, 5).unwrap();

        // prepending identical (pred, truth) prefix before the first
        // transition leaves delays unchanged
        let mut preds2 = vec![0usize; 25];
        preds2.extend(&preds);
        let mut truths2 = vec![0usize; 25];
        truths2.extend(&truths);
        let shifted = transition_delays(&preds2, &truths2, 5.0, 5).unwrap();
        assert_eq!(base.events[0].delay_s, shifted.events[0].delay_s);

        // delaying adoption by k samples adds exactly k/rate
        let (preds3, truths3) = step_series(100, 40, 49);
        let later = transition_delays(&preds3, &truths3, 5.0, 5).unwrap();
        let diff = later.events[0].delay_s.unwrap() - base.events[0].delay_s.unwrap();
        assert!((diff - 3.0 / 5.0).abs() < 1e-12);
    }
}
