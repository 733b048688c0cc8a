//! Accuracy bookkeeping and metrics: accuracy matrix, average accuracy,
//! forgetting, confusion matrices and head/median/tail breakdowns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::predict_seen;
use crate::model::Network;
use crate::numeric::RealMatrix;
use crate::stream::{features_matrix, LabeledVector};

/// Anything that maps a feature batch to raw logits.
pub trait Predictor {
    fn logits(&self, features: &RealMatrix) -> Result<RealMatrix>;
}

impl Predictor for Network {
    fn logits(&self, features: &RealMatrix) -> Result<RealMatrix> {
        Network::logits(self, features)
    }
}

/// Lower-triangular matrix of per-task accuracies; row `i` holds the
/// accuracies on tasks `0..=i` after training task `i` (0-based storage).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix from complete rows (row `i` must have `i + 1` entries).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(Error::IncompleteRow { row: expected });
        }
        if let Some(bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("accuracy {bad} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    /// `a[i][j]`, 1-based task indices.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == 0 || j == 0 {
            return None;
        }
        self.rows.get(i - 1).and_then(|r| r.get(j - 1)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn row(&self, t: usize) -> Result<&[f64]> {
        if t == 0 {
            return Err(Error::IncompleteRow { row: 0 });
        }
        self.rows
            .get(t - 1)
            .map(Vec::as_slice)
            .ok_or(Error::IncompleteRow { row: t })
    }
}

/// `A_T = (1/T) * sum_{j=1..T} a[T][j]`, with `t` 1-based.
pub fn average_accuracy(mat: &AccuracyMatrix, t: usize) -> Result<f64> {
    let row = mat.row(t)?;
    Ok(row.iter().sum::<f64>() / t as f64)
}

/// `F_T = 1/(T-1) * sum_{j<T} (max_{j<=i<=T} a[i][j] - a[T][j])`, with `t` 1-based.
///
/// The column maximum includes the final row, so every term is non-negative
/// and a task whose accuracy only improved contributes zero.
pub fn average_forgetting(mat: &AccuracyMatrix, t: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::Config(format!(
            "forgetting needs at least 2 tasks, got {t}"
        )));
    }
    let last = mat.row(t)?;
    let mut total = 0.0;
    for j in 1..t {
        let mut best = f64::NEG_INFINITY;
        for i in j..=t {
            best = best.max(mat.row(i)?[j - 1]);
        }
        total += best - last[j - 1];
    }
    Ok(total / (t - 1) as f64)
}

/// Counts `c[true][pred]` over a fixed, sorted set of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<usize>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(mut classes: Vec<usize>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(classes: Vec<usize>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Config(
                "confusion counts must be square over the classes".into(),
            ));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "confusion classes must be strictly increasing".into(),
            ));
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn position(&self, class: usize) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let i = self
            .position(truth)
            .ok_or(Error::UnseenLabel { label: truth })?;
        let j = self
            .position(predicted)
            .ok_or(Error::UnseenLabel { label: predicted })?;
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.position(class)
            .map_or(0, |i| self.counts[i].iter().sum())
    }

    /// `(correct, total)` over the rows of the given classes.
    pub fn tally(&self, classes: &[usize]) -> (u64, u64) {
        classes
            .iter()
            .filter_map(|&c| self.position(c))
            .fold((0, 0), |(c, t), i| {
                (
                    c + self.counts[i][i],
                    t + self.counts[i].iter().sum::<u64>(),
                )
            })
    }

    /// Accuracy restricted to test samples whose true class is in `classes`.
    pub fn accuracy_over(&self, classes: &[usize]) -> Option<f64> {
        let (correct, total) = self.tally(classes);
        (total > 0).then(|| correct as f64 / total as f64)
    }

    /// Row-stochastic version; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Predicts over the raw logits of `seen_classes` only and tallies the results.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    test_samples: &[LabeledVector],
    seen_classes: &[usize],
) -> Result<EvalResult> {
    if test_samples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let logits = predictor.logits(&features_matrix(test_samples)?)?;
    let width = logits.cols();
    let mut mask = vec![false; width];
    for &c in seen_classes {
        if c >= width {
            return Err(Error::UnseenLabel { label: c });
        }
        mask[c] = true;
    }
    let preds = predict_seen(&logits, &mask);
    let mut confusion = ConfusionMatrix::new(seen_classes.to_vec());
    for (s, &p) in test_samples.iter().zip(&preds) {
        confusion.record(s.label, p)?;
    }
    Ok(EvalResult {
        accuracy: confusion.accuracy(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTailBreakdown {
    pub head_classes: Vec<usize>,
    pub median_classes: Vec<usize>,
    pub tail_classes: Vec<usize>,
    pub head: Option<f64>,
    pub median: Option<f64>,
    pub tail: Option<f64>,
}

/// Splits the confusion classes by training count into head (top third),
/// median and tail (bottom third). Ties are broken by class index. For `k`
/// classes the head gets `ceil(k/3)`, the tail `round(k/3)`.
pub fn headtail_breakdown(conf: &ConfusionMatrix, train_counts: &[usize]) -> HeadTailBreakdown {
    let mut ranked = conf.classes().to_vec();
    ranked.sort_by(|&a, &b| {
        let ca = train_counts.get(a).copied().unwrap_or(0);
        let cb = train_counts.get(b).copied().unwrap_or(0);
        cb.cmp(&ca).then(a.cmp(&b))
    });
    let k = ranked.len();
    let head_n = k.div_ceil(3);
    let tail_n = (k + 1) / 3;
    let head_classes = ranked[..head_n].to_vec();
    let median_classes = ranked[head_n..k - tail_n].to_vec();
    let tail_classes = ranked[k - tail_n..].to_vec();
    HeadTailBreakdown {
        head: conf.accuracy_over(&head_classes),
        median: conf.accuracy_over(&median_classes),
        tail: conf.accuracy_over(&tail_classes),
        head_classes,
        median_classes,
        tail_classes,
    }
}
