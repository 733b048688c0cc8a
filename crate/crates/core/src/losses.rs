//! Supervised contrastive loss, the running class prior, the prior-adjusted
//! (equalization) cross-entropy and plain cross-entropy, each returning the
//! gradient with respect to its input matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, matmul, matmul_nt, softmax_in_place, RealMatrix};

#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub gradient: RealMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { temperature: 0.09 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Supervised contrastive loss over unit-norm projections `v`.
///
/// For every anchor `i` with at least one same-label partner,
/// `l_i = -1/|P(i)| * sum_{p in P(i)} log( exp(v_i.v_p/t) / sum_{k != i} exp(v_i.v_k/t) )`.
/// Anchors without positives are skipped; the result is the mean over the
/// remaining anchors (zero if there are none).
pub fn supervised_contrastive_loss(
    v: &RealMatrix,
    labels: &[usize],
    cfg: &ContrastiveConfig,
) -> Result<LossResult> {
    let n = v.rows();
    if n < 2 {
        return Err(Error::DegenerateBatch(n));
    }
    if labels.len() != n {
        return Err(Error::dimension(
            "supervised_contrastive_loss",
            v.shape(),
            (labels.len(), 1),
        ));
    }
    let tau = cfg.temperature;
    let mut sim = matmul_nt(v, v)?;
    sim.scale(1.0 / tau);

    let positives: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&k| k != i && labels[k] == labels[i]).count())
        .collect();
    let contributing = positives.iter().filter(|&&p| p > 0).count();
    let mut coeff = RealMatrix::zeros(n, n);
    if contributing == 0 {
        return Ok(LossResult {
            value: 0.0,
            gradient: RealMatrix::zeros(n, v.cols()),
        });
    }
    let scale = 1.0 / contributing as f64;

    let mut total = 0.0;
    let mut probs = vec![0.0; n];
    for i in 0..n {
        if positives[i] == 0 {
            continue;
        }
        let row = sim.row(i);
        let lse = log_sum_exp((0..n).filter(|&k| k != i).map(|k| row[k]));
        let inv_p = 1.0 / positives[i] as f64;
        let mut pos_sum = 0.0;
        probs.copy_from_slice(row);
        probs[i] = f64::NEG_INFINITY;
        softmax_in_place(&mut probs);
        let c = coeff.row_mut(i);
        for k in 0..n {
            if k == i {
                continue;
            }
            let is_pos = labels[k] == labels[i];
            if is_pos {
                pos_sum += row[k];
            }
            c[k] = scale * (probs[k] - if is_pos { inv_p } else { 0.0 });
        }
        total += lse - inv_p * pos_sum;
    }

    // dL/dv = (C + C^T) v / tau
    let sym = {
        let mut s = coeff.transpose();
        s.add_scaled(&coeff, 1.0)?;
        s
    };
    let mut gradient = matmul(&sym, v)?;
    gradient.scale(1.0 / tau);
    Ok(LossResult {
        value: total * scale,
        gradient,
    })
}

/// Which window of steps the running class counts cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriorScope {
    /// Counts accumulate over all steps of the current task.
    #[default]
    Task,
    /// Counts cover only the current step.
    Batch,
}

/// Running per-class counts for the current scope plus the set of every class
/// encountered so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassPrior {
    counts: BTreeMap<usize, u64>,
    seen: BTreeSet<usize>,
    scope: Option<usize>,
}

impl ClassPrior {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts `labels` under task `task`, first clearing the counts if the task changed.
    pub fn update(&mut self, task: usize, labels: &[usize]) {
        if self.scope != Some(task) {
            self.counts.clear();
            self.scope = Some(task);
        }
        for &l in labels {
            *self.counts.entry(l).or_insert(0) += 1;
            self.seen.insert(l);
        }
    }

    /// Clears the scope counts; the seen set is kept.
    pub fn reset_counts(&mut self) {
        self.counts.clear();
    }

    pub fn scope(&self) -> Option<usize> {
        self.scope
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn seen_classes(&self) -> &BTreeSet<usize> {
        &self.seen
    }

    pub fn is_seen(&self, class: usize) -> bool {
        self.seen.contains(&class)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `n_h / sum n` over the classes counted in the current scope.
    pub fn prior_vector(&self) -> BTreeMap<usize, f64> {
        let total = self.total() as f64;
        self.counts
            .iter()
            .map(|(&c, &n)| (c, n as f64 / total))
            .collect()
    }

    /// `log P(class)` for every seen class, `None` for unseen ones, over `width` columns.
    ///
    /// When every seen class has a positive count this is the plain normalized
    /// count. Otherwise all seen classes are smoothed to
    /// `(count + 1) / (total + |seen|)` so that no seen class gets `-inf`.
    pub fn log_prior(&self, width: usize) -> Vec<Option<f64>> {
        let total = self.total() as f64;
        let all_counted = self.seen.iter().all(|c| self.counts.contains_key(c));
        let (add, denom) = if all_counted {
            (0.0, total)
        } else {
            (1.0, total + self.seen.len() as f64)
        };
        (0..width)
            .map(|c| {
                self.seen.contains(&c).then(|| {
                    let n = self.counts.get(&c).copied().unwrap_or(0) as f64;
                    ((n + add) / denom).ln()
                })
            })
            .collect()
    }

    pub fn seen_mask(&self, width: usize) -> Vec<bool> {
        (0..width).map(|c| self.seen.contains(&c)).collect()
    }
}

/// Mean negative log-likelihood of `labels` under a row softmax restricted to
/// columns whose offset is `Some`, with the offset added to the logit.
fn masked_cross_entropy(
    logits: &RealMatrix,
    labels: &[usize],
    offsets: &[Option<f64>],
) -> Result<LossResult> {
    let (n, width) = logits.shape();
    if labels.len() != n {
        return Err(Error::dimension(
            "cross_entropy",
            logits.shape(),
            (labels.len(), 1),
        ));
    }
    if n == 0 {
        return Err(Error::DegenerateBatch(0));
    }
    if offsets.len() != width {
        return Err(Error::dimension(
            "cross_entropy",
            logits.shape(),
            (1, offsets.len()),
        ));
    }
    let mut gradient = RealMatrix::zeros(n, width);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, &y) in labels.iter().enumerate() {
        if offsets.get(y).copied().flatten().is_none() {
            return Err(Error::UnseenLabel { label: y });
        }
        let g = gradient.row_mut(i);
        for (j, (gj, &z)) in g.iter_mut().zip(logits.row(i)).enumerate() {
            *gj = offsets[j].map_or(f64::NEG_INFINITY, |o| z + o);
        }
        let lse = log_sum_exp(g.iter().copied());
        total += lse - g[y];
        softmax_in_place(g);
        g[y] -= 1.0;
        g.iter_mut().for_each(|x| *x *= inv_n);
    }
    Ok(LossResult {
        value: total * inv_n,
        gradient,
    })
}

/// Cross-entropy on logits shifted by `log P` of the running class prior.
/// Columns of never-seen classes are excluded from the softmax.
pub fn equalization_loss(
    logits: &RealMatrix,
    labels: &[usize],
    prior: &ClassPrior,
) -> Result<LossResult> {
    masked_cross_entropy(logits, labels, &prior.log_prior(logits.cols()))
}

/// Cross-entropy over the columns where `seen_class_mask` is true.
pub fn cross_entropy_loss(
    logits: &RealMatrix,
    labels: &[usize],
    seen_class_mask: &[bool],
) -> Result<LossResult> {
    let offsets: Vec<Option<f64>> = seen_class_mask.iter().map(|&s| s.then_some(0.0)).collect();
    masked_cross_entropy(logits, labels, &offsets)
}

/// Argmax over the seen columns of raw logits, per row.
pub fn predict_seen(logits: &RealMatrix, seen_class_mask: &[bool]) -> Vec<usize> {
    logits
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| seen_class_mask.get(*j).copied().unwrap_or(false))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (j, &z)| {
                    if z > best.1 {
                        (j, z)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
