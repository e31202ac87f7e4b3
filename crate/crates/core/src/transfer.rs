//! Normal-condition alignment, 1-nearest-neighbour classification and
//! post-transfer prediction quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Label, LabelledDataset, UNDAMAGED};

/// Per-feature mean and population standard deviation of undamaged rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn normal_stats(data: &LabelledDataset) -> Result<NormalStats> {
    let d = data.n_features();
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    let mut count = 0usize;
    // Welford: identical rows leave the running mean bit-exact.
    for row in data.rows_with_label(UNDAMAGED) {
        count += 1;
        for j in 0..d {
            let delta = row[j] - mean[j];
            mean[j] += delta / count as f64;
            m2[j] += delta * (row[j] - mean[j]);
        }
    }
    if count < 2 {
        return Err(Error::TooFewNormalRows(count));
    }
    let std = m2.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(NormalStats { mean, std })
}

fn check_stats(x: &[f64], target: &NormalStats, source: &NormalStats) -> Result<()> {
    let d = x.len();
    for len in [target.mean.len(), target.std.len(), source.mean.len(), source.std.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, actual: len });
        }
    }
    Ok(())
}

/// Maps a target feature vector onto the source normal condition:
/// standardise by the target stats, rescale by the source stats.
///
/// A feature with zero spread in the target but not the source is an error.
/// When both spreads are zero the scale ratio is taken as 1, which reduces
/// the map to a translation.
pub fn nca_align(x_t: &[f64], target: &NormalStats, source: &NormalStats) -> Result<Vec<f64>> {
    check_stats(x_t, target, source)?;
    x_t.iter()
        .enumerate()
        .map(|(j, &x)| {
            let (mt, st, ms, ss) = (target.mean[j], target.std[j], source.mean[j], source.std[j]);
            if st > 0.0 {
                Ok((x - mt) / st * ss + ms)
            } else if ss == 0.0 {
                Ok(x - mt + ms)
            } else {
                Err(Error::DegenerateNormalCondition { feature: j })
            }
        })
        .collect()
}

/// Inverse of [`nca_align`].
pub fn nca_unalign(z: &[f64], target: &NormalStats, source: &NormalStats) -> Result<Vec<f64>> {
    nca_align(z, source, target)
}

/// Label of the Euclidean-nearest source row; exact ties go to the lowest row.
pub fn knn_predict(source: &LabelledDataset, query: &[f64]) -> Result<Label> {
    if source.is_empty() {
        return Err(Error::Empty("source dataset"));
    }
    let mut best = f64::INFINITY;
    let mut best_row = 0;
    for (i, row) in source.features.iter().enumerate() {
        if row.len() != query.len() {
            return Err(Error::DimensionMismatch { expected: row.len(), actual: query.len() });
        }
        let mut dist = 0.0;
        for (a, b) in row.iter().zip(query) {
            dist += (a - b) * (a - b);
            if dist > best {
                break;
            }
        }
        if dist < best {
            best = dist;
            best_row = i;
        }
    }
    Ok(source.labels[best_row])
}

/// Fractions of true, false-positive and false-negative predictions.
/// The three always sum to exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub tr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

impl QualityVector {
    pub fn from_counts(n_true: usize, n_fp: usize, n_fn: usize) -> Result<Self> {
        let total = n_true + n_fp + n_fn;
        if total == 0 {
            return Err(Error::Empty("prediction counts"));
        }
        let n = total as f64;
        let tr = n_true as f64 / n;
        let fpr = n_fp as f64 / n;
        let mut fnr = n_fn as f64 / n;
        if tr + fpr + fnr != 1.0 {
            // off by an ulp; absorb the residual in the last component
            fnr = 1.0 - (tr + fpr);
        }
        let q = Self { tr, fpr, fnr };
        debug_assert!(q.is_closed());
        Ok(q)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.tr, self.fpr, self.fnr]
    }

    pub fn is_closed(&self) -> bool {
        self.tr + self.fpr + self.fnr == 1.0 && self.as_array().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

pub fn prediction_quality(predicted: &[Label], truth: &[Label]) -> Result<QualityVector> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    let (mut n_true, mut n_fp, mut n_fn) = (0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        if p == t {
            n_true += 1;
        } else if p == UNDAMAGED {
            n_fn += 1;
        } else {
            n_fp += 1;
        }
    }
    QualityVector::from_counts(n_true, n_fp, n_fn)
}
