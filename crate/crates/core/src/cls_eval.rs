//! Classification metrics: top-1 error and LCA-based mistake severity.
//!
//! Rankings sort scores descending and break ties by ascending class index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsPrediction {
    pub sample_id: String,
    pub leaf_scores: Vec<f64>,
    pub true_leaf: usize,
}

impl ClsPrediction {
    pub fn new(sample_id: impl Into<String>, leaf_scores: Vec<f64>, true_leaf: usize) -> Self {
        Self {
            sample_id: sample_id.into(),
            leaf_scores,
            true_leaf,
        }
    }

    /// Highest-scoring leaf, lowest index on ties; 0 for an empty score list.
    pub fn argmax(&self) -> usize {
        ranking(&self.leaf_scores).first().copied().unwrap_or(0)
    }
}

/// Class indices ordered by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Checks every prediction against the taxonomy's leaf count.
pub fn validate_predictions(preds: &[ClsPrediction], t: &Taxonomy) -> Result<()> {
    let k = t.num_leaves();
    for p in preds {
        if p.leaf_scores.len() != k {
            return Err(Error::DataMismatch(format!(
                "sample `{}` has {} scores, taxonomy has {k} leaves",
                p.sample_id,
                p.leaf_scores.len()
            )));
        }
        if p.true_leaf >= k {
            return Err(Error::DataMismatch(format!(
                "sample `{}` has true leaf {} but taxonomy has {k} leaves",
                p.sample_id, p.true_leaf
            )));
        }
        if p.leaf_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::DataMismatch(format!(
                "sample `{}` has non-finite scores",
                p.sample_id
            )));
        }
    }
    Ok(())
}

pub fn top1_error(preds: &[ClsPrediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let wrong = preds.iter().filter(|p| p.argmax() != p.true_leaf).count();
    Ok(wrong as f64 / preds.len() as f64)
}

/// Mean LCA height over misclassified samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MistakeDistance {
    pub value: f64,
    pub mistakes: usize,
    /// Set when no sample was misclassified; `value` is then 0.
    pub no_mistakes: bool,
}

pub fn hier_dist_mistake(preds: &[ClsPrediction], t: &Taxonomy) -> Result<MistakeDistance> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    validate_predictions(preds, t)?;
    let mut total = 0usize;
    let mut mistakes = 0usize;
    for p in preds {
        let top = p.argmax();
        if top != p.true_leaf {
            total += t.lca_height(top, p.true_leaf)?;
            mistakes += 1;
        }
    }
    Ok(MistakeDistance {
        value: if mistakes == 0 {
            0.0
        } else {
            total as f64 / mistakes as f64
        },
        mistakes,
        no_mistakes: mistakes == 0,
    })
}

/// Mean over samples of the mean LCA height between the true leaf and each
/// of the `k` top-ranked leaves.
pub fn avg_hier_dist_at_k(preds: &[ClsPrediction], t: &Taxonomy, k: usize) -> Result<f64> {
    let max = t.num_leaves();
    if k == 0 || k > max {
        return Err(Error::KOutOfRange { k, max });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    validate_predictions(preds, t)?;
    let mut total = 0.0;
    for p in preds {
        let mut sum = 0usize;
        for &c in ranking(&p.leaf_scores).iter().take(k) {
            sum += t.lca_height(c, p.true_leaf)?;
        }
        total += sum as f64 / k as f64;
    }
    Ok(total / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClsReport {
    pub samples: usize,
    pub top1_error: f64,
    pub hier_dist_mistake: MistakeDistance,
    /// `(k, avg hierarchical distance @k)`.
    pub avg_hier_dist: Vec<(usize, f64)>,
}

pub fn evaluate(preds: &[ClsPrediction], t: &Taxonomy, ks: &[usize]) -> Result<ClsReport> {
    let avg_hier_dist = ks
        .iter()
        .map(|&k| Ok((k, avg_hier_dist_at_k(preds, t, k)?)))
        .collect::<Result<_>>()?;
    Ok(ClsReport {
        samples: preds.len(),
        top1_error: top1_error(preds)?,
        hier_dist_mistake: hier_dist_mistake(preds, t)?,
        avg_hier_dist,
    })
}
