//! Desk-scale training demo: a linear classifier on 2-D points trained by
//! full-batch gradient descent with either a plain leaf-level loss or a
//! hierarchical loss.
//!
//! The model maps `[x, y, 1]` to one logit per leaf. Softmax is used for sum
//! aggregation and plain cross-entropy, a per-class sigmoid for union
//! aggregation and plain focal loss. Gradients with respect to probabilities
//! come from the loss module and are chained through the output function
//! analytically.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationMode;
use crate::cls_eval::{hier_dist_mistake, top1_error, ClsPrediction};
use crate::error::{Error, Result};
use crate::losses::{sigmoid, softmax, BaseLoss, FocalParams, HierarchicalLoss, LevelWeights, LossConfig, TargetSpec};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Isotropic Gaussian clusters, `per_class` points around each center; the
/// label of a point is the index of its center.
pub fn gaussian_clusters<R: Rng>(
    centers: &[[f64; 2]],
    std: f64,
    per_class: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let noise = Normal::new(0.0, std)
        .map_err(|e| Error::Config(format!("invalid cluster spread {std}: {e}")))?;
    let mut points = Vec::with_capacity(centers.len() * per_class);
    let mut labels = Vec::with_capacity(centers.len() * per_class);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            points.push([c[0] + noise.sample(rng), c[1] + noise.sample(rng)]);
            labels.push(label);
        }
    }
    Ok(Dataset { points, labels })
}

/// Four overlapping leaf clusters for a two-group taxonomy `{0, 1} | {2, 3}`:
/// leaves 0 and 1 overlap each other and leaf 2, leaf 3 sits apart from the
/// rest. Returns `(train, held_out)`.
pub fn sibling_overlap_dataset(seed: u64, per_class: usize) -> Result<(Dataset, Dataset)> {
    let centers = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.5], [3.0, 0.5]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = gaussian_clusters(&centers, 0.7, per_class, &mut rng)?;
    let test = gaussian_clusters(&centers, 0.7, per_class, &mut rng)?;
    Ok((train, test))
}

/// Objective for [`train_demo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLoss {
    /// Softmax + cross-entropy on the leaf level only.
    PlainCe,
    /// Sigmoid + focal loss on the leaf level only.
    PlainFocal(FocalParams),
    Hierarchical(LossConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: TrainLoss,
    pub steps: usize,
    pub step_size: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the initial weights.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    0.01
}

impl TrainConfig {
    pub fn new(loss: TrainLoss, steps: usize, step_size: f64, seed: u64) -> Self {
        Self {
            loss,
            steps,
            step_size,
            seed,
            init_scale: default_init_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss before the update of this epoch.
    pub loss: f64,
    pub top1_error: f64,
    pub mistake_distance: f64,
    pub eval_top1_error: Option<f64>,
    pub eval_mistake_distance: Option<f64>,
}

/// Linear model: `logits = W [x, y, 1]`, one row per leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<[f64; 3]>,
    pub output: AggregationMode,
}

impl LinearModel {
    pub fn logits(&self, p: &[f64; 2]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w[0] * p[0] + w[1] * p[1] + w[2])
            .collect()
    }

    /// Softmax for [`AggregationMode::Sum`], sigmoid for union.
    pub fn probabilities(&self, p: &[f64; 2]) -> Vec<f64> {
        let z = self.logits(p);
        match self.output {
            AggregationMode::Sum => softmax(&z),
            AggregationMode::Union => z.into_iter().map(sigmoid).collect(),
        }
    }

    pub fn predictions(&self, data: &Dataset) -> Vec<ClsPrediction> {
        data.points
            .iter()
            .zip(&data.labels)
            .enumerate()
            .map(|(i, (p, &y))| ClsPrediction::new(i.to_string(), self.probabilities(p), y))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainResult {
    pub model: LinearModel,
    pub trace: Vec<EpochMetrics>,
}

impl TrainResult {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.trace.last().expect("at least one epoch")
    }

    /// Trace as CSV: `epoch,loss,top1_error,mistake_distance,eval_top1_error,eval_mistake_distance`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "epoch,loss,top1_error,mistake_distance,eval_top1_error,eval_mistake_distance"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
        for m in &self.trace {
            writeln!(
                w,
                "{},{:.12},{:.12},{:.12},{},{}",
                m.epoch,
                m.loss,
                m.top1_error,
                m.mistake_distance,
                opt(m.eval_top1_error),
                opt(m.eval_mistake_distance)
            )?;
        }
        Ok(())
    }
}

enum Objective<'t> {
    Plain(BaseLoss),
    Hier(HierarchicalLoss<'t>),
}

impl Objective<'_> {
    fn loss_and_grad(&self, probs: &[f64], target: &TargetSpec) -> Result<(f64, Vec<f64>)> {
        match self {
            Objective::Plain(base) => Ok((
                base.value(probs, target.leaf_index),
                base.gradient(probs, target.leaf_index),
            )),
            Objective::Hier(h) => Ok((
                h.evaluate_raw(probs, target)?.total,
                h.gradient_raw(probs, target)?,
            )),
        }
    }
}

fn mistake_value(preds: &[ClsPrediction], t: &Taxonomy) -> Result<f64> {
    Ok(hier_dist_mistake(preds, t)?.value)
}

/// Trains a [`LinearModel`] by full-batch gradient descent.
///
/// `held_out`, when given, is evaluated after every epoch alongside the
/// training set. The result is a deterministic function of the inputs and
/// `cfg.seed`.
pub fn train_demo(
    train: &Dataset,
    held_out: Option<&Dataset>,
    t: &Taxonomy,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if cfg.steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    if !(cfg.step_size > 0.0) || !cfg.step_size.is_finite() {
        return Err(Error::Config(format!(
            "step_size must be positive, got {}",
            cfg.step_size
        )));
    }
    if !(cfg.init_scale >= 0.0) {
        return Err(Error::Config("init_scale must be non-negative".into()));
    }
    let k = t.num_leaves();
    for d in std::iter::once(train).chain(held_out) {
        if d.is_empty() || d.points.len() != d.labels.len() {
            return Err(Error::Config("dataset is empty or has mismatched labels".into()));
        }
        if let Some(&bad) = d.labels.iter().find(|&&y| y >= k) {
            return Err(Error::Config(format!(
                "label {bad} is not a leaf of a taxonomy with {k} leaves"
            )));
        }
    }

    let (objective, output) = match &cfg.loss {
        TrainLoss::PlainCe => (Objective::Plain(BaseLoss::CrossEntropy), AggregationMode::Sum),
        TrainLoss::PlainFocal(fp) => {
            fp.validate()?;
            (Objective::Plain(BaseLoss::Focal(*fp)), AggregationMode::Union)
        }
        TrainLoss::Hierarchical(lc) => (Objective::Hier(lc.build(t)?), lc.mode),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, cfg.init_scale.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut model = LinearModel {
        weights: (0..k)
            .map(|_| {
                if cfg.init_scale == 0.0 {
                    [0.0; 3]
                } else {
                    [init.sample(&mut rng), init.sample(&mut rng), init.sample(&mut rng)]
                }
            })
            .collect(),
        output,
    };
    let targets: Vec<TargetSpec> = train
        .labels
        .iter()
        .map(|&y| TargetSpec::new(t, y))
        .collect::<Result<_>>()?;

    let n = train.len() as f64;
    let mut trace = Vec::with_capacity(cfg.steps);
    for epoch in 0..cfg.steps {
        let mut grad = vec![[0.0f64; 3]; k];
        let mut total_loss = 0.0;
        for (p, target) in train.points.iter().zip(&targets) {
            let probs = model.probabilities(p);
            let (loss, g) = objective.loss_and_grad(&probs, target)?;
            total_loss += loss;
            let dz = logit_gradient(&probs, &g, output);
            let x = [p[0], p[1], 1.0];
            for (row, d) in grad.iter_mut().zip(&dz) {
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += d * xi;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= cfg.step_size * gi / n;
            }
        }

        let preds = model.predictions(train);
        let (eval_top1_error, eval_mistake_distance) = match held_out {
            Some(h) => {
                let hp = model.predictions(h);
                (Some(top1_error(&hp)?), Some(mistake_value(&hp, t)?))
            }
            None => (None, None),
        };
        trace.push(EpochMetrics {
            epoch: epoch + 1,
            loss: total_loss / n,
            top1_error: top1_error(&preds)?,
            mistake_distance: mistake_value(&preds, t)?,
            eval_top1_error,
            eval_mistake_distance,
        });
    }
    Ok(TrainResult { model, trace })
}

/// Chain rule from probability gradients to logit gradients.
fn logit_gradient(probs: &[f64], g: &[f64], output: AggregationMode) -> Vec<f64> {
    match output {
        AggregationMode::Sum => {
            let inner: f64 = g.iter().zip(probs).map(|(a, b)| a * b).sum();
            probs.iter().zip(g).map(|(p, gi)| p * (gi - inner)).collect()
        }
        AggregationMode::Union => probs.iter().zip(g).map(|(p, gi)| gi * p * (1.0 - p)).collect(),
    }
}

/// Weights of the plain trainer expressed as a hierarchical configuration.
pub fn leaf_only_config(mode: AggregationMode, levels: usize) -> LossConfig {
    LossConfig {
        mode,
        base: Default::default(),
        weights: Some(LevelWeights::leaf_only(levels).values().to_vec()),
        scheme: None,
        exp_alpha: None,
        focal: FocalParams::default(),
    }
}
