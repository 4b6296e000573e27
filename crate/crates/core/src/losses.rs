//! Base losses and the weighted multi-level hierarchical loss.
//!
//! Losses consume probabilities, not logits. Every logarithm is clamped at
//! [`LOG_EPS`] so that a zero probability yields a large but finite loss and a
//! zero gradient contribution from the clamped term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{pull_back, AggregationMode, Aggregator, ProbVector};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

pub const LOG_EPS: f64 = 1e-12;

#[inline]
fn clamped_ln(x: f64) -> f64 {
    x.max(LOG_EPS).ln()
}

/// Per-level loss weights, leaf level first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LevelWeights(Vec<f64>);

impl LevelWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidWeights("no levels".into()));
        }
        if let Some(w) = values.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weight {w} is negative or not finite"
            )));
        }
        if values.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidWeights("all weights are zero".into()));
        }
        Ok(Self(values))
    }

    /// `[1, 0, ..., 0]`: only the leaf level contributes.
    pub fn leaf_only(levels: usize) -> Self {
        let mut v = vec![0.0; levels.max(1)];
        v[0] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for LevelWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LevelWeights> for Vec<f64> {
    fn from(w: LevelWeights) -> Self {
        w.0
    }
}

impl std::ops::Add for &LevelWeights {
    type Output = LevelWeights;

    fn add(self, rhs: &LevelWeights) -> LevelWeights {
        assert_eq!(self.len(), rhs.len(), "weight lengths differ");
        LevelWeights(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

/// `w_l = exp(-alpha * (l - 1))` for `l = 1..=levels`.
pub fn exp_level_weights(alpha: f64, levels: usize) -> Result<LevelWeights> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    if levels == 0 {
        return Err(Error::InvalidWeights("taxonomy depth must be at least 1".into()));
    }
    Ok(LevelWeights(
        (0..levels).map(|h| (-alpha * h as f64).exp()).collect(),
    ))
}

/// Fixed weighting schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// 0.8 on the leaf, 0.1 on each of the next two levels, 0 above.
    LeafFocusedDet,
    /// 0.7 on the leaf, 0.3 split equally over the remaining levels.
    LeafFocusedCls,
    /// 0.1 on the leaf, 0.9 split equally over the remaining levels.
    HierFocusedCls,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::LeafFocusedDet => "leaf_focused_det",
            WeightScheme::LeafFocusedCls => "leaf_focused_cls",
            WeightScheme::HierFocusedCls => "hier_focused_cls",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "leaf_focused_det" => Ok(WeightScheme::LeafFocusedDet),
            "leaf_focused_cls" => Ok(WeightScheme::LeafFocusedCls),
            "hier_focused_cls" => Ok(WeightScheme::HierFocusedCls),
            other => Err(Error::Config(format!("unknown weight scheme `{other}`"))),
        }
    }
}

pub fn named_weight_scheme(scheme: WeightScheme, levels: usize) -> Result<LevelWeights> {
    let depth_error = |min_levels| Error::SchemeDepthMismatch {
        scheme: scheme.name().into(),
        min_levels,
        levels,
    };
    // Weights are built in tenths and divided by ten once, so the documented
    // decimals (0.8, 0.1, 0.3, ...) come out as the nearest doubles.
    let (leaf_tenths, rest_tenths) = match scheme {
        WeightScheme::LeafFocusedDet => {
            if levels < 3 {
                return Err(depth_error(3));
            }
            let mut v = vec![0.0; levels];
            v[0] = 8.0 / 10.0;
            v[1] = 1.0 / 10.0;
            v[2] = 1.0 / 10.0;
            return Ok(LevelWeights(v));
        }
        WeightScheme::LeafFocusedCls => (7.0, 3.0),
        WeightScheme::HierFocusedCls => (1.0, 9.0),
    };
    if levels < 2 {
        return Err(depth_error(2));
    }
    let share = rest_tenths / (levels - 1) as f64;
    let mut v = vec![share / 10.0; levels];
    v[0] = leaf_tenths / 10.0;
    Ok(LevelWeights(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha_balance: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha_balance: 0.25,
        }
    }
}

impl FocalParams {
    pub fn new(gamma: f64, alpha_balance: f64) -> Result<Self> {
        let fp = Self {
            gamma,
            alpha_balance,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!(
                "focal gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_balance) {
            return Err(Error::Config(format!(
                "focal alpha_balance must lie in [0, 1], got {}",
                self.alpha_balance
            )));
        }
        Ok(())
    }
}

/// Ground-truth leaf and its ancestor at every level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub leaf_index: usize,
    pub per_level_targets: Vec<usize>,
}

impl TargetSpec {
    pub fn new(t: &Taxonomy, leaf_index: usize) -> Result<Self> {
        Ok(Self {
            leaf_index,
            per_level_targets: t.ancestor_path(leaf_index)?.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseLoss {
    CrossEntropy,
    Focal(FocalParams),
}

impl BaseLoss {
    /// Loss of raw values against `target`, without domain checks.
    pub fn value(&self, values: &[f64], target: usize) -> f64 {
        match self {
            BaseLoss::CrossEntropy => nll(values, target),
            BaseLoss::Focal(fp) => focal_raw(values, target, fp),
        }
    }

    /// Gradient of [`BaseLoss::value`] with respect to `values`.
    pub fn gradient(&self, values: &[f64], target: usize) -> Vec<f64> {
        match self {
            BaseLoss::CrossEntropy => nll_grad(values, target),
            BaseLoss::Focal(fp) => focal_grad(values, target, fp),
        }
    }
}

fn check_target(target: usize, len: usize) -> Result<()> {
    if target >= len {
        return Err(Error::IndexOutOfRange { index: target, len });
    }
    Ok(())
}

fn nll(values: &[f64], target: usize) -> f64 {
    -clamped_ln(values[target])
}

fn nll_grad(values: &[f64], target: usize) -> Vec<f64> {
    let mut g = vec![0.0; values.len()];
    let p = values[target];
    if p > LOG_EPS {
        g[target] = -1.0 / p;
    }
    g
}

/// Cross-entropy `-ln p[target]` of a distribution.
pub fn cross_entropy(p: &ProbVector, target: usize) -> Result<f64> {
    if !p.is_distribution() {
        return Err(Error::NotADistribution(
            "cross-entropy needs a distribution-tagged vector".into(),
        ));
    }
    check_target(target, p.len())?;
    Ok(nll(p.values(), target))
}

/// `(p_t, alpha_t, d p_t / d p)` for one class.
#[inline]
fn focal_terms(p: f64, positive: bool, fp: &FocalParams) -> (f64, f64, f64) {
    if positive {
        (p, fp.alpha_balance, 1.0)
    } else {
        (1.0 - p, 1.0 - fp.alpha_balance, -1.0)
    }
}

fn focal_raw(values: &[f64], target: usize, fp: &FocalParams) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let (pt, at, _) = focal_terms(p, c == target, fp);
            -at * (1.0 - pt).powf(fp.gamma) * clamped_ln(pt)
        })
        .sum()
}

fn focal_grad(values: &[f64], target: usize, fp: &FocalParams) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let (pt, at, sign) = focal_terms(p, c == target, fp);
            let log_pt = clamped_ln(pt);
            let modulate = if fp.gamma == 0.0 || log_pt == 0.0 {
                0.0
            } else {
                fp.gamma * (1.0 - pt).powf(fp.gamma - 1.0) * log_pt
            };
            let log_term = if pt > LOG_EPS {
                (1.0 - pt).powf(fp.gamma) / pt
            } else {
                0.0
            };
            sign * at * (modulate - log_term)
        })
        .collect()
}

/// Sigmoid focal loss summed over classes.
pub fn focal_loss(p: &ProbVector, target: usize, fp: &FocalParams) -> Result<f64> {
    fp.validate()?;
    check_target(target, p.len())?;
    Ok(focal_raw(p.values(), target, fp))
}

/// Total hierarchical loss with its per-level terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted base loss at each level, leaf first.
    pub per_level: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `sum_l w_l * L_l(aggregated_l, target_l)` over a fixed taxonomy, mode,
/// weighting and base loss.
#[derive(Debug, Clone)]
pub struct HierarchicalLoss<'t> {
    aggregator: Aggregator<'t>,
    weights: LevelWeights,
    base: BaseLoss,
}

impl<'t> HierarchicalLoss<'t> {
    pub fn new(
        t: &'t Taxonomy,
        weights: LevelWeights,
        mode: AggregationMode,
        base: BaseLoss,
    ) -> Result<Self> {
        if weights.len() != t.levels() {
            return Err(Error::WeightLengthMismatch {
                got: weights.len(),
                expected: t.levels(),
            });
        }
        if let BaseLoss::Focal(fp) = &base {
            fp.validate()?;
            if mode == AggregationMode::Sum {
                return Err(Error::Config(
                    "sum aggregation pairs with cross-entropy; use union for focal loss".into(),
                ));
            }
        }
        Ok(Self {
            aggregator: Aggregator::new(t, mode)?,
            weights,
            base,
        })
    }

    pub fn taxonomy(&self) -> &'t Taxonomy {
        self.aggregator.taxonomy()
    }

    pub fn mode(&self) -> AggregationMode {
        self.aggregator.mode()
    }

    pub fn weights(&self) -> &LevelWeights {
        &self.weights
    }

    pub fn base(&self) -> BaseLoss {
        self.base
    }

    fn check_input(&self, leaf_p: &ProbVector, target: &TargetSpec) -> Result<()> {
        let t = self.taxonomy();
        if leaf_p.level() != 1 {
            return Err(Error::LevelMismatch(format!(
                "hierarchical loss takes leaf-level input, got level {}",
                leaf_p.level()
            )));
        }
        if leaf_p.len() != t.num_leaves() {
            return Err(Error::LevelMismatch(format!(
                "expected {} leaf probabilities, got {}",
                t.num_leaves(),
                leaf_p.len()
            )));
        }
        if self.mode() == AggregationMode::Sum && !leaf_p.is_distribution() {
            return Err(Error::NotADistribution(
                "sum aggregation needs a distribution-tagged vector".into(),
            ));
        }
        self.check_target(target)
    }

    fn check_target(&self, target: &TargetSpec) -> Result<()> {
        let expected = TargetSpec::new(self.taxonomy(), target.leaf_index)?;
        if &expected != target {
            return Err(Error::Config(
                "target's per-level indices do not follow the taxonomy".into(),
            ));
        }
        Ok(())
    }

    pub fn evaluate(&self, leaf_p: &ProbVector, target: &TargetSpec) -> Result<LossBreakdown> {
        self.check_input(leaf_p, target)?;
        self.evaluate_raw(leaf_p.values(), target)
    }

    pub fn gradient(&self, leaf_p: &ProbVector, target: &TargetSpec) -> Result<Vec<f64>> {
        self.check_input(leaf_p, target)?;
        self.gradient_raw(leaf_p.values(), target)
    }

    /// Same formula as [`HierarchicalLoss::evaluate`] without the probability
    /// domain checks, for finite-difference probes and training loops.
    pub fn evaluate_raw(&self, leaf: &[f64], target: &TargetSpec) -> Result<LossBreakdown> {
        let levels = self.aggregator.all_levels(leaf)?;
        let per_level: Vec<f64> = levels
            .iter()
            .zip(&target.per_level_targets)
            .map(|(v, &y)| self.base.value(v, y))
            .collect();
        let total = per_level
            .iter()
            .zip(self.weights.values())
            .map(|(l, w)| w * l)
            .sum();
        Ok(LossBreakdown {
            total,
            per_level,
            weights: self.weights.values().to_vec(),
        })
    }

    /// Gradient of the total loss with respect to the leaf values.
    pub fn gradient_raw(&self, leaf: &[f64], target: &TargetSpec) -> Result<Vec<f64>> {
        let levels = self.aggregator.all_levels(leaf)?;
        let w = self.weights.values();
        let local = |l: usize| -> Vec<f64> {
            self.base
                .gradient(&levels[l], target.per_level_targets[l])
                .into_iter()
                .map(|g| w[l] * g)
                .collect()
        };
        let top = levels.len() - 1;
        let mut acc = local(top);
        for l in (0..top).rev() {
            let jac = self.aggregator.step_jacobian(&levels[l], l + 1)?;
            let from_above = pull_back(&jac, &acc);
            acc = local(l)
                .into_iter()
                .zip(from_above)
                .map(|(a, b)| a + b)
                .collect();
        }
        Ok(acc)
    }
}

pub fn hierarchical_loss(
    leaf_p: &ProbVector,
    t: &Taxonomy,
    target: &TargetSpec,
    weights: &LevelWeights,
    mode: AggregationMode,
    base: BaseLoss,
) -> Result<LossBreakdown> {
    HierarchicalLoss::new(t, weights.clone(), mode, base)?.evaluate(leaf_p, target)
}

pub fn hierarchical_gradient(
    leaf_p: &ProbVector,
    t: &Taxonomy,
    target: &TargetSpec,
    weights: &LevelWeights,
    mode: AggregationMode,
    base: BaseLoss,
) -> Result<Vec<f64>> {
    HierarchicalLoss::new(t, weights.clone(), mode, base)?.gradient(leaf_p, target)
}

/// Conditional-probability hierarchical cross-entropy (comparison baseline).
///
/// Along the target's ancestor path `C_1 (leaf), C_2, ..., C_L (root)`:
/// `sum_{l < L} exp(-alpha (l - 1)) * -ln(P(C_l) / P(C_{l+1}))`, where `P(C)`
/// is the total leaf probability under `C`. Zero denominators are clamped at
/// [`LOG_EPS`].
pub fn bertinetto_hxe(
    leaf_p: &ProbVector,
    t: &Taxonomy,
    target: &TargetSpec,
    alpha: f64,
) -> Result<f64> {
    if !leaf_p.is_distribution() {
        return Err(Error::NotADistribution(
            "conditional hierarchical cross-entropy needs a distribution".into(),
        ));
    }
    if leaf_p.level() != 1 || leaf_p.len() != t.num_leaves() {
        return Err(Error::LevelMismatch(format!(
            "expected {} leaf probabilities at level 1",
            t.num_leaves()
        )));
    }
    let weights = exp_level_weights(alpha, t.levels())?;
    let path = t.ancestor_path(target.leaf_index)?;
    let sums = Aggregator::new(t, AggregationMode::Sum)?.all_levels(leaf_p.values())?;
    let mut loss = 0.0;
    for l in 0..t.levels() - 1 {
        let num = sums[l][path[l]];
        let den = sums[l + 1][path[l + 1]].max(LOG_EPS);
        loss += weights.values()[l] * -clamped_ln(num / den);
    }
    Ok(loss)
}

/// Which per-level loss a [`LossConfig`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    #[default]
    #[serde(alias = "cross_entropy")]
    Ce,
    Focal,
}

/// Loss block of a run configuration.
///
/// Exactly one of `weights`, `scheme` or `exp_alpha` selects the level weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub mode: AggregationMode,
    #[serde(default)]
    pub base: BaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<WeightScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_alpha: Option<f64>,
    #[serde(default)]
    pub focal: FocalParams,
}

impl LossConfig {
    pub fn base_loss(&self) -> BaseLoss {
        match self.base {
            BaseKind::Ce => BaseLoss::CrossEntropy,
            BaseKind::Focal => BaseLoss::Focal(self.focal),
        }
    }

    pub fn level_weights(&self, levels: usize) -> Result<LevelWeights> {
        match (&self.weights, self.scheme, self.exp_alpha) {
            (Some(w), None, None) => LevelWeights::new(w.clone()),
            (None, Some(s), None) => named_weight_scheme(s, levels),
            (None, None, Some(a)) => exp_level_weights(a, levels),
            (None, None, None) => Err(Error::Config(
                "loss block needs one of `weights`, `scheme` or `exp_alpha`".into(),
            )),
            _ => Err(Error::Config(
                "loss block sets more than one of `weights`, `scheme`, `exp_alpha`".into(),
            )),
        }
    }

    pub fn build<'t>(&self, t: &'t Taxonomy) -> Result<HierarchicalLoss<'t>> {
        HierarchicalLoss::new(t, self.level_weights(t.levels())?, self.mode, self.base_loss())
    }
}

/// Softmax of a logit vector (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Builds a scores vector, validating the unit interval.
pub fn scores_from_logits(logits: &[f64]) -> Result<ProbVector> {
    ProbVector::scores(1, logits.iter().map(|&z| sigmoid(z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyNode;

    fn seven_node() -> Taxonomy {
        Taxonomy::from_nodes(vec![
            TaxonomyNode::new("root", None, 3),
            TaxonomyNode::new("m0", Some("root"), 2),
            TaxonomyNode::new("m1", Some("root"), 2),
            TaxonomyNode::new("a", Some("m0"), 1),
            TaxonomyNode::new("b", Some("m0"), 1),
            TaxonomyNode::new("c", Some("m1"), 1),
            TaxonomyNode::new("d", Some("m1"), 1),
        ])
        .unwrap()
    }

    fn dist(v: &[f64]) -> ProbVector {
        ProbVector::distribution(1, v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&dist(&[0.0, 1.0, 0.0]), 1).unwrap(), 0.0);
        let ce = cross_entropy(&dist(&[0.25; 4]), 3).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!((ce - 1.3863).abs() < 1e-4);
        let clamped = cross_entropy(&dist(&[1.0, 0.0]), 1).unwrap();
        assert_eq!(clamped, -LOG_EPS.ln());
        assert!(clamped.is_finite());
        assert!(matches!(
            cross_entropy(&dist(&[1.0, 0.0]), 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        let s = ProbVector::scores(1, vec![0.9, 0.9]).unwrap();
        assert!(matches!(
            cross_entropy(&s, 0),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn focal_examples() {
        let onehot = ProbVector::scores(1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(focal_loss(&onehot, 1, &FocalParams::new(2.0, 0.25).unwrap()).unwrap(), 0.0);

        let half = ProbVector::scores(1, vec![0.5]).unwrap();
        let g0 = focal_loss(&half, 0, &FocalParams::new(0.0, 1.0).unwrap()).unwrap();
        assert!((g0 - 2f64.ln()).abs() < 1e-15);
        let g2 = focal_loss(&half, 0, &FocalParams::new(2.0, 1.0).unwrap()).unwrap();
        assert!((g2 - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((g2 - 0.1733).abs() < 1e-4);
    }

    #[test]
    fn focal_reduces_to_half_bce() {
        let p = [0.2, 0.7, 0.45];
        let fl = focal_loss(
            &ProbVector::scores(1, p.to_vec()).unwrap(),
            1,
            &FocalParams::new(0.0, 0.5).unwrap(),
        )
        .unwrap();
        let bce: f64 = -(0.8f64.ln() + 0.7f64.ln() + 0.55f64.ln());
        assert!((fl - 0.5 * bce).abs() < 1e-14);
    }

    #[test]
    fn focal_params_validation() {
        assert!(FocalParams::new(-1.0, 0.5).is_err());
        assert!(FocalParams::new(f64::NAN, 0.5).is_err());
        assert!(FocalParams::new(2.0, 1.5).is_err());
    }

    #[test]
    fn hierarchical_uniform_fixture() {
        let t = seven_node();
        let target = TargetSpec::new(&t, 0).unwrap();
        let w = LevelWeights::new(vec![1.0, 1.0, 1.0]).unwrap();
        let out = hierarchical_loss(
            &dist(&[0.25; 4]),
            &t,
            &target,
            &w,
            AggregationMode::Sum,
            BaseLoss::CrossEntropy,
        )
        .unwrap();
        let expect = 4f64.ln() + 2f64.ln();
        assert!((out.total - expect).abs() < 1e-12);
        assert!((out.total - 2.0794).abs() < 1e-4);
        assert_eq!(out.per_level.len(), 3);
        assert_eq!(out.per_level[2], 0.0);
    }

    #[test]
    fn hierarchical_onehot_is_zero() {
        let t = seven_node();
        for leaf in 0..4 {
            let mut v = vec![0.0; 4];
            v[leaf] = 1.0;
            let target = TargetSpec::new(&t, leaf).unwrap();
            let w = LevelWeights::new(vec![0.3, 0.5, 2.0]).unwrap();
            let ce = hierarchical_loss(&dist(&v), &t, &target, &w, AggregationMode::Sum, BaseLoss::CrossEntropy)
                .unwrap();
            assert_eq!(ce.total, 0.0);
            let fl = hierarchical_loss(
                &ProbVector::scores(1, v.clone()).unwrap(),
                &t,
                &target,
                &w,
                AggregationMode::Union,
                BaseLoss::Focal(FocalParams::default()),
            )
            .unwrap();
            assert_eq!(fl.total, 0.0);
        }
    }

    #[test]
    fn leaf_only_weights_match_base() {
        let t = seven_node();
        let p = dist(&[0.1, 0.2, 0.3, 0.4]);
        let target = TargetSpec::new(&t, 2).unwrap();
        let out = hierarchical_loss(
            &p,
            &t,
            &target,
            &LevelWeights::leaf_only(3),
            AggregationMode::Sum,
            BaseLoss::CrossEntropy,
        )
        .unwrap();
        assert_eq!(out.total, cross_entropy(&p, 2).unwrap());

        let g = hierarchical_gradient(
            &p,
            &t,
            &target,
            &LevelWeights::leaf_only(3),
            AggregationMode::Sum,
            BaseLoss::CrossEntropy,
        )
        .unwrap();
        assert_eq!(g, vec![0.0, 0.0, -1.0 / 0.3, 0.0]);
    }

    #[test]
    fn incompatible_configurations() {
        let t = seven_node();
        let w = LevelWeights::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            HierarchicalLoss::new(&t, w, AggregationMode::Sum, BaseLoss::CrossEntropy),
            Err(Error::WeightLengthMismatch { got: 2, expected: 3 })
        ));
        let w = LevelWeights::leaf_only(3);
        assert!(matches!(
            HierarchicalLoss::new(&t, w.clone(), AggregationMode::Sum, BaseLoss::Focal(FocalParams::default())),
            Err(Error::Config(_))
        ));
        let loss = HierarchicalLoss::new(&t, w, AggregationMode::Sum, BaseLoss::CrossEntropy).unwrap();
        let scores = ProbVector::scores(1, vec![0.5; 4]).unwrap();
        let target = TargetSpec::new(&t, 0).unwrap();
        assert!(matches!(
            loss.evaluate(&scores, &target),
            Err(Error::NotADistribution(_))
        ));
        let bad_target = TargetSpec {
            leaf_index: 0,
            per_level_targets: vec![0, 1, 0],
        };
        assert!(loss.evaluate(&dist(&[0.25; 4]), &bad_target).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(LevelWeights::new(vec![]).is_err());
        assert!(LevelWeights::new(vec![0.0, 0.0]).is_err());
        assert!(LevelWeights::new(vec![1.0, -0.1]).is_err());
        assert!(LevelWeights::new(vec![1.0, f64::INFINITY]).is_err());
        let w: LevelWeights = serde_json::from_str("[0.5, 0.5]").unwrap();
        assert_eq!(w.values(), [0.5, 0.5]);
        assert!(serde_json::from_str::<LevelWeights>("[0, 0]").is_err());
    }

    #[test]
    fn exp_weights() {
        let w = exp_level_weights(0.5, 3).unwrap();
        let expect = [1.0, 0.60653, 0.36788];
        for (a, b) in w.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(exp_level_weights(1.0, 1).unwrap().values(), [1.0]);
        let big = exp_level_weights(1e3, 3).unwrap();
        assert_eq!(big.values()[0], 1.0);
        assert!(big.values()[1] < 1e-300 && big.values()[2] < 1e-300);
        assert!(matches!(exp_level_weights(0.0, 3), Err(Error::NonPositiveAlpha(_))));
        assert!(matches!(exp_level_weights(-1.0, 3), Err(Error::NonPositiveAlpha(_))));
    }

    #[test]
    fn weight_schemes() {
        assert_eq!(
            named_weight_scheme(WeightScheme::LeafFocusedDet, 3).unwrap().values(),
            [0.8, 0.1, 0.1]
        );
        assert_eq!(
            named_weight_scheme(WeightScheme::LeafFocusedDet, 5).unwrap().values(),
            [0.8, 0.1, 0.1, 0.0, 0.0]
        );
        assert_eq!(
            named_weight_scheme(WeightScheme::LeafFocusedCls, 4).unwrap().values(),
            [0.7, 0.1, 0.1, 0.1]
        );
        assert_eq!(
            named_weight_scheme(WeightScheme::HierFocusedCls, 4).unwrap().values(),
            [0.1, 0.3, 0.3, 0.3]
        );
        assert!(matches!(
            named_weight_scheme(WeightScheme::LeafFocusedDet, 2),
            Err(Error::SchemeDepthMismatch { min_levels: 3, .. })
        ));
        assert!(matches!(
            named_weight_scheme(WeightScheme::HierFocusedCls, 1),
            Err(Error::SchemeDepthMismatch { .. })
        ));
        assert_eq!("hier-focused-cls".parse::<WeightScheme>().unwrap(), WeightScheme::HierFocusedCls);
    }

    #[test]
    fn bertinetto_examples() {
        let t = seven_node();
        for leaf in 0..4 {
            let mut v = vec![0.0; 4];
            v[leaf] = 1.0;
            let target = TargetSpec::new(&t, leaf).unwrap();
            assert_eq!(bertinetto_hxe(&dist(&v), &t, &target, 0.1).unwrap(), 0.0);
        }

        let t2 = Taxonomy::from_nodes(vec![
            TaxonomyNode::new("root", None, 2),
            TaxonomyNode::new("a", Some("root"), 1),
            TaxonomyNode::new("b", Some("root"), 1),
        ])
        .unwrap();
        let p = dist(&[0.3, 0.7]);
        let target = TargetSpec::new(&t2, 0).unwrap();
        let hxe = bertinetto_hxe(&p, &t2, &target, 0.5).unwrap();
        assert!((hxe - cross_entropy(&p, 0).unwrap()).abs() < 1e-15);

        // uniform leaves: each conditional is 1/2, weights exp(0), exp(-0.1)
        let target = TargetSpec::new(&t, 0).unwrap();
        let hxe = bertinetto_hxe(&dist(&[0.25; 4]), &t, &target, 0.1).unwrap();
        let expect = 2f64.ln() * (1.0 + (-0.1f64).exp());
        assert!((hxe - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_config_parsing() {
        let t = seven_node();
        let cfg: LossConfig = serde_json::from_str(
            r#"{"mode": "union", "base": "focal", "scheme": "leaf_focused_det",
                "focal": {"gamma": 1.5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.focal.alpha_balance, 0.25);
        let loss = cfg.build(&t).unwrap();
        assert_eq!(loss.weights().values(), [0.8, 0.1, 0.1]);
        assert_eq!(loss.base(), BaseLoss::Focal(FocalParams::new(1.5, 0.25).unwrap()));

        let cfg: LossConfig =
            serde_json::from_str(r#"{"mode": "sum", "exp_alpha": 0.5}"#).unwrap();
        assert_eq!(cfg.base_loss(), BaseLoss::CrossEntropy);
        assert!(cfg.build(&t).is_ok());

        let none: LossConfig = serde_json::from_str(r#"{"mode": "sum"}"#).unwrap();
        assert!(matches!(none.build(&t), Err(Error::Config(_))));
        let both: LossConfig =
            serde_json::from_str(r#"{"mode": "sum", "exp_alpha": 0.5, "weights": [1, 0, 0]}"#)
                .unwrap();
        assert!(matches!(both.build(&t), Err(Error::Config(_))));
    }

    #[test]
    fn softmax_and_sigmoid() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(scores_from_logits(&[-3.0, 0.0, 3.0]).is_ok());
    }
}
