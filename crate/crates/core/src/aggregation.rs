//! Lifting class probabilities from one level of the hierarchy to the next.
//!
//! Two rules are supported. [`AggregationMode::Sum`] adds the children's
//! probabilities and is valid when siblings are mutually exclusive (softmax
//! outputs). [`AggregationMode::Union`] computes the probability that at least
//! one child occurs, treating siblings as independent events (sigmoid
//! outputs). The union is evaluated by explicit inclusion-exclusion over every
//! non-empty subset of a parent's children; an `m`-way intersection is the
//! product of the `m` member probabilities.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Tolerance on `sum == 1` for vectors tagged as distributions.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

/// Default cap on children per parent for subset enumeration (2^20 subsets).
pub const DEFAULT_MAX_CHILDREN: usize = 20;

/// Subsets are stored as `u32` bitmasks.
const HARD_MAX_CHILDREN: usize = 30;

/// Class probabilities for one instance at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    level: usize,
    values: Vec<f64>,
    distribution: bool,
}

impl ProbVector {
    /// A softmax-style vector: entries in `[0, 1]` summing to one.
    pub fn distribution(level: usize, values: Vec<f64>) -> Result<Self> {
        check_unit_interval(&values)?;
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::NotADistribution(format!(
                "entries sum to {total}, expected 1 ± {DISTRIBUTION_TOL}"
            )));
        }
        Ok(Self {
            level,
            values,
            distribution: true,
        })
    }

    /// Independent per-class scores (sigmoid-style), each in `[0, 1]`.
    pub fn scores(level: usize, values: Vec<f64>) -> Result<Self> {
        check_unit_interval(&values)?;
        Ok(Self {
            level,
            values,
            distribution: false,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_distribution(&self) -> bool {
        self.distribution
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn check_unit_interval(values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidProbability(format!(
            "entry {i} = {v} is outside [0, 1]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    Sum,
    Union,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Sum => "sum",
            AggregationMode::Union => "union",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(AggregationMode::Sum),
            "union" => Ok(AggregationMode::Union),
            other => Err(Error::Config(format!(
                "unknown aggregation mode `{other}` (expected `sum` or `union`)"
            ))),
        }
    }
}

/// Limits for inclusion-exclusion enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnionConfig {
    /// Parents with more children than this are not enumerated.
    pub max_children: usize,
    /// Above the limit, evaluate `1 - prod(1 - p)` instead of failing.
    pub fallback: bool,
}

impl Default for UnionConfig {
    fn default() -> Self {
        Self {
            max_children: DEFAULT_MAX_CHILDREN,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone)]
enum UnionGroup {
    /// `subsets[m - 1]` holds every `m`-child subset as a bitmask over
    /// `children`, in increasing mask order.
    Enumerated {
        children: Vec<usize>,
        subsets: Vec<Vec<u32>>,
    },
    ComplementProduct { children: Vec<usize> },
}

/// Precomputed per-parent subset tables for one level transition.
#[derive(Debug, Clone)]
pub struct UnionPlan {
    level: usize,
    num_children: usize,
    groups: Vec<UnionGroup>,
}

impl UnionPlan {
    pub fn new(t: &Taxonomy, level: usize, cfg: &UnionConfig) -> Result<Self> {
        if cfg.max_children > HARD_MAX_CHILDREN {
            return Err(Error::Config(format!(
                "max_children = {} exceeds the supported maximum of {HARD_MAX_CHILDREN}",
                cfg.max_children
            )));
        }
        let parents = t.parent_indices(level)?;
        let num_parents = t.level_size(level + 1)?;
        let mut groups = Vec::with_capacity(num_parents);
        for i in 0..num_parents {
            let children = t.children(level + 1, i)?.to_vec();
            debug_assert!(children.iter().all(|&k| parents[k] == i));
            let n = children.len();
            if n > cfg.max_children {
                if !cfg.fallback {
                    return Err(Error::ChildrenCountExceedsLimit {
                        parent: t.level_ids(level + 1)?[i].clone(),
                        children: n,
                        limit: cfg.max_children,
                    });
                }
                groups.push(UnionGroup::ComplementProduct { children });
                continue;
            }
            let mut subsets = vec![Vec::new(); n];
            for mask in 1u32..(1u32 << n) {
                subsets[mask.count_ones() as usize - 1].push(mask);
            }
            groups.push(UnionGroup::Enumerated { children, subsets });
        }
        Ok(Self {
            level,
            num_children: parents.len(),
            groups,
        })
    }

    /// The child level this plan maps from.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Total number of subset terms evaluated per instance.
    pub fn num_terms(&self) -> usize {
        self.groups
            .iter()
            .map(|g| match g {
                UnionGroup::Enumerated { subsets, .. } => subsets.iter().map(Vec::len).sum(),
                UnionGroup::ComplementProduct { children } => children.len(),
            })
            .sum()
    }

    /// Parent-level union probabilities for child-level `values`.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.num_children, "child vector length");
        self.groups
            .iter()
            .map(|g| match g {
                UnionGroup::Enumerated { children, subsets } => {
                    inclusion_exclusion(values, children, subsets)
                }
                UnionGroup::ComplementProduct { children } => {
                    let miss: f64 = children.iter().map(|&k| 1.0 - values[k]).product();
                    1.0 - miss
                }
            })
            .collect()
    }

    /// `d parent_i / d child_k`, shape `K_{l+1} x K_l`.
    pub fn jacobian(&self, values: &[f64]) -> Array2<f64> {
        assert_eq!(values.len(), self.num_children, "child vector length");
        let mut jac = Array2::zeros((self.groups.len(), self.num_children));
        for (i, g) in self.groups.iter().enumerate() {
            let children = match g {
                UnionGroup::Enumerated { children, .. } => children,
                UnionGroup::ComplementProduct { children } => children,
            };
            for &k in children {
                jac[[i, k]] = children
                    .iter()
                    .filter(|&&j| j != k)
                    .map(|&j| 1.0 - values[j])
                    .product();
            }
        }
        jac
    }
}

fn inclusion_exclusion(values: &[f64], children: &[usize], subsets: &[Vec<u32>]) -> f64 {
    let mut total = 0.0;
    for (m, masks) in subsets.iter().enumerate() {
        let mut layer = 0.0;
        for &mask in masks {
            let mut prod = 1.0;
            let mut bits = mask;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                prod *= values[children[b]];
                bits &= bits - 1;
            }
            layer += prod;
        }
        // odd-sized intersections are added, even-sized subtracted
        if m % 2 == 0 {
            total += layer;
        } else {
            total -= layer;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Child-level values summed into their parents (product with the one-hot
/// transition matrix).
pub(crate) fn sum_up(values: &[f64], parents: &[usize], num_parents: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_parents];
    for (&v, &p) in values.iter().zip(parents) {
        out[p] += v;
    }
    out
}

fn check_level_input(p: &ProbVector, t: &Taxonomy) -> Result<()> {
    let levels = t.levels();
    if p.level() == 0 || p.level() >= levels {
        return Err(Error::LevelMismatch(format!(
            "cannot aggregate a level-{} vector in a {levels}-level taxonomy",
            p.level()
        )));
    }
    let expected = t.level_size(p.level())?;
    if p.len() != expected {
        return Err(Error::LevelMismatch(format!(
            "level {} has {expected} classes, vector has {}",
            p.level(),
            p.len()
        )));
    }
    Ok(())
}

/// Parent probabilities as the sum of their children's.
pub fn sum_aggregate(p: &ProbVector, t: &Taxonomy) -> Result<ProbVector> {
    check_level_input(p, t)?;
    if !p.is_distribution() {
        return Err(Error::NotADistribution(
            "sum aggregation needs a distribution-tagged vector".into(),
        ));
    }
    let parents = t.parent_indices(p.level())?;
    let values = sum_up(p.values(), parents, t.level_size(p.level() + 1)?);
    Ok(ProbVector {
        level: p.level() + 1,
        values,
        distribution: true,
    })
}

/// Sum aggregation for a batch (`batch x K_l`) as a single matrix product.
pub fn sum_aggregate_batch(batch: &Array2<f64>, t: &Taxonomy, level: usize) -> Result<Array2<f64>> {
    let m = t.transition_matrix(level)?;
    if batch.ncols() != m.rows() {
        return Err(Error::LevelMismatch(format!(
            "batch has {} columns, level {level} has {} classes",
            batch.ncols(),
            m.rows()
        )));
    }
    Ok(batch.dot(&m.to_array()))
}

pub fn union_aggregate(p: &ProbVector, t: &Taxonomy) -> Result<ProbVector> {
    union_aggregate_with(p, t, &UnionConfig::default())
}

/// Parent probabilities as the union of their children's, by inclusion-exclusion.
pub fn union_aggregate_with(p: &ProbVector, t: &Taxonomy, cfg: &UnionConfig) -> Result<ProbVector> {
    check_level_input(p, t)?;
    let plan = UnionPlan::new(t, p.level(), cfg)?;
    Ok(ProbVector {
        level: p.level() + 1,
        values: plan.apply(p.values()),
        distribution: false,
    })
}

/// Union probabilities by the complement product `1 - prod(1 - p_k)`.
///
/// Independent of the subset enumeration in [`union_aggregate`]; kept as a
/// cross-check.
pub fn union_aggregate_oracle(p: &ProbVector, t: &Taxonomy) -> Result<ProbVector> {
    check_level_input(p, t)?;
    let parents = t.parent_indices(p.level())?;
    let mut miss = vec![1.0; t.level_size(p.level() + 1)?];
    for (&v, &i) in p.values().iter().zip(parents) {
        miss[i] *= 1.0 - v;
    }
    Ok(ProbVector {
        level: p.level() + 1,
        values: miss.into_iter().map(|m| 1.0 - m).collect(),
        distribution: false,
    })
}

/// Constant Jacobian of sum aggregation: the transposed transition matrix.
pub fn sum_jacobian(t: &Taxonomy, level: usize) -> Result<Array2<f64>> {
    Ok(t.transition_matrix(level)?.to_array().reversed_axes())
}

/// Jacobian of union aggregation at `p`; entry `(i, k)` is the product of
/// `1 - p_j` over the siblings `j != k` of child `k` under parent `i`.
pub fn union_jacobian(p: &ProbVector, t: &Taxonomy) -> Result<Array2<f64>> {
    check_level_input(p, t)?;
    let plan = UnionPlan::new(
        t,
        p.level(),
        &UnionConfig {
            max_children: 0,
            fallback: true,
        },
    )?;
    Ok(plan.jacobian(p.values()))
}

/// Aggregates leaf-level values to every level of a taxonomy.
///
/// Holds one subset table per level transition so repeated calls (one per
/// detection box, one per training sample) do not rebuild them.
#[derive(Debug, Clone)]
pub struct Aggregator<'t> {
    taxonomy: &'t Taxonomy,
    mode: AggregationMode,
    plans: Vec<UnionPlan>,
}

impl<'t> Aggregator<'t> {
    pub fn new(taxonomy: &'t Taxonomy, mode: AggregationMode) -> Result<Self> {
        Self::with_config(taxonomy, mode, &UnionConfig::default())
    }

    pub fn with_config(
        taxonomy: &'t Taxonomy,
        mode: AggregationMode,
        cfg: &UnionConfig,
    ) -> Result<Self> {
        let plans = match mode {
            AggregationMode::Sum => Vec::new(),
            AggregationMode::Union => (1..taxonomy.levels())
                .map(|l| UnionPlan::new(taxonomy, l, cfg))
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            taxonomy,
            mode,
            plans,
        })
    }

    pub fn mode(&self) -> AggregationMode {
        self.mode
    }

    pub fn taxonomy(&self) -> &'t Taxonomy {
        self.taxonomy
    }

    /// One aggregation step from `level` to `level + 1`. No range checks on
    /// the values themselves.
    pub fn step(&self, values: &[f64], level: usize) -> Result<Vec<f64>> {
        let parents = self.taxonomy.parent_indices(level)?;
        if values.len() != parents.len() {
            return Err(Error::LevelMismatch(format!(
                "level {level} has {} classes, got {}",
                parents.len(),
                values.len()
            )));
        }
        Ok(match self.mode {
            AggregationMode::Sum => {
                sum_up(values, parents, self.taxonomy.level_size(level + 1)?)
            }
            AggregationMode::Union => self.plans[level - 1].apply(values),
        })
    }

    /// Jacobian of [`Aggregator::step`] at `values`.
    pub fn step_jacobian(&self, values: &[f64], level: usize) -> Result<Array2<f64>> {
        match self.mode {
            AggregationMode::Sum => sum_jacobian(self.taxonomy, level),
            AggregationMode::Union => {
                self.taxonomy.parent_indices(level)?;
                Ok(self.plans[level - 1].jacobian(values))
            }
        }
    }

    /// Leaf values folded up to `level` (identity for level 1).
    pub fn to_level(&self, leaf: &[f64], level: usize) -> Result<Vec<f64>> {
        let levels = self.taxonomy.levels();
        if level == 0 || level > levels {
            return Err(Error::LevelOutOfRange {
                level,
                min: 1,
                max: levels,
            });
        }
        let mut cur = leaf.to_vec();
        if cur.len() != self.taxonomy.num_leaves() {
            return Err(Error::LevelMismatch(format!(
                "expected {} leaf values, got {}",
                self.taxonomy.num_leaves(),
                cur.len()
            )));
        }
        for l in 1..level {
            cur = self.step(&cur, l)?;
        }
        Ok(cur)
    }

    /// Values at every level, leaf first.
    pub fn all_levels(&self, leaf: &[f64]) -> Result<Vec<Vec<f64>>> {
        if leaf.len() != self.taxonomy.num_leaves() {
            return Err(Error::LevelMismatch(format!(
                "expected {} leaf values, got {}",
                self.taxonomy.num_leaves(),
                leaf.len()
            )));
        }
        let mut out = Vec::with_capacity(self.taxonomy.levels());
        out.push(leaf.to_vec());
        for l in 1..self.taxonomy.levels() {
            let next = self.step(&out[l - 1], l)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Product of a Jacobian's transpose with an upstream gradient.
pub(crate) fn pull_back(jac: &Array2<f64>, upstream: &[f64]) -> Vec<f64> {
    jac.t().dot(&Array1::from(upstream.to_vec())).to_vec()
}
