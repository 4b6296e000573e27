//! Hierarchical probability aggregation, multi-level losses and
//! hierarchy-aware evaluation for classification and detection.
//!
//! A [`Taxonomy`] fixes the class tree. Leaf-level probabilities are lifted to
//! coarser levels by summing (softmax outputs) or by probability union
//! (sigmoid outputs); the lifted vectors feed a weighted per-level loss and
//! per-level evaluation metrics.

pub mod aggregation;
pub mod cls_eval;
pub mod det_eval;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod taxonomy;
pub mod train;

pub use aggregation::{
    sum_aggregate, sum_jacobian, union_aggregate, union_aggregate_oracle, union_jacobian,
    AggregationMode, Aggregator, ProbVector, UnionConfig,
};
pub use error::{Error, Result, ValidationError};
pub use losses::{
    bertinetto_hxe, cross_entropy, exp_level_weights, focal_loss, hierarchical_gradient,
    hierarchical_loss, named_weight_scheme, BaseLoss, FocalParams, HierarchicalLoss, LevelWeights,
    LossConfig, TargetSpec, WeightScheme,
};
pub use taxonomy::{LevelMatrix, Taxonomy, TaxonomyNode};
