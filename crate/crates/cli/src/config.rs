//! Run configuration file and its merge with command-line flags.
//!
//! Relative paths inside a configuration file are resolved against the
//! file's own directory. Flags override file values.

use std::path::{Path, PathBuf};

use hierloss::det_eval::EvalConfig;
use hierloss::losses::BaseKind;
use hierloss::{AggregationMode, FocalParams, LossConfig, WeightScheme};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult, ExitCode};

/// `{taxonomy, mode, loss, eval, seed, output, train}`; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub taxonomy: Option<PathBuf>,
    pub mode: Option<AggregationMode>,
    /// Loss block; `mode` may be omitted and is then taken from the top level.
    pub loss: Option<Value>,
    pub eval: Option<EvalConfig>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    PlainCe,
    PlainFocal,
    Hierarchical,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub trainer: Trainer,
    pub steps: usize,
    pub step_size: f64,
    pub per_class: usize,
    pub init_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            trainer: Trainer::Hierarchical,
            steps: 150,
            step_size: 1.0,
            per_class: 100,
            init_scale: 0.01,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ExitCode::Io, format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.taxonomy, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags that shape a hierarchical loss.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct LossArgs {
    /// Aggregation mode
    #[arg(long)]
    pub mode: Option<AggregationMode>,
    /// Per-level base loss: `ce` or `focal`
    #[arg(long)]
    pub base: Option<String>,
    /// Explicit level weights, leaf first (comma separated)
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with_all = ["scheme", "exp_alpha"])]
    pub weights: Option<Vec<f64>>,
    /// Named weighting: leaf_focused_det, leaf_focused_cls, hier_focused_cls
    #[arg(long, conflicts_with = "exp_alpha")]
    pub scheme: Option<String>,
    /// Exponentially decaying weights exp(-alpha (l - 1))
    #[arg(long)]
    pub exp_alpha: Option<f64>,
    /// Focal focusing parameter
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Focal positive-class balance
    #[arg(long)]
    pub alpha_balance: Option<f64>,
}

impl LossArgs {
    fn sets_weights(&self) -> bool {
        self.weights.is_some() || self.scheme.is_some() || self.exp_alpha.is_some()
    }
}

/// Loss block from the configuration file with flags applied on top.
///
/// `fallback` is used when neither source selects level weights.
pub fn resolve_loss(
    cfg: &RunConfig,
    args: &LossArgs,
    fallback: Option<WeightScheme>,
) -> CliResult<LossConfig> {
    let mut block = match &cfg.loss {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(CliError::config("`loss` must be an object")),
        None => serde_json::Map::new(),
    };
    if let Some(mode) = args.mode.or(cfg.mode) {
        if args.mode.is_some() || !block.contains_key("mode") {
            block.insert("mode".into(), Value::String(mode.to_string()));
        }
    }
    if !block.contains_key("mode") {
        return Err(CliError::config(
            "aggregation mode not set (use --mode or `mode` in the config)",
        ));
    }
    if let Some(base) = &args.base {
        block.insert("base".into(), Value::String(base.replace('-', "_")));
    }
    if args.sets_weights() {
        for key in ["weights", "scheme", "exp_alpha"] {
            block.remove(key);
        }
    }
    if let Some(w) = &args.weights {
        block.insert("weights".into(), serde_json::json!(w));
    }
    if let Some(s) = &args.scheme {
        let scheme: WeightScheme = s.parse().map_err(|e: hierloss::Error| CliError::config(e.to_string()))?;
        block.insert("scheme".into(), serde_json::json!(scheme));
    }
    if let Some(a) = args.exp_alpha {
        block.insert("exp_alpha".into(), serde_json::json!(a));
    }
    if !["weights", "scheme", "exp_alpha"].iter().any(|k| block.contains_key(*k)) {
        if let Some(s) = fallback {
            block.insert("scheme".into(), serde_json::json!(s));
        }
    }
    let mut loss: LossConfig = serde_json::from_value(Value::Object(block))
        .map_err(|e| CliError::config(format!("loss block: {e}")))?;
    if let Some(g) = args.gamma {
        loss.focal.gamma = g;
    }
    if let Some(a) = args.alpha_balance {
        loss.focal.alpha_balance = a;
    }
    if loss.base == BaseKind::Focal || args.gamma.is_some() || args.alpha_balance.is_some() {
        loss.focal.validate()?;
    }
    Ok(loss)
}

/// Focal parameters from the loss block and flags, for the plain focal trainer.
pub fn resolve_focal(cfg: &RunConfig, args: &LossArgs) -> CliResult<FocalParams> {
    let mut fp = match cfg.loss.as_ref().and_then(|l| l.get("focal")) {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::config(format!("loss.focal: {e}")))?,
        None => FocalParams::default(),
    };
    if let Some(g) = args.gamma {
        fp.gamma = g;
    }
    if let Some(a) = args.alpha_balance {
        fp.alpha_balance = a;
    }
    fp.validate()?;
    Ok(fp)
}

/// Flags that shape the detection protocol.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvalArgs {
    /// IoU thresholds for matching (comma separated)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub iou_thresholds: Option<Vec<f64>>,
    /// IoU above which NMS suppresses a box
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Minimum per-class score kept after aggregation
    #[arg(long)]
    pub score_floor: Option<f64>,
    /// Per-image cap on detections at every level
    #[arg(long)]
    pub max_dets: Option<usize>,
    /// Suppress across classes instead of within each class
    #[arg(long)]
    pub class_agnostic: bool,
}

pub fn resolve_eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<EvalConfig> {
    let mut e = cfg.eval.clone().unwrap_or_default();
    if let Some(t) = &args.iou_thresholds {
        e.iou_thresholds = t.clone();
    }
    if let Some(v) = args.nms_iou {
        e.nms_iou = v;
    }
    if let Some(v) = args.score_floor {
        e.score_floor = v;
    }
    if let Some(v) = args.max_dets {
        e.max_dets_per_image = v;
    }
    if args.class_agnostic {
        e.class_agnostic_nms = true;
    }
    e.validate().map_err(|err| CliError::config(err.to_string()))?;
    Ok(e)
}
