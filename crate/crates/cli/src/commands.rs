use std::io::Write;
use std::path::{Path, PathBuf};

use hierloss::cls_eval;
use hierloss::det_eval::{multi_level_map, LevelEvalReport};
use hierloss::gradcheck::check_hierarchical_gradient;
use hierloss::losses::BaseKind;
use hierloss::io::{load_detections, load_predictions, GroundTruthFile};
use hierloss::train::{sibling_overlap_dataset, train_demo, TrainConfig, TrainLoss};
use hierloss::{
    bertinetto_hxe, sum_aggregate, union_aggregate, AggregationMode, ProbVector, Taxonomy,
    TaxonomyNode, TargetSpec, WeightScheme,
};
use serde_json::Value;

use crate::config::{resolve_eval, resolve_focal, resolve_loss, EvalArgs, LossArgs, RunConfig, TrainSection, Trainer};
use crate::error::{reading, CliError, CliResult, ExitCode};
use crate::format::{dec4, join_sig12, sig12};

/// Options shared by every subcommand after merging flags and config.
pub struct Context {
    pub config: RunConfig,
    pub taxonomy: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Context {
    pub fn taxonomy(&self) -> CliResult<Taxonomy> {
        let path = self
            .taxonomy
            .as_ref()
            .ok_or_else(|| CliError::argument("no taxonomy given (use --taxonomy or `taxonomy` in the config)"))?;
        Taxonomy::load(path).map_err(|e| match e {
            hierloss::Error::Io(io) => CliError::new(ExitCode::Io, format!("{}: {io}", path.display())),
            other => CliError::new(ExitCode::Taxonomy, format!("{}: {other}", path.display())),
        })
    }

    fn write_out(&self, text: &str) -> CliResult<bool> {
        match &self.out {
            Some(p) => {
                std::fs::write(p, text).map_err(|e| CliError::new(ExitCode::Io, format!("{}: {e}", p.display())))?;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

pub fn validate(ctx: &Context, w: &mut impl Write) -> CliResult<()> {
    let t = ctx.taxonomy()?;
    let sizes = t.level_sizes();
    writeln!(w, "nodes: {}", t.nodes().len())?;
    writeln!(
        w,
        "levels: {}, classes: [{}]",
        t.levels(),
        sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    )?;
    writeln!(w, "transition matrices:")?;
    for l in 1..t.levels() {
        let (r, c) = t.transition_matrix(l)?.shape();
        writeln!(w, "  level {l} -> {}: {r} x {c}", l + 1)?;
    }
    writeln!(w, "max children per parent: {}", t.max_children())?;
    Ok(())
}

/// A JSON file holding one vector or a list of vectors.
fn load_vectors(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new(ExitCode::Io, format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let parse = |v: Value| -> CliResult<Vec<f64>> {
        serde_json::from_value(v).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    };
    match v {
        Value::Array(items) if items.iter().all(Value::is_array) && !items.is_empty() => {
            items.into_iter().map(parse).collect()
        }
        other => Ok(vec![parse(other)?]),
    }
}

fn prob_vector(mode: AggregationMode, level: usize, values: Vec<f64>) -> CliResult<ProbVector> {
    Ok(match mode {
        AggregationMode::Sum => ProbVector::distribution(level, values)?,
        AggregationMode::Union => ProbVector::scores(level, values)?,
    })
}

fn check_length(t: &Taxonomy, level: usize, len: usize) -> CliResult<()> {
    let expected = t.level_size(level)?;
    if len != expected {
        return Err(CliError::data(format!(
            "vector has {len} entries, level {level} of the taxonomy has {expected} classes"
        )));
    }
    Ok(())
}

pub fn aggregate(
    ctx: &Context,
    probs: &Path,
    mode: Option<AggregationMode>,
    from_level: usize,
    level: usize,
    w: &mut impl Write,
) -> CliResult<()> {
    let t = ctx.taxonomy()?;
    let mode = mode
        .or(ctx.config.mode)
        .ok_or_else(|| CliError::argument("aggregation mode not set (use --mode)"))?;
    let levels = t.levels();
    if from_level == 0 || from_level > levels {
        return Err(hierloss::Error::LevelOutOfRange { level: from_level, min: 1, max: levels }.into());
    }
    if level < from_level || level > levels {
        return Err(hierloss::Error::LevelOutOfRange { level, min: from_level, max: levels }.into());
    }
    let mut lines = String::new();
    for values in load_vectors(probs)? {
        check_length(&t, from_level, values.len())?;
        let mut p = prob_vector(mode, from_level, values)?;
        while p.level() < level {
            p = match mode {
                AggregationMode::Sum => sum_aggregate(&p, &t)?,
                AggregationMode::Union => union_aggregate(&p, &t)?,
            };
        }
        lines.push_str(&join_sig12(p.values()));
        lines.push('\n');
    }
    if !ctx.write_out(&lines)? {
        w.write_all(lines.as_bytes())?;
    }
    Ok(())
}

/// Leaf index from a number or a level-1 node id.
fn leaf_index(t: &Taxonomy, target: &str) -> CliResult<usize> {
    if let Ok(i) = target.parse::<usize>() {
        if i >= t.num_leaves() {
            return Err(hierloss::Error::IndexOutOfRange { index: i, len: t.num_leaves() }.into());
        }
        return Ok(i);
    }
    match t.position(target) {
        Some((1, i)) => Ok(i),
        Some((l, _)) => Err(CliError::argument(format!("`{target}` is a level-{l} node, not a leaf"))),
        None => Err(CliError::argument(format!("unknown leaf `{target}`"))),
    }
}

pub struct LossOptions<'a> {
    pub probs: &'a Path,
    pub target: &'a str,
    pub gradient: bool,
    pub hxe_alpha: Option<f64>,
}

pub fn loss(ctx: &Context, args: &LossArgs, opts: &LossOptions<'_>, w: &mut impl Write) -> CliResult<()> {
    let t = ctx.taxonomy()?;
    let cfg = resolve_loss(&ctx.config, args, None)?;
    let hl = cfg.build(&t)?;
    let target = TargetSpec::new(&t, leaf_index(&t, opts.target)?)?;
    let mut out = String::new();
    for values in load_vectors(opts.probs)? {
        check_length(&t, 1, values.len())?;
        let p = prob_vector(cfg.mode, 1, values)?;
        let b = hl.evaluate(&p, &target)?;
        for (l, (loss, weight)) in b.per_level.iter().zip(&b.weights).enumerate() {
            out.push_str(&format!("level {}: weight {}, loss {}\n", l + 1, sig12(*weight), sig12(*loss)));
        }
        out.push_str(&format!("total: {}\n", sig12(b.total)));
        if opts.gradient {
            out.push_str(&format!("gradient: {}\n", join_sig12(&hl.gradient(&p, &target)?)));
        }
        if let Some(alpha) = opts.hxe_alpha {
            let p = ProbVector::distribution(1, p.into_values())?;
            out.push_str(&format!("conditional hxe: {}\n", sig12(bertinetto_hxe(&p, &t, &target, alpha)?)));
        }
    }
    if !ctx.write_out(&out)? {
        w.write_all(out.as_bytes())?;
    }
    Ok(())
}

pub fn grad_check(
    ctx: &Context,
    args: &LossArgs,
    trials: usize,
    tolerance: f64,
    step: f64,
    w: &mut impl Write,
) -> CliResult<()> {
    if !(tolerance >= 0.0) {
        return Err(CliError::config(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let t = ctx.taxonomy()?;
    let cfg = resolve_loss(&ctx.config, args, None)?;
    let hl = cfg.build(&t)?;
    let report = check_hierarchical_gradient(&hl, trials, step, ctx.seed)?;
    let pass = report.passes(tolerance);
    let text = format!(
        "mode: {}, base: {}, weights: [{}]\ntrials: {}, step: {}, seed: {}\nmax relative error: {:.3e} (trial {}, leaf {})\ntolerance: {} -> {}\n",
        cfg.mode,
        match cfg.base {
            BaseKind::Ce => "ce",
            BaseKind::Focal => "focal",
        },
        hl.weights().values().iter().map(|v| sig12(*v)).collect::<Vec<_>>().join(", "),
        report.trials,
        sig12(report.step),
        ctx.seed,
        report.max_rel_error,
        report.worst.0,
        report.worst.1,
        sig12(tolerance),
        if pass { "PASS" } else { "FAIL" },
    );
    w.write_all(text.as_bytes())?;
    if let Some(p) = &ctx.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(p, json).map_err(|e| CliError::new(ExitCode::Io, format!("{}: {e}", p.display())))?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::new(
            ExitCode::CheckFailed,
            format!("gradient check failed: {:.3e} >= {}", report.max_rel_error, sig12(tolerance)),
        ))
    }
}

fn level_table(t: &Taxonomy, report: &LevelEvalReport) -> String {
    let mut s = String::from("level  classes  mAP\n");
    for (l, m) in report.per_level_map.iter().enumerate() {
        s.push_str(&format!("{:<5}  {:<7}  {}\n", l + 1, t.level_sizes()[l], dec4(*m)));
    }
    s
}

pub fn eval_det(
    ctx: &Context,
    gt: &Path,
    dets: &Path,
    mode: Option<AggregationMode>,
    args: &EvalArgs,
    w: &mut impl Write,
) -> CliResult<()> {
    let t = ctx.taxonomy()?;
    let mode = mode
        .or(ctx.config.mode)
        .ok_or_else(|| CliError::argument("aggregation mode not set (use --mode)"))?;
    let cfg = resolve_eval(&ctx.config, args)?;
    let gt_file = GroundTruthFile::load(gt).map_err(reading(gt, ExitCode::Data))?;
    let gts = gt_file.boxes()?;
    let dets = load_detections(dets, t.num_leaves()).map_err(reading(dets, ExitCode::Data))?;
    if let Some(d) = dets.iter().find(|d| !gt_file.has_image(&d.image_id)) {
        return Err(CliError::data(format!("detection references unknown image `{}`", d.image_id)));
    }
    let report = multi_level_map(&dets, &gts, &t, mode, &cfg)?;
    writeln!(
        w,
        "mode: {mode}, images: {}, ground truth: {}, detections: {}",
        gts.iter().map(|g| g.image_id.as_str()).collect::<std::collections::BTreeSet<_>>().len(),
        gts.len(),
        dets.len()
    )?;
    write!(w, "{}", level_table(&t, &report))?;
    ctx.write_out(&serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(())
}

pub fn eval_cls(ctx: &Context, preds: &Path, ks: &[usize], w: &mut impl Write) -> CliResult<()> {
    let t = ctx.taxonomy()?;
    let preds = load_predictions(preds, t.num_leaves()).map_err(reading(preds, ExitCode::Data))?;
    cls_eval::validate_predictions(&preds, &t)?;
    let report = cls_eval::evaluate(&preds, &t, ks)?;
    writeln!(w, "samples: {}", report.samples)?;
    writeln!(w, "top-1 error: {}", dec4(report.top1_error))?;
    let d = &report.hier_dist_mistake;
    if d.no_mistakes {
        writeln!(w, "hier. dist. mistake: {} (no mistakes)", dec4(d.value))?;
    } else {
        writeln!(w, "hier. dist. mistake: {} ({} mistakes)", dec4(d.value), d.mistakes)?;
    }
    for (k, v) in &report.avg_hier_dist {
        writeln!(w, "avg. hier. dist. @{k}: {}", dec4(*v))?;
    }
    ctx.write_out(&serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(())
}

/// Two groups of two leaves, matching the demo dataset's labels.
pub fn demo_taxonomy() -> Taxonomy {
    Taxonomy::from_nodes(vec![
        TaxonomyNode::new("root", None, 3),
        TaxonomyNode::new("g0", Some("root"), 2),
        TaxonomyNode::new("g1", Some("root"), 2),
        TaxonomyNode::new("l0", Some("g0"), 1),
        TaxonomyNode::new("l1", Some("g0"), 1),
        TaxonomyNode::new("l2", Some("g1"), 1),
        TaxonomyNode::new("l3", Some("g1"), 1),
    ])
    .expect("demo taxonomy is well formed")
}

pub struct TrainOverrides {
    pub trainer: Option<Trainer>,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub per_class: Option<usize>,
}

pub fn train(ctx: &Context, args: &LossArgs, o: &TrainOverrides, w: &mut impl Write) -> CliResult<()> {
    let t = match &ctx.taxonomy {
        Some(_) => ctx.taxonomy()?,
        None => demo_taxonomy(),
    };
    if t.num_leaves() < 4 {
        return Err(CliError::data(format!(
            "the demo dataset has 4 leaf labels, taxonomy has {} leaves",
            t.num_leaves()
        )));
    }
    let mut s: TrainSection = ctx.config.train.clone().unwrap_or_default();
    s.trainer = o.trainer.unwrap_or(s.trainer);
    s.steps = o.steps.unwrap_or(s.steps);
    s.step_size = o.step_size.unwrap_or(s.step_size);
    s.per_class = o.per_class.unwrap_or(s.per_class);
    if s.per_class == 0 {
        return Err(CliError::config("per_class must be at least 1"));
    }
    let loss = match s.trainer {
        Trainer::PlainCe => TrainLoss::PlainCe,
        Trainer::PlainFocal => TrainLoss::PlainFocal(resolve_focal(&ctx.config, args)?),
        Trainer::Hierarchical => {
            let mut a = args.clone();
            if a.mode.is_none() && ctx.config.mode.is_none() && ctx.config.loss.as_ref().and_then(|l| l.get("mode")).is_none() {
                a.mode = Some(AggregationMode::Sum);
            }
            TrainLoss::Hierarchical(resolve_loss(&ctx.config, &a, Some(WeightScheme::HierFocusedCls))?)
        }
    };
    let (train_set, held_out) = sibling_overlap_dataset(ctx.seed, s.per_class)?;
    let cfg = TrainConfig {
        loss,
        steps: s.steps,
        step_size: s.step_size,
        seed: ctx.seed,
        init_scale: s.init_scale,
    };
    let result = train_demo(&train_set, Some(&held_out), &t, &cfg)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv is utf-8");
    if ctx.write_out(&csv)? {
        let m = result.final_metrics();
        writeln!(
            w,
            "epochs: {}, final loss: {}, held-out top-1 error: {}, held-out mistake distance: {}",
            m.epoch,
            sig12(m.loss),
            dec4(m.eval_top1_error.unwrap_or(f64::NAN)),
            dec4(m.eval_mistake_distance.unwrap_or(f64::NAN))
        )?;
    } else {
        w.write_all(csv.as_bytes())?;
    }
    Ok(())
}
