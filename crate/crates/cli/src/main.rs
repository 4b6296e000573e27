//! `hierloss` command-line tool.

mod commands;
mod config;
mod error;
mod format;

use std::io::Write;
use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use hierloss::AggregationMode;

use commands::{Context, LossOptions, TrainOverrides};
use config::{EvalArgs, LossArgs, RunConfig, Trainer};
use error::{CliError, CliResult, ExitCode};

#[derive(Parser)]
#[command(name = "hierloss", version)]
#[command(about = "Hierarchical aggregation, losses and hierarchy-aware evaluation")]
struct Cli {
    /// Taxonomy JSON file
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// Run configuration JSON file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a taxonomy and print its shape
    Validate,
    /// Aggregate probability vectors up the taxonomy
    Aggregate {
        /// JSON file with one vector or a list of vectors
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        mode: Option<AggregationMode>,
        /// Level of the input vectors
        #[arg(long, default_value_t = 1)]
        from_level: usize,
        /// Level to aggregate to
        #[arg(long)]
        level: usize,
    },
    /// Evaluate the hierarchical loss of leaf probabilities
    Loss {
        /// JSON file with one leaf vector or a list of them
        #[arg(long)]
        probs: PathBuf,
        /// Target leaf, as an index or a node id
        #[arg(long)]
        target: String,
        #[command(flatten)]
        loss: LossArgs,
        /// Also print the gradient with respect to the leaf values
        #[arg(long)]
        gradient: bool,
        /// Also print the conditional hierarchical cross-entropy with this alpha
        #[arg(long)]
        hxe_alpha: Option<f64>,
    },
    /// Compare the analytic loss gradient with finite differences
    GradCheck {
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Per-level mAP of a detection set
    EvalDet {
        /// Ground-truth JSON file
        #[arg(long)]
        gt: PathBuf,
        /// Detections JSON file
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        mode: Option<AggregationMode>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Top-1 error and mistake severity of classification predictions
    EvalCls {
        /// Predictions JSON file
        #[arg(long)]
        preds: PathBuf,
        /// Cut-offs for average hierarchical distance (comma separated)
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
        k: Vec<usize>,
    },
    /// Train a linear classifier on a synthetic 2-D dataset and trace its metrics
    TrainDemo {
        #[arg(long, value_enum)]
        trainer: Option<Trainer>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        /// Points per leaf class in each split
        #[arg(long)]
        per_class: Option<usize>,
        #[command(flatten)]
        loss: LossArgs,
    },
}

fn context(cli: &Cli) -> CliResult<Context> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(Context {
        taxonomy: cli.taxonomy.clone().or_else(|| config.taxonomy.clone()),
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| config.output.clone()),
        config,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = context(&cli)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match &cli.command {
        Command::Validate => commands::validate(&ctx, &mut w),
        Command::Aggregate { probs, mode, from_level, level } => {
            commands::aggregate(&ctx, probs, *mode, *from_level, *level, &mut w)
        }
        Command::Loss { probs, target, loss, gradient, hxe_alpha } => commands::loss(
            &ctx,
            loss,
            &LossOptions {
                probs,
                target,
                gradient: *gradient,
                hxe_alpha: *hxe_alpha,
            },
            &mut w,
        ),
        Command::GradCheck { loss, trials, tolerance, step } => {
            commands::grad_check(&ctx, loss, *trials, *tolerance, *step, &mut w)
        }
        Command::EvalDet { gt, dets, mode, eval } => commands::eval_det(&ctx, gt, dets, *mode, eval, &mut w),
        Command::EvalCls { preds, k } => commands::eval_cls(&ctx, preds, k, &mut w),
        Command::TrainDemo { trainer, steps, step_size, per_class, loss } => commands::train(
            &ctx,
            loss,
            &TrainOverrides {
                trainer: *trainer,
                steps: *steps,
                step_size: *step_size,
                per_class: *per_class,
            },
            &mut w,
        ),
    }?;
    w.flush()?;
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Argument as i32 } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(CliError { code, message }) = run(cli) {
        eprintln!("error: {message}");
        process::exit(code as i32);
    }
}
