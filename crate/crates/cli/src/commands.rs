use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mhe::codec::oracle_argmax_equivalence;
use mhe::data::{load_xmlc, MetricsReport, SparseDataset};
use mhe::linalg::{DenseVector, RngState};
use mhe::models::checkpoint;
use mhe::models::train::{evaluate, train, TrainConfig};
use mhe::models::{ModelConfig, MultiHeadModel};
use mhe::planner::{check_plan_covers, max_confusion_degree, parameter_count, plan_heads};
use mhe::theory::{
    descend, frobenius_restarts, run_fig5_experiment, saddle_probe, theorem2_toy, theorem4_monte_carlo,
    truncated_projection_optimum, one_hot_targets, BottleneckModel, DescentConfig, Fig5Config,
};
use mhe::{HeadPlan, MheError, Strategy};

use crate::args::{EvalArgs, Experiment, OracleArgs, PlanArgs, PlanSpec, PredictArgs, TheoryArgs, TrainArgs};
use crate::{PropertyFailure, UsageError};

/// Largest Kronecker capacity the oracle check will materialize.
const ORACLE_CAPACITY_LIMIT: usize = 1_000_000;

/// Resolves a dataset path, falling back to `$MHE_DATA_DIR` for relative
/// paths that do not exist in the working directory.
fn resolve_data(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os("MHE_DATA_DIR") {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn load_dataset(path: &Path) -> Result<SparseDataset> {
    let resolved = resolve_data(path);
    load_xmlc(&resolved).with_context(|| format!("loading dataset {}", resolved.display()))
}

fn load_checkpoint(path: &Path) -> Result<MultiHeadModel> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn build_plan(layout: &PlanSpec, num_classes: usize) -> Result<HeadPlan> {
    let plan = match (&layout.lengths, layout.strategy) {
        (_, Strategy::Vanilla) => HeadPlan::new(vec![num_classes])?,
        (Some(lengths), s) if s.is_partition() => HeadPlan::partition(lengths.clone())?,
        (Some(lengths), _) => HeadPlan::new(lengths.clone())?,
        (None, s) => plan_heads(num_classes, layout.heads, s)?,
    };
    check_plan_covers(&plan, num_classes, layout.strategy)?;
    Ok(plan)
}

pub fn plan(args: &PlanArgs) -> Result<()> {
    if args.classes == 0 {
        bail!(UsageError("--classes must be at least 1".into()));
    }
    let plan = build_plan(&args.plan, args.classes)?;
    let lengths: Vec<String> = plan.lengths().iter().map(usize::to_string).collect();
    println!("strategy\t{}", args.plan.strategy);
    println!("lengths\t{}", lengths.join(","));
    println!("capacity\t{}", plan.capacity());
    println!("total_width\t{}", plan.total_width());
    if plan.num_heads() >= 2 {
        println!("max_confusion_degree\t{}", max_confusion_degree(&plan)?);
    } else {
        println!("max_confusion_degree\tn/a (single head)");
    }
    println!(
        "parameters\t{}\t(feature_dim {}{})",
        parameter_count(&plan, args.feature_dim, args.bias),
        args.feature_dim,
        if args.bias { ", with bias" } else { "" }
    );
    Ok(())
}

fn check_dims(model: &MultiHeadModel, ds: &SparseDataset) -> Result<()> {
    if ds.num_features != model.input_dim() {
        bail!(MheError::Shape {
            expected: format!("{} features (checkpoint)", model.input_dim()),
            actual: format!("{} features in {}", ds.num_features, ds.name),
        });
    }
    if ds.num_labels > model.num_classes() {
        bail!(MheError::Shape {
            expected: format!("at most {} labels (checkpoint)", model.num_classes()),
            actual: format!("{} labels in {}", ds.num_labels, ds.name),
        });
    }
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let num_classes = args.classes.unwrap_or(ds.num_labels);
    if num_classes < ds.num_labels {
        bail!(UsageError(format!(
            "--classes {num_classes} is smaller than the {} labels of {}",
            ds.num_labels, ds.name
        )));
    }
    let plan = build_plan(&args.plan, num_classes)?;
    let mut config = ModelConfig::new(args.plan.strategy, plan, num_classes, ds.num_features)
        .with_beam_width(args.beam_width);
    if let Some(f) = args.feature_dim {
        config = config.with_feature_dim(f);
    }
    let mut model = MultiHeadModel::new(config, &mut RngState::new(args.seed).fork(1))?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        cosine: args.cosine,
        seed: args.seed,
        loss: args.loss,
        beam_width: args.beam_width,
        sample_heads: args.sample_heads,
        batch_size: args.batch_size,
    };
    println!(
        "training {} plan {} on {} ({} examples, {} features, {} classes)",
        model.strategy(),
        model.plan(),
        ds.name,
        ds.len(),
        ds.num_features,
        num_classes
    );
    let history = train(&mut model, &ds, &cfg, |s| {
        println!("epoch {}\tloss {:.6}\tlr {:.6}\tsteps {}", s.epoch + 1, s.mean_loss, s.lr, s.steps);
    })?;
    checkpoint::save(&model, &args.out).with_context(|| format!("writing checkpoint {}", args.out.display()))?;
    let mut report = evaluate(&model, &ds, &args.k)?;
    if let Some(last) = history.last() {
        report.push("final_loss", last.mean_loss);
    }
    print!("{report}");
    println!("checkpoint written to {}", args.out.display());
    if let Some(path) = &args.emit_metrics {
        write_text(path, &report.to_string())?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    if args.top_k == 0 {
        bail!(UsageError("--top-k must be at least 1".into()));
    }
    let model = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    check_dims(&model, &ds)?;
    let mut out = String::new();
    for e in &ds.examples {
        let x = e.dense(ds.num_features);
        let labels: Vec<String> = if args.top_k == 1 {
            vec![model.predict(&x)?.index().to_string()]
        } else {
            model
                .predict_top_k(&x, args.top_k)?
                .labels
                .iter()
                .map(|l| l.index().to_string())
                .collect()
        };
        writeln!(out, "{}", labels.join(" ")).expect("writing to a String cannot fail");
    }
    match &args.out {
        Some(path) => write_text(path, &out),
        None => {
            std::io::stdout().lock().write_all(out.as_bytes())?;
            Ok(())
        }
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    check_dims(&model, &ds)?;
    let ks = match &args.k {
        Some(ks) => ks.clone(),
        None if ds.is_multi_label() => vec![1, 3, 5],
        None => vec![1],
    };
    let report: MetricsReport = evaluate(&model, &ds, &ks)?;
    print!("{report}");
    if let Some(path) = &args.emit_metrics {
        write_text(path, &report.to_string())?;
    }
    Ok(())
}

pub fn oracle_check(args: &OracleArgs) -> Result<()> {
    if args.max_heads == 0 || args.max_length == 0 {
        bail!(UsageError("--max-heads and --max-length must be at least 1".into()));
    }
    let worst = u32::try_from(args.max_heads)
        .ok()
        .and_then(|h| args.max_length.checked_pow(h));
    if worst.is_none_or(|c| c > ORACLE_CAPACITY_LIMIT) {
        bail!(UsageError(format!(
            "--max-length {} with --max-heads {} can exceed the Kronecker capacity limit of {ORACLE_CAPACITY_LIMIT}",
            args.max_length, args.max_heads
        )));
    }
    if args.trials == 0 {
        eprintln!("warning: 0 trials requested, nothing was checked");
        println!("oracle-check: 0 trials, vacuous pass");
        return Ok(());
    }
    let mut rng = RngState::new(args.seed);
    let min_heads = args.max_heads.min(2);
    let (mut agree, mut ties, mut disagree) = (0usize, 0usize, 0usize);
    for t in 0..args.trials {
        let h = min_heads + rng.below(args.max_heads - min_heads + 1);
        let mut outputs: Vec<DenseVector> = (0..h)
            .map(|_| {
                let l = 1 + rng.below(args.max_length);
                DenseVector((0..l).map(|_| 0.01 + rng.uniform()).collect())
            })
            .collect();
        if args.inject_ties && t % 10 == 0 {
            if let Some(v) = outputs.iter_mut().find(|v| v.len() >= 2) {
                let max = v.as_slice().iter().copied().fold(0.0, f64::max);
                v.as_mut_slice()[0] = max;
                v.as_mut_slice()[1] = max;
            }
        }
        match oracle_argmax_equivalence(&outputs) {
            Ok(r) if r.agree => agree += 1,
            Ok(r) => {
                disagree += 1;
                eprintln!(
                    "trial {t}: product argmax {} but combined argmax {}",
                    r.product_argmax.index(),
                    r.combined_argmax.index()
                );
            }
            Err(MheError::Tie { .. }) => ties += 1,
            Err(e) => return Err(e.into()),
        }
    }
    println!(
        "oracle-check: {} trials, {agree} agree, {ties} ties skipped, {disagree} disagree",
        args.trials
    );
    if disagree > 0 {
        bail!(PropertyFailure(format!("{disagree} trials disagree")));
    }
    Ok(())
}

pub fn theory(args: &TheoryArgs) -> Result<()> {
    match args.experiment {
        Experiment::Fig5 => fig5(args),
        Experiment::Theorem4 => theorem4(args),
        Experiment::Saddle => saddle(args),
    }
}

fn fig5(args: &TheoryArgs) -> Result<()> {
    let defaults = Fig5Config::default();
    let cfg = Fig5Config {
        num_examples: args.size,
        feature_dim: args.size,
        num_classes: args.size,
        bottleneck_dim: args.rank.unwrap_or(defaults.bottleneck_dim),
        epochs: args.epochs,
        lr: args.lr.unwrap_or(defaults.lr),
        cosine: !args.constant_lr,
        optimizer: args.optimizer,
        record_every: args.record_every,
    };
    let t = run_fig5_experiment(args.loss, &cfg, args.seed)?;
    if let Some(path) = &args.out {
        write_text(path, &t.to_string())?;
    } else {
        print!("{t}");
    }
    let (first, last) = (t.first().expect("initial point"), t.last().expect("final point"));
    println!(
        "fig5 {} loss: accuracy {:.4} -> {:.4}, softmax output rank {} -> {} (rank tolerance {:e})",
        args.loss,
        first.accuracy,
        last.accuracy,
        first.rank,
        last.rank,
        mhe::linalg::DEFAULT_RANK_TOLERANCE
    );
    Ok(())
}

fn theorem4(args: &TheoryArgs) -> Result<()> {
    let trials = args.trials.unwrap_or(100);
    let scale = args.scale.unwrap_or(0.5);
    let checks = theorem4_monte_carlo(trials, scale, args.classes, args.dim, args.examples, args.seed)?;
    let held = checks.iter().filter(|c| c.holds).count();
    if let Some(path) = &args.out {
        let mut text = String::from("trial\tdeviation\tbound\tholds\n");
        for (i, c) in checks.iter().enumerate() {
            writeln!(text, "{i}\t{}\t{}\t{}", c.deviation, c.bound, c.holds).expect("writing to a String cannot fail");
        }
        write_text(path, &text)?;
    }
    println!("holds: {held}/{trials}");
    if held < trials {
        bail!(PropertyFailure(format!("the bound failed in {} trials", trials - held)));
    }
    Ok(())
}

fn saddle(args: &TheoryArgs) -> Result<()> {
    let rank = args.rank.unwrap_or(2);
    let cfg = DescentConfig {
        lr: args.lr.unwrap_or(DescentConfig::default().lr),
        ..DescentConfig::default()
    };
    let (x, labels) = theorem2_toy(args.seed)?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let optimum = truncated_projection_optimum(&x, &one_hot_targets(&labels, num_classes)?, rank)?;
    let runs = frobenius_restarts(&x, &labels, num_classes, rank, args.restarts, args.seed, &cfg)?;
    let mut text = String::from("restart\tloss\tgrad_norm\titerations\n");
    for (i, r) in runs.iter().enumerate() {
        writeln!(text, "{i}\t{}\t{}\t{}", r.loss, r.grad_norm, r.iterations).expect("writing to a String cannot fail");
    }
    let max = runs.iter().map(|r| r.loss).fold(f64::NEG_INFINITY, f64::max);
    let min = runs.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let spread = if runs.is_empty() { 0.0 } else { max - min };

    let mut model = BottleneckModel::new(x.cols(), rank, num_classes, false, &mut RngState::new(args.seed).fork(99))?;
    descend(&mut model, &x, &labels, &cfg)?;
    let probe = saddle_probe(
        &model,
        &x,
        &labels,
        args.scale.unwrap_or(0.1),
        args.trials.unwrap_or(5),
        args.seed,
        &cfg,
    )?;
    writeln!(
        text,
        "# optimum {optimum}\n# spread {spread}\n# probe base {} best {} escape_found {}",
        probe.base_loss, probe.best_loss, probe.escape_found
    )
    .expect("writing to a String cannot fail");
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    println!(
        "saddle: {} restarts, loss spread {spread:.3e}, optimum {optimum:.9}, probe improved {}",
        runs.len(),
        probe.escape_found || probe.best_loss < probe.base_loss - 1e-9
    );
    if spread >= 1e-6 || runs.iter().any(|r| (r.loss - optimum).abs() >= 1e-6) {
        bail!(PropertyFailure("restarts did not all reach the truncated-projection optimum".into()));
    }
    Ok(())
}
