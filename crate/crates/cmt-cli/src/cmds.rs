//! Subcommand implementations: train, eval, sweep, inspect.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};

use cmt_core::dataset::perimeter_target;
use cmt_core::eval::{subset_pair, ReportRow};
use cmt_core::store::forest_to_json;
use cmt_core::tree::audit_tree;
use cmt_core::{
    emit_report, eval_classification_model, eval_perimeter_model, load_forest,
    run_classification_sweep, run_perimeter_sweep, save_forest, train_classification_heads,
    train_spec_model, CmtError, DesignMatrix, Forest, ModelKind, ModelSpec, Result, SweepReport,
    TaskKind,
};

use crate::data::load_pools;
use crate::runcfg::CommonArgs;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Perimeter,
    Classification,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> TaskKind {
        match t {
            TaskArg::Perimeter => TaskKind::Perimeter,
            TaskArg::Classification => TaskKind::Classification,
        }
    }
}

/// Task selector for `sweep`, which can also run both tasks back to back.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskSel {
    Perimeter,
    Classification,
    All,
}

impl TaskSel {
    fn expand(self) -> Vec<TaskKind> {
        match self {
            TaskSel::Perimeter => vec![TaskKind::Perimeter],
            TaskSel::Classification => vec![TaskKind::Classification],
            TaskSel::All => vec![TaskKind::Perimeter, TaskKind::Classification],
        }
    }
}

/// Classification stores ten one-vs-rest heads; head `k` of `model.cmtf`
/// lives at `model-head<k>.cmtf`. `train` writes these names and `eval`
/// reads them back, so the two stay in sync.
fn head_path(out: &Path, k: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("cmtf");
    out.with_file_name(format!("{stem}-head{k}.{ext}"))
}

fn parse_models(names: &[String]) -> Result<Vec<ModelSpec>> {
    names
        .iter()
        .map(|n| Ok(ModelSpec::standard(ModelKind::from_name(n)?)))
        .collect()
}

fn json_err(e: serde_json::Error) -> CmtError {
    CmtError::Format(format!("JSON encoding failed: {e}"))
}

/// Prints one report as an aligned stdout table.
fn print_report(report: &SweepReport) {
    let metric = match report.task {
        TaskKind::Perimeter => "MAE",
        TaskKind::Classification => "accuracy",
    };
    println!("{} sweep, seed {}: {metric} by rotation angle", report.task, report.seed);
    let name_w = report
        .rows
        .iter()
        .map(|r| r.model.len())
        .chain(["model".len()].into_iter())
        .max()
        .unwrap_or(5);
    let mut header = format!("{:<name_w$}  {:<7}", "model", "variant");
    for a in &report.angles {
        header.push_str(&format!("  {:>9}", format!("{a}°")));
    }
    header.push_str(&format!("  {:>9}", "avg"));
    println!("{header}");
    for row in &report.rows {
        let mut line = format!("{:<name_w$}  {:<7}", row.model, row.variant);
        match &row.error {
            None => {
                for v in &row.per_angle {
                    line.push_str(&format!("  {:>9.4}", v));
                }
                line.push_str(&format!("  {:>9.4}", row.average.unwrap_or(f64::NAN)));
            }
            Some(e) => line.push_str(&format!("  failed: {e}")),
        }
        println!("{line}");
    }
}

// ---------------------------------------------------------------- train ---

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Prediction task to fit.
    #[arg(long, value_enum, default_value_t = TaskArg::Perimeter)]
    task: TaskArg,

    /// Model to train: Ridge, StdForest, CMT-Conv, CMT-Conv+Tilt,
    /// CMT-Conv+Prune, CMT-Full, or CMT-Full-HG.
    #[arg(long, default_value = "CMT-Full")]
    model: String,

    /// Output file; classification writes `<stem>-head<k>.<ext>` per class.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let kind = ModelKind::from_name(&args.model)?;
    let eff = args.common.resolve()?;
    let (train_pool, test_pool) = load_pools(&eff)?;
    let (train_sub, _) = subset_pair(&train_pool, &test_pool, &eff.sweep)?;
    let shape = (train_sub.images[0].height(), train_sub.images[0].width());
    let x = DesignMatrix::from_images(&train_sub.images)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let started = Instant::now();
    match args.task {
        TaskArg::Perimeter => {
            let y: Vec<f64> = train_sub
                .images
                .iter()
                .map(|img| perimeter_target(img, &eff.sweep.perimeter))
                .collect();
            let forest = train_spec_model(kind, &x, &y, shape, &eff.sweep)?;
            save_forest(&forest, &args.out)?;
            println!(
                "trained {} on {} samples in {:.1}s",
                kind.name(),
                train_sub.len(),
                started.elapsed().as_secs_f64()
            );
            println!("wrote {}", args.out.display());
        }
        TaskArg::Classification => {
            let heads = train_classification_heads(kind, &x, &train_sub.labels, shape, &eff.sweep)?;
            println!(
                "trained {} (10 heads) on {} samples in {:.1}s",
                kind.name(),
                train_sub.len(),
                started.elapsed().as_secs_f64()
            );
            for (k, head) in heads.iter().enumerate() {
                let path = head_path(&args.out, k);
                save_forest(head, &path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

// ----------------------------------------------------------------- eval ---

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Task the saved model was trained for.
    #[arg(long, value_enum, default_value_t = TaskArg::Perimeter)]
    task: TaskArg,

    /// Saved model file. Classification takes the same path given to
    /// `train --out` and loads the ten `<stem>-head<k>` files.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,

    /// Also measure with deployment-time orientation search.
    #[arg(long)]
    os: bool,

    /// Write CSV/manifest/plot artifacts into this directory too.
    #[arg(long, value_name = "DIR")]
    report: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let eff = args.common.resolve()?;
    let (train_pool, test_pool) = load_pools(&eff)?;
    let (_, test_sub) = subset_pair(&train_pool, &test_pool, &eff.sweep)?;
    let os = args.os.then_some(&eff.sweep.orientation);
    let (model_name, train_fingerprint, variants) = match args.task {
        TaskArg::Perimeter => {
            let forest = load_forest(&args.model)?;
            let v = eval_perimeter_model(
                &forest,
                &test_sub,
                &eff.sweep.angles,
                &eff.sweep.perimeter,
                os,
            )?;
            let p = forest.provenance();
            (p.model_name.clone(), p.train_fingerprint.clone(), v)
        }
        TaskArg::Classification => {
            let heads: Vec<Forest> = (0..10)
                .map(|k| load_forest(&head_path(&args.model, k)))
                .collect::<Result<_>>()?;
            let v = eval_classification_model(&heads, &test_sub, &eff.sweep.angles, os)?;
            let p = heads[0].provenance();
            (p.model_name.clone(), p.train_fingerprint.clone(), v)
        }
    };
    let rows: Vec<ReportRow> = variants
        .into_iter()
        .map(|(variant, per_angle)| {
            let average = per_angle.iter().sum::<f64>() / per_angle.len() as f64;
            ReportRow {
                model: model_name.clone(),
                variant,
                error: None,
                per_angle,
                average: Some(average),
                train_seconds: 0.0,
            }
        })
        .collect();
    let report = SweepReport {
        task: args.task.into(),
        angles: eff.sweep.angles.clone(),
        seed: eff.sweep.forest.seed,
        train_fingerprint,
        config: eff.sweep.clone(),
        rows,
    };
    print_report(&report);
    if let Some(dir) = &args.report {
        for path in emit_report(&report, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep ---

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Task(s) to sweep.
    #[arg(long, value_enum, default_value_t = TaskSel::Perimeter)]
    task: TaskSel,

    /// Comma-separated model names; default is the whole zoo.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Output directory for reports, plots, and trained models.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Skip writing the trained forests under <out>/models.
    #[arg(long)]
    no_models: bool,
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let eff = args.common.resolve()?;
    let specs = match &args.models {
        None => ModelSpec::all_standard(),
        Some(names) => parse_models(names)?,
    };
    let (train_pool, test_pool) = load_pools(&eff)?;
    fs::create_dir_all(&args.out)?;
    // Echo the merged configuration next to the results. The echo holds no
    // timings or host facts, so identical runs write identical bytes.
    let cfg_path = args.out.join("run_config.json");
    let mut cfg_json = serde_json::to_string_pretty(&eff).map_err(json_err)?;
    cfg_json.push('\n');
    fs::write(&cfg_path, cfg_json)?;
    println!("wrote {}", cfg_path.display());

    for task in args.task.expand() {
        let (report, models) = match task {
            TaskKind::Perimeter => {
                run_perimeter_sweep(&train_pool, &test_pool, &specs, &eff.sweep)?
            }
            TaskKind::Classification => {
                run_classification_sweep(&train_pool, &test_pool, &specs, &eff.sweep)?
            }
        };
        print_report(&report);
        for path in emit_report(&report, &args.out)? {
            println!("wrote {}", path.display());
        }
        if !args.no_models {
            let model_dir = args.out.join("models");
            fs::create_dir_all(&model_dir)?;
            for (stem, forest) in &models {
                let path = model_dir.join(format!("{stem}.cmtf"));
                save_forest(forest, &path)?;
            }
            println!(
                "wrote {} model file(s) under {}",
                models.len(),
                model_dir.display()
            );
        }
    }
    Ok(())
}

// -------------------------------------------------------------- inspect ---

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Saved forest file.
    model: PathBuf,

    /// Dump the forest as lossless JSON instead of the text audit.
    #[arg(long)]
    json: bool,
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let forest = load_forest(&args.model)?;
    if args.json {
        println!("{}", forest_to_json(&forest)?);
        return Ok(());
    }
    let p = forest.provenance();
    let cfg = forest.config();
    let t = &cfg.tree;
    let s = &t.shaping;
    let (h, w) = forest.grid_shape();
    println!("model:    {}", p.model_name);
    println!("seed:     {}", p.seed);
    println!("training: sha256 {}", p.train_fingerprint);
    println!("grid:     {h}x{w} ({} features)", forest.feature_dim());
    println!(
        "forest:   {} tree(s), bootstrap fraction {}",
        cfg.n_trees, cfg.bootstrap_fraction
    );
    println!(
        "tree:     max depth {}, min leaf {}, gating {:?}",
        t.max_depth, t.min_leaf, t.gating
    );
    println!(
        "shaping:  conv {} ({}x{} kernel, sigma {}), prune {} (top {}), tilt {} (tau {})",
        onoff(s.use_conv),
        s.kernel.size(),
        s.kernel.size(),
        s.kernel.sigma(),
        onoff(s.use_prune),
        s.prune_k,
        onoff(s.use_tilt),
        s.tilt_tau,
    );
    println!(
        "ridge:    l2 {}, lr {}, batch {}, base iters {}",
        t.ridge.l2, t.ridge.learning_rate, t.ridge.batch_size, t.ridge.base_iters
    );
    for (i, tree) in forest.trees().iter().enumerate() {
        let a = audit_tree(tree, s.tilt_tau);
        print!(
            "tree {i}: depth {}, {} internal, {} leaves, min leaf n {}, total leaf n {}",
            a.depth, a.internal_count, a.leaf_count, a.min_leaf_n, a.total_leaf_n
        );
        if a.internal_count > 0 {
            print!(
                ", max split support {}, worst tilt excess {:.3e}",
                a.max_normal_nnz, a.worst_tilt_excess
            );
        }
        println!();
    }
    Ok(())
}

fn onoff(flag: bool) -> &'static str {
    if flag {
        "on"
    } else {
        "off"
    }
}
