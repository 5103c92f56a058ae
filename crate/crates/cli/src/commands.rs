use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::Parser;
use ndarray::{concatenate, Array2, Axis};
use ou_diffuse::data::{self, SampleMatrix};
use ou_diffuse::forward::{simulate_trajectories, simulate_trajectory};
use ou_diffuse::nn::OptimizerConfig;
use ou_diffuse::rng::{substream, RNG_ALGORITHM};
use ou_diffuse::sampler::{generate_batch, sample_standardized, GenerationConfig, Method};
use ou_diffuse::stats::{self, kde_1d, linspace};
use ou_diffuse::trainer::{self, TimestepSampling, TrainConfig};
use serde_json::{json, Value};

use crate::args::*;
use crate::manifest::{RunManifest, MANIFEST_FORMAT};
use crate::svg::{extent, Figure, Panel, PALETTE};

/// Forward snapshots in the timeline figure draw from streams above this.
const TIMELINE_FORWARD_STREAM: u64 = 1 << 40;

/// Paths touched by a run, resolved against the working and output directories.
struct Ctx {
    seed: u64,
    output_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn input(&mut self, p: &Path) -> PathBuf {
        self.inputs.push(p.to_path_buf());
        p.to_path_buf()
    }

    fn output(&mut self, p: &Path) -> PathBuf {
        let full = if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.output_dir.join(p)
        };
        self.outputs.push(full.clone());
        full
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, cli.global.output_dir.as_deref());
    }
    let started = Instant::now();
    let output_dir = cli.global.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&output_dir).with_context(|| format!("creating {}", output_dir.display()))?;
    let mut ctx = Ctx {
        seed: cli.global.seed,
        output_dir: output_dir.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let config = match &cli.command {
        Command::Simulate(a) => simulate(&mut ctx, a)?,
        Command::Timeline(a) => timeline(&mut ctx, a)?,
        Command::Train(a) => train(&mut ctx, a)?,
        Command::Generate(a) => generate(&mut ctx, a)?,
        Command::Augment(a) => augment(&mut ctx, a)?,
        Command::Evaluate(a) => evaluate(&mut ctx, a)?,
        Command::Distance(a) => distance(&mut ctx, a)?,
        Command::Split(a) => split(&mut ctx, a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let name = cli.command.name();
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        argv,
        cwd: std::env::current_dir()?,
        seed: cli.global.seed,
        output_dir: output_dir.clone(),
        rng: RNG_ALGORITHM.into(),
        config,
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        threads: rayon::current_num_threads(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let path = output_dir.join(RunManifest::file_name(name));
    manifest.write_atomic(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()?.join(p)
    })
}

/// Re-parses the stored arguments in the stored working directory. A new
/// output directory, when given, is appended so it overrides the stored one.
fn replay(manifest_path: &Path, output_dir: Option<&Path>) -> Result<()> {
    let m = RunManifest::read(manifest_path)?;
    ensure!(
        m.tool_version == env!("CARGO_PKG_VERSION"),
        "manifest was written by version {}, this is {}",
        m.tool_version,
        env!("CARGO_PKG_VERSION")
    );
    let mut argv = m.argv.clone();
    if let Some(dir) = output_dir {
        argv.push("--output-dir".into());
        argv.push(absolute(dir)?.to_string_lossy().into_owned());
    }
    std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd.display()))?;
    let cli = Cli::try_parse_from(std::iter::once("ou-diffuse".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow::anyhow!("stored arguments no longer parse: {e}"))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("manifest records a replay; replay the original manifest instead");
    }
    log::info!("replaying {} {}", m.subcommand, argv.join(" "));
    run(cli, argv)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path, label_column: Option<&str>) -> Result<SampleMatrix> {
    data::load_csv(path, label_column).with_context(|| format!("loading {}", path.display()))
}

fn simulate(ctx: &mut Ctx, a: &SimulateArgs) -> Result<Value> {
    let s = a.schedule.params().build()?;
    let n = s.n_steps();
    let trajectories = simulate_trajectories(&a.x0, &s, a.trajectories, ctx.seed)?;
    let d = a.x0.len();

    let out = ctx.output(&a.output);
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    let dims: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(w, "trajectory,n,t,{}", dims.join(","))?;
    for (k, tr) in trajectories.iter().enumerate() {
        for (step, x) in tr.points().iter().enumerate() {
            let xs: Vec<String> = x.iter().map(f64::to_string).collect();
            writeln!(w, "{k},{step},{},{}", s.time(step), xs.join(","))?;
        }
    }
    w.flush()?;
    log::info!(
        "wrote {} trajectories of {} points to {}",
        trajectories.len(),
        n + 1,
        out.display()
    );

    let kde_at = a.kde_at.clone().unwrap_or_else(|| vec![n / 10, n / 4, n]);
    if let Some(&bad) = kde_at.iter().find(|&&k| k > n) {
        bail!("--kde-at index {bad} is beyond the last step {n}");
    }
    if let Some(svg) = &a.svg {
        let mut paths = Panel::new(
            format!("{} forward trajectories from x0 = {}", trajectories.len(), a.x0[0]),
            "t",
            "x1",
        );
        let shown = &trajectories[..trajectories.len().min(a.max_lines)];
        let values = shown.iter().flat_map(|tr| tr.points().iter().map(|p| p[0]));
        let y_range = extent(values.chain([-3.0, 3.0]), 0.05);
        paths = paths.ranges((0.0, s.t_max()), y_range);
        let alpha = if shown.len() > 20 { 0.35 } else { 0.9 };
        for (k, tr) in shown.iter().enumerate() {
            let pts = tr.points().iter().enumerate().map(|(i, p)| (s.time(i), p[0])).collect();
            paths.line(pts, PALETTE[k % PALETTE.len()], 1.0, alpha);
        }

        let mut dens = Panel::new(format!("KDE ({} trajectories)", trajectories.len()), "x1", "density");
        let samples: Vec<Vec<f64>> = kde_at
            .iter()
            .map(|&k| trajectories.iter().map(|tr| tr.points()[k][0]).collect())
            .collect();
        let (lo, hi) = extent(samples.iter().flatten().copied().chain([-4.0, 4.0]), 0.05);
        let grid = linspace(lo, hi, 400);
        let mut top: f64 = 0.45;
        let mut curves = Vec::new();
        for (&k, xs) in kde_at.iter().zip(&samples) {
            let curve = if trajectories.len() >= 2 && xs.iter().any(|v| *v != xs[0]) {
                Some(kde_1d(xs, &grid, None)?)
            } else {
                None
            };
            if let Some(c) = &curve {
                top = top.max(c.density.iter().cloned().fold(0.0, f64::max));
            }
            curves.push((k, curve));
        }
        dens = dens.ranges((lo, hi), (0.0, top * 1.08));
        for (i, (k, curve)) in curves.into_iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if let Some(c) = curve {
                dens.line(
                    c.grid.iter().copied().zip(c.density.iter().copied()).collect(),
                    color,
                    1.6,
                    1.0,
                );
                dens.legend(format!("t = {:.3}", s.time(k)), color);
            }
        }
        let normal: Vec<(f64, f64)> = grid
            .iter()
            .map(|&x| (x, (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        dens.dashed(normal, "#000", 1.2);
        dens.legend("N(0, 1)", "#000");

        let mut fig = Figure::new(2, 520.0, 360.0);
        fig.panels = vec![paths, dens];
        let out = ctx.output(svg);
        write_text(&out, &fig.render())?;
    }

    Ok(json!({
        "x0": a.x0,
        "trajectories": a.trajectories,
        "schedule": a.schedule.params(),
        "output": a.output,
        "svg": a.svg,
        "kde_at": kde_at,
        "max_lines": a.max_lines,
    }))
}

fn timeline(ctx: &mut Ctx, a: &TimelineArgs) -> Result<Value> {
    let model = data::load_model(ctx.input(&a.model)).context("loading model")?;
    let input = ctx.input(&a.data);
    let mut table = load(&input, a.label_column.as_deref())?;
    if let Some(c) = a.class {
        table = table.filter_class(c)?;
    }
    let d = model.network.output_dim();
    ensure!(d == 2, "timeline needs a 2-D model; this one has {d} features");
    ensure!(
        table.dim() == 2,
        "timeline needs 2-D data; {} has {} features",
        input.display(),
        table.dim()
    );
    ensure!(!table.is_empty(), "{} has no rows", input.display());

    let s = &model.schedule;
    let n = s.n_steps();
    let at = a.at.clone().unwrap_or_else(|| vec![0, n / 4, n / 2, 3 * n / 4, n]);
    ensure!(!at.is_empty(), "--at needs at least one step");
    if let Some(&bad) = at.iter().find(|&&k| k > n) {
        bail!("--at index {bad} is beyond the last step {n}");
    }

    let x = model.scaler.apply_array(&table.features)?;
    let forward: Vec<Vec<(f64, f64)>> = {
        let paths: Vec<_> = x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut rng = substream(ctx.seed, TIMELINE_FORWARD_STREAM + i as u64);
                simulate_trajectory(&row.to_vec(), s, &mut rng)
            })
            .collect::<ou_diffuse::Result<_>>()?;
        at.iter()
            .map(|&k| paths.iter().map(|p| (p.points()[k][0], p.points()[k][1])).collect())
            .collect()
    };
    let method = a.method.unwrap_or_else(|| Method::native(model.target()));
    let mut reverse_at = at.clone();
    reverse_at.sort_unstable_by(|p, q| q.cmp(p));
    let (_, snaps) = sample_standardized(&model, s, method, a.count, ctx.seed, &reverse_at)?;
    let reverse: Vec<Vec<(f64, f64)>> = snaps
        .iter()
        .map(|m| m.rows().into_iter().map(|r| (r[0], r[1])).collect())
        .collect();

    let all = forward.iter().chain(&reverse).flatten();
    let xr = extent(all.clone().map(|p| p.0).chain([-3.5, 3.5]), 0.02);
    let yr = extent(all.map(|p| p.1).chain([-3.5, 3.5]), 0.02);
    let (xr, yr) = ((xr.0.max(-8.0), xr.1.min(8.0)), (yr.0.max(-8.0), yr.1.min(8.0)));
    let cols = &model.feature_columns;
    let mut fig = Figure::new(at.len(), 260.0, 260.0);
    fig.title = Some("forward process (top), reverse process (bottom), standardized features".into());
    for (&k, pts) in at.iter().zip(&forward) {
        let mut p = Panel::new(format!("n = {k}, t = {:.3}", s.time(k)), &cols[0], &cols[1]).ranges(xr, yr);
        p.points(pts.clone(), PALETTE[0], 1.3, 0.45);
        fig.panels.push(p);
    }
    for (&k, pts) in reverse_at.iter().zip(&reverse) {
        let mut p = Panel::new(format!("n = {k}, t = {:.3}", s.time(k)), &cols[0], &cols[1]).ranges(xr, yr);
        p.points(pts.clone(), PALETTE[1], 1.3, 0.45);
        fig.panels.push(p);
    }
    let out = ctx.output(&a.output);
    write_text(&out, &fig.render())?;
    log::info!("wrote {} panels to {}", fig.panels.len(), out.display());
    Ok(json!({
        "data": a.data,
        "label_column": a.label_column,
        "class": a.class,
        "model": a.model,
        "at": at,
        "count": a.count,
        "method": method,
        "output": a.output,
    }))
}

fn train(ctx: &mut Ctx, a: &TrainArgs) -> Result<Value> {
    let input = ctx.input(&a.input);
    let mut table = load(&input, a.label_column.as_deref())?;
    if let Some(c) = a.class {
        table = table.filter_class(c)?;
        log::info!("training on {} rows of class {c}", table.n_rows());
    }
    let cfg = TrainConfig {
        target: a.target,
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer: OptimizerConfig {
            kind: a.optimizer,
            learning_rate: a.lr,
            ..OptimizerConfig::default()
        },
        lr_decay: a.lr_decay,
        seed: ctx.seed,
        timestep_sampling: if a.all_steps {
            TimestepSampling::AllStepsPerPoint
        } else {
            TimestepSampling::OneRandomStepPerPoint
        },
        literal_trajectories: a.literal_trajectories,
        hidden: a.hidden.clone(),
        activation: a.activation,
        plateau_patience: a.plateau_patience,
    };
    let s = a.schedule.params().build()?;
    let (model, report) = trainer::train(&table, &s, &cfg)?;
    log::info!(
        "{} updates in {:.1}s, final epoch loss {:.6}",
        report.updates,
        report.wall_time_secs,
        report.final_loss
    );

    let out = ctx.output(&a.output);
    data::save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    let mut curve = String::from("epoch,loss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        curve.push_str(&format!("{},{l}\n", i + 1));
    }
    let loss_out = ctx.output(&a.loss_output);
    write_text(&loss_out, &curve)?;

    Ok(json!({
        "input": a.input,
        "label_column": a.label_column,
        "class": a.class,
        "rows": table.n_rows(),
        "schedule": a.schedule.params(),
        "training": cfg,
        "output": a.output,
        "loss_output": a.loss_output,
        "epochs_run": report.epoch_losses.len(),
        "stopped_early": report.stopped_early,
    }))
}

fn generate(ctx: &mut Ctx, a: &GenerateArgs) -> Result<Value> {
    let model = data::load_model(ctx.input(&a.model)).context("loading model")?;
    let method = a.method.unwrap_or_else(|| Method::native(model.target()));
    let cfg = GenerationConfig {
        n_samples: a.count,
        seed: ctx.seed,
        method: Some(method),
    };
    let samples = generate_batch(&model, &cfg)?;
    let out = ctx.output(&a.output);
    data::write_csv(&out, &samples).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} samples to {}", samples.n_rows(), out.display());
    Ok(json!({
        "model": a.model,
        "count": a.count,
        "method": method,
        "output": a.output,
    }))
}

fn augment(ctx: &mut Ctx, a: &AugmentArgs) -> Result<Value> {
    let train = load(&ctx.input(&a.train), Some(&a.label_column))?;
    let synthetic = load(&ctx.input(&a.synthetic), None)?;
    let merged = data::augment(&train, &synthetic, a.label)?;
    let out = ctx.output(&a.output);
    data::write_csv(&out, &merged).with_context(|| format!("writing {}", out.display()))?;
    let counts = merged.label_counts();
    log::info!(
        "{} training + {} synthetic rows; label counts {counts:?}",
        train.n_rows(),
        synthetic.n_rows()
    );
    Ok(json!({
        "train": a.train,
        "synthetic": a.synthetic,
        "label": a.label,
        "label_column": a.label_column,
        "output": a.output,
        "rows": merged.n_rows(),
    }))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<Value> {
    let col = a.column.as_deref();
    let predicted = data::load_labels(ctx.input(&a.predictions), col)
        .with_context(|| format!("loading {}", a.predictions.display()))?;
    let actual =
        data::load_labels(ctx.input(&a.actual), col).with_context(|| format!("loading {}", a.actual.display()))?;
    let r = stats::classification_metrics(&predicted, &actual, a.positive)?;
    println!("tp {} fp {} fn {} tn {}", r.tp, r.fp, r.fn_, r.tn);
    println!("precision {}", fmt_opt(r.precision));
    println!("recall {}", fmt_opt(r.recall));
    println!("f1 {}", fmt_opt(r.f1));
    if let Some(p) = &a.output {
        let out = ctx.output(p);
        write_text(&out, &(serde_json::to_string_pretty(&r)? + "\n"))?;
    }
    Ok(json!({
        "predictions": a.predictions,
        "actual": a.actual,
        "positive": a.positive,
        "column": a.column,
        "output": a.output,
        "report": r,
    }))
}

/// Loads a table and removes `column` from its features if it is there.
fn load_without(path: &Path, column: Option<&str>) -> Result<SampleMatrix> {
    let m = load(path, None)?;
    let Some(j) = column.and_then(|c| m.columns.iter().position(|h| h == c)) else {
        return Ok(m);
    };
    let keep: Vec<usize> = (0..m.dim()).filter(|&k| k != j).collect();
    let columns = keep.iter().map(|&k| m.columns[k].clone()).collect();
    Ok(SampleMatrix::new(columns, m.features.select(Axis(1), &keep))?)
}

fn distance(ctx: &mut Ctx, a: &DistanceArgs) -> Result<Value> {
    let x = load_without(&ctx.input(&a.a), a.label_column.as_deref())?;
    let y = load_without(&ctx.input(&a.b), a.label_column.as_deref())?;
    ensure!(
        x.columns == y.columns,
        "feature columns differ: {:?} vs {:?}",
        x.columns,
        y.columns
    );
    let ed = stats::energy_distance(x.features.view(), y.features.view())?;
    println!("energy_distance {ed}");
    let mut result = json!({ "energy_distance": ed });
    if a.null_splits > 0 {
        let pool: Array2<f64> = concatenate(Axis(0), &[x.features.view(), y.features.view()])?;
        let null = stats::energy_null(pool.view(), x.n_rows(), y.n_rows(), a.null_splits, ctx.seed)?;
        let q95 = stats::quantile(&null, 0.95)?;
        let exceed = null.iter().filter(|&&v| v >= ed).count();
        let p_value = (exceed + 1) as f64 / (null.len() + 1) as f64;
        println!("null_q95 {q95}");
        println!("p_value {p_value:.4}");
        result["null_q95"] = json!(q95);
        result["p_value"] = json!(p_value);
    }
    if let Some(p) = &a.output {
        let out = ctx.output(p);
        write_text(&out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    }
    Ok(json!({
        "a": a.a,
        "b": a.b,
        "label_column": a.label_column,
        "null_splits": a.null_splits,
        "output": a.output,
        "result": result,
    }))
}

fn split(ctx: &mut Ctx, a: &SplitArgs) -> Result<Value> {
    let table = load(&ctx.input(&a.input), a.label_column.as_deref())?;
    let (train, test) = data::split(&table, a.test_fraction, ctx.seed, a.stratify)?;
    let train_out = ctx.output(&a.train_output);
    let test_out = ctx.output(&a.test_output);
    data::write_csv(&train_out, &train)?;
    data::write_csv(&test_out, &test)?;
    log::info!("{} training rows, {} test rows", train.n_rows(), test.n_rows());
    Ok(json!({
        "input": a.input,
        "label_column": a.label_column,
        "test_fraction": a.test_fraction,
        "stratify": a.stratify,
        "train_output": a.train_output,
        "test_output": a.test_output,
        "train_rows": train.n_rows(),
        "test_rows": test.n_rows(),
    }))
}
