//! Command implementations behind the CLI verbs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use evodrop::data::{
    gen_synthetic, read_idx, read_sparse_text, write_sparse_text, Dataset, MomentProfile,
    SyntheticSpec,
};
use evodrop::deep::{train_deep, write_checkpoint, DeepDropoutMode, DeepTrainOptions};
use evodrop::dropout::matched_trial_count;
use evodrop::shallow::{
    convergence_comparison, train_shallow, train_shallow_grid, ShallowDropoutMode,
    ShallowTrainOptions, StepSizeSchedule, DEFAULT_STEP_GRID,
};
use evodrop::theory::checks::{run_verification, write_report_files, FaultInjection, VerifyConfig};
use evodrop::trace::{ClockMode, RunSummary, TrainingTrace};

use crate::config::{parse_arch, parse_moment_profile, FileConfig};
use crate::{GenDataArgs, TrainDeepArgs, TrainShallowArgs, VerifyArgs};

fn ensure_out_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output dir {}", out.display()))
}

pub fn run_verify(args: &VerifyArgs) -> anyhow::Result<bool> {
    let fault = match &args.inject_fault {
        None => None,
        Some(name) => Some(
            FaultInjection::parse(name)
                .with_context(|| format!("unknown fault {name:?}; known: masked-sqnorm-sign"))?,
        ),
    };
    let cfg = VerifyConfig {
        seed: args.seed,
        trials: args.trials,
        fault,
    };
    let results = run_verification(&cfg)?;
    print!("{}", evodrop::theory::checks::report_text(&results));
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_out_dir(&out)?;
    write_report_files(&results, &out.join("report.txt"), &out.join("report.json"))?;
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.as_str())
        .collect();
    if !failed.is_empty() {
        eprintln!("verification failed: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

/// Effective shallow-run settings after merging flags over the config file.
struct ShallowSettings {
    seed: u64,
    out: PathBuf,
    mode_name: String,
    delta: f64,
    k: Option<u64>,
    smoothing: f64,
    steps: u64,
    eval_every: u64,
    lr: f64,
    grid: bool,
    last_iterate: bool,
    clock: ClockMode,
}

fn shallow_settings(args: &TrainShallowArgs, file: &FileConfig) -> anyhow::Result<ShallowSettings> {
    let seed = args
        .common
        .seed
        .or(file.run.seed)
        .context("--seed is required (or [run] seed in the config file)")?;
    let out = args
        .common
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let wall = args.common.wall_clock || file.run.wall_clock.unwrap_or(false);
    Ok(ShallowSettings {
        seed,
        out,
        mode_name: args
            .mode
            .clone()
            .or_else(|| file.shallow.mode.clone())
            .unwrap_or_else(|| "d-dropout".into()),
        delta: args.delta.or(file.shallow.delta).unwrap_or(0.5),
        k: args.k.or(file.shallow.k),
        smoothing: args.smoothing.or(file.shallow.smoothing).unwrap_or(0.0),
        steps: args.steps.or(file.shallow.steps).unwrap_or(10_000),
        eval_every: args.eval_every.or(file.shallow.eval_every).unwrap_or(500),
        lr: args.lr.or(file.shallow.lr).unwrap_or(0.01),
        grid: args.grid || file.shallow.grid.unwrap_or(false),
        last_iterate: args.last_iterate || file.shallow.last_iterate.unwrap_or(false),
        clock: if wall { ClockMode::Wall } else { ClockMode::Disabled },
    })
}

fn resolve_shallow_data(
    args: &TrainShallowArgs,
    file: &FileConfig,
    seed: u64,
) -> anyhow::Result<(Dataset, Option<Dataset>, String)> {
    let train_path = args.data.clone().or_else(|| file.data.train.clone());
    if let Some(path) = train_path {
        let dim = args.dim.or(file.data.dim);
        let train = read_sparse_text(&path, dim)?;
        let test = match args.test_data.clone().or_else(|| file.data.test.clone()) {
            Some(p) => Some(read_sparse_text(&p, Some(train.dim()))?),
            None => None,
        };
        return Ok((train, test, path.display().to_string()));
    }
    // Synthetic: flags take `d,n[,test_n]`, the config file a table.
    let (d, n, test_n) = if let Some(spec) = &args.synthetic {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() < 2 || parts.len() > 3 {
            bail!("--synthetic takes d,n or d,n,test_n, got {spec:?}");
        }
        let d = parts[0].trim().parse::<usize>().context("synthetic d")?;
        let n = parts[1].trim().parse::<usize>().context("synthetic n")?;
        let t = parts
            .get(2)
            .map(|s| s.trim().parse::<usize>())
            .transpose()
            .context("synthetic test_n")?
            .unwrap_or(0);
        (d, n, t)
    } else if let Some(s) = &file.data.synthetic {
        (s.d, s.n, s.test_n)
    } else {
        bail!("no dataset: give --data FILE or --synthetic d,n[,test_n] (or a [data] config section)");
    };
    let moments = match args
        .moments
        .clone()
        .or_else(|| file.data.synthetic.as_ref().and_then(|s| s.moments.clone()))
    {
        Some(s) => parse_moment_profile(&s)?,
        None => MomentProfile::LogUniform { lo: 1e-2, hi: 1e2 },
    };
    let noise = args
        .noise
        .or_else(|| file.data.synthetic.as_ref().and_then(|s| s.noise))
        .unwrap_or(0.1);
    let train = gen_synthetic(&SyntheticSpec {
        dim: d,
        count: n,
        profile: moments.clone(),
        relative_noise: noise,
        seed,
    })?;
    let test = if test_n > 0 {
        Some(gen_synthetic(&SyntheticSpec {
            dim: d,
            count: test_n,
            profile: moments,
            relative_noise: noise,
            seed: seed.wrapping_add(1),
        })?)
    } else {
        None
    };
    Ok((train, test, format!("synthetic(d={d},n={n},test_n={test_n})")))
}

fn shallow_mode(
    name: &str,
    dim: usize,
    settings: &ShallowSettings,
) -> anyhow::Result<ShallowDropoutMode> {
    let trials = settings
        .k
        .unwrap_or_else(|| matched_trial_count(dim, settings.delta));
    Ok(match name {
        "s-dropout" => ShallowDropoutMode::Standard {
            delta: settings.delta,
        },
        "d-dropout" => ShallowDropoutMode::DataDependent {
            trials,
            smoothing: settings.smoothing,
        },
        "u-dropout" => ShallowDropoutMode::UniformMultinomial { trials },
        other => bail!("unknown shallow mode {other:?}; use s-dropout, d-dropout or u-dropout"),
    })
}

struct ShallowRun {
    lr: f64,
    trace: TrainingTrace,
    final_train_err: f64,
    final_train_loss: f64,
    final_test_err: f64,
    final_test_loss: f64,
}

fn one_shallow_run(
    train: &Dataset,
    test: Option<&Dataset>,
    mode: &ShallowDropoutMode,
    settings: &ShallowSettings,
) -> anyhow::Result<ShallowRun> {
    let opts = ShallowTrainOptions {
        steps: settings.steps,
        eval_every: settings.eval_every,
        schedule: StepSizeSchedule::Constant(settings.lr),
        eval_averaged: !settings.last_iterate,
        clock: settings.clock,
    };
    let (lr, trace) = if settings.grid {
        let outcome =
            train_shallow_grid(train, test, mode, &opts, settings.seed, &DEFAULT_STEP_GRID)?;
        (outcome.step_size, outcome.trace)
    } else {
        let (_, trace) = train_shallow(train, test, mode, &opts, settings.seed)?;
        (settings.lr, trace)
    };
    let last = *trace.last().context("trace has at least the initial row")?;
    Ok(ShallowRun {
        lr,
        trace,
        final_train_err: last.train_err,
        final_train_loss: last.train_loss,
        final_test_err: last.test_err,
        final_test_loss: last.test_loss,
    })
}

fn shallow_summary(
    settings: &ShallowSettings,
    mode_name: &str,
    dataset_desc: &str,
    run: &ShallowRun,
) -> RunSummary {
    let mut s = RunSummary::new();
    s.set("command", "train-shallow")
        .set("dataset", dataset_desc)
        .set("mode", mode_name)
        .set("delta", settings.delta)
        .set(
            "k",
            settings
                .k
                .map(|k| k.to_string())
                .unwrap_or_else(|| "auto".into()),
        )
        .set("smoothing", settings.smoothing)
        .set("steps", settings.steps)
        .set("eval_every", settings.eval_every)
        .set("lr", run.lr)
        .set("grid", settings.grid)
        .set("reported_model", if settings.last_iterate { "last" } else { "averaged" })
        .set("seed", settings.seed)
        .set("final_train_err", run.final_train_err)
        .set("final_train_loss", run.final_train_loss)
        .set("final_test_err", run.final_test_err)
        .set("final_test_loss", run.final_test_loss);
    s
}

pub fn run_train_shallow(args: &TrainShallowArgs, force_compare: bool) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let settings = shallow_settings(args, &file)?;
    let (train, test, dataset_desc) = resolve_shallow_data(args, &file, settings.seed)?;
    ensure_out_dir(&settings.out)?;
    let compare = force_compare || args.compare;

    if !compare {
        let mode = shallow_mode(&settings.mode_name, train.dim(), &settings)?;
        let run = one_shallow_run(&train, test.as_ref(), &mode, &settings)?;
        run.trace.write_csv(&settings.out.join("trace.csv"))?;
        shallow_summary(&settings, &settings.mode_name, &dataset_desc, &run)
            .write(&settings.out.join("summary.json"))?;
        println!(
            "{}: final train loss {:.6}, train err {:.4} (lr {})",
            settings.mode_name, run.final_train_loss, run.final_train_err, run.lr
        );
        return Ok(());
    }

    // Paired comparison: identical data and seed, only the mask law differs.
    let mut runs = Vec::new();
    for name in ["s-dropout", "d-dropout"] {
        let mode = shallow_mode(name, train.dim(), &settings)?;
        let run = one_shallow_run(&train, test.as_ref(), &mode, &settings)?;
        run.trace
            .write_csv(&settings.out.join(format!("trace-{name}.csv")))?;
        shallow_summary(&settings, name, &dataset_desc, &run)
            .write(&settings.out.join(format!("summary-{name}.json")))?;
        println!(
            "{name}: final train loss {:.6}, train err {:.4} (lr {})",
            run.final_train_loss, run.final_train_err, run.lr
        );
        runs.push(run);
    }
    let cmp = convergence_comparison(&runs[0].trace, &runs[1].trace)
        .context("comparison needs non-empty traces")?;
    let mut summary = RunSummary::new();
    summary
        .set("command", "compare")
        .set("dataset", &dataset_desc)
        .set("seed", settings.seed)
        .set("baseline", "s-dropout")
        .set("challenger", "d-dropout")
        .set("target_train_loss", cmp.target_loss)
        .set("baseline_steps", cmp.baseline_steps)
        .set(
            "challenger_steps_to_target",
            cmp.challenger_steps
                .map(|s| s.to_string())
                .unwrap_or_else(|| "unreached".into()),
        )
        .set(
            "steps_ratio",
            cmp.ratio
                .map(|r| r.to_string())
                .unwrap_or_else(|| "unreached".into()),
        );
    summary.write(&settings.out.join("compare.json"))?;
    match cmp.ratio {
        Some(r) => println!(
            "d-dropout reached the s-dropout final train loss {:.6} in {:.1}% of the steps",
            cmp.target_loss,
            r * 100.0
        ),
        None => println!(
            "d-dropout did not reach the s-dropout final train loss {:.6}",
            cmp.target_loss
        ),
    }
    Ok(())
}

pub fn run_train_deep(args: &TrainDeepArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let seed = args
        .common
        .seed
        .or(file.run.seed)
        .context("--seed is required (or [run] seed in the config file)")?;
    let out = args
        .common
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let wall = args.common.wall_clock || file.run.wall_clock.unwrap_or(false);

    let train_images = args
        .train_images
        .clone()
        .or_else(|| file.data.train_images.clone())
        .context("--train-images is required")?;
    let train_labels = args
        .train_labels
        .clone()
        .or_else(|| file.data.train_labels.clone())
        .context("--train-labels is required")?;
    let train = read_idx(&train_images, &train_labels)?;
    let test_images = args
        .test_images
        .clone()
        .or_else(|| file.data.test_images.clone());
    let test_labels = args
        .test_labels
        .clone()
        .or_else(|| file.data.test_labels.clone());
    let test = match (test_images, test_labels) {
        (Some(i), Some(l)) => Some(read_idx(&i, &l)?),
        (None, None) => None,
        _ => bail!("--test-images and --test-labels go together"),
    };

    let arch_str = args
        .arch
        .clone()
        .or_else(|| file.deep.arch.clone())
        .unwrap_or_else(|| format!("{},150,10", train.dim()));
    let dims = parse_arch(&arch_str)?;
    let delta = args.delta.or(file.deep.delta).unwrap_or(0.5);
    let trials = args
        .k
        .or(file.deep.k)
        .unwrap_or_else(|| matched_trial_count(dims[1], delta));
    let mode_name = args
        .mode
        .clone()
        .or_else(|| file.deep.mode.clone())
        .unwrap_or_else(|| "e-dropout".into());
    let mode = match mode_name.as_str() {
        "s-dropout" => DeepDropoutMode::Standard { delta },
        "u-dropout" => DeepDropoutMode::UniformMultinomial { trials },
        "e-dropout" => DeepDropoutMode::Evolutional { trials },
        other => bail!("unknown deep mode {other:?}; use s-dropout, u-dropout or e-dropout"),
    };

    let lr = args.lr.or(file.deep.lr).unwrap_or(0.01);
    let schedule = match args.lr_drop_epoch.or(file.deep.lr_drop_epoch) {
        Some(epoch) => StepSizeSchedule::Piecewise {
            base: lr,
            drops: vec![(epoch, 0.1)],
        },
        None => StepSizeSchedule::Constant(lr),
    };
    let opts = DeepTrainOptions {
        epochs: args.epochs.or(file.deep.epochs).unwrap_or(20),
        batch_size: args.batch_size.or(file.deep.batch_size).unwrap_or(128),
        schedule,
        momentum: args.momentum.or(file.deep.momentum).unwrap_or(0.9),
        init_std: args.init_std.or(file.deep.init_std).unwrap_or(0.01),
        eval_every: args.eval_every.or(file.deep.eval_every).unwrap_or(1),
        clock: if wall { ClockMode::Wall } else { ClockMode::Disabled },
    };

    ensure_out_dir(&out)?;
    let (net, trace) = train_deep(&dims, &mode, &train, test.as_ref(), &opts, seed)?;
    trace.write_csv(&out.join("trace.csv"))?;
    write_checkpoint(&net, &out.join("checkpoint.bin"))?;
    let last = trace.last().context("trace has at least the initial row")?;
    let mut summary = RunSummary::new();
    summary
        .set("command", "train-deep")
        .set("train_images", train_images.display())
        .set("arch", &arch_str)
        .set("mode", &mode_name)
        .set("delta", delta)
        .set("k", trials)
        .set("epochs", opts.epochs)
        .set("batch_size", opts.batch_size)
        .set("lr", lr)
        .set("momentum", opts.momentum)
        .set("init_std", opts.init_std)
        .set("eval_every", opts.eval_every)
        .set("seed", seed)
        .set("final_train_err", last.train_err)
        .set("final_train_loss", last.train_loss)
        .set("final_test_err", last.test_err)
        .set("final_test_loss", last.test_loss);
    summary.write(&out.join("summary.json"))?;
    println!(
        "{mode_name}: final train err {:.4}, test err {:.4} after {} epochs",
        last.train_err, last.test_err, opts.epochs
    );
    Ok(())
}

pub fn run_gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let moments = match &args.moments {
        Some(s) => parse_moment_profile(s)?,
        None => MomentProfile::LogUniform { lo: 1e-2, hi: 1e2 },
    };
    let train = gen_synthetic(&SyntheticSpec {
        dim: args.dim,
        count: args.count,
        profile: moments.clone(),
        relative_noise: args.noise,
        seed: args.seed,
    })?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_sparse_text(&train, &args.out)?;
    println!(
        "wrote {} examples of dimension {} to {}",
        train.len(),
        train.dim(),
        args.out.display()
    );
    if let (Some(test_count), Some(test_out)) = (args.test_count, &args.test_out) {
        let test = gen_synthetic(&SyntheticSpec {
            dim: args.dim,
            count: test_count,
            profile: moments,
            relative_noise: args.noise,
            seed: args.seed.wrapping_add(1),
        })?;
        write_sparse_text(&test, test_out)?;
        println!(
            "wrote {} test examples to {}",
            test.len(),
            test_out.display()
        );
    } else if args.test_count.is_some() || args.test_out.is_some() {
        bail!("--test-count and --test-out go together");
    }
    Ok(())
}
