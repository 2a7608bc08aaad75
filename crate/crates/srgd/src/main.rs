//! Command-line front end for the rounded gradient descent experiments.
//!
//! Subcommands mirror the experiment kinds; `--paper-preset` materializes
//! the published comparison suites.  Exit codes by failure category:
//! 2 configuration, 3 dataset, 4 numeric failure inside a run, 5 I/O.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use srgd::bounds::{exact_rate_bound, sr_rate_bound, SrBoundVariant};
use srgd::engine::{run_with_callback, DiagLevel, GDConfig};
use srgd::harness::config::{parse_diag, parse_format};
use srgd::harness::ensemble::EnsembleResult;
use srgd::harness::{
    build_problem, parse_config, preset, preset_names, read_aggregate_csv, run_experiment,
    write_aggregate_csv, ExperimentConfig, ExperimentKind, HarnessError,
};
use srgd::problems::{QuadraticProblem, SettingId};
use srgd::rounding::{
    expected_abs_error, expected_abs_error_directed, p0, p_eps, p_hat_eps, round, round_directed,
};
use srgd::{FloatFormat, RandomStream, RoundingMode};

#[derive(Parser)]
#[command(
    name = "srgd",
    version,
    about = "Gradient descent under emulated low-precision rounding schemes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show how one value rounds under every scheme, then a 1-D stagnation walkthrough.
    RoundDemo(DemoArgs),
    /// Quadratic benchmark ensembles.
    Quadratic(RunArgs),
    /// Multinomial logistic regression on the digit corpus.
    Mlr(RunArgs),
    /// Two-layer network classifying digits 3 vs 8.
    Nn(RunArgs),
    /// Append convergence-bound columns to an aggregate CSV.
    EvalBounds(BoundArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; flags below override its values.
    #[arg(long, value_name = "PATH", conflicts_with = "paper_preset")]
    config: Option<PathBuf>,
    /// Canned suite to run; `--paper-preset list` shows the catalog.
    #[arg(long, value_name = "NAME")]
    paper_preset: Option<String>,
    /// Storage format: binary8 | bfloat16 | binary16 | binary32 | "(s, e_min, e_max, subnormals)".
    #[arg(long, value_name = "NAME")]
    format: Option<String>,
    /// Rounding mode for the gradient evaluation: rn | rd | ru | sr | sr_eps:X | ssr_eps:X.
    #[arg(long, value_name = "MODE")]
    mode_grad: Option<String>,
    /// Rounding mode for the stepsize-gradient product.
    #[arg(long, value_name = "MODE")]
    mode_mul: Option<String>,
    /// Rounding mode for the iterate update subtraction.
    #[arg(long, value_name = "MODE")]
    mode_sub: Option<String>,
    /// Stepsize; defaults to the problem's published value.
    #[arg(long)]
    t: Option<f64>,
    /// Re-parameterizes every eps-shifted mode in the effective config.
    #[arg(long)]
    eps: Option<f64>,
    /// Iterations (epochs for the training problems).
    #[arg(long)]
    iters: Option<u64>,
    /// Ensemble size.
    #[arg(long)]
    reps: Option<u32>,
    /// Master seed; run r draws from its fork r.
    #[arg(long)]
    seed: Option<u64>,
    /// Problem shrink factor in (0, 1]: quadratic dimension and training subset.
    #[arg(long)]
    scale: Option<f64>,
    /// Output directory; with a preset, parent of one directory per label.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run label used in the summary and the recorded config.
    #[arg(long, conflicts_with = "paper_preset")]
    label: Option<String>,
    /// Diagnostics level: minimal | standard | debug.
    #[arg(long, value_name = "LEVEL")]
    diag: Option<String>,
    /// Print realized per-step rounding errors of the first run's first steps.
    #[arg(long)]
    debug_shadow: bool,
    /// Quadratic benchmark variant (1 or 2).
    #[arg(long)]
    setting: Option<u8>,
    /// Quadratic dimension before scaling.
    #[arg(long)]
    dim: Option<usize>,
    /// Directory with the IDX dataset files (or set SRGD_DATA_DIR).
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Generate the bundled synthetic corpus when files are missing.
    #[arg(long)]
    synthetic: Option<bool>,
    /// Stratified training-subset size.
    #[arg(long)]
    subset_train: Option<usize>,
}

#[derive(Args)]
struct DemoArgs {
    /// Format to demonstrate.
    #[arg(long, default_value = "binary8")]
    format: String,
    /// Value to round.
    #[arg(long, default_value_t = 100.3)]
    value: f64,
    /// Epsilon for the shifted schemes.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Companion value for the signed scheme (the gradient surrogate).
    #[arg(long, default_value_t = 1.0)]
    companion: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo draws behind the empirical columns.
    #[arg(long, default_value_t = 20000)]
    draws: u64,
}

#[derive(Args)]
struct BoundArgs {
    /// Aggregate CSV produced by a run.
    #[arg(long, value_name = "PATH")]
    source: Option<PathBuf>,
    /// Config file with a [bounds] section supplying defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Smoothness constant of the objective.
    #[arg(long)]
    l: Option<f64>,
    /// Stepsize used in the source run.
    #[arg(long)]
    t: Option<f64>,
    /// Squared starting distance to the optimum.
    #[arg(long)]
    dist0_sq: Option<f64>,
    /// Iterate-distance parameter of the stochastic-rounding bounds.
    #[arg(long)]
    chi: Option<f64>,
    /// Error-fraction parameter in (0, 1/2).
    #[arg(long)]
    a: Option<f64>,
    /// Bias parameter; switches to the eps-strengthened denominators.
    #[arg(long)]
    eps: Option<f64>,
    /// Format whose unit roundoff feeds the eps-strengthened bounds.
    #[arg(long, value_name = "NAME")]
    format: Option<String>,
    /// Output CSV; defaults to `<source stem>.bounds.csv` next to the source.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RoundDemo(args) => round_demo(&args),
        Command::Quadratic(args) => run_command(ExperimentKind::Quadratic, &args),
        Command::Mlr(args) => run_command(ExperimentKind::Mlr, &args),
        Command::Nn(args) => run_command(ExperimentKind::Nn, &args),
        Command::EvalBounds(args) => eval_bounds(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                HarnessError::Config(_) | HarnessError::LengthMismatch(..) => 2,
                HarnessError::Data(_) => 3,
                HarnessError::Run { .. } => 4,
                HarnessError::Io { .. } => 5,
            })
        }
    }
}

fn cfg_err(msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(msg.to_string())
}

fn parse_mode(value: &str, flag: &str) -> Result<RoundingMode, HarnessError> {
    value
        .parse()
        .map_err(|e| cfg_err(format!("--{flag}: {e}")))
}

fn with_eps(mode: RoundingMode, eps: f64) -> Result<RoundingMode, HarnessError> {
    Ok(match mode {
        RoundingMode::SrEps(_) => RoundingMode::sr_eps(eps).map_err(cfg_err)?,
        RoundingMode::SignedSrEps(_) => RoundingMode::signed_sr_eps(eps).map_err(cfg_err)?,
        other => other,
    })
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) -> Result<(), HarnessError> {
    if let Some(f) = &args.format {
        cfg.format = parse_format(f).map_err(cfg_err)?;
    }
    if let Some(m) = &args.mode_grad {
        cfg.mode_grad = parse_mode(m, "mode-grad")?;
    }
    if let Some(m) = &args.mode_mul {
        cfg.mode_mul = parse_mode(m, "mode-mul")?;
    }
    if let Some(m) = &args.mode_sub {
        cfg.mode_sub = parse_mode(m, "mode-sub")?;
    }
    if let Some(t) = args.t {
        cfg.t = Some(t);
    }
    if let Some(eps) = args.eps {
        cfg.mode_grad = with_eps(cfg.mode_grad, eps)?;
        cfg.mode_mul = with_eps(cfg.mode_mul, eps)?;
        cfg.mode_sub = with_eps(cfg.mode_sub, eps)?;
    }
    if let Some(n) = args.iters {
        cfg.iters = n;
    }
    if let Some(n) = args.reps {
        cfg.reps = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.scale {
        cfg.scale = s;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(label) = &args.label {
        cfg.label = label.clone();
    }
    if let Some(d) = &args.diag {
        cfg.diag = parse_diag(d).map_err(cfg_err)?;
    }
    if args.debug_shadow {
        cfg.diag = DiagLevel::Debug;
    }
    if let Some(s) = args.setting {
        cfg.setting = match s {
            1 => SettingId::One,
            2 => SettingId::Two,
            other => return Err(cfg_err(format!("--setting {other}: expected 1 or 2"))),
        };
    }
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(dir) = &args.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    if let Some(s) = args.synthetic {
        cfg.synthetic = s;
    }
    if let Some(n) = args.subset_train {
        cfg.subset_train = Some(n);
    }
    Ok(())
}

fn run_command(kind: ExperimentKind, args: &RunArgs) -> Result<(), HarnessError> {
    if let Some(name) = &args.paper_preset {
        return run_preset(kind, name, args);
    }
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            let cfg = parse_config(&text)?;
            if cfg.kind != kind {
                return Err(cfg_err(format!(
                    "{} is a '{}' experiment; run it with that subcommand",
                    path.display(),
                    cfg.kind
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    apply_overrides(&mut cfg, args)?;
    run_and_report(&cfg)?;
    if args.debug_shadow {
        print_shadows(&cfg)?;
    }
    Ok(())
}

fn run_preset(kind: ExperimentKind, name: &str, args: &RunArgs) -> Result<(), HarnessError> {
    if name == "list" {
        for n in preset_names() {
            let suite = preset(n).expect("listed preset exists");
            println!("{n}: {} experiments ({})", suite.len(), suite[0].1.kind);
        }
        return Ok(());
    }
    let suite = preset(name)
        .ok_or_else(|| cfg_err(format!("unknown preset '{name}'; try --paper-preset list")))?;
    if suite[0].1.kind != kind {
        return Err(cfg_err(format!(
            "preset '{name}' is a '{}' suite; run it with that subcommand",
            suite[0].1.kind
        )));
    }
    let base = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{name}")));
    for (label, mut cfg) in suite {
        apply_overrides(&mut cfg, args)?;
        cfg.label = label.clone();
        cfg.out = Some(base.join(&label));
        run_and_report(&cfg)?;
    }
    Ok(())
}

fn run_and_report(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let agg = run_experiment(cfg)?;
    let Some(last) = agg.rows.last() else {
        println!("{}: no iterations requested", cfg.label);
        return Ok(());
    };
    println!(
        "{}: {} run(s) x {} iterations, {} / {} / {} in {}",
        cfg.label,
        cfg.reps,
        agg.rows.len(),
        cfg.mode_grad,
        cfg.mode_mul,
        cfg.mode_sub,
        srgd::harness::config::format_name(&cfg.format),
    );
    println!(
        "  final f mean = {:.6e} (population var {:.3e})",
        last.f_mean, last.f_var
    );
    if let Some(te) = last.test_error_mean {
        println!(
            "  final test error mean = {:.4} (population var {:.3e})",
            te,
            last.test_error_var.unwrap_or(0.0)
        );
    }
    if agg.stepsize_warning {
        println!("  warning: stepsize exceeds the safe bound 1/(L(1+2u)^2)");
    }
    if let Some(out) = &cfg.out {
        println!("  wrote {}", out.display());
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Re-runs the first three steps of run 0 with full shadows and prints
/// the realized error components.
fn print_shadows(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let (problem, x0, default_t) = build_problem(cfg)?;
    let gd = GDConfig {
        t: cfg.t.unwrap_or(default_t),
        k_max: cfg.iters.min(3),
        format: cfg.format,
        mode_grad: cfg.mode_grad,
        mode_mul: cfg.mode_mul,
        mode_sub: cfg.mode_sub,
        seed: cfg.seed,
        diag: DiagLevel::Debug,
    };
    let mut stream = RandomStream::new(gd.seed).fork(0);
    println!("realized rounding errors, run 0:");
    run_with_callback(problem.as_ref(), &x0, &gd, &mut stream, |tr| {
        if let Some(sh) = &tr.debug {
            println!(
                "  k={}: |sigma1| = {:.3e}, |delta2| = {:.3e}, |delta3| = {:.3e}, |d| = {:.3e}",
                tr.k,
                norm(&sh.sigma1),
                norm(&sh.delta2),
                norm(&sh.delta3),
                norm(&sh.d)
            );
        }
        true
    })
    .map_err(|source| HarnessError::Run {
        run: 0,
        iter: 0,
        source,
    })?;
    Ok(())
}

fn round_demo(args: &DemoArgs) -> Result<(), HarnessError> {
    let fmt = parse_format(&args.format).map_err(cfg_err)?;
    let x = args.value;
    println!(
        "format {}: s = {}, e_min = {}, e_max = {}, subnormals = {}",
        srgd::harness::config::format_name(&fmt),
        fmt.significand_bits(),
        fmt.e_min(),
        fmt.e_max(),
        fmt.supports_subnormals()
    );
    println!(
        "  u = {:e}, smallest positive = {:e}, largest finite = {:e}",
        fmt.unit_roundoff(),
        fmt.min_positive(),
        fmt.x_max()
    );

    let floor = fmt.floor_fl(x).map_err(cfg_err)?;
    let ceil = fmt.ceil_fl(x).map_err(cfg_err)?;
    println!("\nvalue {x}: neighbours [{floor}, {ceil}], gap {}", ceil - floor);
    println!(
        "  round-down probabilities: sr = {:.4}, sr_eps:{} = {:.4}, ssr_eps:{} (v = {}) = {:.4}",
        p0(x, &fmt).map_err(cfg_err)?,
        args.eps,
        p_eps(x, args.eps, &fmt).map_err(cfg_err)?,
        args.eps,
        args.companion,
        p_hat_eps(x, args.eps, args.companion, &fmt).map_err(cfg_err)?
    );

    let modes = [
        RoundingMode::NearestEven,
        RoundingMode::Down,
        RoundingMode::Up,
        RoundingMode::Sr,
        RoundingMode::sr_eps(args.eps).map_err(cfg_err)?,
        RoundingMode::signed_sr_eps(args.eps).map_err(cfg_err)?,
    ];
    println!(
        "\n  mode          expected error    empirical mean ({} draws)",
        args.draws
    );
    for mode in modes {
        let expected = match mode {
            RoundingMode::NearestEven | RoundingMode::Down | RoundingMode::Up => {
                let mut s = RandomStream::new(args.seed);
                round(x, mode, &fmt, &mut s).map_err(cfg_err)?.value() - x
            }
            RoundingMode::SignedSrEps(_) => {
                expected_abs_error_directed(x, mode, &fmt, args.companion).map_err(cfg_err)?
            }
            m => expected_abs_error(x, m, &fmt).map_err(cfg_err)?,
        };
        let mut stream = RandomStream::new(args.seed);
        let mut sum = 0.0;
        for _ in 0..args.draws {
            let r = match mode {
                RoundingMode::SignedSrEps(_) => {
                    round_directed(x, mode, &fmt, &mut stream, args.companion)
                }
                _ => round(x, mode, &fmt, &mut stream),
            }
            .map_err(cfg_err)?;
            sum += r.value();
        }
        let empirical = sum / args.draws as f64 - x;
        println!(
            "  {:<12}  {:>16.6e}  {:>16.6e}",
            mode.to_string(),
            expected,
            empirical
        );
    }

    stagnation_walkthrough(args.seed)?;
    Ok(())
}

/// 1-D quadratic whose nearest-rounded iteration locks in place while a
/// stochastic sub-step escapes to the exact optimum.
fn stagnation_walkthrough(seed: u64) -> Result<(), HarnessError> {
    let problem = QuadraticProblem::diagonal(vec![2.0], vec![1024.0]);
    let fmt = FloatFormat::binary8();
    let base = GDConfig {
        t: 0.1875,
        k_max: 12,
        format: fmt,
        mode_grad: RoundingMode::NearestEven,
        mode_mul: RoundingMode::NearestEven,
        mode_sub: RoundingMode::NearestEven,
        seed,
        diag: DiagLevel::Standard,
    };
    println!("\nstagnation walkthrough: f(x) = (x - 1024)^2, binary8, t = {}", base.t);
    println!("  nearest rounding:");
    let mut stream = RandomStream::new(seed);
    let mut rows = Vec::new();
    let result = run_with_callback(&problem, &[16384.0], &base, &mut stream, |tr| {
        rows.push((tr.k, tr.f_value, tr.tau, tr.stagnation));
        true
    })
    .map_err(|source| HarnessError::Run {
        run: 0,
        iter: 0,
        source,
    })?;
    for (k, f, tau, stagnation) in &rows {
        let x = 1024.0 + f.sqrt();
        println!(
            "    k = {k:>2}  x = {x:>7}  tau = {}{}",
            tau.map_or_else(|| "-".into(), |t| format!("{t:.6}")),
            if stagnation.unwrap_or(false) { "  [stagnant]" } else { "" }
        );
    }
    let locked = result.final_x.as_slice()[0];
    println!("    locked at x = {locked}");

    let mut escaped = 0;
    let mut sub_sr = base.clone();
    sub_sr.mode_sub = RoundingMode::Sr;
    sub_sr.k_max = 40;
    for run in 0..20u64 {
        let mut stream = RandomStream::new(seed).fork(run);
        let r = run_with_callback(&problem, &[16384.0], &sub_sr, &mut stream, |_| true).map_err(
            |source| HarnessError::Run {
                run: run as u32,
                iter: 0,
                source,
            },
        )?;
        if r.final_x.as_slice()[0] == 1024.0 {
            escaped += 1;
        }
    }
    println!("  stochastic sub-step: reached the exact optimum in {escaped}/20 runs of 40 iterations");
    Ok(())
}

fn eval_bounds(args: &BoundArgs) -> Result<(), HarnessError> {
    let file_cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            Some(parse_config(&text)?)
        }
        None => None,
    };
    let from_cfg = |f: fn(&ExperimentConfig) -> Option<f64>| file_cfg.as_ref().and_then(f);

    let source = args
        .source
        .clone()
        .or_else(|| file_cfg.as_ref().and_then(|c| c.bounds.source.clone()))
        .ok_or_else(|| cfg_err("no aggregate CSV: pass --source or a config with bounds.source"))?;
    let l = args.l.or(from_cfg(|c| c.bounds.l));
    let t = args.t.or(from_cfg(|c| c.t));
    let dist0_sq = args.dist0_sq.or(from_cfg(|c| c.bounds.dist0_sq));
    let chi = args.chi.or(from_cfg(|c| c.bounds.chi));
    let a = args.a.or(from_cfg(|c| c.bounds.a));
    let eps = args.eps.or(from_cfg(|c| c.bounds.eps));
    let format = match &args.format {
        Some(f) => Some(parse_format(f).map_err(cfg_err)?),
        None => file_cfg.as_ref().map(|c| c.format),
    };

    let rows = read_aggregate_csv(&source)?;
    let mut names: Vec<&str> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    if let (Some(l), Some(t), Some(d0)) = (l, t, dist0_sq) {
        let mut col = Vec::with_capacity(rows.len());
        let mut precondition_ok = true;
        for row in &rows {
            let b = exact_rate_bound(l, t, row.k, d0).map_err(cfg_err)?;
            precondition_ok &= b.precondition_ok;
            col.push(b.value);
        }
        names.push("rate_bound");
        columns.push(col);
        notes.push(format!("rate_bound: l = {l}, t = {t}, dist0_sq = {d0}"));
        if !precondition_ok {
            notes.push("warning: t > 1/L, the rate guarantee does not apply".into());
        }
    }

    if let (Some(l), Some(t), Some(a), Some(chi)) = (l, t, a, chi) {
        let b = match (eps, format) {
            (Some(e), Some(f)) => Some(2.0 * e * f.unit_roundoff()),
            (Some(_), None) => {
                return Err(cfg_err(
                    "--eps needs a unit roundoff: pass --format as well",
                ))
            }
            (None, _) => None,
        };
        for (name, variant) in [("sr_bound_i", SrBoundVariant::I), ("sr_bound_ii", SrBoundVariant::II)] {
            let mut col = Vec::with_capacity(rows.len());
            for row in &rows {
                col.push(sr_rate_bound(variant, l, t, row.k, a, chi, b).map_err(cfg_err)?);
            }
            names.push(name);
            columns.push(col);
        }
        match b {
            Some(b) => notes.push(format!(
                "sr bounds: a = {a}, chi = {chi}, extremal bias b = 2 eps u = {b:e}"
            )),
            None => notes.push(format!("sr bounds: a = {a}, chi = {chi}, unbiased")),
        }
    }

    if names.is_empty() {
        return Err(cfg_err(
            "nothing to evaluate: supply l, t and dist0_sq for the exact rate bound, \
             and/or l, t, a and chi for the stochastic bounds",
        ));
    }
    notes.push("bounds computed from sample means: diagnostic, not predictive".into());

    let out = args.out.clone().unwrap_or_else(|| {
        let stem = source
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("aggregate");
        source.with_file_name(format!("{stem}.bounds.csv"))
    });
    let shell = EnsembleResult {
        rows,
        final_f: Vec::new(),
        per_run_final: Vec::new(),
        stepsize_warning: false,
    };
    let note = notes.join("; ");
    write_aggregate_csv(&out, &shell, Some((&names, &columns, &note)))?;
    println!("wrote {} with columns {}", out.display(), names.join(", "));
    Ok(())
}
