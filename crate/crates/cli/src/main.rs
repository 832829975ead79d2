use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ivreg::denoise::{reduce_all, Norm};
use ivreg::harness::{
    load_csv, load_csv_auto, load_features, network_mae, read_aggregate_csv, render_svg,
    run_and_write, write_interval_csv, write_trace_csv, CsvSchema, ExperimentConfig,
};
use ivreg::intervalgen::{regenerate, IntervalGenConfig, LocationLaw};
use ivreg::model::{
    estimate_lipschitz_constant, load_checkpoint, save_checkpoint, MlpConfig, DEFAULT_MAX_PAIRS,
};
use ivreg::objectives::{train, ObjectiveKind, ObjectiveSpec, TrainConfig};
use ivreg::{Error, LossFamily};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CELLS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "ivreg", version, about = "Regression from interval targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a labeled CSV (f1..fd, y) into an interval CSV (f1..fd, l, u, y).
    Gen(GenArgs),
    /// Train one model and write a checkpoint and a per-epoch trace.
    Train(TrainArgs),
    /// Mean absolute error of a checkpoint on a CSV with a `y` column.
    Eval(EvalArgs),
    /// Reduced intervals of an interval CSV under an m-Lipschitz assumption.
    Denoise(DenoiseArgs),
    /// Percentile estimate of the Lipschitz constant of a labeled CSV.
    Lipschitz(LipschitzArgs),
    /// Run an experiment config and write results.csv and aggregate.csv.
    Bench(BenchArgs),
    /// Render an aggregate CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Location {
    Uniform,
    Mid,
    Boundary,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    q_min: f64,
    #[arg(long)]
    q_max: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    location: Location,
    /// Concentration parameter `c` for the mid and boundary location laws.
    #[arg(long, default_value_t = 0.25)]
    c: f64,
    #[arg(long, default_value_t = 0.0)]
    pad_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Projection,
    Minmax,
    MinmaxReg,
    PlMax,
    PlMean,
    PlEnsemble,
    SupervisedMidpoint,
    SupervisedTrue,
}

#[derive(Args)]
struct TrainArgs {
    /// Interval CSV (f1..fd, l, u[, y]) or labeled CSV (f1..fd, y).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "projection")]
    objective: Objective,
    /// Loss exponent p in [1, 8].
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Teachers for the pseudo-label objectives.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
    hidden: Vec<usize>,
    /// Lipschitz constant m; unconstrained when omitted.
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Euclidean,
    Linf,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Interval CSV (f1..fd, l, u[, y]).
    #[arg(long)]
    data: PathBuf,
    /// Query points (feature columns); defaults to the rows of `--data`.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    m: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, value_enum, default_value = "euclidean")]
    norm: NormArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct LipschitzArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 95.0)]
    percentile: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_PAIRS)]
    max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// ExperimentConfig JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    aggregate: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "test MAE")]
    title: String,
}

fn gen(args: GenArgs) -> ivreg::Result<()> {
    let location = match args.location {
        Location::Uniform => LocationLaw::UNIFORM,
        Location::Mid => LocationLaw::MidCentered { c: args.c },
        Location::Boundary => LocationLaw::BoundaryFavoring { c: args.c },
    };
    let cfg = IntervalGenConfig {
        q_min: args.q_min,
        q_max: args.q_max,
        location,
        pad_scale: args.pad_scale,
        seed: args.seed,
    };
    let ds = load_csv(&args.input, &CsvSchema::labeled())?;
    write_interval_csv(&regenerate(&ds, &cfg)?, &args.output)
}

fn train_cmd(args: TrainArgs) -> ivreg::Result<()> {
    let ds = load_csv_auto(&args.data)?;
    let kind = match args.objective {
        Objective::Projection => ObjectiveKind::Projection,
        Objective::Minmax => ObjectiveKind::Minmax,
        Objective::MinmaxReg => ObjectiveKind::MinmaxReg {
            lambda: args.lambda,
            adversary_lr: None,
        },
        Objective::PlMax => ObjectiveKind::PLMax { k: args.k },
        Objective::PlMean => ObjectiveKind::PLMean { k: args.k },
        Objective::PlEnsemble => ObjectiveKind::PLEnsembleBaseline { k: args.k },
        Objective::SupervisedMidpoint => ObjectiveKind::SupervisedMidpoint,
        Objective::SupervisedTrue => ObjectiveKind::SupervisedTrue,
    };
    let spec = ObjectiveSpec::new(kind).with_exponent(LossFamily::new(args.p)?);
    let mut layer_sizes = vec![ds.feature_dim()];
    layer_sizes.extend(&args.hidden);
    layer_sizes.push(1);
    let mut model = MlpConfig {
        layer_sizes,
        ..MlpConfig::standard(ds.feature_dim())
    }
    .with_seed(args.seed);
    model.lipschitz = args.lipschitz;
    let tc = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: args.seed,
        model,
    };
    let trained = train(&spec, &tc, &ds)?;
    save_checkpoint(&trained.model, &args.checkpoint)?;
    if let Some(path) = &args.trace {
        write_trace_csv(&trained, path)?;
    }
    println!("final_train_objective_loss={}", trained.final_loss());
    Ok(())
}

fn eval(args: EvalArgs) -> ivreg::Result<()> {
    let mlp = load_checkpoint(&args.checkpoint)?;
    let ds = load_csv_auto(&args.data)?;
    println!("{}", network_mae(&mlp, &ds)?);
    Ok(())
}

fn denoise(args: DenoiseArgs) -> ivreg::Result<()> {
    let ds = load_csv(&args.data, &CsvSchema::interval())?;
    let queries = match &args.queries {
        Some(path) => load_features(path)?,
        None => ds.features(),
    };
    let norm = match args.norm {
        NormArg::Euclidean => Norm::Euclidean,
        NormArg::Linf => Norm::LInf,
    };
    let reduced = reduce_all(
        &ds,
        &queries,
        args.m,
        args.eta,
        LossFamily::new(args.p)?,
        norm,
    )?;
    let mut w = csv::Writer::from_path(&args.output)?;
    w.write_record([
        "query_index",
        "base_lower",
        "base_upper",
        "r",
        "s",
        "empty_flag",
    ])?;
    for (i, r) in reduced.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.base_lower.to_string(),
            r.base_upper.to_string(),
            r.r_buffer.to_string(),
            r.s_buffer.to_string(),
            u8::from(r.empty).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn lipschitz(args: LipschitzArgs) -> ivreg::Result<()> {
    let ds = load_csv(&args.data, &CsvSchema::labeled())?;
    let m = estimate_lipschitz_constant(
        &ds.features(),
        &ds.true_targets()?,
        args.percentile,
        args.max_pairs,
        args.seed,
    )?;
    println!("{m}");
    Ok(())
}

/// Returns the number of failed cells.
fn bench(args: BenchArgs) -> ivreg::Result<usize> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    let report = run_and_write(&cfg)?;
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "cell failed: objective={} seed={} split={}: {}",
            row.objective,
            row.seed,
            row.split,
            row.error.as_deref().unwrap_or_default()
        );
    }
    println!(
        "wrote {} rows to {}",
        report.rows.len(),
        cfg.output_dir.join("results.csv").display()
    );
    Ok(report.failures)
}

fn plot(args: PlotArgs) -> ivreg::Result<()> {
    let rows = read_aggregate_csv(&args.aggregate)?;
    std::fs::write(&args.output, render_svg(&rows, &args.title)?)?;
    Ok(())
}

fn exit_for(err: &Error) -> u8 {
    if err.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Denoise(a) => denoise(a),
        Command::Lipschitz(a) => lipschitz(a),
        Command::Plot(a) => plot(a),
        Command::Bench(a) => match bench(a) {
            Ok(0) => Ok(()),
            Ok(n) => {
                eprintln!("{n} experiment cell(s) failed");
                return ExitCode::from(EXIT_CELLS_FAILED);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
