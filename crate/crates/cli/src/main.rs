use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fall::anchors::{AnchorConfig, AnchorMethod};
use fall::dataset::{load_csv, load_inputs, synth_step, synth_two_moons, Dataset};
use fall::harness::{run_benchmark, HyperGrid, Method, Protocol};
use fall::local::{fit_with_params, FallModel, FallParams};
use fall::parallel::with_threads;
use fall::predict::{argmax, predict_batch, PredictConfig};
use fall::verify::{self, VerifyConfig};
use fall::{persist, Dataset64, FallModel64};
use ndarray::{Array2, Axis};

#[derive(Parser, Debug)]
#[command(name = "fall", version, about = "Anchor-regularized local linear regression")]
struct Cli {
    /// Seed for every random choice (anchor selection, splits, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model on a CSV file and save it.
    Fit(FitArgs),
    /// Predict targets for the rows of a CSV file.
    Predict(PredictArgs),
    /// Write the anchor assignment of every training row.
    Cluster(ClusterArgs),
    /// Compare methods over repeated tuned train/test splits.
    Bench(BenchArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Check the closed-form solution on random problems.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column names, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    target: Vec<String>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Regularization strength toward the anchor models.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Number of anchor models.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Training rows used to fit each anchor model.
    #[arg(long, default_value_t = 20)]
    anchor_neighbors: usize,
    /// Ridge penalty of the anchor fits.
    #[arg(long, default_value_t = 1.0)]
    anchor_alpha: f64,
    /// Neighbor models averaged per prediction.
    #[arg(long, default_value_t = 5)]
    k_pred: usize,
    /// Append a constant input column (default).
    #[arg(long, overrides_with = "no_bias")]
    bias: bool,
    /// Fit models without an intercept.
    #[arg(long, overrides_with = "bias")]
    no_bias: bool,
    #[arg(long, value_enum, default_value_t = AnchorMethodArg::Kmeans)]
    anchor_method: AnchorMethodArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnchorMethodArg {
    Random,
    Kmeans,
}

impl ModelArgs {
    fn params(&self, seed: u64) -> FallParams {
        let method = match self.anchor_method {
            AnchorMethodArg::Random => AnchorMethod::Random,
            AnchorMethodArg::Kmeans => AnchorMethod::Kmeans,
        };
        FallParams {
            anchors: AnchorConfig {
                k: self.k,
                anchor_neighbors: self.anchor_neighbors,
                method,
                ridge_alpha: self.anchor_alpha,
                with_bias: !self.no_bias,
                seed,
            },
            lambda: self.lambda,
            k_pred: self.k_pred,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with a header row. Columns named like the training features are
    /// used; otherwise the non-metadata columns are taken in order.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the neighbor count stored in the model.
    #[arg(long)]
    k_pred: Option<usize>,
    /// Treat outputs as class scores and append the argmax label.
    #[arg(long)]
    proba: bool,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridArg {
    /// Tune over the built-in desk-scale grid.
    Desk,
    /// Use exactly the model flags.
    Single,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "fall,ridge")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Desk)]
    grid: GridArg,
    /// Threads for the timed refit and prediction; tuning uses --threads.
    #[arg(long, default_value_t = 1)]
    timing_threads: usize,
    /// Skip feature z-scoring.
    #[arg(long)]
    no_standardize: bool,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Step,
    Moons,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 10)]
    max_d: usize,
    #[arg(long, default_value_t = 3)]
    max_m: usize,
    #[arg(long, default_value_t = 5)]
    max_k: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.01,1,100")]
    lambdas: Vec<f64>,
    /// Relative slack before a better simplex point counts as a violation.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn write_csv(out: &mut dyn Write, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn load_data(args: &DataArgs) -> Result<Dataset64> {
    load_csv(&args.data, &args.target, true).with_context(|| format!("cannot load {}", args.data.display()))
}

fn load_model(path: &Path) -> Result<FallModel64> {
    persist::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let params = args.model.params(cli.seed);
    let start = Instant::now();
    let model = with_threads(cli.threads, || fit_with_params(&data, &params))??;
    let secs = start.elapsed().as_secs_f64();
    persist::save(&model, &args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "n={} d={} m={} k={} lambda={} fit_time={:.3}s",
        model.n(),
        model.input_dim(),
        model.output_dim(),
        model.anchor_set.k(),
        params.lambda,
        secs
    );
    Ok(())
}

/// Picks the model's feature columns from an input file: by name when every
/// feature is present, otherwise positionally when the width matches.
fn select_features(model: &FallModel<f64>, path: &Path) -> Result<Array2<f64>> {
    let (x, names) = load_inputs::<f64>(path, &[], true).with_context(|| format!("cannot load {}", path.display()))?;
    let by_name: Option<Vec<usize>> = model.feature_names.iter().map(|f| names.iter().position(|n| n == f)).collect();
    match by_name {
        Some(cols) => Ok(x.select(Axis(1), &cols)),
        None if x.ncols() == model.input_dim() => Ok(x),
        None => bail!(
            "{} has {} usable columns and lacks features [{}]; model expects {}",
            path.display(),
            x.ncols(),
            model.feature_names.join(","),
            model.input_dim()
        ),
    }
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let x = select_features(&model, &args.data)?;
    let k_pred = args.k_pred.or(model.params.as_ref().map(|p| p.k_pred)).unwrap_or(FallParams::default().k_pred);
    let pred = with_threads(cli.threads, || predict_batch(&model, x.view(), &PredictConfig::new(k_pred)))??;
    let mut header = model.target_names.clone();
    if args.proba {
        header.push("label".into());
    }
    let rows = pred.axis_iter(Axis(0)).map(|r| {
        let mut cells: Vec<String> = r.iter().map(f64::to_string).collect();
        if args.proba {
            cells.push(argmax(r).to_string());
        }
        cells
    });
    write_csv(&mut *output(args.out.as_deref())?, &header, rows)
}

fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let header = ["row", "anchor", "residual", "beta"].map(String::from);
    let rows = model
        .locals
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), (l.assignment + 1).to_string(), l.residual_norm.to_string(), l.beta.to_string()]);
    write_csv(&mut *output(args.out.as_deref())?, &header, rows)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let methods = args.methods.iter().map(|m| m.parse::<Method>()).collect::<fall::Result<Vec<_>>>()?;
    let grid = match args.grid {
        GridArg::Desk => HyperGrid::default(),
        GridArg::Single => HyperGrid::single(&args.model.params(cli.seed)),
    };
    let protocol = Protocol {
        runs: args.runs as usize,
        test_fraction: args.test_fraction,
        folds: args.folds,
        seed: cli.seed,
        standardize: !args.no_standardize,
        timing_threads: args.timing_threads,
    };
    let report = with_threads(cli.threads, || run_benchmark(&data, &methods, &grid, &protocol))??;
    println!("{}", report.to_table());
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_csv()?).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let data: Dataset<f64> = match args.kind {
        SynthKind::Step => synth_step(args.n, args.sigma, cli.seed)?,
        SynthKind::Moons => synth_two_moons(args.n, args.sigma, cli.seed)?,
    };
    let mut out = output(args.out.as_deref())?;
    data.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Returns whether every check passed.
fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<bool> {
    let cfg = VerifyConfig {
        instances: args.instances as usize,
        trials: args.trials as usize,
        max_d: args.max_d,
        max_m: args.max_m,
        max_k: args.max_k,
        lambdas: args.lambdas.clone(),
        tolerance: args.tolerance,
        seed: cli.seed,
        ..VerifyConfig::default()
    };
    let start = Instant::now();
    let report = with_threads(cli.threads, || verify::run(&cfg))??;
    println!("{} instances, {} interior trials each, {:.2}s", cfg.instances, cfg.trials, start.elapsed().as_secs_f64());
    println!("{}", report.summary());
    Ok(report.passed())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a)?,
        Command::Predict(a) => cmd_predict(cli, a)?,
        Command::Cluster(a) => cmd_cluster(a)?,
        Command::Bench(a) => cmd_bench(cli, a)?,
        Command::Synth(a) => cmd_synth(cli, a)?,
        Command::Verify(a) => return cmd_verify(cli, a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe))
}
