//! Command-line harness: train and evaluate the three model families,
//! generate synthetic long-tail data, evaluate the generalization-bound
//! formulas, and run the property-verification suites.
//!
//! Every randomized command takes a `--seed` and is bit-reproducible for a
//! fixed seed. Exit codes: 0 on success, 1 on runtime failure, 2 on usage
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use mar_core::bounds::{
    approximation_bound, cross_entropy_constants, estimation_bound_hinge,
    estimation_bound_logistic, estimation_bound_squared, j_single, theta_lower_bound,
    tradeoff_scan, BoundInputs,
};
use mar_core::dml::{evaluate_pairs, generate_pairs, train_mar_dml, transform, DmlConfig, PairSpec};
use mar_core::io::{
    load_dense_csv, load_model, load_sparse_docs, save_dense_csv, save_model, save_sparse_docs,
    DenseDataset, ModelFile,
};
use mar_core::linalg::{gram_det, project_rows_unit, ComponentMatrix};
use mar_core::metrics::{
    average_precision_pairs, clustering_accuracy, kmeans, knn_accuracy, nmi, precision_at_k,
    MetricsReport,
};
use mar_core::nn::{accuracy, lambda_sweep, measure_hidden_diversity, train_nn, NnConfig};
use mar_core::optimizer::{optimize, OptimizerConfig, ZeroLoss};
use mar_core::rbm::{column_angle_stats, perplexity, top_words, train_mar_rbm, RbmConfig};
use mar_core::regularizer::{mar_breakdown, surrogate, surrogate_gradient, SurrogateConfig};
use mar_core::synth::{synth_longtail_docs, synth_longtail_features};
use mar_core::verify::run_verify;

#[derive(Parser)]
#[command(name = "mar", version, about = "Mutual angular regularization toolkit", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate or differentiate the angular regularizer on a matrix.
    Reg {
        #[command(subcommand)]
        action: RegAction,
    },
    /// Run the alternating optimizer on the pure regularizer objective.
    Opt {
        #[command(subcommand)]
        action: OptAction,
    },
    /// Train or evaluate a distance metric.
    Dml {
        #[command(subcommand)]
        action: DmlAction,
    },
    /// Train or evaluate a replicated-softmax model on documents.
    Rbm {
        #[command(subcommand)]
        action: RbmAction,
    },
    /// Train or evaluate a one-hidden-layer classifier.
    Nn {
        #[command(subcommand)]
        action: NnAction,
    },
    /// Evaluate generalization-bound formulas.
    Bounds {
        #[command(subcommand)]
        action: BoundsAction,
    },
    /// Generate synthetic long-tail data.
    Synth(SynthArgs),
    /// Run the property-verification suites.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum RegAction {
    /// Print the angular score breakdown and the surrogate of a matrix.
    Eval(RegArgs),
    /// Print the surrogate gradient of a matrix (rows normalized first).
    Grad(RegArgs),
}

#[derive(Args)]
struct RegArgs {
    /// Matrix file: one row per line, whitespace- or comma-separated numbers.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    det_clamp: f64,
}

#[derive(Subcommand)]
enum OptAction {
    /// Maximize the surrogate alone from a seeded random start.
    Run(OptRunArgs),
}

#[derive(Args)]
struct OptRunArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    outer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum DmlAction {
    Train(DmlTrainArgs),
    Eval(DmlEvalArgs),
}

#[derive(Args)]
struct DmlTrainArgs {
    /// Dense CSV with a `label,f0,...` header.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    hinge_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    /// Similar and dissimilar pairs drawn for training.
    #[arg(long, default_value_t = 400)]
    pairs: usize,
    #[arg(long, default_value_t = 30)]
    outer: usize,
    #[arg(long, default_value_t = 15)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DmlEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Evaluation pairs drawn from the data.
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 10)]
    precision_k: usize,
    #[arg(long, default_value_t = 3)]
    knn_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum RbmAction {
    Train(RbmTrainArgs),
    Eval(RbmEvalArgs),
    /// Print the top-weighted word ids per hidden unit.
    Topics(RbmTopicsArgs),
}

#[derive(Args)]
struct RbmTrainArgs {
    /// Sparse documents: `label<TAB>wordid:count ...` lines.
    #[arg(long)]
    docs: PathBuf,
    /// Vocabulary size; inferred from the data when omitted.
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    minibatch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RbmEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RbmTopicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
}

#[derive(Subcommand)]
enum NnAction {
    Train(NnTrainArgs),
    Eval(NnEvalArgs),
    /// Train once per regularization weight and report held-out accuracy.
    Sweep(NnSweepArgs),
}

#[derive(Args)]
struct NnTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    minibatch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NnEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct NnSweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out data; when omitted, `data` is split in half.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    hidden: usize,
    /// Comma-separated regularization weights.
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.01,0.05,0.2,1.0")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    minibatch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum BoundsAction {
    /// Print every bound at one parameter point.
    Eval(BoundsArgs),
    /// Tabulate estimation/approximation bounds over a theta grid.
    Scan(BoundsScanArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// TOML file of bound constants; `MAR_CONFIG` supplies a default path.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override theta (radians) from the config.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct BoundsScanArgs {
    #[command(flatten)]
    base: BoundsArgs,
    /// Grid as start:end:count over theta (radians).
    #[arg(long, default_value = "0.1:1.5:15")]
    grid: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    mode: SynthMode,
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value_t = 1.5)]
    exponent: f64,
    #[arg(long)]
    count: usize,
    /// Feature dimension (features mode) or vocabulary size (docs mode).
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 8)]
    len_min: u32,
    #[arg(long, default_value_t = 12)]
    len_max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    Features,
    Docs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Reg { action } => reg(action)?,
        Command::Opt { action } => opt(action)?,
        Command::Dml { action } => dml(action)?,
        Command::Rbm { action } => rbm(action)?,
        Command::Nn { action } => nn(action)?,
        Command::Bounds { action } => bounds(action)?,
        Command::Synth(args) => synth(args)?,
        Command::Verify(args) => return verify(args),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_matrix(path: &Path) -> Result<ComponentMatrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .with_context(|| format!("line {}: bad number '{t}'", i + 1))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(ComponentMatrix::from_rows(&rows)?)
}

fn reg(action: RegAction) -> Result<()> {
    match action {
        RegAction::Eval(args) => {
            let a = load_matrix(&args.input)?;
            let b = mar_breakdown(&a, args.gamma)?;
            let unit = project_rows_unit(&a)?;
            println!("components {}", a.k());
            println!("dimension {}", a.d());
            println!("mean_angle {:.17e}", b.mean_angle);
            println!("angle_variance {:.17e}", b.angle_variance);
            println!("omega {:.17e}", b.omega);
            println!("gram_det {:.17e}", gram_det(&unit));
            match surrogate(&unit, args.gamma) {
                Ok(s) => println!("surrogate {s:.17e}"),
                Err(e) => println!("surrogate unavailable ({e})"),
            }
        }
        RegAction::Grad(args) => {
            let a = load_matrix(&args.input)?;
            let unit = project_rows_unit(&a)?;
            let cfg = SurrogateConfig {
                gamma: args.gamma,
                det_clamp: args.det_clamp,
            };
            let g = surrogate_gradient(&unit, &cfg)?;
            for row in g.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                println!("{}", line.join(" "));
            }
        }
    }
    Ok(())
}

fn opt(action: OptAction) -> Result<()> {
    let OptAction::Run(args) = action;
    let mut rng = rand_seed(args.seed);
    let mut a0 = Array2::zeros((args.k, args.d));
    for v in a0.iter_mut() {
        *v = next_uniform(&mut rng, -1.0, 1.0);
    }
    let a0 = ComponentMatrix::new(a0)?;
    let cfg = OptimizerConfig {
        lambda: args.lambda,
        gamma: args.gamma,
        outer_iters: args.outer,
        seed: args.seed,
        ..Default::default()
    };
    let (a, trace) = optimize(&ZeroLoss, &a0, &cfg)?;
    let b = mar_breakdown(&a, args.gamma)?;
    println!("outer_iterations {}", trace.len());
    if let Some(last) = trace.last() {
        println!("final_objective {last:.17e}");
    }
    println!("mean_angle {:.17e}", b.mean_angle);
    println!("angle_variance {:.17e}", b.angle_variance);
    println!("omega {:.17e}", b.omega);
    Ok(())
}

// A tiny deterministic generator for initialization in `opt run`; model
// training seeds its own streams internally.
fn rand_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)
}

fn next_uniform(state: &mut u64, lo: f64, hi: f64) -> f64 {
    // splitmix64 step.
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    lo + (hi - lo) * (z as f64 / u64::MAX as f64)
}

fn dml(action: DmlAction) -> Result<()> {
    match action {
        DmlAction::Train(args) => {
            let ds = load_dense_csv(&args.data)?;
            let cfg = DmlConfig {
                k: args.k,
                lambda: args.lambda,
                gamma: args.gamma,
                hinge_weight: args.hinge_weight,
                margin: args.margin,
                optimizer: OptimizerConfig {
                    outer_iters: args.outer,
                    inner_g_iters: args.inner,
                    inner_a_iters: args.inner,
                    ..Default::default()
                },
            };
            let spec = PairSpec {
                n_similar: args.pairs,
                n_dissimilar: args.pairs,
                seed: args.seed,
            };
            let a = train_mar_dml(ds.x.view(), &ds.labels, &cfg, &spec)?;
            save_model(&args.out, &ModelFile::Dml(a))?;
            println!("model written to {}", args.out.display());
        }
        DmlAction::Eval(args) => {
            let model = load_model(&args.model)?;
            let ModelFile::Dml(a) = model else {
                bail!("{} is not a metric model", args.model.display());
            };
            let ds = load_dense_csv(&args.data)?;
            let mut report = MetricsReport::new(
                args.seed,
                &format!("dml eval k={} pairs={}", a.k(), args.pairs),
            );
            let pairs = generate_pairs(
                ds.x.view(),
                &ds.labels,
                &PairSpec {
                    n_similar: args.pairs,
                    n_dissimilar: args.pairs,
                    seed: args.seed,
                },
            )?;
            let (dist, lab) = evaluate_pairs(&a, &pairs)?;
            report.set("pair_average_precision", average_precision_pairs(&dist, &lab)?)?;
            let reprs = transform(&a, ds.x.view())?;
            let k = args.precision_k.min(ds.len() - 1);
            report.set(
                "precision_at_k",
                precision_at_k(reprs.view(), reprs.view(), &ds.labels, &ds.labels, k, true)?,
            )?;
            let assignments = kmeans(reprs.view(), ds.classes(), 10, args.seed)?;
            report.set("clustering_accuracy", clustering_accuracy(&assignments, &ds.labels)?)?;
            report.set("nmi", nmi(&assignments, &ds.labels)?)?;
            report.set(
                "knn_accuracy",
                knn_accuracy(reprs.view(), &ds.labels, reprs.view(), &ds.labels, args.knn_k)?,
            )?;
            if a.k() >= 2 {
                let b = mar_breakdown(&a, 1.0)?;
                report.set("mean_angle", b.mean_angle)?;
            }
            emit_report(&report, &args.output)?;
        }
    }
    Ok(())
}

fn rbm(action: RbmAction) -> Result<()> {
    match action {
        RbmAction::Train(args) => {
            let batch = load_sparse_docs(&args.docs, args.vocab)?;
            let cfg = RbmConfig {
                lambda: args.lambda,
                gamma: args.gamma,
                lr: args.lr,
                minibatch: args.minibatch,
                epochs: args.epochs,
                seed: args.seed,
                det_clamp: 1e-6,
            };
            let params = train_mar_rbm(&batch, args.k, &cfg)?;
            save_model(&args.out, &ModelFile::Rbm(params))?;
            println!("model written to {}", args.out.display());
        }
        RbmAction::Eval(args) => {
            let model = load_model(&args.model)?;
            let ModelFile::Rbm(params) = model else {
                bail!("{} is not a document model", args.model.display());
            };
            let batch = load_sparse_docs(&args.docs, args.vocab.or(Some(params.vocab())))?;
            let mut report = MetricsReport::new(
                args.seed,
                &format!("rbm eval vocab={} hidden={}", params.vocab(), params.hidden()),
            );
            report.set("perplexity", perplexity(&batch, &params)?)?;
            if params.hidden() >= 2 {
                let (b, min_angle) = column_angle_stats(&params, 1.0)?;
                report.set("mean_angle", b.mean_angle)?;
                report.set("min_angle", min_angle)?;
            }
            emit_report(&report, &args.output)?;
        }
        RbmAction::Topics(args) => {
            let model = load_model(&args.model)?;
            let ModelFile::Rbm(params) = model else {
                bail!("{} is not a document model", args.model.display());
            };
            for (k, words) in top_words(&params, args.top_n).iter().enumerate() {
                let ids: Vec<String> = words.iter().map(|w| w.to_string()).collect();
                println!("unit {k}: {}", ids.join(" "));
            }
        }
    }
    Ok(())
}

fn nn(action: NnAction) -> Result<()> {
    match action {
        NnAction::Train(args) => {
            let ds = load_dense_csv(&args.data)?;
            let cfg = NnConfig {
                hidden: args.hidden,
                lambda: args.lambda,
                gamma: args.gamma,
                lr: args.lr,
                minibatch: args.minibatch,
                epochs: args.epochs,
                seed: args.seed,
                det_clamp: 1e-6,
            };
            let (params, trace) = train_nn(ds.x.view(), &ds.labels, ds.classes(), &cfg)?;
            if let Some(last) = trace.last() {
                println!("final_train_loss {last:.17e}");
            }
            save_model(&args.out, &ModelFile::Nn(params))?;
            println!("model written to {}", args.out.display());
        }
        NnAction::Eval(args) => {
            let model = load_model(&args.model)?;
            let ModelFile::Nn(params) = model else {
                bail!("{} is not a classifier model", args.model.display());
            };
            let ds = load_dense_csv(&args.data)?;
            let mut report = MetricsReport::new(
                args.seed,
                &format!("nn eval hidden={}", params.hidden_units()),
            );
            report.set("accuracy", accuracy(&params, ds.x.view(), &ds.labels)?)?;
            if params.hidden_units() >= 2 {
                let (b, min_angle) = measure_hidden_diversity(&params, 1.0)?;
                report.set("mean_angle", b.mean_angle)?;
                report.set("min_angle", min_angle)?;
            }
            emit_report(&report, &args.output)?;
        }
        NnAction::Sweep(args) => {
            let ds = load_dense_csv(&args.data)?;
            let (train, val) = match &args.val {
                Some(path) => (ds, load_dense_csv(path)?),
                None => {
                    let half = ds.len() / 2;
                    ds.split_at(half)?
                }
            };
            let classes = train.classes().max(val.classes());
            let base = NnConfig {
                hidden: args.hidden,
                lr: args.lr,
                minibatch: args.minibatch,
                epochs: args.epochs,
                seed: args.seed,
                ..Default::default()
            };
            let sweep = lambda_sweep(
                train.x.view(),
                &train.labels,
                val.x.view(),
                &val.labels,
                classes,
                &base,
                &args.lambdas,
            )?;
            println!("lambda,val_accuracy");
            for (lambda, acc) in &sweep {
                println!("{lambda},{acc:.6}");
            }
            let best = sweep
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            println!("best_lambda {}", best.0);
        }
    }
    Ok(())
}

fn load_bound_inputs(args: &BoundsArgs) -> Result<BoundInputs> {
    let path = args.config.clone().or_else(|| {
        std::env::var_os("MAR_CONFIG").map(PathBuf::from)
    });
    let mut inputs = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<BoundInputs>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => BoundInputs::default(),
    };
    if let Some(theta) = args.theta {
        inputs.theta = theta;
    } else if let Some((mu, sigma)) = inputs.gamma_moments {
        // Derive theta from angle moments; negative values are reported and
        // clamped to zero for the downstream formulas.
        let theta = theta_lower_bound(mu, sigma, inputs.tau)?;
        if theta < 0.0 {
            log::warn!("derived angle bound {theta:.6} is negative; clamping to 0");
        }
        inputs.theta = theta.max(0.0);
    }
    inputs.validate()?;
    Ok(inputs)
}

fn bounds(action: BoundsAction) -> Result<()> {
    match action {
        BoundsAction::Eval(args) => {
            let inputs = load_bound_inputs(&args)?;
            println!("j_single {:.17e}", j_single(&inputs));
            let (b, p) = estimation_bound_squared(&inputs);
            println!("estimation_squared {b:.17e} (probability {p:.6})");
            let (b, p) = estimation_bound_logistic(&inputs);
            println!("estimation_logistic {b:.17e} (probability {p:.6})");
            let (b, p) = estimation_bound_hinge(&inputs);
            println!("estimation_hinge {b:.17e} (probability {p:.6})");
            let (lip, lb) = cross_entropy_constants(&inputs)?;
            println!("cross_entropy_lipschitz {lip:.17e}");
            println!("cross_entropy_loss_bound {lb:.17e}");
            let a = approximation_bound(&inputs);
            println!("approximation {:.17e}", a.bound);
            println!(
                "approximation_feasible {} (norm_product {}, output_weight {}, unit_cap {})",
                a.feasible, a.norm_product_ok, a.output_weight_ok, a.unit_cap_ok
            );
        }
        BoundsAction::Scan(args) => {
            let inputs = load_bound_inputs(&args.base)?;
            let grid = parse_grid(&args.grid)?;
            let rows = tradeoff_scan(&inputs, &grid);
            let text = match args.output.format {
                ReportFormat::Json => serde_json::to_string_pretty(&rows)?,
                _ => {
                    let mut t = String::from("theta,estimation,approximation,total\n");
                    for r in &rows {
                        t.push_str(&format!(
                            "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                            r.theta, r.estimation, r.approximation, r.total
                        ));
                    }
                    t
                }
            };
            match &args.output.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:end:count, got '{spec}'");
    }
    let start: f64 = parts[0].parse().context("bad grid start")?;
    let end: f64 = parts[1].parse().context("bad grid end")?;
    let count: usize = parts[2].parse().context("bad grid count")?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    Ok((0..count)
        .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
        .collect())
}

fn synth(args: SynthArgs) -> Result<()> {
    match args.mode {
        SynthMode::Features => {
            let ds = synth_longtail_features(
                args.classes,
                args.exponent,
                args.count,
                args.size,
                args.seed,
            )?;
            save_dense_csv(&args.out, &ds)?;
        }
        SynthMode::Docs => {
            let batch = synth_longtail_docs(
                args.classes,
                args.exponent,
                args.count,
                args.size,
                args.len_min,
                args.len_max,
                args.seed,
            )?;
            save_sparse_docs(&args.out, &batch)?;
        }
    }
    println!("data written to {}", args.out.display());
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let (report, ok) = run_verify(args.seed, args.trials)?;
    emit_report(&report, &args.output)?;
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed");
        Ok(ExitCode::from(1))
    }
}

fn emit_report(report: &MetricsReport, output: &OutputArgs) -> Result<()> {
    let text = match output.format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => {
            let mut t = String::from("metric,value\n");
            t.push_str(&format!("seed,{}\n", report.seed));
            t.push_str(&format!("config_hash,{}\n", report.config_hash));
            for (k, v) in &report.values {
                t.push_str(&format!("{k},{v:.17e}\n"));
            }
            t
        }
        ReportFormat::Text => format!("{report}"),
    };
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// DenseDataset helper used by the sweep subcommand.
trait SplitExt {
    fn split_at(self, n: usize) -> Result<(DenseDataset, DenseDataset)>;
}

impl SplitExt for DenseDataset {
    fn split_at(self, n: usize) -> Result<(DenseDataset, DenseDataset)> {
        Ok(DenseDataset::split_at(&self, n)?)
    }
}
