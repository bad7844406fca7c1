use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use otfair::data::{
    accuracy, generate_landscape_data, generate_mixture, load_csv, load_model, save_csv, save_model, train_logistic,
    MixtureSpec, TrainConfig,
};
use otfair::harness::{
    linspace, run_landscape, run_limit_histogram, run_null_rejection, run_regularization_sweep, save_table,
    square_grid, ExperimentConfig, SweepConfig,
};
use otfair::limits::DEFAULT_MC_SAMPLES;
use otfair::{most_favorable_odd, most_favorable_opp, run_test, Criterion, Model64};

/// `println!` that ignores a closed standard output.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Wasserstein projection tests for probabilistic fairness of logistic classifiers.
#[derive(Debug, Parser)]
#[command(name = "otfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test a classifier for probabilistic equal opportunity or equalized odds.
    Audit(AuditArgs),
    /// Export the most favorable distribution as a transport plan CSV.
    Mfd(MfdArgs),
    /// Generate a synthetic dataset.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Fit an L2-penalized logistic regression.
    Train(TrainArgs),
    /// Monte Carlo experiments under a fair model.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Threshold and probabilistic equal opportunity gaps over a grid of coefficients.
    Landscape(LandscapeArgs),
    /// Audit models trained with increasing L2 penalties.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
#[group(skip)]
struct ModelArgs {
    /// Coefficients as a comma-separated list, e.g. "0.5,-1".
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "model", conflicts_with = "model")]
    beta: Option<Vec<f64>>,
    /// Intercept used with --beta.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true, requires = "beta")]
    intercept: f64,
    /// Model file written by `train` (JSON with `beta` and `intercept`).
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Model64, Failure> {
        match (&self.beta, &self.model) {
            (Some(beta), _) => Ok(Model64::new(beta.clone(), self.intercept)?),
            (None, Some(path)) => Ok(load_model(path)?),
            (None, None) => Err(Failure::Usage(ErrorKind::MissingRequiredArgument, "--beta or --model is required".into())),
        }
    }
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Dataset CSV with header a,y,x1,...,xd.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    criterion: CriterionArg,
    /// Significance level in (0, 1).
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Monte Carlo draws for the equalized odds quantile.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    /// Seed for the equalized odds quantile; required with --criterion odd.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Exit with status 1 when the null hypothesis is rejected.
    #[arg(long)]
    exit_on_reject: bool,
}

#[derive(Debug, Args)]
struct MfdArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    criterion: CriterionArg,
    /// Output CSV: x1..xd, dest_x1..dest_xd, a, y, norm, weight.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum GenCommand {
    /// Gaussian mixture with one component per (a, y) cell.
    Mixture {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// JSON mixture specification; defaults to the built-in two-dimensional mixture.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rotated two-cluster data used by the landscape experiment.
    Landscape {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// L2 penalty on the coefficients.
    #[arg(long)]
    l2: f64,
    /// Accepted for reproducible scripts; training is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = TrainConfig::default().max_iters)]
    max_iters: usize,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(skip)]
struct ExperimentArgs {
    /// JSON mixture specification; defaults to the built-in two-dimensional mixture.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Coefficients of the audited model; defaults to "0,1", which is fair on the default mixture.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    intercept: f64,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.spec {
            cfg.mixture = read_spec(path)?;
        }
        if let Some(beta) = &self.beta {
            cfg.model = Model64::new(beta.clone(), self.intercept)?;
        } else if self.intercept != 0.0 {
            cfg.model = Model64::new(cfg.model.beta().to_vec(), self.intercept)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum SimulateCommand {
    /// Rejection rates of the test on data drawn under a fair model.
    NullRejection {
        /// Sample sizes, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        /// Significance levels, comma-separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_alpha, default_value = "0.5,0.3,0.1,0.05,0.01")]
        alpha: Vec<f64>,
        #[arg(long, value_enum, default_value_t = CriterionArg::Opp)]
        criterion: CriterionArg,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Output CSV: n, alpha, rate, skipped.
        #[arg(long)]
        out: PathBuf,
    },
    /// Equal opportunity statistics for comparison with the chi-squared limit.
    LimitHist {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        /// Size of the sample used to estimate the limit scale.
        #[arg(long, default_value_t = 1_000_000)]
        oracle_n: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Output CSV: rep, statistic.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    /// Coefficient grid lo:hi:steps, used for both coordinates.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    grid: (f64, f64, usize),
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Decision threshold for the threshold gap.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Output CSV: beta1, beta2, gap_thr, gap_prob.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Penalties lo:hi:steps.
    #[arg(long, value_parser = parse_range, default_value = "0:100:50")]
    l2_range: (f64, f64, usize),
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = CriterionArg::Opp)]
    criterion: CriterionArg,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    /// Seed for the equalized odds quantile; required with --criterion odd.
    #[arg(long)]
    seed: Option<u64>,
    /// Decision threshold for the reported accuracy.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Output CSV: lambda, statistic, quantile, accuracy, reject, converged.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum CriterionArg {
    Opp,
    Odd,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Opp => Criterion::Opp,
            CriterionArg::Odd => Criterion::Odd,
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("{a} is outside (0, 1)"))
    }
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, steps] = parts[..] else {
        return Err(format!("'{s}' is not of the form lo:hi:steps"));
    };
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lo '{lo}': {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("hi '{hi}': {e}"))?;
    let steps: usize = steps.trim().parse().map_err(|e| format!("steps '{steps}': {e}"))?;
    if !lo.is_finite() || !hi.is_finite() || steps == 0 {
        return Err(format!("'{s}' needs finite bounds and at least one step"));
    }
    Ok((lo, hi, steps))
}

enum Failure {
    Usage(ErrorKind, String),
    Data(String),
}

impl From<otfair::Error> for Failure {
    fn from(e: otfair::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn read_spec(path: &Path) -> Result<MixtureSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    MixtureSpec::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn require_seed(seed: Option<u64>, criterion: CriterionArg) -> Result<u64, Failure> {
    match (seed, criterion) {
        (Some(s), _) => Ok(s),
        (None, CriterionArg::Opp) => Ok(0),
        (None, CriterionArg::Odd) => Err(Failure::Usage(
            ErrorKind::MissingRequiredArgument,
            "--seed is required with --criterion odd".into(),
        )),
    }
}

fn audit(args: AuditArgs) -> Result<ExitCode, Failure> {
    let seed = require_seed(args.seed, args.criterion)?;
    let data = load_csv(&args.data, None)?;
    let model = args.model.load()?;
    let report = run_test(args.criterion.into(), &data, &model, args.alpha, args.mc_samples, seed)?;
    let json = report.to_json();
    match &args.report {
        Some(path) => {
            std::fs::write(path, json + "\n").map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            say!(
                "{}: statistic {} quantile {} reject {}",
                report.criterion, report.statistic, report.quantile, report.reject
            );
        }
        None => say!("{json}"),
    }
    Ok(if report.reject && args.exit_on_reject {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn mfd(args: MfdArgs) -> Result<ExitCode, Failure> {
    let data = load_csv(&args.data, None)?;
    let model = args.model.load()?;
    let plan = match args.criterion {
        CriterionArg::Opp => most_favorable_opp(&data, &model)?,
        CriterionArg::Odd => most_favorable_odd(&data, &model)?,
    };
    plan.save_csv(&args.out)?;
    say!(
        "r_squared {} cost {} atoms {}",
        plan.projection.r_squared,
        plan.cost(),
        plan.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn gen(cmd: GenCommand) -> Result<ExitCode, Failure> {
    let (data, out) = match cmd {
        GenCommand::Mixture { n, seed, spec, out } => {
            let spec = match spec {
                Some(path) => read_spec(&path)?,
                None => MixtureSpec::default(),
            };
            (generate_mixture(n, &spec, seed)?, out)
        }
        GenCommand::Landscape { n, seed, out } => (generate_landscape_data(n, seed)?, out),
    };
    save_csv(&data, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn train(args: TrainArgs) -> Result<ExitCode, Failure> {
    if !(args.l2 >= 0.0 && args.l2.is_finite()) {
        return Err(Failure::Usage(ErrorKind::InvalidValue, format!("--l2 {} must be a finite nonnegative number", args.l2)));
    }
    let data = load_csv(&args.data, None)?;
    let cfg = TrainConfig {
        max_iters: args.max_iters,
        ..TrainConfig::with_penalty(args.l2)
    };
    let out = train_logistic(&data, &cfg)?;
    save_model(&out.model, &args.out)?;
    if !out.converged {
        eprintln!(
            "warning: stopped after {} iterations with gradient norm {:e}",
            out.iterations, out.gradient_norm
        );
    }
    say!("loss {} training accuracy {}", out.loss, accuracy(&data, &out.model, 0.5)?);
    Ok(ExitCode::SUCCESS)
}

fn simulate(cmd: SimulateCommand) -> Result<ExitCode, Failure> {
    match cmd {
        SimulateCommand::NullRejection {
            n,
            reps,
            alpha,
            criterion,
            mc_samples,
            seed,
            experiment,
            out,
        } => {
            let cfg = ExperimentConfig {
                sample_sizes: n,
                replications: reps,
                alphas: alpha,
                base_seed: seed,
                criterion: criterion.into(),
                mc_samples,
                ..experiment.config()?
            };
            save_table(&run_null_rejection(&cfg)?, &out)?;
        }
        SimulateCommand::LimitHist {
            n,
            reps,
            oracle_n,
            seed,
            experiment,
            out,
        } => {
            let cfg = ExperimentConfig {
                sample_sizes: vec![n],
                replications: reps,
                base_seed: seed,
                ..experiment.config()?
            };
            let hist = run_limit_histogram(&cfg, oracle_n)?;
            save_table(&hist.rows(), &out)?;
            say!("theta {} ks {}", hist.theta_ref, hist.ks_to_limit());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn landscape(args: LandscapeArgs) -> Result<ExitCode, Failure> {
    let (lo, hi, steps) = args.grid;
    let grid = square_grid(&linspace(lo, hi, steps));
    save_table(&run_landscape(args.n, &grid, args.tau, args.seed)?, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Failure> {
    let seed = require_seed(args.seed, args.criterion)?;
    let train = load_csv(&args.train, None)?;
    let test = load_csv(&args.test, Some(train.dim()))?;
    let (lo, hi, steps) = args.l2_range;
    if lo < 0.0 {
        return Err(Failure::Usage(ErrorKind::InvalidValue, "--l2-range must not contain negative penalties".into()));
    }
    let cfg = SweepConfig {
        lambdas: linspace(lo, hi, steps),
        alpha: args.alpha,
        criterion: args.criterion.into(),
        mc_samples: args.mc_samples,
        seed,
        tau: args.tau,
        ..SweepConfig::default()
    };
    let rows = run_regularization_sweep(&train, &test, &cfg)?;
    save_table(&rows, &args.out)?;
    let stalled = rows.iter().filter(|r| !r.converged).count();
    if stalled > 0 {
        eprintln!("warning: {stalled} fits stopped at the iteration limit");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(a) => audit(a),
        Command::Mfd(a) => mfd(a),
        Command::Gen(c) => gen(c),
        Command::Train(a) => train(a),
        Command::Simulate(c) => simulate(c),
        Command::Landscape(a) => landscape(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(kind, msg)) => Cli::command().error(kind, msg).exit(),
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
