use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use serde::Serialize;

use fastdebias::debias::{closed_form_weights_checked, feasibility_margin, Optimality};
use fastdebias::experiments::{self, ExperimentConfig};
use fastdebias::inference::{confidence_interval, score_indicators, test_support, RecoveryScore};
use fastdebias::io::{read_design, read_raw, read_vector, write_design, write_raw, write_vector, RawMatrix};
use fastdebias::lasso::default_lambda;
use fastdebias::qp::{solve_all, QpConfig};
use fastdebias::{
    coherence_stats, debias, fit_lasso, generate_design, generate_signal, noise_sigma, sample_measurements,
    DebiasedEstimate, DesignMatrix, Ensemble, EnsembleSpec, Error, LassoConfig, Result,
};

#[derive(Parser)]
#[command(name = "fastdebias", version, about = "Closed-form debiased LASSO and its QP baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Support-recovery table over the n grid
    Table1(ExperimentArgs),
    /// Relative error between QP and closed-form weights across mu
    MuSweep(ExperimentArgs),
    /// Monte Carlo coverage of the coherence bounds
    Bounds(ExperimentArgs),
    /// Draw a design, a sparse signal and measurements
    Gen(GenArgs),
    /// Fit the LASSO
    Lasso(LassoArgs),
    /// Debias a LASSO estimate with closed-form weights
    Debias(DebiasArgs),
    /// Solve the weight problem column by column
    QpWeights(QpArgs),
    /// Print rho, L, nu and the mu threshold as JSON
    Coherence(CoherenceArgs),
    /// z-tests and confidence intervals for a debiased estimate
    Infer(InferArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Closed form only (support-recovery table)
    #[arg(long)]
    fast: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50.0)]
    lo: f64,
    #[arg(long, default_value_t = 1000.0)]
    hi: f64,
    /// Output directory for A.fdbm, beta.csv, y.csv and meta.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LassoArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Defaults to the rule of `--sigma`
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DebiasArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    beta_hat: PathBuf,
    #[arg(long)]
    sigma: f64,
    /// `auto` or a value in [0, 1]
    #[arg(long, default_value = "auto")]
    mu: String,
    /// Two columns: debiased estimate, standard error
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QpArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "auto")]
    mu: String,
    #[arg(long, default_value_t = fastdebias::qp::DEFAULT_GAP_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Weight matrix output
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoherenceArgs {
    #[arg(long)]
    matrix: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Two columns: debiased estimate, standard error
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// True coefficient vector, for sensitivity and specificity
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_solver_failure() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Table1(args) => {
            let mut cfg = load_config(&args, ExperimentConfig::table1())?;
            cfg.fast |= args.fast;
            let result = experiments::run_table1(&cfg)?;
            experiments::write_table1(&args.out, &result)?;
            print!("{}", experiments::table1_csv(&result));
        }
        Command::MuSweep(args) => {
            let cfg = load_config(&args, ExperimentConfig::mu_sweep())?;
            let sweep = experiments::run_mu_sweep(&cfg)?;
            experiments::write_mu_sweep(&args.out, &sweep)?;
            print!("{}", experiments::mu_sweep_csv(&sweep));
        }
        Command::Bounds(args) => {
            let cfg = load_config(&args, ExperimentConfig::bounds())?;
            let report = experiments::run_bound_validation(&cfg, &cfg.bound_params()?, cfg.trials)?;
            experiments::write_bounds(&args.out, &report)?;
            print!("{}", experiments::bounds_csv(&report));
        }
        Command::Gen(args) => gen(&args)?,
        Command::Lasso(args) => {
            let a: DesignMatrix = read_design(&args.matrix)?;
            let y: Array1<f64> = read_vector(&args.y)?;
            let lambda = match (args.lambda, args.sigma) {
                (Some(l), _) => l,
                (None, Some(sigma)) => default_lambda(sigma, a.nrows(), a.ncols()),
                (None, None) => return Err(Error::InvalidArgument("pass --lambda or --sigma".into())),
            };
            let cfg = LassoConfig::new(lambda).tol(args.tol).max_iters(args.max_iters);
            let est = fit_lasso(&a, y.view(), &cfg)?;
            write_vector(&args.out, &est.beta_hat)?;
            eprintln!("lambda {lambda} sweeps {} kkt {:e}", est.iterations, est.kkt_residual);
        }
        Command::Debias(args) => {
            let a: DesignMatrix = read_design(&args.matrix)?;
            let y: Array1<f64> = read_vector(&args.y)?;
            let beta_hat: Array1<f64> = read_vector(&args.beta_hat)?;
            let stats = coherence_stats(&a)?;
            let mu = parse_mu(&args.mu, stats.mu_threshold)?;
            let w = closed_form_weights_checked(&a, mu, &stats)?;
            if w.optimality == Optimality::Infeasible {
                eprintln!("warning: mu {mu} is below the threshold {}; weights violate the constraint", stats.mu_threshold);
            }
            let est = debias(&a, y.view(), args.sigma, beta_hat.view(), &w)?;
            let mut data = est.beta_d.to_vec();
            data.extend(est.stderr.iter());
            write_raw(&args.out, &RawMatrix { rows: est.beta_d.len(), cols: 2, data })?;
            eprintln!("mu {mu} (threshold {})", stats.mu_threshold);
        }
        Command::QpWeights(args) => {
            let a: DesignMatrix = read_design(&args.matrix)?;
            let mu = parse_mu(&args.mu, coherence_stats(&a)?.mu_threshold)?;
            let cfg = QpConfig { tol: args.tol, max_iters: args.max_iters, ..QpConfig::default() };
            let start = Instant::now();
            let (w, report) = solve_all(&a, mu, &cfg)?;
            let elapsed = start.elapsed().as_secs_f64();
            let dense = w.to_dense(&a);
            write_raw(&args.out, &RawMatrix::from_array2(&dense))?;
            let worst = feasibility_margin(&a, &w)?.iter().fold(0.0_f64, |m, &x| m.max(x));
            println!(
                "{}",
                serde_json::to_string_pretty(&QpCertificate {
                    mu,
                    max_gap: report.max_gap,
                    max_margin: report.max_margin,
                    max_constraint: worst,
                    time_seconds: elapsed,
                    total_iterations: report.total_iterations,
                })?
            );
        }
        Command::Coherence(args) => {
            let a: DesignMatrix = read_design(&args.matrix)?;
            println!("{}", serde_json::to_string_pretty(&coherence_stats(&a)?)?);
        }
        Command::Infer(args) => infer(&args)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct QpCertificate {
    mu: f64,
    max_gap: f64,
    max_margin: f64,
    max_constraint: f64,
    time_seconds: f64,
    total_iterations: usize,
}

fn load_config(args: &ExperimentArgs, base: ExperimentConfig) -> Result<ExperimentConfig> {
    match &args.config {
        Some(path) => ExperimentConfig::load(path, base),
        None => {
            base.validate()?;
            Ok(base)
        }
    }
}

fn parse_mu(text: &str, threshold: f64) -> Result<f64> {
    if text == "auto" {
        return Ok(threshold);
    }
    text.parse().map_err(|_| Error::InvalidArgument(format!("--mu expects `auto` or a number, got `{text}`")))
}

#[derive(Serialize)]
struct GenMeta {
    n: usize,
    p: usize,
    s: usize,
    ensemble: Ensemble,
    seed: u64,
    sigma: f64,
    lambda: f64,
}

fn gen(args: &GenArgs) -> Result<()> {
    let a: DesignMatrix = generate_design(args.n, args.p, &EnsembleSpec::new(args.ensemble), args.seed)?;
    let beta = generate_signal(args.p, args.s, args.lo, args.hi, args.seed)?;
    let sigma = noise_sigma(&a, &beta)?;
    let meas = sample_measurements(&a, &beta, sigma, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write_design(&args.out.join("A.fdbm"), &a)?;
    write_vector(&args.out.join("beta.csv"), &beta.values().to_owned())?;
    write_vector(&args.out.join("y.csv"), &meas.y)?;
    let meta = GenMeta {
        n: args.n,
        p: args.p,
        s: args.s,
        ensemble: args.ensemble,
        seed: args.seed,
        sigma,
        lambda: default_lambda(sigma, args.n, args.p),
    };
    fs::write(args.out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct InferOutput {
    b_hat: Vec<u8>,
    intervals: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<RecoveryScore>,
}

fn read_estimate(path: &Path) -> Result<DebiasedEstimate> {
    let raw = read_raw(path)?;
    if raw.cols != 2 {
        return Err(Error::Format(format!("estimate file needs 2 columns, found {}", raw.cols)));
    }
    let (beta_d, stderr) = raw.data.split_at(raw.rows);
    Ok(DebiasedEstimate {
        beta_d: Array1::from(beta_d.to_vec()),
        stderr: Array1::from(stderr.to_vec()),
        mu: f64::NAN,
        sigma: f64::NAN,
    })
}

fn infer(args: &InferArgs) -> Result<()> {
    let est = read_estimate(&args.estimate)?;
    let call = test_support(&est, args.alpha)?;
    let intervals = confidence_interval(&est, args.alpha)?;
    let score = match &args.truth {
        Some(path) => {
            let truth: Array1<f64> = read_vector(path)?;
            let support: Vec<bool> = truth.iter().map(|&v| v != 0.0).collect();
            Some(score_indicators(&call.b_hat, &support)?)
        }
        None => None,
    };
    let out = InferOutput { b_hat: call.b_hat.iter().map(|&b| u8::from(b)).collect(), intervals, score };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
