use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use omp_core::conditions::{classify_instance, Region};
use omp_core::harness::{self, CalibrationConfig, ExperimentConfig, MatrixKind};
use omp_core::io::{self, format_number};
use omp_core::metrics::{self, SparseSignal, DEFAULT_SUBSET_CAP};
use omp_core::synth::{self, NoiseMode};
use omp_core::{run_omp, Error, StoppingRule};

/// Orthogonal Matching Pursuit toolkit.
#[derive(Parser)]
#[command(name = "omp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run OMP on a matrix and measurement vector and print the trace.
    Run(RunArgs),
    /// Exact isometry constant of a matrix at one order.
    Rip(RipArgs),
    /// Condition verdicts for an instance y = Phi x + v.
    Check(CheckArgs),
    /// Write the identity-matrix counterexample instance.
    Counterexample(CounterexampleArgs),
    /// Run a Monte Carlo experiment from a config file.
    Experiment(ExperimentArgs),
    /// Empirical constant of the error-rate bound over a seeded corpus.
    CalibrateC(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    vector: PathBuf,
    /// Fixed number of iterations.
    #[arg(long, conflicts_with_all = ["residual", "correlation"])]
    k: Option<usize>,
    /// Stop once ||r|| <= EPS.
    #[arg(long, value_name = "EPS", conflicts_with = "correlation")]
    residual: Option<f64>,
    /// Stop once ||Phi' r||_inf <= EPS.
    #[arg(long, value_name = "EPS")]
    correlation: Option<f64>,
    /// Print the full trace as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RipArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
    cap: u64,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Dense signal vector file.
    #[arg(long)]
    signal: PathBuf,
    /// Noise vector file; omitted means noise-free.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
    cap: u64,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    cap: Option<u64>,
    /// Verify the per-iteration inequalities in every trial.
    #[arg(long)]
    diagnostics: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run trials on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 12)]
    m: usize,
    #[arg(long, default_value_t = 14)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    k: Vec<usize>,
    /// Multiples of the SNR floor to sample at (each >= 1).
    #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 2.0, 10.0])]
    snr_factors: Vec<f64>,
    #[arg(long, default_value = "tight")]
    matrix: String,
    #[arg(long, default_value = "isotropic")]
    noise: String,
    #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
    cap: u64,
}

enum Failure {
    Lib(Error),
    Violations(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Capacity { .. } => 2,
                _ => 1,
            })
        }
        Err(Failure::Violations(n)) => {
            eprintln!("error: {n} iteration-inequality violations");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run(a) => run(a)?,
        Command::Rip(a) => {
            let phi = io::read_matrix(&a.matrix)?;
            let est = metrics::exact_rip_constant(&phi, a.order, a.cap)?;
            println!("delta={}", format_number(est.delta));
            println!("witness={}", est.witness);
            println!("subsets={}", est.subsets_examined);
            if !est.is_isometry() {
                println!("isometry=none");
            }
        }
        Command::Check(a) => check(a)?,
        Command::Counterexample(a) => {
            let inst = synth::appendix_a_instance(a.k, a.m, a.eps)?;
            fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
            let write = |name: &str, text: String| fs::write(a.out_dir.join(name), text).map_err(Error::from);
            write("phi.txt", io::format_matrix(&inst.phi))?;
            write("x.txt", io::format_vector(&inst.x.to_dense()))?;
            write("noise.txt", io::format_vector(&inst.noise))?;
            write("y.txt", io::format_vector(&inst.y))?;
            write(
                "manifest.txt",
                io::format_key_values(&[
                    ("instance", "counterexample".to_string()),
                    ("k", a.k.to_string()),
                    ("m", a.m.to_string()),
                    ("eps", a.eps.to_string()),
                ]),
            )?;
            println!("wrote {}", a.out_dir.display());
        }
        Command::Experiment(a) => experiment(a)?,
        Command::CalibrateC(a) => {
            let config = CalibrationConfig {
                base_seed: a.seed,
                trials: a.trials,
                m: a.m,
                n: a.n,
                k: a.k,
                snr_factors: a.snr_factors,
                matrix: MatrixKind::parse(&a.matrix)?,
                noise: NoiseMode::parse(&a.noise)?,
                cap: a.cap,
            };
            let s = harness::calibrate_corpus(&config)?;
            let c = &s.calibration;
            match c.c_star {
                Some(v) => println!("C*={}", format_number(v)),
                None => println!("C*=0 (no support errors in corpus)"),
            }
            println!("points={}", c.points);
            println!("nonzero_error_points={}", c.nonzero_error_points);
            println!("skipped={}", s.skipped);
            println!("max_rho={}", format_number(s.max_rho));
            println!("delta_2K_range={}..{}", format_number(s.min_delta_2k), format_number(s.max_delta_2k));
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Error> {
    let phi = io::read_matrix(&a.matrix)?;
    let y = io::read_vector(&a.vector)?;
    let rule = match (a.k, a.residual, a.correlation) {
        (Some(k), _, _) => StoppingRule::FixedIterations(k),
        (_, Some(eps), _) => StoppingRule::ResidualNorm(eps),
        (_, _, Some(eps)) => StoppingRule::CorrelationNorm(eps),
        _ => return Err(Error::InputDomain("one of --k, --residual, --correlation is required".into())),
    };
    let trace = run_omp(&phi, &y, rule)?;
    if a.json {
        println!("{}", trace.to_json());
    } else {
        print!("{}", trace.to_text());
        println!("# support {}", trace.final_support);
    }
    Ok(())
}

fn check(a: CheckArgs) -> Result<(), Error> {
    let phi = io::read_matrix(&a.matrix)?;
    let x = SparseSignal::from_dense(&io::read_vector(&a.signal)?)?;
    let noise = match &a.noise {
        Some(p) => io::read_vector(p)?,
        None => vec![0.0; phi.rows()],
    };
    if x.len() != phi.cols() {
        return Err(Error::InputDomain("signal length does not match the matrix".into()));
    }
    let k = x.sparsity();
    let mut orders = vec![1, k, k + 1];
    if 2 * k <= phi.cols() && metrics::binomial(phi.cols(), 2 * k) <= a.cap as u128 {
        orders.push(2 * k);
    }
    let deltas = metrics::exact_delta_table(&phi, &orders, a.cap)?;
    let c = classify_instance(&phi, &x, &noise, &deltas)?;
    println!("K={k}");
    println!("SNR={}", format_number(c.metrics.snr));
    println!("MAR={}", format_number(c.metrics.mar));
    println!("KAPPA={}", format_number(c.metrics.kappa));
    for (order, d) in deltas.iter() {
        println!("delta_{order}={}", format_number(d));
    }
    for v in &c.verdicts {
        println!(
            "{}={} threshold={} actual={} margin={}",
            v.id,
            if v.holds { "pass" } else { "fail" },
            format_number(v.threshold),
            format_number(v.actual),
            format_number(v.margin)
        );
    }
    let region = match c.region {
        Region::Guaranteed => "guaranteed",
        Region::BelowNecessary => "below_necessary",
        Region::Indeterminate => "indeterminate",
    };
    println!("REGION={region}");
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        config.base_seed = s;
    }
    if let Some(t) = a.trials {
        config.trials_per_cell = t;
    }
    if let Some(c) = a.cap {
        config.cap = c;
    }
    if a.diagnostics {
        config.diagnostics = true;
    }
    if let Some(d) = a.out_dir {
        config.out_dir = d;
    }
    if a.serial {
        config.parallel = false;
    }
    let out = harness::run_experiment(&config)?;
    for c in &out.cells {
        println!(
            "cell {} m={} n={} K={} snr={} exact_recovery_rate={} mean_rho={}",
            c.cell.index,
            c.cell.m,
            c.cell.n,
            c.cell.k,
            c.cell.snr.label(),
            format_number(c.exact_recovery_rate),
            format_number(c.mean_rho)
        );
    }
    println!("wrote {}", config.out_dir.display());
    if config.diagnostics && out.violations() > 0 {
        return Err(Failure::Violations(out.violations()));
    }
    Ok(())
}
