use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pama::checks::{run_suite, Suite, SuiteSize};
use pama::experiment::{
    generate_truth, lambda_scale, matrix_from_csv, matrix_to_csv, run_sweep, sample_observations, ExperimentConfig,
};
use pama::trace::trace_to_csv;
use pama::{run_palm, run_pama, Error, LossKind, Noise, ObservationSet, PalmConfig, PamaConfig, SmoothLoss, ThetaSpec};

#[derive(Parser)]
#[command(
    name = "pama",
    version,
    about = "Low-rank composite factorization solvers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a λ sweep on synthetic one-bit problems and write CSV tables.
    Sweep {
        /// TOML experiment configuration; keys left out take the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        /// Overrides the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve one problem read from an observation file.
    Solve(SolveArgs),
    /// Run a self-check suite; exits nonzero when a check fails.
    Check {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// Use the full sample counts instead of the quick ones.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Draw a synthetic truth and one-bit observations.
    Generate {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 300)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        r_star: usize,
        #[arg(long, default_value_t = 0.4)]
        sample_rate: f64,
        #[arg(long, value_enum, default_value_t = NoiseArg::Logistic)]
        noise: NoiseArg,
        /// Laplace scale.
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives `truth.csv` and `observations.txt`.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 300 × 300, r* = 5.
    Desk,
    /// 2000 × 2000, r* = 10.
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Prox,
    Grad,
    Descent,
    Norms,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Logistic,
    Laplace,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Logistic,
    Laplace,
    Quadratic,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Pama,
    Palm,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    loss: LossArg,
    /// Observation file: `n m`, `N`, then `N` lines `i j y`.
    #[arg(long)]
    observations: PathBuf,
    /// Dense CSV target for the quadratic loss; defaults to the observed signs.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Laplace scale.
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    /// `theta1` … `theta5` or `theta6(a=..,rho=..)`.
    #[arg(long, default_value = "theta1")]
    theta: ThetaSpec,
    /// Absolute λ.
    #[arg(long, conflicts_with = "c_lambda", required_unless_present = "c_lambda")]
    lambda: Option<f64>,
    /// λ relative to the largest column norm of the observed sign matrix.
    #[arg(long)]
    c_lambda: Option<f64>,
    /// Number of factor columns `r`.
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Pama)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1e-8)]
    mu: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Relative-change tolerance of the stopping rule.
    #[arg(long, default_value_t = 5e-4)]
    rel_tol: f64,
    /// Objective-stall tolerance of the stopping rule.
    #[arg(long, default_value_t = 1e-3)]
    obj_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append per-iteration diagnostics to the PAMA trace.
    #[arg(long)]
    diagnostics: bool,
    /// Receives `u.csv`, `v.csv` and `trace.csv`.
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Sweep { config, preset, output } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)?;
                    let base = match preset {
                        Preset::Desk => ExperimentConfig::desk(),
                        Preset::Full => ExperimentConfig::full(),
                    };
                    merge_toml(base, &text)?
                }
                None => match preset {
                    Preset::Desk => ExperimentConfig::desk(),
                    Preset::Full => ExperimentConfig::full(),
                },
            };
            if let Some(dir) = output {
                cfg.output = dir;
            }
            let result = run_sweep(&cfg, &mut |line| eprintln!("{line}"))?;
            result.write(&cfg, &cfg.output)?;
            print!("{}", result.averages_csv());
            eprintln!(
                "wrote {} runs ({} failures) to {}",
                result.runs.len(),
                result.failures.len(),
                cfg.output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(args) => solve(args).map(|()| ExitCode::SUCCESS),
        Command::Check { suite, full, seed } => {
            let size = if full { SuiteSize::full() } else { SuiteSize::quick() };
            let suites: Vec<Suite> = match suite {
                SuiteArg::Prox => vec![Suite::Prox],
                SuiteArg::Grad => vec![Suite::Grad],
                SuiteArg::Descent => vec![Suite::Descent],
                SuiteArg::Norms => vec![Suite::Norms],
                SuiteArg::All => Suite::ALL.to_vec(),
            };
            let mut ok = true;
            for s in suites {
                for outcome in run_suite(s, size, seed)? {
                    ok &= outcome.passed;
                    println!("{outcome}");
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Generate {
            n,
            m,
            r_star,
            sample_rate,
            noise,
            b,
            seed,
            output,
        } => {
            let noise = match noise {
                NoiseArg::Logistic => Noise::Logistic,
                NoiseArg::Laplace => Noise::laplace(b)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = generate_truth(n, m, r_star, &mut rng)?;
            let obs = sample_observations(&truth, sample_rate, noise, &mut rng)?;
            fs::create_dir_all(&output)?;
            fs::write(output.join("truth.csv"), matrix_to_csv(&truth))?;
            fs::write(output.join("observations.txt"), obs.to_text())?;
            eprintln!("wrote {} observations to {}", obs.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Applies the keys present in `text` on top of `base`.
fn merge_toml(base: ExperimentConfig, text: &str) -> Result<ExperimentConfig, Error> {
    let overrides: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut merged: toml::Table = base.to_toml().parse().expect("serialized config parses");
    merged.extend(overrides);
    ExperimentConfig::from_toml(&toml::to_string(&merged).expect("table serializes"))
}

fn solve(args: SolveArgs) -> Result<(), Error> {
    let obs = ObservationSet::parse_text(&fs::read_to_string(&args.observations)?)?;
    let lambda = match (args.lambda, args.c_lambda) {
        (Some(l), _) => l,
        (None, Some(c)) => c * lambda_scale(&obs),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let kind = match args.loss {
        LossArg::Logistic => LossKind::OneBit(Noise::Logistic),
        LossArg::Laplace => LossKind::OneBit(Noise::laplace(args.b)?),
        LossArg::Quadratic => LossKind::MaskedQuadratic(match &args.target {
            Some(path) => matrix_from_csv(&fs::read_to_string(path)?)?,
            None => obs.sign_matrix(),
        }),
    };
    let loss = SmoothLoss::new(kind, obs)?;
    let (u, v, trace) = match args.solver {
        SolverArg::Pama => {
            let mut cfg = PamaConfig::new(lambda, args.theta, args.rank);
            cfg.mu = args.mu;
            cfg.max_iter = args.max_iter;
            cfg.eps1 = args.rel_tol;
            cfg.eps2 = args.obj_tol;
            cfg.seed = args.seed;
            cfg.diagnostics = args.diagnostics;
            let out = run_pama(&loss, &cfg, &mut |_| {})?;
            eprintln!("stopped: {:?}", out.stop_reason);
            (out.u, out.v, out.trace)
        }
        SolverArg::Palm => {
            let mut cfg = PalmConfig::new(lambda, args.theta, args.rank);
            cfg.mu = args.mu;
            cfg.max_iter = args.max_iter;
            cfg.eps3 = args.rel_tol;
            cfg.eps4 = args.obj_tol;
            cfg.seed = args.seed;
            let out = run_palm(&loss, &cfg)?;
            eprintln!("stopped: {:?}", out.stop_reason);
            (out.u, out.v, out.trace)
        }
    };
    write_solution(&args.output, &u, &v, &trace_to_csv(&trace))?;
    let last = trace.last().expect("trace is never empty");
    println!(
        "lambda={lambda} iterations={} objective={} rank={} time_s={}",
        last.k, last.objective, last.rank, last.time_s
    );
    Ok(())
}

fn write_solution(
    dir: &Path,
    u: &nalgebra::DMatrix<f64>,
    v: &nalgebra::DMatrix<f64>,
    trace: &str,
) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("u.csv"), matrix_to_csv(u))?;
    fs::write(dir.join("v.csv"), matrix_to_csv(v))?;
    fs::write(dir.join("trace.csv"), trace)?;
    Ok(())
}
