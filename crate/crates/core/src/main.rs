use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use outlier_pca::harness::{
    run_experiment, validate_lemma2, validate_lemma5, Algorithm, ExperimentConfig, InstanceSource,
};
use outlier_pca::instances::{planted_instance, Graph, OutlierMode};
use outlier_pca::itersvd::iterative_svd_sweep;
use outlier_pca::matrix::DenseMatrix;
use outlier_pca::oracle::{brute_force_opt, SolveParams};

#[derive(Parser)]
#[command(
    name = "outlier-pca",
    about = "Bi-criteria PCA with outliers: solvers, oracles, generators, validators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Algorithm,
    /// Matrix file in the text format; omit to generate planted instances.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = OutlierMode::GaussianFar)]
    mode: OutlierMode,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Guess for the optimal total lp^p error (lp-select only).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver over trials and report per-trial guarantee checks.
    Solve(SolveArgs),
    /// Exact brute-force optimum for a matrix file.
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
    },
    /// Generate instances or graphs.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Full iterative-SVD ladder sweep with per-guess outcomes.
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
    },
    /// Monte-Carlo check of the uniform-sampling coverage bound.
    ValidateLemma2 {
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the edge-subspace dimension sandwich on random edge subsets.
    ValidateLemma5 {
        /// Graph file ("n_vertices n_edges" header, one "i j" pair per line).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        gnp_n: usize,
        #[arg(long, default_value_t = 0.2)]
        gnp_p: f64,
        #[arg(long, default_value_t = 200)]
        subsets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Planted instance: matrix file plus JSON truth sidecar.
    Planted {
        #[arg(long, default_value_t = 30)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = OutlierMode::GaussianFar)]
        mode: OutlierMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <prefix>.mat and <prefix>.truth.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Erdős–Rényi graph file.
    Graph {
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(guarantees_ok) => {
            if guarantees_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve(args) => {
            let source = match &args.input {
                Some(path) => InstanceSource::File {
                    matrix: path.clone(),
                    truth: None,
                },
                None => InstanceSource::Planted {
                    d: args.d,
                    n: args.n,
                    sigma: args.sigma,
                    mode: args.mode,
                },
            };
            let cfg = ExperimentConfig {
                source,
                algorithm: args.algo,
                params: SolveParams {
                    k: args.k,
                    m: args.m,
                    epsilon: args.epsilon,
                    delta: args.delta,
                    p: args.p,
                    seed: args.seed,
                },
                trials: args.trials,
                theta_guess: args.theta,
            };
            let report = run_experiment(&cfg)?;
            match &args.out {
                Some(path) => {
                    let f = std::fs::File::create(path)?;
                    let w = std::io::BufWriter::new(f);
                    match args.format {
                        OutputFormat::Json => report.write_jsonl(w)?,
                        OutputFormat::Csv => report.write_csv(w)?,
                    }
                }
                None => match args.format {
                    OutputFormat::Json => report.write_jsonl(std::io::stdout().lock())?,
                    OutputFormat::Csv => report.write_csv(std::io::stdout().lock())?,
                },
            }
            eprintln!(
                "{}/{} trials passed all guarantee checks",
                report.summary.guarantee_passes, report.summary.trials
            );
            Ok(report.summary.all_pass)
        }
        Command::Oracle { input, k, m } => {
            let a = DenseMatrix::read_text_file(&input)?;
            let (part, opt) = brute_force_opt(&a, k, m)?;
            println!(
                "{}",
                serde_json::json!({ "partition": part, "opt": opt })
            );
            Ok(true)
        }
        Command::Gen { what } => {
            match what {
                GenCommand::Planted {
                    d,
                    n,
                    k,
                    m,
                    sigma,
                    mode,
                    seed,
                    out,
                } => {
                    let inst = planted_instance(d, n, k, m, sigma, mode, seed)?;
                    let matrix_path = out.with_extension("mat");
                    let truth_path = out.with_extension("truth.json");
                    inst.export(&matrix_path, &truth_path)?;
                    eprintln!(
                        "wrote {} and {}",
                        matrix_path.display(),
                        truth_path.display()
                    );
                }
                GenCommand::Graph { n, p, seed, out } => {
                    let g = Graph::gnp(n, p, seed)?;
                    let f = std::fs::File::create(&out)?;
                    g.write_text(std::io::BufWriter::new(f))?;
                    eprintln!("wrote {} ({} edges)", out.display(), g.edges.len());
                }
            }
            Ok(true)
        }
        Command::Sweep {
            input,
            k,
            m,
            epsilon,
        } => {
            let a = DenseMatrix::read_text_file(&input)?;
            let sweep = iterative_svd_sweep(&a, k, m, epsilon)?;
            println!("{}", serde_json::to_string_pretty(&sweep)?);
            Ok(true)
        }
        Command::ValidateLemma2 {
            d,
            n,
            k,
            epsilon,
            sigma,
            trials,
            seed,
        } => {
            let stats = validate_lemma2(d, n, k, epsilon, sigma, trials, seed)?;
            let bound = epsilon * epsilon / 8.0;
            let lcb = stats.lower_confidence_bound(2.326);
            println!(
                "{}",
                serde_json::json!({
                    "trials": stats.trials,
                    "successes": stats.successes,
                    "rate": stats.rate(),
                    "lower_confidence_bound_99": lcb,
                    "target_bound": bound,
                })
            );
            // High-probability claim: demand the confidence bound clear the
            // ε²/8 constant minus a sampling margin.
            let margin = 3.0 * (bound * (1.0 - bound) / stats.trials.max(1) as f64).sqrt();
            Ok(lcb >= bound - margin)
        }
        Command::ValidateLemma5 {
            input,
            gnp_n,
            gnp_p,
            subsets,
            seed,
        } => {
            let g = match input {
                Some(path) => Graph::read_text_file(&path)?,
                None => Graph::gnp(gnp_n, gnp_p, seed)?,
            };
            let summary = validate_lemma5(&g, subsets, seed.wrapping_add(1))?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(summary.passed())
        }
    }
}
