use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgh_bench::config::CustomFiles;
use pgh_bench::runner::{self, RunStatus};
use pgh_bench::{
    emit_plot, run_bench, Algorithm, BenchError, ExperimentConfig, NormChoice, PlotKind, ProblemKind, Result,
};
use pgh_core::analysis;

#[derive(Parser)]
#[command(
    name = "pgh",
    version,
    about = "Proximal-gradient homotopy solver and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one algorithm and write its trace CSV.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value = "homotopy")]
        algorithm: Algorithm,
    },
    /// Run every configured algorithm and write traces plus summary.json.
    Bench {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated list; defaults to the preset's algorithms.
        #[arg(long, value_enum, value_delimiter = ',')]
        algorithms: Vec<Algorithm>,
        #[arg(long)]
        parallel: bool,
    },
    /// Monte-Carlo restricted isometry estimates of the generated operator.
    Rip {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Levels `k` to estimate at (comma-separated).
        #[arg(long, value_delimiter = ',', default_value = "1")]
        levels: Vec<f64>,
    },
    /// Assumption report and iteration bounds for the generated instance.
    Check {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Render trace CSVs as an SVG line chart.
    Plot {
        /// gap, k or recovery.
        #[arg(long, default_value = "gap")]
        kind: PlotKind,
        #[arg(long, short)]
        out: PathBuf,
        traces: Vec<PathBuf>,
    },
}

/// Problem and solver settings. With `--config` the file is used as is and
/// the remaining flags are ignored.
#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-scale preset instead of the desk-scale one.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum, default_value = "problem1")]
    kind: ProblemKind,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long, short)]
    m: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    norm: Option<NormChoice>,
    #[arg(long)]
    lambda_tgt: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta_prime: Option<f64>,
    #[arg(long)]
    l_min: Option<f64>,
    #[arg(long)]
    gamma_inc: Option<f64>,
    #[arg(long)]
    gamma_dec: Option<f64>,
    #[arg(long)]
    max_stage_iters: Option<usize>,
    #[arg(long)]
    max_total_iters: Option<usize>,
    #[arg(long)]
    apg_restart: bool,
    #[arg(long)]
    svp_rank: Option<usize>,
    #[arg(long)]
    svp_step: Option<f64>,
    #[arg(long)]
    svp_iters: Option<usize>,
    #[arg(long)]
    rip_samples: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    kappa_safety: Option<f64>,
    #[arg(long)]
    reference_tol_factor: Option<f64>,
    /// Operator CSV for `--kind custom`.
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    x0: Option<PathBuf>,
    #[arg(long)]
    z: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "pgh-out")]
    output_dir: PathBuf,
}

impl ProblemArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            return ExperimentConfig::load(path);
        }
        let seed = self.seed.unwrap_or(0);
        let out = self.output_dir.clone();
        let mut cfg = match (self.kind, self.full) {
            (ProblemKind::Problem2, false) => ExperimentConfig::problem2_desk(seed, out),
            (ProblemKind::Problem2, true) => ExperimentConfig::problem2_full(seed, out),
            (_, true) => ExperimentConfig::problem1_full(seed, out),
            (_, false) => ExperimentConfig::problem1_desk(seed, out),
        };
        if self.kind == ProblemKind::Custom {
            let (a, b) = match (self.a, self.b) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(BenchError::config("--kind custom needs --a and --b")),
            };
            cfg.kind = ProblemKind::Custom;
            cfg.d1 = None;
            cfg.d2 = None;
            cfg.algorithms = vec![Algorithm::Homotopy, Algorithm::Pg, Algorithm::Apg];
            cfg.custom = Some(CustomFiles {
                a,
                b,
                x0: self.x0,
                z: self.z,
                weights: self.weights,
            });
        }
        set(&mut cfg.d1, self.d1.map(Some));
        set(&mut cfg.d2, self.d2.map(Some));
        set(&mut cfg.k0, self.k0);
        set(&mut cfg.m, self.m);
        set(&mut cfg.noise, self.noise);
        set(&mut cfg.norm, self.norm.map(Some));
        let s = &mut cfg.solver;
        set(&mut s.lambda_tgt, self.lambda_tgt.map(Some));
        set(&mut s.epsilon, self.epsilon);
        set(&mut s.eta, self.eta);
        set(&mut s.delta_prime, self.delta_prime);
        set(&mut s.l_min, self.l_min);
        set(&mut s.gamma_inc, self.gamma_inc);
        set(&mut s.gamma_dec, self.gamma_dec);
        set(&mut s.max_stage_iters, self.max_stage_iters);
        set(&mut s.max_total_iters, self.max_total_iters);
        s.apg_restart |= self.apg_restart;
        set(&mut cfg.svp.rank, self.svp_rank.map(Some));
        set(&mut cfg.svp.step, self.svp_step);
        set(&mut cfg.svp.iters, self.svp_iters);
        set(&mut cfg.check.rip_samples, self.rip_samples);
        set(&mut cfg.check.r, self.r.map(Some));
        set(&mut cfg.check.delta, self.delta.map(Some));
        set(&mut cfg.check.kappa_safety, self.kappa_safety);
        set(&mut cfg.reference_tol_factor, self.reference_tol_factor);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { problem, algorithm } => {
            let mut cfg = problem.into_config()?;
            cfg.algorithms = vec![algorithm];
            cfg.validate()?;
            let summary = runner::run_single(&cfg, algorithm)?;
            println!("{}", json(&summary));
            if summary.status == RunStatus::IterationLimit {
                eprintln!("error: {} stopped at the iteration limit", algorithm.name());
                return Ok(ExitCode::from(3));
            }
        }
        Command::Bench {
            problem,
            algorithms,
            parallel,
        } => {
            let mut cfg = problem.into_config()?;
            if !algorithms.is_empty() {
                cfg.algorithms = algorithms;
            }
            cfg.parallel |= parallel;
            cfg.validate()?;
            let summary = run_bench(&cfg)?;
            println!(
                "{:<10} {:>8} {:>12} {:>12} {:>6}",
                "algorithm", "iters", "final gap", "elapsed ms", "K"
            );
            for a in &summary.algorithms {
                println!(
                    "{:<10} {:>8} {:>12.3e} {:>12.1} {:>6}",
                    a.algorithm.name(),
                    a.iterations,
                    a.final_gap,
                    a.elapsed_ms,
                    a.final_k
                );
            }
            println!("summary: {}", cfg.output_dir.join("summary.json").display());
            if summary.algorithms.iter().any(|a| a.status == RunStatus::IterationLimit) {
                eprintln!("error: at least one run stopped at the iteration limit");
                return Ok(ExitCode::from(3));
            }
        }
        Command::Rip { problem, levels } => {
            let cfg = problem.into_config()?;
            let gen = pgh_bench::gen_problem(&cfg)?;
            let p = &gen.problem;
            let est = analysis::estimate_rip_levels(
                p.op(),
                p.metric(),
                &gen.family,
                &levels,
                cfg.check.rip_samples,
                cfg.seed,
            )?;
            println!("{}", json(&est));
        }
        Command::Check { problem } => {
            let cfg = problem.into_config()?;
            let prep = runner::prepare(&cfg)?;
            match runner::assumption(&cfg, &prep) {
                Some(out) => println!("{}", json(&out?)),
                None => return Err(BenchError::config("the check needs the truth x0 and the noise z")),
            }
        }
        Command::Plot { kind, out, traces } => {
            let series = emit_plot(&traces, kind, &out)?;
            println!("{} series written to {}", series.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
