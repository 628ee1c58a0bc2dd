use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use pssqp_bench::sim::tracking_error;
use pssqp_bench::{compare_runs, parse_config, read_results, record_dims, run_closed_loop, write_results, BenchError};

const USAGE_ERROR: u8 = 1;
const SOLVER_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "pssqp-bench", about = "Closed-loop NMPC benchmarks for the parallel shooting SQP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a closed loop and write one CSV row per sample.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Single shot, no Phase 2.
        #[arg(long)]
        baseline: bool,
        /// Number of parallel shots.
        #[arg(long)]
        cores: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare SQP iteration counts of two result files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Config of the runs; restricts window means to the transient.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { config, baseline, cores, seed, out } => run(config, baseline, cores, seed, out),
        Command::Compare { a, b, config } => compare(a, b, config),
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn usage(e: BenchError) -> ExitCode {
    init_logging("warn");
    error!("{e}");
    eprintln!("error: {e}");
    ExitCode::from(USAGE_ERROR)
}

fn run(config: PathBuf, baseline: bool, cores: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match parse_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    init_logging(&cfg.log_level);
    cfg.baseline |= baseline;
    if let Some(m) = cores {
        cfg.solver.m = m;
    }
    if let Some(s) = seed {
        cfg.solver.seed = s;
    }
    if out.is_some() {
        cfg.output_path = out;
    }
    if let Err(e) = cfg.validate() {
        return usage(e);
    }
    let sim = match run_closed_loop(&cfg) {
        Ok(sim) => sim,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(SOLVER_FAILURE);
        }
    };
    let (nx, nu) = record_dims(cfg.model);
    match &cfg.output_path {
        Some(path) => {
            if let Err(e) = write_results(&sim.records, nx, nu, path) {
                eprintln!("error: {e}");
                return ExitCode::from(USAGE_ERROR);
            }
            info!("wrote {} samples to {}", sim.records.len(), path.display());
        }
        None => print!("{}", pssqp_bench::records::to_csv(&sim.records, nx, nu)),
    }
    let total: usize = sim.records.iter().map(|r| r.sqp_iters).sum();
    eprintln!("{} samples, {total} SQP iterations, {} not converged", sim.records.len(), sim.failures);
    if sim.failures > 0 {
        ExitCode::from(SOLVER_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn compare(a: PathBuf, b: PathBuf, config: Option<PathBuf>) -> ExitCode {
    init_logging("warn");
    let (ra, rb) = match (read_results(&a), read_results(&b)) {
        (Ok(ra), Ok(rb)) => (ra, rb),
        (Err(e), _) | (_, Err(e)) => return usage(e),
    };
    let errors = match config.as_deref().map(parse_config).transpose() {
        Ok(cfg) => cfg.map(|cfg| ra.iter().map(|r| tracking_error(&cfg, r)).collect::<Vec<_>>()),
        Err(e) => return usage(e),
    };
    let c = match compare_runs(&ra, &rb, errors.as_deref()) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    println!("samples        {}", ra.len());
    println!("total a        {}", c.total_a);
    println!("total b        {}", c.total_b);
    println!("window size    {}", c.window.len());
    println!("window mean a  {:.4}", c.window_mean_a);
    println!("window mean b  {:.4}", c.window_mean_b);
    let better = c.deltas.iter().filter(|&&d| d < 0).count();
    let worse = c.deltas.iter().filter(|&&d| d > 0).count();
    println!("samples where b needs fewer / more iterations: {better} / {worse}");
    ExitCode::SUCCESS
}
