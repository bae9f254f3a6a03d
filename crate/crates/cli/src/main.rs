use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spider_cli::experiment::{self, SUMMARY_FILE, VERIFY_FILE};
use spider_cli::{ExperimentConfig, HarnessError};
use spider_core::analysis::scaling_slope;

/// Variance-reduced nonconvex optimizers and their experiment harness.
#[derive(Parser)]
#[command(name = "spider", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a configuration and write traces, summary and manifest.
    Run(SweepArgs),
    /// Wrap every cell in restart-and-verify and report the attempts.
    Verify {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Target failure probability; sets the attempt budget.
        #[arg(long, default_value_t = 0.05)]
        p: f64,
    },
    /// Recompute summary.csv from the trace files in a directory.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Fit log(cost) against log(1/eps) for one algorithm of a summary.
    Slope {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        algo: String,
        #[arg(long, default_value = "mean_cost")]
        column: String,
    },
    /// Run one algorithm once and print its trace.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: String,
    #[arg(long)]
    problem: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    problem_seed: u64,
    #[arg(long)]
    eps: f64,
    /// Step option of the first-order SPIDER methods (0 clipped, 1 normalized).
    #[arg(long)]
    option: Option<u8>,
    #[arg(long)]
    n0: Option<f64>,
    #[arg(long, default_value = "finite-sum")]
    mode: String,
    #[arg(long, default_value_t = 0.1)]
    p_fail: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nc_backend: Option<String>,
    #[arg(long)]
    mu_override: Option<f64>,
    /// Write the trace here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SolveArgs {
    fn config_text(&self) -> String {
        let mut lines = vec![
            format!("problem.name = {}", self.problem),
            format!("problem.d = {}", self.d),
            format!("problem.n = {}", self.n),
            format!("problem.seed = {}", self.problem_seed),
            format!("run.algorithms = {}", self.algo),
            format!("run.eps = {}", self.eps),
            format!("run.mode = {}", self.mode),
            format!("run.p_fail = {}", self.p_fail),
            format!("run.seed_base = {}", self.seed),
        ];
        let algo_key = |field: &str, value: String| format!("algo.{}.{field} = {value}", self.algo);
        lines.extend(self.option.map(|v| algo_key("option", v.to_string())));
        lines.extend(self.n0.map(|v| algo_key("n0", v.to_string())));
        lines.extend(self.delta.map(|v| algo_key("delta", v.to_string())));
        lines.extend(self.nc_backend.clone().map(|v| algo_key("nc_backend", v)));
        lines.extend(self.mu_override.map(|v| algo_key("mu_override", v.to_string())));
        lines.join("\n")
    }
}

fn load(args: &SweepArgs) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(&args.config).map_err(|source| HarnessError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    apply_seed_env(&mut cfg)?;
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(HarnessError::Config {
                field: "--workers".into(),
                message: "need at least one worker".into(),
            });
        }
        cfg.workers = w;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// `SPIDER_SEED`, when set, replaces the configured seed base.
fn apply_seed_env(cfg: &mut ExperimentConfig) -> Result<(), HarnessError> {
    if let Ok(raw) = std::env::var("SPIDER_SEED") {
        let seed = raw.trim().parse::<u64>().map_err(|e| HarnessError::Config {
            field: "SPIDER_SEED".into(),
            message: format!("cannot parse '{raw}': {e}"),
        })?;
        cfg.set_seed_base(seed);
    }
    Ok(())
}

fn stdout_err(e: io::Error) -> HarnessError {
    HarnessError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let report = experiment::run_experiment(&cfg)?;
            eprintln!("{} cells written to {}", report.cells, report.out_dir.display());
            if !report.failures.is_empty() {
                return Err(HarnessError::Incomplete(format!(
                    "{} of {} cells failed:\n  {}",
                    report.failures.len(),
                    report.cells,
                    report.failures.join("\n  ")
                )));
            }
            Ok(())
        }
        Command::Verify { sweep, p } => {
            let cfg = load(&sweep)?;
            let rows = experiment::run_verify(&cfg, p)?;
            fs::create_dir_all(&cfg.output_dir).map_err(|source| HarnessError::Io {
                path: cfg.output_dir.clone(),
                source,
            })?;
            let path = cfg.output_dir.join(VERIFY_FILE);
            let file = File::create(&path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            let write_err = |e: csv::Error| HarnessError::Malformed {
                path: path.clone(),
                message: e.to_string(),
            };
            experiment::write_verify(BufWriter::new(file), &rows).map_err(write_err)?;
            experiment::write_verify(io::stdout().lock(), &rows).map_err(write_err)?;
            let failed = rows.iter().filter(|r| r.status == "failed").count();
            if failed > 0 {
                return Err(HarnessError::Incomplete(format!(
                    "{failed} of {} cells exhausted their restart budget",
                    rows.len()
                )));
            }
            Ok(())
        }
        Command::Summarize { dir } => {
            let rows = experiment::summarize_dir(&dir)?;
            experiment::write_summary(&dir.join(SUMMARY_FILE), &rows)?;
            eprintln!("{} summary rows written to {}", rows.len(), dir.join(SUMMARY_FILE).display());
            Ok(())
        }
        Command::Slope { summary, algo, column } => {
            let series = experiment::read_summary_series(&summary, &algo, &column)?;
            let fit = scaling_slope(&series).map_err(|source| HarnessError::Run {
                context: format!("slope of {column} for {algo}"),
                source,
            })?;
            let mut out = io::stdout().lock();
            writeln!(out, "slope = {}", fit.slope).map_err(stdout_err)?;
            writeln!(out, "intercept = {}", fit.intercept).map_err(stdout_err)?;
            writeln!(out, "r2 = {}", fit.r2).map_err(stdout_err)?;
            writeln!(out, "points = {}", series.len()).map_err(stdout_err)?;
            Ok(())
        }
        Command::Solve(args) => {
            let mut cfg = ExperimentConfig::parse(&args.config_text())?;
            apply_seed_env(&mut cfg)?;
            let terminal = match &args.out {
                Some(path) => {
                    let file = File::create(path).map_err(|source| HarnessError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    experiment::solve(&cfg, BufWriter::new(file))?
                }
                None => experiment::solve(&cfg, io::stdout().lock())?,
            };
            eprintln!(
                "status {} after {} iterations, grad norm {}",
                terminal.status,
                terminal.iterations,
                terminal.grad_norm.map_or("n/a".into(), |g| g.to_string())
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
