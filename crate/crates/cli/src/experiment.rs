//! Sweeps, summaries, manifests and the restart-and-verify command.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use spider_core::analysis::{verify_and_restart, Verifier, VERIFY_FACTOR};
use spider_core::sfo::{Mode, ProblemConstants};
use spider_core::ssp::{eigen_referee, DENSE_CAP};
use spider_core::{Problem, RunTrace, Status, TraceOptions};

use crate::cell::{run_cell, CellContext};
use crate::config::{AlgoConfig, Algorithm, ExperimentConfig};
use crate::error::HarnessError;
use crate::setup::{build_problem, resolve_constants, start_point};
use crate::tracefile::{self, point_digest, read_trace, sfo_count, write_trace, Terminal};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const VERIFY_FILE: &str = "verify.csv";

/// Version string recorded in manifests.
pub fn code_version() -> String {
    format!("spider-cli {}", env!("CARGO_PKG_VERSION"))
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash that changes exactly when the effective configuration or the code
/// version changes.
pub fn manifest_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(&format!("{}\n{}", code_version(), cfg.canonical()))
}

/// Problem, start point and constants shared by every cell of a sweep.
struct Prepared {
    problem: Box<dyn Problem>,
    x0: Vec<f64>,
    constants: ProblemConstants,
}

impl Prepared {
    fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let problem = build_problem(&cfg.problem)?;
        let x0 = start_point(&cfg.problem);
        let constants = resolve_constants(problem.as_ref(), &x0, &cfg.constants)?;
        Ok(Self { problem, x0, constants })
    }

    fn context(&self, cfg: &ExperimentConfig, opts: TraceOptions) -> CellContext<'_> {
        CellContext {
            problem: self.problem.as_ref(),
            constants: &self.constants,
            x0: &self.x0,
            mode: cfg.mode,
            p_fail: cfg.p_fail,
            opts,
        }
    }
}

fn trace_options(cfg: &ExperimentConfig) -> TraceOptions {
    TraceOptions {
        rows: true,
        values: cfg.referee.f_value,
        grad_norm: cfg.referee.grad_norm,
        iterates: false,
    }
}

fn terminal_of(trace: &RunTrace, problem: &dyn Problem, cfg: &ExperimentConfig, attempts: bool) -> Terminal {
    let x = &trace.x_out;
    let lambda_min = if cfg.referee.eigen && problem.dim() <= DENSE_CAP {
        eigen_referee(problem, x).ok().map(|(l, _)| l)
    } else {
        None
    };
    Terminal {
        status: trace.status.as_str().to_string(),
        iterations: trace.iterations,
        f_value: cfg.referee.f_value.then(|| problem.full_value(x)),
        grad_norm: cfg.referee.grad_norm.then(|| problem.grad_norm(x)),
        sfo_cost: sfo_count(&trace.ledger, cfg.cost_convention),
        izo_cost: trace.ledger.izo,
        x_digest: Some(point_digest(x)),
        lambda_min,
        attempts: attempts.then_some(trace.attempts),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

/// Removes files a previous sweep may have left in `dir`.
fn clear_outputs(dir: &Path) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if tracefile::parse_file_name(&name).is_some() || name == SUMMARY_FILE || name == MANIFEST_FILE {
            fs::remove_file(entry.path()).map_err(|e| HarnessError::io(entry.path(), e))?;
        }
    }
    Ok(())
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("a thread pool with a positive worker count")
}

/// Cells of a sweep in a fixed order: algorithm, then accuracy, then seed.
fn cells(cfg: &ExperimentConfig) -> Vec<(&AlgoConfig, f64, u64)> {
    let mut out = Vec::new();
    for algo in &cfg.algorithms {
        for &eps in &cfg.eps {
            for s in 0..cfg.seeds as u64 {
                out.push((algo, eps, cfg.seed_base + s));
            }
        }
    }
    out
}

/// Trace file name, wall seconds and error message (if any) of one cell.
type CellRecord = (String, f64, Option<String>);

/// Outcome of a finished sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub cells: usize,
    /// `file: error` for every cell whose optimizer returned an error.
    pub failures: Vec<String>,
}

/// Runs every cell, writes one trace per cell, then the summary and the
/// manifest. A cell that errors gets a trace with only an `error` terminal
/// record and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let started = Instant::now();
    let prepared = Prepared::new(cfg)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
    clear_outputs(&out)?;
    let ctx = prepared.context(cfg, trace_options(cfg));
    let cells = cells(cfg);
    let results: Vec<Result<CellRecord, HarnessError>> = thread_pool(cfg.workers).install(|| {
        cells
            .par_iter()
            .map(|&(algo, eps, seed)| {
                let name = tracefile::file_name(algo.algorithm.name(), eps, seed);
                let start = Instant::now();
                let (rows, terminal, error) = match run_cell(&ctx, algo, eps, seed) {
                    Ok(trace) => {
                        let t = terminal_of(&trace, prepared.problem.as_ref(), cfg, false);
                        (trace.rows, t, None)
                    }
                    Err(e) => (Vec::new(), Terminal::error(), Some(e.to_string())),
                };
                let path = out.join(&name);
                write_trace(create_file(&path)?, &rows, &terminal, cfg.cost_convention)
                    .map_err(|e| HarnessError::csv(&path, e))?;
                Ok((name, start.elapsed().as_secs_f64(), error))
            })
            .collect()
    });
    let mut timings = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        let (name, wall, error) = r?;
        if let Some(e) = error {
            failures.push(format!("{name}: {e}"));
        }
        timings.push((name, wall));
    }
    let summary = summarize_dir(&out)?;
    write_summary(&out.join(SUMMARY_FILE), &summary)?;
    write_manifest(cfg, &out, &timings, failures.len(), started.elapsed().as_secs_f64())?;
    Ok(ExperimentReport {
        out_dir: out,
        cells: cells.len(),
        failures,
    })
}

fn write_manifest(
    cfg: &ExperimentConfig,
    out: &Path,
    timings: &[(String, f64)],
    failed: usize,
    wall: f64,
) -> Result<(), HarnessError> {
    let path = out.join(MANIFEST_FILE);
    let mut text = String::new();
    text.push_str(&format!("code_version = {}\n", code_version()));
    text.push_str(&format!("config_sha256 = {}\n", sha256_hex(cfg.canonical())));
    text.push_str(&format!("manifest_hash = {}\n", manifest_hash(cfg)));
    text.push_str(&format!("cells = {}\n", timings.len()));
    text.push_str(&format!("failed_cells = {failed}\n"));
    text.push_str(&format!("workers = {}\n", cfg.workers));
    text.push_str(&format!("wall_seconds = {wall:.3}\n"));
    for (name, secs) in timings {
        text.push_str(&format!("wall_seconds.{name} = {secs:.3}\n"));
    }
    for line in cfg.canonical().lines() {
        text.push_str(&format!("config.{line}\n"));
    }
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}

/// One `(algorithm, eps)` line of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub eps: f64,
    pub runs: usize,
    pub errors: usize,
    /// Mean total cost (function evaluations for zeroth-order methods,
    /// gradient evaluations otherwise).
    pub mean_cost: Option<f64>,
    /// Mean cost at the first row with `grad_norm <= eps`, over the runs
    /// that got there.
    pub mean_cost_to_target: Option<f64>,
    pub target_frequency: Option<f64>,
    pub mean_final_grad_norm: Option<f64>,
    pub stop_frequency: Option<f64>,
}

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "algorithm",
    "eps",
    "runs",
    "errors",
    "mean_cost",
    "mean_cost_to_target",
    "target_frequency",
    "mean_final_grad_norm",
    "stop_frequency",
];

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregates every trace file in `dir`. Depends on nothing but the files.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut names: Vec<(String, f64, PathBuf)> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        if let Some((algorithm, eps, _)) = tracefile::parse_file_name(&entry.file_name().to_string_lossy()) {
            names.push((algorithm, eps, entry.path()));
        }
    }
    names.sort_by(|a, b| a.2.cmp(&b.2));
    let mut groups: BTreeMap<(String, u64), Vec<PathBuf>> = BTreeMap::new();
    for (algorithm, eps, path) in names {
        groups.entry((algorithm, eps.to_bits())).or_default().push(path);
    }
    let mut rows = Vec::new();
    for ((algorithm, eps_bits), paths) in groups {
        let eps = f64::from_bits(eps_bits);
        let by_values = algorithm.parse::<Algorithm>().is_ok_and(Algorithm::uses_values);
        let cost = |sfo: u64, izo: u64| if by_values { izo } else { sfo } as f64;
        let (mut costs, mut to_target, mut finals) = (Vec::new(), Vec::new(), Vec::new());
        let (mut errors, mut stopped, mut referee_rows) = (0, 0, false);
        for path in &paths {
            let t = read_trace(path)?;
            if t.terminal.status == "error" {
                errors += 1;
                continue;
            }
            if t.terminal.status == Status::Stopped.as_str() {
                stopped += 1;
            }
            costs.push(cost(t.terminal.sfo_cost, t.terminal.izo_cost));
            if let Some(g) = t.terminal.grad_norm {
                finals.push(g);
            }
            referee_rows |= t.rows.iter().any(|r| r.grad_norm.is_some()) || t.terminal.grad_norm.is_some();
            let reached = t
                .rows
                .iter()
                .find(|r| r.grad_norm.is_some_and(|g| g <= eps))
                .map(|r| cost(r.sfo_cost, r.izo_cost))
                .or_else(|| {
                    t.terminal
                        .grad_norm
                        .is_some_and(|g| g <= eps)
                        .then(|| cost(t.terminal.sfo_cost, t.terminal.izo_cost))
                });
            if let Some(c) = reached {
                to_target.push(c);
            }
        }
        let ok = paths.len() - errors;
        rows.push(SummaryRow {
            algorithm,
            eps,
            runs: paths.len(),
            errors,
            mean_cost: mean(&costs),
            mean_cost_to_target: mean(&to_target),
            target_frequency: (referee_rows && ok > 0).then(|| to_target.len() as f64 / ok as f64),
            mean_final_grad_norm: mean(&finals),
            stop_frequency: (ok > 0).then(|| stopped as f64 / ok as f64),
        });
    }
    rows.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(b.eps.total_cmp(&a.eps)));
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let csv_err = |e| HarnessError::csv(path, e);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.eps.to_string(),
            r.runs.to_string(),
            r.errors.to_string(),
            opt(r.mean_cost),
            opt(r.mean_cost_to_target),
            opt(r.target_frequency),
            opt(r.mean_final_grad_norm),
            opt(r.stop_frequency),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// `(eps, value)` pairs of one algorithm and one numeric summary column.
pub fn read_summary_series(path: &Path, algorithm: &str, column: &str) -> Result<Vec<(f64, f64)>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let header = reader.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let (Some(ia), Some(ie)) = (find("algorithm"), find("eps")) else {
        return Err(HarnessError::Malformed {
            path: path.to_path_buf(),
            message: "missing algorithm or eps column".into(),
        });
    };
    let ic = find(column).ok_or_else(|| HarnessError::Config {
        field: "--column".into(),
        message: format!("no column '{column}' in {}", path.display()),
    })?;
    let mut series = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::csv(path, e))?;
        if record.get(ia) != Some(algorithm) {
            continue;
        }
        let parse = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
        if let (Some(e), Some(v)) = (parse(ie), parse(ic)) {
            series.push((e, v));
        }
    }
    Ok(series)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub algorithm: String,
    pub eps: f64,
    pub seed: u64,
    pub attempts: usize,
    pub status: String,
    /// Exact gradient norm at the returned point.
    pub grad_norm: f64,
    pub sfo_cost: u64,
    pub izo_cost: u64,
}

/// Seed of restart attempt `attempt` for base seed `seed`.
fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64) << 32)
}

/// Wraps every cell in the restart-and-verify loop with threshold
/// `15 eps` and failure probability `p`. Finite-sum runs are checked with
/// the exact gradient; online runs with `ceil(4 sigma^2 / eps^2)` samples.
pub fn run_verify(cfg: &ExperimentConfig, p: f64) -> Result<Vec<VerifyRow>, HarnessError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HarnessError::Config {
            field: "--p".into(),
            message: format!("must lie in (0, 1), got {p}"),
        });
    }
    let prepared = Prepared::new(cfg)?;
    let ctx = prepared.context(cfg, TraceOptions::quiet());
    let problem = prepared.problem.as_ref();
    let cells = cells(cfg);
    let results: Vec<Result<VerifyRow, HarnessError>> = thread_pool(cfg.workers).install(|| {
        cells
            .par_iter()
            .map(|&(algo, eps, seed)| {
                let verifier = match (cfg.mode, prepared.constants.sigma) {
                    (Mode::Online, Some(s)) => Verifier::Sampled(((4.0 * s * s / (eps * eps)).ceil() as usize).max(1)),
                    _ => Verifier::Exact,
                };
                let trace = verify_and_restart(
                    |i| run_cell(&ctx, algo, eps, attempt_seed(seed, i)),
                    |i, x, ledger| verifier.estimate(problem, x, attempt_seed(seed, i), ledger),
                    VERIFY_FACTOR * eps,
                    p,
                )
                .map_err(|source| HarnessError::Run {
                    context: format!("{} at eps {eps}, seed {seed}", algo.algorithm),
                    source,
                })?;
                Ok(VerifyRow {
                    algorithm: algo.algorithm.name().to_string(),
                    eps,
                    seed,
                    attempts: trace.attempts,
                    status: trace.status.as_str().to_string(),
                    grad_norm: problem.grad_norm(&trace.x_out),
                    sfo_cost: sfo_count(&trace.ledger, cfg.cost_convention),
                    izo_cost: trace.ledger.izo,
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

pub fn write_verify<W: Write>(out: W, rows: &[VerifyRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algorithm", "eps", "seed", "attempts", "status", "grad_norm", "sfo_cost", "izo_cost"])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.eps.to_string(),
            r.seed.to_string(),
            r.attempts.to_string(),
            r.status.clone(),
            r.grad_norm.to_string(),
            r.sfo_cost.to_string(),
            r.izo_cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the single cell of a one-algorithm, one-accuracy, one-seed
/// configuration and writes its trace to `out`.
pub fn solve<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<Terminal, HarnessError> {
    let all = cells(cfg);
    let [(algo, eps, seed)] = all[..] else {
        return Err(HarnessError::Config {
            field: "run".into(),
            message: format!("solve needs exactly one cell, the configuration has {}", all.len()),
        });
    };
    let prepared = Prepared::new(cfg)?;
    let trace = run_cell(&prepared.context(cfg, trace_options(cfg)), algo, eps, seed).map_err(|source| {
        HarnessError::Run {
            context: algo.algorithm.name().to_string(),
            source,
        }
    })?;
    let terminal = terminal_of(&trace, prepared.problem.as_ref(), cfg, false);
    write_trace(out, &trace.rows, &terminal, cfg.cost_convention).map_err(|e| HarnessError::csv("<output>", e))?;
    Ok(terminal)
}
