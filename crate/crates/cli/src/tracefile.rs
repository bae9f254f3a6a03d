//! Trace CSV files.
//!
//! Columns are `k,f_value,v_norm,grad_norm,sfo_cost,izo_cost,event`. Every
//! iteration row carries one of the events `reset`, `advance`, `ncs` or
//! `stop`. The last row is the terminal record: `k` is the iteration count,
//! `f_value` and `grad_norm` are evaluated at the returned point, the cost
//! columns hold the totals, and `event` is `end` followed by space-separated
//! `key=value` facts (`status`, `x` digest, and optionally `lambda_min` and
//! `attempts`). Empty fields mean "not computed".

use std::fs::File;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use spider_core::{CostLedger, TraceRow};

use crate::config::CostConvention;
use crate::error::HarnessError;

pub const COLUMNS: [&str; 7] = ["k", "f_value", "v_norm", "grad_norm", "sfo_cost", "izo_cost", "event"];

const END: &str = "end";

/// Facts about a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    /// `stop`, `exhausted`, `completed`, `failed` or `error`.
    pub status: String,
    pub iterations: usize,
    pub f_value: Option<f64>,
    pub grad_norm: Option<f64>,
    pub sfo_cost: u64,
    pub izo_cost: u64,
    pub x_digest: Option<String>,
    pub lambda_min: Option<f64>,
    pub attempts: Option<usize>,
}

impl Terminal {
    /// Terminal record of a cell that could not run.
    pub fn error() -> Self {
        Self {
            status: "error".into(),
            iterations: 0,
            f_value: None,
            grad_norm: None,
            sfo_cost: 0,
            izo_cost: 0,
            x_digest: None,
            lambda_min: None,
            attempts: None,
        }
    }

    fn event(&self) -> String {
        let mut s = format!("{END} status={}", self.status);
        if let Some(x) = &self.x_digest {
            s.push_str(&format!(" x={x}"));
        }
        if let Some(l) = self.lambda_min {
            s.push_str(&format!(" lambda_min={l}"));
        }
        if let Some(a) = self.attempts {
            s.push_str(&format!(" attempts={a}"));
        }
        s
    }
}

/// Short SHA-256 digest of the little-endian bytes of a point.
pub fn point_digest(x: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// SFO count under the chosen convention.
pub fn sfo_count(ledger: &CostLedger, convention: CostConvention) -> u64 {
    match convention {
        CostConvention::Pairs => ledger.sfo,
        CostConvention::Samples => ledger.sfo_samples,
    }
}

pub fn file_name(algorithm: &str, eps: f64, seed: u64) -> String {
    format!("trace__{algorithm}__eps-{eps}__seed-{seed}.csv")
}

/// Inverse of [`file_name`].
pub fn parse_file_name(name: &str) -> Option<(String, f64, u64)> {
    let stem = name.strip_prefix("trace__")?.strip_suffix(".csv")?;
    let mut parts = stem.split("__");
    let algorithm = parts.next()?.to_string();
    let eps = parts.next()?.strip_prefix("eps-")?.parse().ok()?;
    let seed = parts.next()?.strip_prefix("seed-")?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((algorithm, eps, seed))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_trace<W: Write>(
    out: W,
    rows: &[TraceRow],
    terminal: &Terminal,
    convention: CostConvention,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            opt(r.f_value),
            r.v_norm.to_string(),
            opt(r.grad_norm),
            sfo_count(&r.ledger, convention).to_string(),
            r.ledger.izo.to_string(),
            r.event.as_str().to_string(),
        ])?;
    }
    w.write_record([
        terminal.iterations.to_string(),
        opt(terminal.f_value),
        String::new(),
        opt(terminal.grad_norm),
        terminal.sfo_cost.to_string(),
        terminal.izo_cost.to_string(),
        terminal.event(),
    ])?;
    w.flush()?;
    Ok(())
}

/// One iteration row read back from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub k: usize,
    pub f_value: Option<f64>,
    pub v_norm: Option<f64>,
    pub grad_norm: Option<f64>,
    pub sfo_cost: u64,
    pub izo_cost: u64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub rows: Vec<ParsedRow>,
    pub terminal: Terminal,
}

/// Reads a trace file and checks its invariants: the fixed header, costs
/// that never decrease, and exactly one terminal record in last position.
pub fn read_trace(path: &Path) -> Result<ParsedTrace, HarnessError> {
    let bad = |message: String| HarnessError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::csv(path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>, HarnessError> {
            let s = field(i);
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad number '{s}' in column {}", COLUMNS[i])))
            }
        };
        let int = |i: usize| -> Result<u64, HarnessError> {
            field(i).parse().map_err(|_| bad(format!("bad integer '{}' in column {}", field(i), COLUMNS[i])))
        };
        rows.push(ParsedRow {
            k: int(0)? as usize,
            f_value: num(1)?,
            v_norm: num(2)?,
            grad_norm: num(3)?,
            sfo_cost: int(4)?,
            izo_cost: int(5)?,
            event: field(6).to_string(),
        });
    }
    let last = rows.pop().ok_or_else(|| bad("no terminal record".into()))?;
    if rows.iter().any(|r| r.event.starts_with(END)) {
        return Err(bad("terminal record before the last row".into()));
    }
    let mut facts = last.event.split(' ');
    if facts.next() != Some(END) {
        return Err(bad("last row is not a terminal record".into()));
    }
    let mut terminal = Terminal {
        status: String::new(),
        iterations: last.k,
        f_value: last.f_value,
        grad_norm: last.grad_norm,
        sfo_cost: last.sfo_cost,
        izo_cost: last.izo_cost,
        x_digest: None,
        lambda_min: None,
        attempts: None,
    };
    for fact in facts {
        let (key, value) = fact.split_once('=').ok_or_else(|| bad(format!("bad terminal fact '{fact}'")))?;
        let parse_err = || bad(format!("bad value in terminal fact '{fact}'"));
        match key {
            "status" => terminal.status = value.to_string(),
            "x" => terminal.x_digest = Some(value.to_string()),
            "lambda_min" => terminal.lambda_min = Some(value.parse().map_err(|_| parse_err())?),
            "attempts" => terminal.attempts = Some(value.parse().map_err(|_| parse_err())?),
            _ => return Err(bad(format!("unknown terminal fact '{key}'"))),
        }
    }
    if terminal.status.is_empty() {
        return Err(bad("terminal record without status".into()));
    }
    let mut prev = (0, 0);
    for r in rows.iter().chain(std::iter::once(&last)) {
        if r.sfo_cost < prev.0 || r.izo_cost < prev.1 {
            return Err(bad(format!("cost decreases at k = {}", r.k)));
        }
        prev = (r.sfo_cost, r.izo_cost);
    }
    Ok(ParsedTrace { rows, terminal })
}
