//! Per-iteration run records.

use crate::ledger::CostLedger;
use crate::problem::{Problem, ValueOracle};
use crate::vecops;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    /// The estimate fell below the stopping threshold.
    Stopped,
    /// The iteration budget ran out before the stopping rule fired.
    Exhausted,
    /// A fixed-budget run finished its schedule.
    Completed,
    /// A verify-and-restart loop ran out of attempts.
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Stopped => "stop",
            Status::Exhausted => "exhausted",
            Status::Completed => "completed",
            Status::Failed => "failed",
        }
    }
}

/// What happened at a recorded iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Reset,
    Advance,
    /// A negative-curvature search ran at this iterate.
    Ncs,
    Stop,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Reset => "reset",
            Event::Advance => "advance",
            Event::Ncs => "ncs",
            Event::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub f_value: Option<f64>,
    pub v_norm: f64,
    pub grad_norm: Option<f64>,
    pub ledger: CostLedger,
    pub event: Event,
}

/// Which optional per-row columns to compute. Neither is charged to the
/// ledger; both cost a full pass over the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceOptions {
    pub rows: bool,
    pub values: bool,
    pub grad_norm: bool,
    /// Keep a copy of every recorded iterate in [`RunTrace::iterates`].
    pub iterates: bool,
}

impl TraceOptions {
    /// No per-iteration rows at all; only the terminal state is kept.
    pub fn quiet() -> Self {
        Self::default()
    }

    pub fn rows_only() -> Self {
        Self {
            rows: true,
            ..Self::default()
        }
    }

    pub fn full() -> Self {
        Self {
            rows: true,
            values: true,
            grad_norm: true,
            iterates: false,
        }
    }

    /// Rows plus stored iterates, without referee columns.
    pub fn with_iterates() -> Self {
        Self {
            rows: true,
            iterates: true,
            ..Self::default()
        }
    }
}

/// Result of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub status: Status,
    /// Returned point.
    pub x_out: Vec<f64>,
    /// Final oracle costs.
    pub ledger: CostLedger,
    /// Iterations executed.
    pub iterations: usize,
    /// Index of the returned iterate for uniform-output runs.
    pub output_index: Option<usize>,
    /// Number of runs consumed by a restart wrapper (1 for plain runs).
    pub attempts: usize,
    /// Iterate of each row, when [`TraceOptions::iterates`] is set.
    pub iterates: Vec<Vec<f64>>,
}

/// Row collector shared by all optimizers.
pub(crate) struct Recorder<'a> {
    opts: TraceOptions,
    values: ValueSource<'a>,
    grads: Option<&'a dyn Problem>,
    pub rows: Vec<TraceRow>,
    iterates: Vec<Vec<f64>>,
}

enum ValueSource<'a> {
    Problem(&'a dyn Problem),
    Oracle(&'a dyn ValueOracle),
}

impl<'a> Recorder<'a> {
    pub fn new(opts: TraceOptions, problem: &'a dyn Problem) -> Self {
        Self {
            opts,
            values: ValueSource::Problem(problem),
            grads: Some(problem),
            rows: Vec::new(),
            iterates: Vec::new(),
        }
    }

    pub fn value_only(opts: TraceOptions, values: &'a dyn ValueOracle, referee: Option<&'a dyn Problem>) -> Self {
        Self {
            opts,
            values: ValueSource::Oracle(values),
            grads: referee,
            rows: Vec::new(),
            iterates: Vec::new(),
        }
    }

    pub fn record(&mut self, k: usize, x: &[f64], v: &[f64], ledger: &CostLedger, event: Event) {
        if !self.opts.rows {
            return;
        }
        let f_value = match (self.opts.values, &self.values) {
            (false, _) => None,
            (true, ValueSource::Problem(p)) => Some(p.full_value(x)),
            (true, ValueSource::Oracle(p)) => Some(p.full_value(x)),
        };
        let grad_norm = match (self.opts.grad_norm, self.grads) {
            (true, Some(p)) => Some(p.grad_norm(x)),
            _ => None,
        };
        if self.opts.iterates {
            self.iterates.push(x.to_vec());
        }
        self.rows.push(TraceRow {
            k,
            f_value,
            v_norm: vecops::norm(v),
            grad_norm,
            ledger: *ledger,
            event,
        });
    }

    pub fn finish(
        self,
        status: Status,
        x_out: Vec<f64>,
        ledger: CostLedger,
        iterations: usize,
        output_index: Option<usize>,
    ) -> RunTrace {
        RunTrace {
            rows: self.rows,
            status,
            x_out,
            ledger,
            iterations,
            output_index,
            attempts: 1,
            iterates: self.iterates,
        }
    }
}
