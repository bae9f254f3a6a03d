//! Path-integrated differential gradient estimators and the stochastic
//! optimizers built on them.
//!
//! The crate is organised bottom-up:
//!
//! * [`problem`] and [`problems`] define finite-sum oracles and benchmark
//!   landscapes.
//! * [`estimator`] maintains the running gradient estimate with periodic
//!   resets and sampled differential advances.
//! * [`sfo`], [`ssp`] and [`szo`] are the first-order, second-order and
//!   zeroth-order optimizers.
//! * [`baselines`] holds reference methods sharing the same cost ledger.
//! * [`analysis`] provides scaling fits, binomial frequency checks and the
//!   restart-and-verify wrapper.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod ledger;
pub mod problem;
pub mod problems;
pub mod rng;
pub mod sfo;
pub mod ssp;
pub mod szo;
pub mod trace;
pub mod vecops;

pub use error::{Result, SpiderError};
pub use ledger::CostLedger;
pub use problem::{CountingProblem, Problem, ProblemMeta, ValueOracle, ValuesOnly};
pub use trace::{Event, RunTrace, Status, TraceOptions, TraceRow};
