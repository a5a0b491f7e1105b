//! Sequential QCDCL engine: clause and cube learning, restarts, sharing hooks.

mod config;
mod db;
mod restart;
mod solver;

pub use config::{PhaseInit, QbceMode, RankError, SolverConfig};
pub use db::{CRef, ConstraintDb};
pub use restart::RestartScheduler;
pub use solver::{
    solve, Budget, ExportSink, ImportHandle, Reason, SolveResult, Solver, Statistics, Status,
};
