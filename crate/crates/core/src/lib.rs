//! Parallel portfolio QCDCL solving for quantified Boolean formulas in prenex
//! CNF, with sharing of learned clauses and cubes between instances.

pub mod bench;
pub mod cli;
pub mod formula;
pub mod generate;
pub mod qbce;
pub mod portfolio;
pub mod qcdcl;
pub mod resolution;
pub mod sharing;

pub use formula::{parse_qdimacs, read_qdimacs, Constraint, ConstraintKind, Lit, Pcnf, Quantifier, Var};
pub use portfolio::{run_portfolio, PortfolioHandle, PortfolioOptions, PortfolioResult};
pub use qcdcl::{solve, Budget, SolveResult, Solver, SolverConfig, Statistics, Status};
