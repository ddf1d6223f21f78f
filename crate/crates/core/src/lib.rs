//! Selection of a trustworthy optimization solver from a pool of independently
//! generated, possibly broken candidates.
//!
//! The pipeline has five stages, each in its own module:
//!
//! 1. [`gensource`] produces pools of solvers, instances and tests.
//! 2. [`exec`] runs every solver on every instance and every test on every
//!    reported solution, in child processes.
//! 3. [`filter`] drops a minimum number of components so that every retained
//!    (solver, instance, test) triple is interpretable.
//! 4. [`em`] fits a latent-class model of instance feasibility, solution
//!    validity and solver/test error rates.
//! 5. [`select`] scores solvers and picks the one minimizing the expected
//!    penalized objective.
//!
//! [`benchlab`] generates synthetic ground-truth cubes and runs bootstrap
//! experiments; [`wscp`] is the K-robust weighted set cover domain used by the
//! fixtures and graders.

pub mod benchlab;
pub mod domain;
pub mod em;
pub mod exec;
pub mod filter;
pub mod gensource;
pub mod pipeline;
pub mod select;
pub mod wscp;

pub use domain::{
    parse_report, Component, ComponentKind, FailureReason, ModelParams, ObservationSet, Origin, PairOutcome,
    PoolIds, Pools, Posteriors, RawResults, SelectionReport, SolveReport, SolveStatus, SolverMetrics,
    TripleOutcome,
};
pub use em::{fit_em, EmConfig, EmFit, InitSpec};
pub use exec::{cross_evaluate, ExecLimits, Harness, Runner};
pub use filter::{brute_force_filter, collect_noninterpretable, solve_filter, BadTripleSet, FilterSolution};
pub use select::{select, Penalty, SelectionConfig, Sense};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty pool: {0}")]
    EmptyPool(&'static str),
    #[error("no nonempty interpretable sub-cube exists")]
    EmptySelection,
    #[error("no solver reported any solution")]
    NoReports,
    #[error("inconsistent observations: {0}")]
    Inconsistent(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
