//! Kaczmarz-type and variational solvers for the processed system.

mod kaczmarz;
mod schedule;
mod trace;
mod tv;
mod var;

pub use kaczmarz::{
    kaczmarz, kaczmarz_l1, kaczmarz_l1l2, kaczmarz_l2, select_rows_by_norm, KaczmarzParams, DIVERGENCE_FACTOR,
};
pub use schedule::{CheckpointSchedule, KACZMARZ_SWEEPS};
pub(crate) use trace::to_volume;
pub use trace::{Checkpoint, SolverTrace, TRACE_KIND};
pub use tv::tv_penalty;
pub(crate) use var::sign;
pub use var::{
    var_objective, var_solve, PenaltyConfig, PenaltyKind, VarConfig, DEFAULT_TV_EPSILON, DEFAULT_VAR_ITERS,
    DEFAULT_VAR_LR,
};
