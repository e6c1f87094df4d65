//! Exact branch-and-bound for the ordering MIPs.

pub mod instance;
pub mod qp;
pub mod search;

pub use instance::{
    Budget, Direction, Family, Indicator, MipInstance, MipSolution, Objective, PairBound, Region,
    SolveStatus, CHECK_TOLERANCE, DEFAULT_MARGIN, DEFAULT_NODE_BUDGET, DEFAULT_TIME_BUDGET,
    SIMPLEX_MIN_SUM, SIMPLEX_SUM_WEIGHT,
};
pub use qp::{ProjectionQp, QpStatus};
pub use search::{fixed_count, node_bound, root_presolve, solve, SolveOptions};
