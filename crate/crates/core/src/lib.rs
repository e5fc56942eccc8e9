//! Convex optimization over the cone of positive semidefinite matrices with a
//! hybrid of rank-one Frank-Wolfe steps and quasi-Newton refinement of a
//! low-rank factor `X = VVᵀ`.
//!
//! ```
//! use hybrid_sdp::{solve, Quadratic, SolverConfig};
//! use nalgebra::DMatrix;
//!
//! // Nearest PSD matrix to diag(1, -1) in Frobenius norm.
//! let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
//! let objective = Quadratic::new(b).unwrap();
//! let result = solve(&objective, &SolverConfig::new(1e-6, 2.0)).unwrap();
//! assert!((result.f_value - 0.5).abs() < 1e-6);
//! ```

pub mod data;
pub mod eig;
mod error;
mod factor;
pub mod local_search;
pub mod objectives;
pub mod solver;

pub use eig::{approx_max_eigvec, dense_max_eigpair, EigResult, FnOperator, SymOperator};
pub use error::{Error, Result};
pub use factor::Factor;
pub use local_search::{improve, LsConfig};
pub use objectives::{
    MatrixCompletion, MetricLearning, MetricProblem, Objective, Quadratic, Rating, RatingSet, SparsePca, SpcaProblem,
};
pub use solver::{
    duality_gap, rank_one_step, solve, solve_with_observer, Control, EigMethod, GapReport, IterationRecord,
    SolveResult, SolveStatus, SolverConfig,
};
