//! Objectives `f(X)` over the PSD cone, evaluated through the factor `X = VVᵀ`.

use nalgebra::DMatrix;

use crate::eig::SymOperator;
use crate::error::{Error, Result};
use crate::factor::Factor;

mod completion;
mod huber;
mod metric;
mod quadratic;
mod spca;

pub use completion::{MatrixCompletion, Rating, RatingSet};
pub use huber::{huber, huber_grad};
pub use metric::{MetricLearning, MetricProblem, DEFAULT_FLOOR_DELTA};
pub use quadratic::Quadratic;
pub use spca::{SparsePca, SpcaProblem, DEFAULT_HUBER_M, DEFAULT_RHO};

/// A convex, differentiable `f` on symmetric `n × n` matrices.
///
/// Gradients are exposed in two forms: the factored gradient
/// `2·∇f(VVᵀ)·V` used by the local search, and the operator
/// `x ↦ −∇f(VVᵀ)x` consumed by the eigensolver.
pub trait Objective {
    fn dim(&self) -> usize;

    /// `f(VVᵀ)`.
    fn value(&self, v: &Factor) -> Result<f64>;

    /// `2·∇f(VVᵀ)·V`, shaped like `V`.
    fn grad_factor(&self, v: &Factor) -> Result<DMatrix<f64>>;

    fn value_and_grad(&self, v: &Factor) -> Result<(f64, DMatrix<f64>)> {
        Ok((self.value(v)?, self.grad_factor(v)?))
    }

    /// The map `x ↦ −∇f(VVᵀ)x`.
    fn neg_grad_operator<'a>(&'a self, v: &Factor) -> Result<Box<dyn SymOperator + 'a>>;

    /// `∇f(X) • X`.
    fn grad_dot_x(&self, v: &Factor) -> Result<f64> {
        if v.rank() == 0 {
            return Ok(0.0);
        }
        let g = self.grad_factor(v)?;
        Ok(0.5 * g.dot(v.matrix()))
    }

    /// Starting point of the solver. `X₀ = 0` unless the domain excludes it.
    fn initial_factor(&self, _trace_bound: f64) -> Result<Factor> {
        Ok(Factor::zeros(self.dim()))
    }

    /// `true` when `f(cX) = f(X)` for all `c > 0`. The solver then keeps the
    /// iterate on the trace-`t` slice.
    fn scale_invariant(&self) -> bool {
        false
    }
}

pub(crate) fn check_rows(expected: usize, v: &Factor) -> Result<()> {
    if v.rows() != expected {
        return Err(Error::invalid(format!(
            "factor has {} rows, objective expects {expected}",
            v.rows()
        )));
    }
    Ok(())
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!("{what} must be square")));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if !(asym <= 1e-8 * scale) {
        return Err(Error::invalid(format!("{what} is not symmetric (deviation {asym:e})")));
    }
    Ok(())
}
