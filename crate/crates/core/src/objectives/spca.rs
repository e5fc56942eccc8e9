use nalgebra::DMatrix;

use super::{check_rows, check_symmetric, huber, huber_grad, Objective};
use crate::eig::{dense_max_eigpair, SymOperator};
use crate::error::{Error, Result};
use crate::factor::Factor;

pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_HUBER_M: f64 = 1e-6;

/// Covariance `A` with sparsity weight `ρ` and Huber width `M`.
#[derive(Debug, Clone)]
pub struct SpcaProblem {
    pub covariance: DMatrix<f64>,
    pub rho: f64,
    pub huber_m: f64,
}

impl SpcaProblem {
    pub fn new(covariance: DMatrix<f64>, rho: f64, huber_m: f64) -> Result<Self> {
        check_symmetric(&covariance, "covariance")?;
        if !(rho > 0.0) || !(huber_m > 0.0) {
            return Err(Error::invalid("rho and huber_m must be positive"));
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(Self {
            covariance,
            rho,
            huber_m,
        })
    }
}

/// Sparse PCA through trace normalization:
/// `F(X) = ρ·Σ H_M(Y_ij)/(2M) − A•Y` with `Y = X / Tr(X)`.
///
/// `H_M/(2M)` equals `|x| − M/2` outside `[−M, M]`, so `F` stays within
/// `ρ·n²·M/2` of the unsmoothed objective.
///
/// `F` is 0-homogeneous and undefined at `X = 0`.
#[derive(Debug, Clone)]
pub struct SparsePca {
    problem: SpcaProblem,
}

impl SparsePca {
    pub fn new(problem: SpcaProblem) -> Self {
        Self { problem }
    }

    pub fn problem(&self) -> &SpcaProblem {
        &self.problem
    }

    /// `(τ, Y)` with `τ = Tr(VVᵀ)`, rejecting the zero matrix.
    fn normalized(&self, v: &Factor) -> Result<(f64, DMatrix<f64>)> {
        check_rows(self.dim(), v)?;
        let tau = v.trace();
        if v.rank() == 0 || !(tau > 0.0) {
            return Err(Error::Domain("sparse PCA objective is undefined at X = 0".into()));
        }
        Ok((tau, v.to_dense() / tau))
    }

    /// Unsmoothed objective `ρ·Σ|Y_ij| − A•Y`.
    pub fn original_value(&self, v: &Factor) -> Result<f64> {
        let (_, y) = self.normalized(v)?;
        Ok(self.problem.rho * y.iter().map(|x| x.abs()).sum::<f64>() - self.problem.covariance.dot(&y))
    }

    /// Dense `∇F(X) = (G − (G•Y)·I) / τ` with `G = ρ·H'_M(Y)/(2M) − A`.
    pub fn gradient_matrix(&self, v: &Factor) -> Result<DMatrix<f64>> {
        let (tau, y) = self.normalized(v)?;
        let m = self.problem.huber_m;
        let w = self.problem.rho / (2.0 * m);
        let g = y.map(|x| w * huber_grad(x, m)) - &self.problem.covariance;
        let c = g.dot(&y);
        let n = self.dim();
        Ok((g - DMatrix::identity(n, n) * c) / tau)
    }
}

impl Objective for SparsePca {
    fn dim(&self) -> usize {
        self.problem.covariance.nrows()
    }

    fn value(&self, v: &Factor) -> Result<f64> {
        let (_, y) = self.normalized(v)?;
        let m = self.problem.huber_m;
        let smooth: f64 = y.iter().map(|&x| huber(x, m)).sum();
        Ok(self.problem.rho / (2.0 * m) * smooth - self.problem.covariance.dot(&y))
    }

    fn grad_factor(&self, v: &Factor) -> Result<DMatrix<f64>> {
        Ok(self.gradient_matrix(v)? * v.matrix() * 2.0)
    }

    fn neg_grad_operator<'a>(&'a self, v: &Factor) -> Result<Box<dyn SymOperator + 'a>> {
        Ok(Box::new(-self.gradient_matrix(v)?))
    }

    fn grad_dot_x(&self, v: &Factor) -> Result<f64> {
        let g = self.gradient_matrix(v)?;
        Ok(g.dot(&v.to_dense()))
    }

    /// `√t` times the top unit eigenvector of `A`.
    fn initial_factor(&self, trace_bound: f64) -> Result<Factor> {
        let top = dense_max_eigpair(&self.problem.covariance)?;
        Ok(Factor::from_column(top.vector * trace_bound.sqrt()))
    }

    fn scale_invariant(&self) -> bool {
        true
    }
}
