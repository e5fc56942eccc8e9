use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_rows, check_symmetric, Objective};
use crate::eig::SymOperator;
use crate::error::Result;
use crate::factor::Factor;

/// `f(X) = ½‖X − B‖²_F`, whose minimizer over the cone is the PSD part of `B`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    target: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(target: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&target, "target")?;
        let target = (&target + target.transpose()) * 0.5;
        Ok(Self { target })
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    fn residual(&self, v: &Factor) -> Result<DMatrix<f64>> {
        check_rows(self.dim(), v)?;
        Ok(v.to_dense() - &self.target)
    }

    /// Minimizer and minimum over the PSD cone, by clipping negative
    /// eigenvalues of the target.
    pub fn optimum(&self) -> (DMatrix<f64>, f64) {
        let eig = SymmetricEigen::new(self.target.clone());
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let x = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let f_star = 0.5 * eig.eigenvalues.iter().filter(|l| **l < 0.0).map(|l| l * l).sum::<f64>();
        (x, f_star)
    }

    /// Trace of the cone-constrained minimizer.
    pub fn optimal_trace(&self) -> f64 {
        let eig = SymmetricEigen::new(self.target.clone());
        eig.eigenvalues.iter().filter(|l| **l > 0.0).sum()
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.target.nrows()
    }

    fn value(&self, v: &Factor) -> Result<f64> {
        Ok(0.5 * self.residual(v)?.norm_squared())
    }

    fn grad_factor(&self, v: &Factor) -> Result<DMatrix<f64>> {
        Ok(self.residual(v)? * v.matrix() * 2.0)
    }

    fn value_and_grad(&self, v: &Factor) -> Result<(f64, DMatrix<f64>)> {
        let r = self.residual(v)?;
        Ok((0.5 * r.norm_squared(), &r * v.matrix() * 2.0))
    }

    fn neg_grad_operator<'a>(&'a self, v: &Factor) -> Result<Box<dyn SymOperator + 'a>> {
        Ok(Box::new(-self.residual(v)?))
    }
}
