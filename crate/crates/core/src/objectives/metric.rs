use std::collections::HashSet;

use nalgebra::DMatrix;

use super::{check_rows, Objective};
use crate::eig::SymOperator;
use crate::error::{Error, Result};
use crate::factor::Factor;

/// Default floor on `d_A` in the gradient's denominator.
pub const DEFAULT_FLOOR_DELTA: f64 = 1e-12;

/// Labeled points with similar / dissimilar index pairs.
#[derive(Debug, Clone)]
pub struct MetricProblem {
    pub points: DMatrix<f64>,
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
    /// Weight of the dissimilar-distance term.
    pub lambda: f64,
    pub floor_delta: f64,
}

impl MetricProblem {
    pub fn new(
        points: DMatrix<f64>,
        similar: Vec<(usize, usize)>,
        dissimilar: Vec<(usize, usize)>,
        lambda: f64,
    ) -> Result<Self> {
        let p = Self {
            points,
            similar,
            dissimilar,
            lambda,
            floor_delta: DEFAULT_FLOOR_DELTA,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.similar.is_empty() && self.dissimilar.is_empty() {
            return Err(Error::invalid("metric problem has no pairs"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.floor_delta > 0.0) {
            return Err(Error::invalid("floor_delta must be positive"));
        }
        let n = self.points.nrows();
        let norm = |&(i, j): &(usize, usize)| (i.min(j), i.max(j));
        let mut similar = HashSet::with_capacity(self.similar.len());
        for pair @ &(i, j) in &self.similar {
            if i == j || i >= n || j >= n {
                return Err(Error::invalid(format!("bad similar pair ({i}, {j})")));
            }
            similar.insert(norm(pair));
        }
        for pair @ &(i, j) in &self.dissimilar {
            if i == j || i >= n || j >= n {
                return Err(Error::invalid(format!("bad dissimilar pair ({i}, {j})")));
            }
            if similar.contains(&norm(pair)) {
                return Err(Error::invalid(format!(
                    "pair ({i}, {j}) is both similar and dissimilar"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Lagrangian metric learning:
/// `f(A) = Σ_S d_A(i,j)² − λ·Σ_S̄ d_A(i,j)` with `A = VVᵀ`.
#[derive(Debug, Clone)]
pub struct MetricLearning {
    problem: MetricProblem,
    /// `Σ_S q qᵀ`, independent of `A`.
    similar_scatter: DMatrix<f64>,
}

impl MetricLearning {
    pub fn new(problem: MetricProblem) -> Result<Self> {
        problem.validate()?;
        let weights = vec![1.0; problem.similar.len()];
        let similar_scatter = weighted_scatter(&problem.points, &problem.similar, &weights);
        Ok(Self {
            problem,
            similar_scatter,
        })
    }

    pub fn problem(&self) -> &MetricProblem {
        &self.problem
    }

    /// Projected points `X·V`; `d_A(i,j) = ‖P_i − P_j‖`.
    fn project(&self, v: &Factor) -> Result<DMatrix<f64>> {
        check_rows(self.dim(), v)?;
        Ok(&self.problem.points * v.matrix())
    }

    fn dissimilar_distances(&self, proj: &DMatrix<f64>) -> Vec<f64> {
        self.problem
            .dissimilar
            .iter()
            .map(|&(i, j)| row_distance(proj, i, j))
            .collect()
    }

    /// `(Σ_S d², Σ_S̄ d)` at `A = VVᵀ`.
    pub fn distance_sums(&self, v: &Factor) -> Result<(f64, f64)> {
        let proj = self.project(v)?;
        let sq: f64 = self
            .problem
            .similar
            .iter()
            .map(|&(i, j)| row_distance(&proj, i, j).powi(2))
            .sum();
        let lin: f64 = self.dissimilar_distances(&proj).iter().sum();
        Ok((sq, lin))
    }

    /// Value of the constrained form `min Σ_S d² s.t. Σ_S̄ d ≥ 1` at the
    /// rescaling of `A` that makes the constraint tight: `Σ_S d² / (Σ_S̄ d)²`.
    /// `None` when every dissimilar distance vanishes.
    pub fn constrained_value(&self, v: &Factor) -> Result<Option<f64>> {
        let (sq, lin) = self.distance_sums(v)?;
        Ok((lin > 0.0).then(|| sq / (lin * lin)))
    }

    /// Dense `∇f(A) = Σ_S qqᵀ − (λ/2)·Σ_S̄ qqᵀ / max(d_A, δ)`.
    pub fn gradient_matrix(&self, v: &Factor) -> Result<DMatrix<f64>> {
        let proj = self.project(v)?;
        let d = self.dissimilar_distances(&proj);
        let half_lambda = 0.5 * self.problem.lambda;
        let w: Vec<f64> = d
            .iter()
            .map(|&x| half_lambda / x.max(self.problem.floor_delta))
            .collect();
        let dis = weighted_scatter(&self.problem.points, &self.problem.dissimilar, &w);
        Ok(&self.similar_scatter - dis)
    }
}

fn row_distance(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..m.ncols())
        .map(|c| {
            let d = m[(i, c)] - m[(j, c)];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `Σ_p w_p (x_i − x_j)(x_i − x_j)ᵀ = Xᵀ L X` with `L` the weighted pair Laplacian.
fn weighted_scatter(points: &DMatrix<f64>, pairs: &[(usize, usize)], weights: &[f64]) -> DMatrix<f64> {
    let (n, d) = points.shape();
    let mut lx = DMatrix::zeros(n, d);
    for (&(i, j), &w) in pairs.iter().zip(weights) {
        for c in 0..d {
            let q = w * (points[(i, c)] - points[(j, c)]);
            lx[(i, c)] += q;
            lx[(j, c)] -= q;
        }
    }
    let s = points.transpose() * lx;
    (&s + s.transpose()) * 0.5
}

impl Objective for MetricLearning {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, v: &Factor) -> Result<f64> {
        let (sq, lin) = self.distance_sums(v)?;
        Ok(sq - self.problem.lambda * lin)
    }

    fn grad_factor(&self, v: &Factor) -> Result<DMatrix<f64>> {
        Ok(self.gradient_matrix(v)? * v.matrix() * 2.0)
    }

    fn neg_grad_operator<'a>(&'a self, v: &Factor) -> Result<Box<dyn SymOperator + 'a>> {
        Ok(Box::new(-self.gradient_matrix(v)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn zero_factor_gives_zero() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        let p = MetricProblem::new(pts, vec![(0, 1)], vec![(0, 2)], 1.0).unwrap();
        let ml = MetricLearning::new(p).unwrap();
        assert_eq!(ml.value(&Factor::new(DMatrix::zeros(2, 1))).unwrap(), 0.0);
        assert_eq!(ml.value(&Factor::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn identity_metric_is_euclidean() {
        let pts = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let q = pts.row(0) - pts.row(1);
        let p = MetricProblem::new(pts, vec![(0, 1)], vec![], 1.0).unwrap();
        let ml = MetricLearning::new(p).unwrap();
        let v = ml.value(&Factor::new(DMatrix::identity(3, 3))).unwrap();
        assert!((v - q.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn quadratic_only_gradient_is_constant() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 0.0, 1.0, 1.0]);
        let p = MetricProblem::new(pts.clone(), vec![(0, 1), (1, 2)], vec![], 1.0).unwrap();
        let ml = MetricLearning::new(p).unwrap();
        let g0 = ml.gradient_matrix(&Factor::zeros(2)).unwrap();
        let g1 = ml
            .gradient_matrix(&Factor::new(DMatrix::from_element(2, 1, 0.7)))
            .unwrap();
        let mut expect = DMatrix::zeros(2, 2);
        for (i, j) in [(0, 1), (1, 2)] {
            let q: DVector<f64> = (pts.row(i) - pts.row(j)).transpose();
            expect += &q * q.transpose();
        }
        assert!((g0 - &expect).amax() < 1e-14);
        assert!((g1 - expect).amax() < 1e-14);
    }

    #[test]
    fn single_dissimilar_pair_identity() {
        let pts = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let q = DVector::from_vec(vec![3.0, -4.0]);
        let p = MetricProblem::new(pts, vec![], vec![(0, 1)], 2.0).unwrap();
        let ml = MetricLearning::new(p).unwrap();
        let g = ml.gradient_matrix(&Factor::new(DMatrix::identity(2, 2))).unwrap();
        let expect = &q * q.transpose() * (-(2.0 / 2.0) / 5.0);
        assert!((g - expect).amax() < 1e-14);
    }

    #[test]
    fn validation() {
        let pts = DMatrix::zeros(3, 2);
        assert!(MetricProblem::new(pts.clone(), vec![], vec![], 1.0).is_err());
        assert!(MetricProblem::new(pts.clone(), vec![(0, 0)], vec![], 1.0).is_err());
        assert!(MetricProblem::new(pts.clone(), vec![(0, 3)], vec![], 1.0).is_err());
        assert!(MetricProblem::new(pts, vec![(0, 1)], vec![(1, 0)], 1.0).is_err());
    }
}
