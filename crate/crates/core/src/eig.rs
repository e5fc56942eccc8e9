//! Implicit symmetric operators and an approximate largest-eigenpair routine.
//!
//! The rank-one update only ever needs `v` with `vᵀMv ≥ λ_max(M) − ε̃` for the
//! (negated) gradient `M`, which objectives expose as a matrix-free operator.
//! [`approx_max_eigvec`] runs thick-restarted Lanczos with full reorthogonalization
//! and stops once the Ritz residual `‖Mv − ρv‖` drops below `ε̃/2`.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`dense_max_eigpair`].
pub const DENSE_CAP: usize = 2000;

/// Default Krylov block size before a restart.
pub const DEFAULT_KRYLOV_DIM: usize = 30;

/// A symmetric linear map `x ↦ Mx` known only through its action.
pub trait SymOperator {
    fn dim(&self) -> usize;

    /// Writes `M x` into `y`. Both slices have length [`SymOperator::dim`].
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        let x = DVectorView::from_slice(x, n);
        let mut y = DVectorViewMut::from_slice(y, n);
        y.gemv(1.0, self, &x, 0.0);
    }
}

impl<T: SymOperator + ?Sized> SymOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

impl<T: SymOperator + ?Sized> SymOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Wraps a closure as an operator. The closure must realize a symmetric map.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> SymOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Approximate top eigenpair of a symmetric operator.
#[derive(Debug, Clone)]
pub struct EigResult {
    /// Unit-norm eigenvector estimate. The sign is arbitrary.
    pub vector: DVector<f64>,
    /// `vᵀMv`.
    pub rayleigh: f64,
    /// `‖Mv − ρv‖₂` at the returned vector.
    pub residual: f64,
    /// Operator applications spent.
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient of the leading Ritz vector after each operator
    /// application.
    pub rayleigh_history: Vec<f64>,
}

/// Applies `op` to a vector, returning a fresh one.
pub fn apply_vec(op: &(impl SymOperator + ?Sized), x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    op.apply(x.as_slice(), y.as_mut_slice());
    y
}

/// Materializes an operator as a dense matrix by applying it to the unit basis.
pub fn to_dense(op: &(impl SymOperator + ?Sized)) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, out.column_mut(j).as_mut_slice());
        e[j] = 0.0;
    }
    out
}

/// Deterministic start vector, uniform on the unit sphere.
pub fn random_unit_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Restarted Lanczos for the largest eigenpair of `op`.
///
/// Returns `converged = true` once `‖Mv − ρv‖ ≤ eps_tilde / 2`. When
/// `max_iters` operator applications are exhausted first, the best Ritz
/// vector seen so far comes back with `converged = false`.
pub fn approx_max_eigvec(
    op: &(impl SymOperator + ?Sized),
    eps_tilde: f64,
    max_iters: usize,
    seed: u64,
) -> Result<EigResult> {
    lanczos_max(op, eps_tilde, max_iters, seed, DEFAULT_KRYLOV_DIM)
}

/// [`approx_max_eigvec`] with an explicit Krylov basis size.
///
/// The basis is kept orthonormal by two Gram-Schmidt passes and the Ritz pair
/// is extracted from the full projection `QᵀMQ`. When the basis is full it is
/// thick-restarted with the leading third of its Ritz vectors, which keeps the
/// Ritz value non-decreasing across restarts.
pub fn lanczos_max(
    op: &(impl SymOperator + ?Sized),
    eps_tilde: f64,
    max_iters: usize,
    seed: u64,
    krylov_dim: usize,
) -> Result<EigResult> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::invalid("operator dimension is 0"));
    }
    if !(eps_tilde > 0.0) {
        return Err(Error::invalid(format!("eps_tilde must be positive, got {eps_tilde}")));
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let block = krylov_dim.max(2).min(n);
    let keep = (block / 3).max(1).min(block - 1).max(1);
    let target = 0.5 * eps_tilde;

    let mut matvecs = 0usize;
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(block);
    let mut aq: Vec<DVector<f64>> = Vec::with_capacity(block);
    let mut h = DMatrix::zeros(0, 0);
    let mut history = Vec::new();
    let mut best: Option<(DVector<f64>, f64, f64)> = None;
    let mut next = random_unit_vector(n, seed);

    loop {
        let mut w = DVector::zeros(n);
        op.apply(next.as_slice(), w.as_mut_slice());
        matvecs += 1;
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical {
                iteration: matvecs,
                message: "operator produced a non-finite value".into(),
            });
        }
        let m = q.len();
        let mut grown = DMatrix::zeros(m + 1, m + 1);
        grown.view_mut((0, 0), (m, m)).copy_from(&h);
        for (i, qi) in q.iter().enumerate() {
            let hij = qi.dot(&w);
            grown[(i, m)] = hij;
            grown[(m, i)] = hij;
        }
        grown[(m, m)] = next.dot(&w);
        h = grown;
        q.push(next);
        aq.push(w);

        let eig = SymmetricEigen::new(h.clone());
        let order = descending(&eig.eigenvalues);
        let s = eig.eigenvectors.column(order[0]);
        let y = combine(&q, s.as_slice());
        let ay = combine(&aq, s.as_slice());
        let norm = y.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical {
                iteration: matvecs,
                message: "degenerate Ritz vector".into(),
            });
        }
        let (y, ay) = (y / norm, ay / norm);
        let rho = y.dot(&ay);
        if !rho.is_finite() {
            return Err(Error::Numerical {
                iteration: matvecs,
                message: "non-finite Rayleigh quotient".into(),
            });
        }
        let r = &ay - &y * rho;
        let residual = r.norm();
        history.push(rho);
        if best.as_ref().is_none_or(|(_, b, _)| rho >= *b) {
            best = Some((y.clone(), rho, residual));
        }

        let scale = rho.abs().max(h.amax()).max(f64::MIN_POSITIVE);
        let exhausted = q.len() == n;
        if residual <= target || matvecs >= max_iters || exhausted {
            // A converged Ritz vector is returned as is; otherwise the one
            // with the largest Rayleigh quotient seen.
            let (vector, rayleigh, residual) = if residual <= target {
                (y, rho, residual)
            } else {
                best.expect("at least one step ran")
            };
            return Ok(EigResult {
                vector,
                rayleigh,
                converged: residual <= target,
                residual,
                iterations: matvecs,
                rayleigh_history: history,
            });
        }

        if q.len() == block {
            let s = DMatrix::from_fn(block, keep, |i, j| eig.eigenvectors[(i, order[j])]);
            q = (0..keep).map(|j| combine(&q, s.column(j).as_slice())).collect();
            aq = (0..keep).map(|j| combine(&aq, s.column(j).as_slice())).collect();
            for j in 0..keep {
                let c = q[j].norm();
                q[j] /= c;
                aq[j] /= c;
            }
            h = DMatrix::from_fn(keep, keep, |i, j| {
                if i == j {
                    q[i].dot(&aq[i])
                } else {
                    0.5 * (q[i].dot(&aq[j]) + q[j].dot(&aq[i]))
                }
            });
        }

        // The Ritz residual is orthogonal to the basis in exact arithmetic and
        // extends the Krylov space like the next Lanczos vector.
        let mut v = r;
        for _ in 0..2 {
            for qi in &q {
                let proj = qi.dot(&v);
                v.axpy(-proj, qi, 1.0);
            }
        }
        let vn = v.norm();
        if vn <= 1e-14 * scale || vn == 0.0 {
            // Invariant subspace: restart from a fresh direction orthogonal to
            // the basis so the remaining spectrum can still be explored.
            let mut fresh = random_unit_vector(n, seed.wrapping_add(matvecs as u64));
            for _ in 0..2 {
                for qi in &q {
                    let proj = qi.dot(&fresh);
                    fresh.axpy(-proj, qi, 1.0);
                }
            }
            let fnorm = fresh.norm();
            if !(fnorm > 1e-8) {
                let (vector, rayleigh, residual) = best.expect("at least one step ran");
                return Ok(EigResult {
                    vector,
                    rayleigh,
                    converged: residual <= target,
                    residual,
                    iterations: matvecs,
                    rayleigh_history: history,
                });
            }
            next = fresh / fnorm;
        } else {
            next = v / vn;
        }
    }
}

fn combine(basis: &[DVector<f64>], coeffs: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(basis[0].len());
    for (b, &c) in basis.iter().zip(coeffs) {
        out.axpy(c, b, 1.0);
    }
    out
}

/// Indices of `values` from largest to smallest.
fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Exact largest eigenpair of a dense symmetric matrix.
pub fn dense_max_eigpair(matrix: &DMatrix<f64>) -> Result<EigResult> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::invalid(format!(
            "expected a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if n > DENSE_CAP {
        return Err(Error::invalid(format!("dimension {n} exceeds dense cap {DENSE_CAP}")));
    }
    let scale = matrix.amax().max(1.0);
    let asym = (matrix - matrix.transpose()).amax();
    if !(asym <= 1e-8 * scale) {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max deviation {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let idx = eig.eigenvalues.imax();
    let mut vector = eig.eigenvectors.column(idx).into_owned();
    vector.normalize_mut();
    let mv = matrix * &vector;
    let rayleigh = vector.dot(&mv);
    let residual = (mv - &vector * rayleigh).norm();
    Ok(EigResult {
        vector,
        rayleigh,
        residual,
        iterations: 1,
        converged: true,
        rayleigh_history: vec![rayleigh],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_any_vector_is_optimal() {
        let op = DMatrix::<f64>::identity(3, 3);
        let res = approx_max_eigvec(&op, 1e-6, 100, 7).unwrap();
        assert!(res.converged);
        assert!(res.rayleigh >= 1.0 - 1e-6);
        assert!((res.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_dominant_axis() {
        let op = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let res = approx_max_eigvec(&op, 1e-8, 100, 1).unwrap();
        assert!(res.converged);
        assert!(res.rayleigh >= 3.0 - 1e-8);
        assert!(res.vector[0].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn zero_dimension_rejected() {
        let op = DMatrix::<f64>::zeros(0, 0);
        assert!(matches!(
            approx_max_eigvec(&op, 1e-6, 10, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn non_finite_apply_reports_iteration() {
        let op = FnOperator::new(4, |_x: &[f64], y: &mut [f64]| y.fill(f64::NAN));
        match approx_max_eigvec(&op, 1e-6, 10, 0) {
            Err(Error::Numerical { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn iteration_cap_returns_best_unconverged() {
        let m = random_symmetric(150, 3);
        let res = approx_max_eigvec(&m, 1e-12, 5, 9).unwrap();
        assert!(!res.converged);
        assert!(res.iterations <= 6);
        assert!((res.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_matches_recomputation() {
        let m = random_symmetric(40, 11);
        let res = approx_max_eigvec(&m, 1e-6, 1000, 2).unwrap();
        let rq = res.vector.dot(&(&m * &res.vector));
        assert!((rq - res.rayleigh).abs() <= 1e-10 * rq.abs().max(1.0));
    }

    #[test]
    fn rayleigh_history_is_monotone() {
        for seed in 0..10 {
            let m = random_symmetric(120, 100 + seed);
            let res = lanczos_max(&m, 1e-10, 2000, seed, 8).unwrap();
            for w in res.rayleigh_history.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{:?}", res.rayleigh_history);
            }
        }
    }

    #[test]
    fn dense_known_spectra() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 2.0, -1.0]));
        let r = dense_max_eigpair(&d).unwrap();
        assert!((r.rayleigh - 5.0).abs() < 1e-14);
        assert!((r.vector[0].abs() - 1.0).abs() < 1e-14);

        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = dense_max_eigpair(&swap).unwrap();
        assert!((r.rayleigh - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.vector[0].abs() - s).abs() < 1e-12);
        assert!((r.vector[0] - r.vector[1]).abs() < 1e-12);
    }

    #[test]
    fn dense_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(dense_max_eigpair(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let m = random_symmetric(50, 5);
        let exact = dense_max_eigpair(&m).unwrap();
        let approx = approx_max_eigvec(&m, 1e-9, 5000, 3).unwrap();
        assert!(approx.converged);
        assert!((exact.rayleigh - approx.rayleigh).abs() < 1e-8);
    }

    #[test]
    fn to_dense_round_trips() {
        let m = random_symmetric(7, 1);
        assert_eq!(to_dense(&m), m);
    }
}
