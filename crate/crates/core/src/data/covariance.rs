use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::factor::Factor;

/// Reads a dense numeric matrix, one row per line, fields separated by commas
/// or whitespace. Blank lines and `#` comments are skipped.
pub fn load_matrix(reader: impl BufRead) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad number {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite value".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid("no data rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

/// `d` columns of `raw` chosen uniformly without replacement, in increasing
/// column order.
pub fn subsample_columns(raw: &DMatrix<f64>, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || d > raw.ncols() {
        return Err(Error::invalid(format!("cannot pick {d} of {} columns", raw.ncols())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = index::sample(&mut rng, raw.ncols(), d).into_vec();
    cols.sort_unstable();
    Ok(raw.select_columns(&cols))
}

/// Sample covariance of the rows of `raw`.
#[derive(Debug, Clone)]
pub struct Covariance {
    pub matrix: DMatrix<f64>,
    /// Columns with zero variance; their scale was left at 1.
    pub constant_columns: Vec<usize>,
}

/// Covariance (`N − 1` denominator) of the centered data, with every column
/// scaled to unit standard deviation when `normalize` is set.
pub fn build_covariance(raw: &DMatrix<f64>, normalize: bool) -> Result<Covariance> {
    let (n, d) = raw.shape();
    if n < 2 {
        return Err(Error::invalid(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mut x = raw.clone();
    let mut constant_columns = Vec::new();
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
        if normalize {
            let sd = (x.column(j).norm_squared() / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                x.column_mut(j).scale_mut(1.0 / sd);
            } else {
                constant_columns.push(j);
            }
        }
    }
    if !constant_columns.is_empty() {
        log::warn!(
            "{} zero-variance columns left unscaled: {:?}",
            constant_columns.len(),
            constant_columns
        );
    }
    let c = x.transpose() * &x / (n - 1) as f64;
    Ok(Covariance {
        matrix: (&c + c.transpose()) * 0.5,
        constant_columns,
    })
}

/// Standardized covariance of `samples` draws from a `d`-dimensional
/// Gaussian whose covariance has a planted sparse component.
pub fn synthetic_covariance(d: usize, samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || samples < 2 {
        return Err(Error::invalid("synthetic covariance needs d >= 1 and samples >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = rng.random_range(1..=d.div_ceil(4).max(1));
    let mut u = DVector::zeros(d);
    for k in index::sample(&mut rng, d, support) {
        u[k] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    u.normalize_mut();
    let strength: f64 = rng.random_range(1.0..4.0);
    let raw = DMatrix::from_fn(samples, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let shared: DVector<f64> = DVector::from_fn(samples, |_, _| rng.sample::<f64, _>(StandardNormal));
    let planted = &raw + (&shared * u.transpose()) * strength;
    Ok(build_covariance(&planted, true)?.matrix)
}

/// Sparsity and explained variance of the rounded solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityReport {
    /// Fraction of entries of `x` with `|x_i| ≤ zero_tol·‖x‖_∞`.
    pub sparsity: f64,
    /// `xᵀAx`.
    pub variance: f64,
}

/// Default relative threshold for counting an entry of `x` as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-3;

/// Rounds `X = VVᵀ` to its unit top eigenvector `x` and reports sparsity and
/// variance. The eigenvector is obtained from the small `k × k` Gram matrix
/// `VᵀV`.
pub fn sparsity_and_variance(a: &DMatrix<f64>, v: &Factor, zero_tol: f64) -> Result<SparsityReport> {
    let x = top_eigenvector(v)?;
    let cutoff = zero_tol * x.amax();
    let zeros = x.iter().filter(|e| e.abs() <= cutoff).count();
    Ok(SparsityReport {
        sparsity: zeros as f64 / x.len() as f64,
        variance: x.dot(&(a * &x)),
    })
}

/// Unit top eigenvector of `VVᵀ`, sign-fixed so the largest-magnitude entry
/// is positive.
pub fn top_eigenvector(v: &Factor) -> Result<DVector<f64>> {
    if v.rank() == 0 || v.trace() == 0.0 {
        return Err(Error::invalid("top eigenvector of the zero matrix"));
    }
    let gram = v.matrix().transpose() * v.matrix();
    let eig = gram.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let mut x = v.matrix() * eig.eigenvectors.column(k);
    x.normalize_mut();
    let imax = x.iamax();
    if x[imax] < 0.0 {
        x.neg_mut();
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_correlated_columns() {
        let raw = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 4.0, 4.0, 7.0, 7.0]);
        let c = build_covariance(&raw, true).unwrap();
        assert!((c.matrix - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn identical_rows() {
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 1.0, 5.0, 1.0, 5.0]);
        let c = build_covariance(&raw, true).unwrap();
        assert_eq!(c.matrix, DMatrix::zeros(2, 2));
        assert_eq!(c.constant_columns, vec![0, 1]);
        assert!(build_covariance(&DMatrix::zeros(1, 2), true).is_err());
    }

    #[test]
    fn loader_accepts_commas_and_spaces() {
        let m = load_matrix("1, 2 3\n# c\n4 5,6\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert!(matches!(
            load_matrix("1 2\n3\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn sparsity_of_axis_vector() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 1.0, 1.0]));
        let v = Factor::from_column(DVector::from_vec(vec![0.0, -2.0, 0.0, 1e-5]));
        let r = sparsity_and_variance(&a, &v, 1e-3).unwrap();
        assert_eq!(r.sparsity, 0.75);
        assert!((r.variance - 1.0).abs() < 1e-9);
        assert!(sparsity_and_variance(&a, &Factor::zeros(4), 1e-3).is_err());
    }

    #[test]
    fn column_subsample() {
        let raw = DMatrix::from_fn(3, 10, |i, j| (i * 10 + j) as f64);
        let s = subsample_columns(&raw, 4, 5).unwrap();
        assert_eq!(s.shape(), (3, 4));
        assert_eq!(s, subsample_columns(&raw, 4, 5).unwrap());
        assert!(subsample_columns(&raw, 11, 0).is_err());
    }
}
