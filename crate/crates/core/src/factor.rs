use nalgebra::{DMatrix, DVector};

/// Low-rank factor `V` of the iterate `X = VVᵀ`.
///
/// An `n × 0` factor represents `X = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor(DMatrix<f64>);

impl Factor {
    pub fn zeros(rows: usize) -> Self {
        Factor(DMatrix::zeros(rows, 0))
    }

    pub fn new(matrix: DMatrix<f64>) -> Self {
        Factor(matrix)
    }

    pub fn from_column(v: DVector<f64>) -> Self {
        let n = v.len();
        Factor(DMatrix::from_column_slice(n, 1, v.as_slice()))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `Tr(VVᵀ) = ‖V‖²_F`.
    pub fn trace(&self) -> f64 {
        self.0.norm_squared()
    }

    /// Dense `VVᵀ`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }

    pub fn scale(&self, c: f64) -> Factor {
        Factor(&self.0 * c)
    }

    /// `[√α·V, √β·v]`, representing `α·VVᵀ + β·vvᵀ`.
    ///
    /// Zero weights drop the corresponding block instead of carrying zero
    /// columns around.
    pub fn scaled_concat(&self, alpha: f64, beta: f64, v: &DVector<f64>) -> Factor {
        assert_eq!(v.len(), self.rows(), "column length must match factor rows");
        let keep_old = alpha > 0.0 && self.rank() > 0;
        let add_new = beta > 0.0;
        let k = if keep_old { self.rank() } else { 0 } + usize::from(add_new);
        let mut out = DMatrix::zeros(self.rows(), k);
        if keep_old {
            out.columns_mut(0, self.rank()).copy_from(&(&self.0 * alpha.sqrt()));
        }
        if add_new {
            out.column_mut(k - 1).copy_from(&(v * beta.sqrt()));
        }
        Factor(out)
    }

    /// `[V, W]`, representing `VVᵀ + WWᵀ`.
    pub fn hconcat(&self, other: &Factor) -> Factor {
        assert_eq!(other.rows(), self.rows(), "factor row counts must match");
        let mut out = DMatrix::zeros(self.rows(), self.rank() + other.rank());
        out.columns_mut(0, self.rank()).copy_from(&self.0);
        out.columns_mut(self.rank(), other.rank()).copy_from(&other.0);
        Factor(out)
    }

    /// Drops columns whose norm is below `rel_tol · ‖V‖_F`; returns how many
    /// were removed.
    pub fn drop_negligible_columns(&mut self, rel_tol: f64) -> usize {
        let total = self.0.norm();
        let keep: Vec<usize> = (0..self.rank())
            .filter(|&j| {
                let c = self.0.column(j).norm();
                c > rel_tol * total && c > 0.0
            })
            .collect();
        let dropped = self.rank() - keep.len();
        if dropped > 0 {
            self.0 = self.0.select_columns(&keep);
        }
        dropped
    }

    /// Re-factors `VVᵀ` from its eigendecomposition when `V` has more columns
    /// than rows, keeping eigenvalues above `rel_tol · λ_max`. Returns whether
    /// the factor was replaced.
    pub fn compress_if_wide(&mut self, rel_tol: f64) -> bool {
        if self.rank() <= self.rows() {
            return false;
        }
        let eig = self.to_dense().symmetric_eigen();
        let top = eig.eigenvalues.max();
        if !(top > 0.0) {
            *self = Factor::zeros(self.rows());
            return true;
        }
        let keep: Vec<usize> = (0..self.rows())
            .filter(|&j| eig.eigenvalues[j] > rel_tol * top)
            .collect();
        let mut out = DMatrix::zeros(self.rows(), keep.len());
        for (c, &j) in keep.iter().enumerate() {
            out.set_column(c, &(eig.eigenvectors.column(j) * eig.eigenvalues[j].sqrt()));
        }
        self.0 = out;
        true
    }
}

impl From<DMatrix<f64>> for Factor {
    fn from(m: DMatrix<f64>) -> Self {
        Factor(m)
    }
}
