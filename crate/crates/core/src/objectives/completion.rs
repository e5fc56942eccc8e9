use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_rows, Objective};
use crate::eig::{FnOperator, SymOperator};
use crate::error::{Error, Result};
use crate::factor::Factor;

/// One observed rating, with dense 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Observed entries `Ω` of an `users × items` rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingSet {
    users: usize,
    items: usize,
    entries: Vec<Rating>,
}

impl RatingSet {
    pub fn new(users: usize, items: usize, entries: Vec<Rating>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for r in &entries {
            if r.user >= users || r.item >= items {
                return Err(Error::invalid(format!(
                    "rating ({}, {}) outside {users}x{items}",
                    r.user, r.item
                )));
            }
            if !r.value.is_finite() {
                return Err(Error::invalid(format!("non-finite rating at ({}, {})", r.user, r.item)));
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::invalid(format!("duplicate rating ({}, {})", r.user, r.item)));
            }
        }
        Ok(Self { users, items, entries })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Embedded dimension `users + items`.
    pub fn embedded_dim(&self) -> usize {
        self.users + self.items
    }

    /// Prediction `⟨V_user, V_{users+item}⟩`.
    pub fn predict(&self, v: &Factor, user: usize, item: usize) -> f64 {
        let m = v.matrix();
        let row_item = self.users + item;
        (0..v.rank()).map(|c| m[(user, c)] * m[(row_item, c)]).sum()
    }
}

/// Matrix completion embedded in the PSD cone of dimension `users + items`.
///
/// The user factors are the first `users` rows of `V`, the item factors the
/// remaining rows. Squared residuals are summed over both symmetric positions
/// of each observed entry, so `f(VVᵀ) = 2·Σ_Ω (⟨V_u, V_{m+i}⟩ − y)²`; this
/// keeps `∇f` symmetric and does not move the minimizer.
#[derive(Debug, Clone)]
pub struct MatrixCompletion {
    ratings: RatingSet,
}

impl MatrixCompletion {
    pub fn new(ratings: RatingSet) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::invalid("matrix completion needs at least one rating"));
        }
        Ok(Self { ratings })
    }

    pub fn ratings(&self) -> &RatingSet {
        &self.ratings
    }

    /// Residuals `⟨V_u, V_{m+i}⟩ − y` in entry order.
    fn residuals(&self, v: &Factor) -> Result<Vec<f64>> {
        check_rows(self.dim(), v)?;
        let k = v.rank();
        let vt = v.matrix().transpose();
        let m = self.ratings.users;
        Ok(self
            .ratings
            .entries
            .iter()
            .map(|r| {
                let pred = if k == 0 {
                    0.0
                } else {
                    vt.column(r.user).dot(&vt.column(m + r.item))
                };
                pred - r.value
            })
            .collect())
    }

    /// One-sided training error `Σ_Ω (⟨V_u, V_{m+i}⟩ − y)²`.
    pub fn training_sse(&self, v: &Factor) -> Result<f64> {
        Ok(self.residuals(v)?.iter().map(|r| r * r).sum())
    }

    fn grad_from_residuals(&self, v: &Factor, res: &[f64]) -> DMatrix<f64> {
        let k = v.rank();
        let n = self.dim();
        let m = self.ratings.users;
        let vt = v.matrix().transpose();
        let mut gt = DMatrix::zeros(k, n);
        for (r, &e) in self.ratings.entries.iter().zip(res) {
            let (u, i) = (r.user, m + r.item);
            let c = 4.0 * e;
            for a in 0..k {
                gt[(a, u)] += c * vt[(a, i)];
                gt[(a, i)] += c * vt[(a, u)];
            }
        }
        gt.transpose()
    }
}

impl Objective for MatrixCompletion {
    fn dim(&self) -> usize {
        self.ratings.embedded_dim()
    }

    fn value(&self, v: &Factor) -> Result<f64> {
        Ok(2.0 * self.training_sse(v)?)
    }

    fn grad_factor(&self, v: &Factor) -> Result<DMatrix<f64>> {
        let res = self.residuals(v)?;
        Ok(self.grad_from_residuals(v, &res))
    }

    fn value_and_grad(&self, v: &Factor) -> Result<(f64, DMatrix<f64>)> {
        let res = self.residuals(v)?;
        let value = 2.0 * res.iter().map(|r| r * r).sum::<f64>();
        Ok((value, self.grad_from_residuals(v, &res)))
    }

    fn neg_grad_operator<'a>(&'a self, v: &Factor) -> Result<Box<dyn SymOperator + 'a>> {
        // ∇f has 2·residual at (u, m+i) and (m+i, u) for every observed entry.
        let res = self.residuals(v)?;
        let m = self.ratings.users;
        let entries = &self.ratings.entries;
        Ok(Box::new(FnOperator::new(
            self.dim(),
            move |x: &[f64], y: &mut [f64]| {
                y.fill(0.0);
                for (r, &e) in entries.iter().zip(&res) {
                    let (u, i) = (r.user, m + r.item);
                    let c = -2.0 * e;
                    y[u] += c * x[i];
                    y[i] += c * x[u];
                }
            },
        )))
    }

    fn grad_dot_x(&self, v: &Factor) -> Result<f64> {
        // ∇f • X = Σ_Ω 2·(2e)·pred over both positions.
        let res = self.residuals(v)?;
        Ok(self
            .ratings
            .entries
            .iter()
            .zip(&res)
            .map(|(r, e)| 4.0 * e * (e + r.value))
            .sum())
    }
}
