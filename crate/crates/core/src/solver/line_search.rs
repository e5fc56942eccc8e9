//! Minimization of `φ(α, β) = f(α·VVᵀ + β·vvᵀ)` over `α, β ≥ 0`.

use nalgebra::{DVector, Matrix2, Vector2};

use crate::eig::apply_vec;
use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objectives::Objective;

/// Step-size schedule `α_i = 2 / (i + 2)` of the convergence analysis.
pub fn schedule(i: usize) -> f64 {
    2.0 / (i as f64 + 2.0)
}

/// Result of [`line_search_2d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneStep {
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
}

const MAX_NEWTON: usize = 40;

struct Plane<'a> {
    objective: &'a dyn Objective,
    v: &'a Factor,
    dir: &'a DVector<f64>,
    /// `α` is irrelevant when the incumbent is `X = 0`.
    alpha_free: bool,
    scale: Vector2<f64>,
}

impl Plane<'_> {
    fn value(&self, z: Vector2<f64>) -> Result<f64> {
        let y = self.v.scaled_concat(z[0], z[1], self.dir);
        match self.objective.value(&y) {
            Ok(f) if f.is_nan() => Err(Error::Numerical {
                iteration: 0,
                message: format!("objective is NaN at (alpha, beta) = ({}, {})", z[0], z[1]),
            }),
            Ok(f) => Ok(f),
            Err(Error::Domain(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// `(∂φ/∂α, ∂φ/∂β) = (∇f(Y)•X, vᵀ∇f(Y)v)`.
    fn grad(&self, z: Vector2<f64>) -> Result<Vector2<f64>> {
        let y = self.v.scaled_concat(z[0], z[1], self.dir);
        let op = self.objective.neg_grad_operator(&y)?;
        let mut ga = 0.0;
        if self.alpha_free {
            for c in 0..self.v.rank() {
                let col = self.v.matrix().column(c).into_owned();
                ga -= col.dot(&apply_vec(&op, &col));
            }
        }
        let gb = -self.dir.dot(&apply_vec(&op, self.dir));
        let g = Vector2::new(ga, gb);
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical {
                iteration: 0,
                message: "non-finite gradient in two-variable search".into(),
            });
        }
        Ok(g)
    }

    /// Forward-difference Hessian from exact gradients.
    fn hessian(&self, z: Vector2<f64>, g: Vector2<f64>) -> Result<Matrix2<f64>> {
        let mut h = Matrix2::zeros();
        for i in 0..2 {
            if i == 0 && !self.alpha_free {
                continue;
            }
            let step = 1e-5 * z[i].abs().max(self.scale[i]);
            let mut zp = z;
            zp[i] += step;
            let gp = self.grad(zp)?;
            h.set_column(i, &((gp - g) / step));
        }
        h = (h + h.transpose()) * 0.5;
        if !self.alpha_free {
            h[(0, 0)] = 1.0;
        }
        Ok(h)
    }

    /// Projected Newton with an Armijo backtracking search on the quadrant.
    fn newton(&self, start: Vector2<f64>) -> Result<(Vector2<f64>, f64)> {
        let mut z = start;
        let mut f = self.value(z)?;
        if !f.is_finite() {
            return Ok((z, f));
        }
        for _ in 0..MAX_NEWTON {
            let g = self.grad(z)?;
            let h = self.hessian(z, g)?;
            let free = [
                self.alpha_free && !(z[0] <= 0.0 && g[0] > 0.0),
                !(z[1] <= 0.0 && g[1] > 0.0),
            ];
            let d = newton_direction(&h, &g, free);
            if d == Vector2::zeros() {
                break;
            }
            let mut s = 1.0;
            let mut accepted = None;
            // Kept for non-smooth points (e.g. a floored √β term at β = 0),
            // where the gradient overstates the attainable decrease.
            let mut best_decrease: Option<(Vector2<f64>, f64)> = None;
            for _ in 0..40 {
                let trial = (z + d * s).map(|x| x.max(0.0));
                let ft = self.value(trial)?;
                if ft.is_finite() && ft <= f + 1e-4 * g.dot(&(trial - z)) {
                    accepted = Some((trial, ft));
                    break;
                }
                if ft < best_decrease.map_or(f, |b| b.1) {
                    best_decrease = Some((trial, ft));
                }
                s *= 0.5;
            }
            let Some((zn, fn_)) = accepted.or(best_decrease) else {
                break;
            };
            let done =
                (f - fn_).abs() <= 1e-15 * (1.0 + f.abs()) || ((zn - z).component_div(&self.scale)).amax() <= 1e-14;
            z = zn;
            f = fn_;
            if done {
                break;
            }
        }
        Ok((z, f))
    }
}

/// Newton step on the free coordinates, falling back to a diagonally scaled
/// gradient step when the reduced Hessian is not positive definite.
fn newton_direction(h: &Matrix2<f64>, g: &Vector2<f64>, free: [bool; 2]) -> Vector2<f64> {
    let mut d = Vector2::zeros();
    match free {
        [true, true] => {
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            if h[(0, 0)] > 0.0 && det > 1e-12 * h[(0, 0)] * h[(1, 1)].abs() {
                if let Some(inv) = h.try_inverse() {
                    d = -(inv * g);
                }
            }
            if d == Vector2::zeros() || !d.iter().all(|x| x.is_finite()) || d.dot(g) >= 0.0 {
                for i in 0..2 {
                    d[i] = -g[i] / diag_or_one(h[(i, i)]);
                }
            }
        }
        [a, b] => {
            for (i, free) in [a, b].into_iter().enumerate() {
                if free {
                    d[i] = -g[i] / diag_or_one(h[(i, i)]);
                }
            }
        }
    }
    if !d.iter().all(|x| x.is_finite()) {
        return Vector2::zeros();
    }
    d
}

fn diag_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

/// Approximate minimizer of `f(α·VVᵀ + β·vvᵀ)` over `α, β ≥ 0`.
///
/// Projected Newton runs from the incumbent `(1, 0)` and, when
/// `enforce_fallback` is set, also from `(1 − α_i, α_i·t)`; the best of the
/// searched points and the seeds is returned, so the value never exceeds the
/// incumbent's (nor the fallback's, when enforced).
pub fn line_search_2d(
    objective: &dyn Objective,
    v: &Factor,
    dir: &DVector<f64>,
    iteration: usize,
    trace_bound: f64,
    enforce_fallback: bool,
) -> Result<PlaneStep> {
    if (dir.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("search direction must be a unit vector"));
    }
    let a_i = schedule(iteration);
    let alpha_free = v.rank() > 0;
    let scale_b = if alpha_free {
        (a_i * trace_bound).max(v.trace() * 1e-3).max(1e-12)
    } else {
        trace_bound.max(1e-12)
    };
    let plane = Plane {
        objective,
        v,
        dir,
        alpha_free,
        scale: Vector2::new(1.0, scale_b),
    };

    let incumbent = Vector2::new(1.0, 0.0);
    let fallback = Vector2::new(1.0 - a_i, a_i * trace_bound);
    let mut candidates = vec![(incumbent, plane.value(incumbent)?)];
    if enforce_fallback {
        candidates.push((fallback, plane.value(fallback)?));
    }
    let seeds: Vec<_> = candidates.iter().map(|(z, _)| *z).collect();
    for seed in seeds {
        candidates.push(plane.newton(seed)?);
    }
    let (z, value) = candidates
        .into_iter()
        .fold(None::<(Vector2<f64>, f64)>, |best, (z, f)| match best {
            Some((_, bf)) if bf <= f => best,
            _ => Some((z, f)),
        })
        .expect("incumbent is always a candidate");
    if !value.is_finite() {
        return Err(Error::Numerical {
            iteration,
            message: "no finite objective value in two-variable search".into(),
        });
    }
    Ok(PlaneStep {
        alpha: z[0],
        beta: z[1],
        value,
    })
}
