//! Empirical check of the `O(1/i)` rate `h(X_i) ≤ 8·C_f / (i + 2)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{schedule, solve_with_observer, Control, SolverConfig};
use crate::eig::to_dense;
use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objectives::Objective;

/// Curvature constant `C_f` used for the rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceProbe {
    pub curvature_bound: f64,
}

impl ConvergenceProbe {
    pub fn new(curvature_bound: f64) -> Result<Self> {
        if !(curvature_bound > 0.0) || !curvature_bound.is_finite() {
            return Err(Error::invalid(format!(
                "curvature bound must be positive and finite, got {curvature_bound}"
            )));
        }
        Ok(Self { curvature_bound })
    }

    /// Analytic `C_f` of `½‖X − B‖²` over trace-`t` PSD matrices: the Bregman
    /// term is `½α²‖Z − X‖²`, and `‖Z − X‖²_F ≤ 2t²` there.
    pub fn for_quadratic(trace_bound: f64) -> Result<Self> {
        Self::new(trace_bound * trace_bound)
    }

    /// The larger of this bound and a sampled estimate.
    pub fn refined(self, sampled: f64) -> Self {
        Self {
            curvature_bound: self.curvature_bound.max(sampled),
        }
    }

    pub fn step_size(i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            schedule(i)
        }
    }

    /// `8·C_f / (i + 2)`.
    pub fn bound(&self, i: usize) -> f64 {
        8.0 * self.curvature_bound / (i as f64 + 2.0)
    }
}

fn random_trace_factor(n: usize, t: f64, rng: &mut ChaCha8Rng) -> Factor {
    let k = rng.random_range(1..=n.clamp(1, 3));
    let m = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = Factor::new(m);
    let tau = v.trace();
    v.scale((t / tau).sqrt())
}

/// Lower estimate of `C_f` over trace-`t` PSD matrices from random
/// `(X, Z, α)`: `max (f(Y) − f(X) − (Y − X)•∇f(X)) / α²`,
/// `Y = X + α(Z − X)`.
pub fn estimate_curvature(objective: &dyn Objective, trace_bound: f64, samples: usize, seed: u64) -> Result<f64> {
    let n = objective.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x = random_trace_factor(n, trace_bound, &mut rng);
        let z = random_trace_factor(n, trace_bound, &mut rng);
        let alpha: f64 = rng.random_range(0.05..=1.0);
        let xd = x.to_dense();
        let yd = &xd * (1.0 - alpha) + z.to_dense() * alpha;
        let y = x.scale((1.0 - alpha).sqrt()).hconcat(&z.scale(alpha.sqrt()));
        let grad = -to_dense(&*objective.neg_grad_operator(&x)?);
        let breg = objective.value(&y)? - objective.value(&x)? - grad.dot(&(yd - xd));
        best = best.max(breg / (alpha * alpha));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub iter: usize,
    /// Primal error `f(X_i) − f*`.
    pub h: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSeries {
    pub curvature_bound: f64,
    pub rows: Vec<ProbeRow>,
    /// Iterations `i ≥ 1` with `h(X_i) > 8C_f/(i+2)`, plus `i = 1` when
    /// `h(X₁) > 2C_f`.
    pub violations: Vec<usize>,
}

impl ProbeSeries {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs the solver for `config.max_iters` iterations and compares the primal
/// error at every iterate against the rate bound.
///
/// If the solver certifies optimality early, later rows repeat the final
/// error, which is what further iterations would report.
pub fn probe_rate(
    objective: &dyn Objective,
    f_star: Option<f64>,
    config: &SolverConfig,
    probe: &ConvergenceProbe,
) -> Result<ProbeSeries> {
    let f_star = f_star.ok_or_else(|| Error::invalid("rate probe needs the optimal value f*"))?;
    let mut rows = Vec::with_capacity(config.max_iters + 1);
    let mut record_cfg = config.clone();
    record_cfg.record_trace = false;
    let res = solve_with_observer(objective, &record_cfg, |rec, _| {
        rows.push(ProbeRow {
            iter: rec.iter,
            h: rec.f - f_star,
            bound: probe.bound(rec.iter),
        });
        Control::Continue
    })?;
    let last_h = res.f_value - f_star;
    for i in rows.len()..=config.max_iters {
        rows.push(ProbeRow {
            iter: i,
            h: last_h,
            bound: probe.bound(i),
        });
    }
    let slack = |f: f64| 1e-12 * (1.0 + f.abs());
    let mut violations: Vec<usize> = rows
        .iter()
        .filter(|r| r.iter >= 1 && r.h > r.bound + slack(f_star))
        .map(|r| r.iter)
        .collect();
    if let Some(r1) = rows.get(1) {
        if r1.h > 2.0 * probe.curvature_bound + slack(f_star) && !violations.contains(&1) {
            violations.insert(0, 1);
        }
    }
    Ok(ProbeSeries {
        curvature_bound: probe.curvature_bound,
        rows,
        violations,
    })
}
