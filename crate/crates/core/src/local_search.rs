//! Limited-memory BFGS on the factor `V` of `f(VVᵀ)`.
//!
//! The factored problem is non-convex, so this phase only promises not to
//! make things worse: the returned factor never has a larger value than the
//! input.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objectives::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct LsConfig {
    /// Number of `(s, y)` pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `‖grad‖_F ≤ grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
    /// Stop once an iteration decreases `f` by less than `progress_tol · (1 + |f|)`.
    pub progress_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            grad_tol: 1e-6,
            progress_tol: 1e-13,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_evals: 25,
        }
    }
}

impl LsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 || self.max_line_evals == 0 {
            return Err(Error::invalid("memory and max_line_evals must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStop {
    GradientTolerance,
    NoProgress,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

/// One accepted step `V ← V + step·d`.
#[derive(Debug, Clone, Copy)]
pub struct LsStep {
    pub step: f64,
    pub f_before: f64,
    pub f_after: f64,
    /// Directional derivative `⟨grad, d⟩` at the start of the step.
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct LsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub stop: LsStop,
    pub steps: Vec<LsStep>,
}

/// Runs L-BFGS from `v` and returns the improved factor.
pub fn improve(objective: &dyn Objective, v: &Factor, config: &LsConfig) -> Result<Factor> {
    improve_with_report(objective, v, config).map(|(f, _)| f)
}

pub fn improve_with_report(objective: &dyn Objective, v: &Factor, config: &LsConfig) -> Result<(Factor, LsReport)> {
    config.validate()?;
    let (f0, g0) = objective.value_and_grad(v)?;
    let mut report = LsReport {
        iterations: 0,
        evaluations: 1,
        initial_value: f0,
        final_value: f0,
        stop: LsStop::GradientTolerance,
        steps: Vec::new(),
    };
    if v.rank() == 0 {
        return Ok((v.clone(), report));
    }
    if !f0.is_finite() || !g0.iter().all(|x| x.is_finite()) {
        report.stop = LsStop::NonFinite;
        return Ok((v.clone(), report));
    }

    let mut x = v.matrix().clone();
    let mut f = f0;
    let mut g = g0;
    let mut history: VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)> = VecDeque::with_capacity(config.memory);

    report.stop = LsStop::MaxIterations;
    for iter in 0..config.max_iters {
        let gnorm = g.norm();
        if gnorm <= config.grad_tol * (1.0 + f.abs()) {
            report.stop = LsStop::GradientTolerance;
            break;
        }

        let mut d = two_loop(&g, &history);
        let mut slope = d.dot(&g);
        if !(slope < 0.0) {
            history.clear();
            d = -&g;
            slope = -gnorm * gnorm;
        }
        let initial_step = if iter == 0 && history.is_empty() {
            (1.0 / g.iter().map(|x| x.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };

        let outcome = strong_wolfe(
            objective,
            &x,
            f,
            slope,
            &d,
            initial_step,
            config,
            &mut report.evaluations,
        );
        let Some((step, f_new, g_new, x_new)) = outcome else {
            report.stop = LsStop::LineSearchFailed;
            break;
        };
        if !f_new.is_finite() || !g_new.iter().all(|v| v.is_finite()) {
            report.stop = LsStop::NonFinite;
            break;
        }

        report.steps.push(LsStep {
            step,
            f_before: f,
            f_after: f_new,
            slope,
        });
        report.iterations = iter + 1;

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, sy));
        }

        let decrease = f - f_new;
        x = x_new;
        g = g_new;
        f = f_new;
        if decrease <= config.progress_tol * (1.0 + f.abs()) {
            report.stop = LsStop::NoProgress;
            break;
        }
    }

    report.final_value = f;
    if f <= f0 {
        Ok((Factor::new(x), report))
    } else {
        report.final_value = f0;
        Ok((v.clone(), report))
    }
}

/// `−H·g` from the stored curvature pairs.
fn two_loop(g: &DMatrix<f64>, history: &VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)>) -> DMatrix<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, sy) in history.iter().rev() {
        let a = s.dot(&q) / sy;
        q -= y * a;
        alphas.push(a);
    }
    if let Some((_, y, sy)) = history.back() {
        q *= sy / y.norm_squared();
    }
    for ((s, y, sy), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = y.dot(&q) / sy;
        q += s * (a - b);
    }
    -q
}

struct Probe {
    step: f64,
    f: f64,
    slope: f64,
    g: Option<DMatrix<f64>>,
    x: Option<DMatrix<f64>>,
}

fn evaluate(objective: &dyn Objective, x: &DMatrix<f64>, d: &DMatrix<f64>, step: f64, evals: &mut usize) -> Probe {
    *evals += 1;
    let xt = x + d * step;
    let trial = Factor::new(xt);
    match objective.value_and_grad(&trial) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
            let slope = g.dot(d);
            Probe {
                step,
                f,
                slope,
                g: Some(g),
                x: Some(trial.into_matrix()),
            }
        }
        _ => Probe {
            step,
            f: f64::INFINITY,
            slope: f64::NAN,
            g: None,
            x: None,
        },
    }
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`;
/// `None` when the interpolant has no real minimizer.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search (bracketing then zoom with cubic interpolation).
/// Returns the accepted step with value, gradient and point.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe(
    objective: &dyn Objective,
    x: &DMatrix<f64>,
    f0: f64,
    slope0: f64,
    d: &DMatrix<f64>,
    initial_step: f64,
    config: &LsConfig,
    evals: &mut usize,
) -> Option<(f64, f64, DMatrix<f64>, DMatrix<f64>)> {
    let c1 = config.wolfe_c1;
    let c2 = config.wolfe_c2;
    let armijo = |p: &Probe| p.f <= f0 + c1 * p.step * slope0;
    let curvature = |p: &Probe| p.slope.abs() <= -c2 * slope0;
    let finish = |p: Probe| Some((p.step, p.f, p.g?, p.x?));

    let mut prev = Probe {
        step: 0.0,
        f: f0,
        slope: slope0,
        g: None,
        x: None,
    };
    let mut step = initial_step;
    let mut used = 0;

    let (mut lo, mut hi) = loop {
        if used >= config.max_line_evals {
            return (prev.step > 0.0).then(|| finish(prev)).flatten();
        }
        let cur = evaluate(objective, x, d, step, evals);
        used += 1;
        if !cur.f.is_finite() {
            // Overshot into a non-finite region; shrink toward the last good step.
            step = prev.step + 0.5 * (step - prev.step);
            continue;
        }
        if !armijo(&cur) || (prev.step > 0.0 && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return finish(cur);
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        let next = cubic_min(prev.step, prev.f, prev.slope, cur.step, cur.f, cur.slope)
            .filter(|t| *t > cur.step)
            .unwrap_or(2.0 * cur.step);
        step = next.clamp(1.1 * cur.step, 10.0 * cur.step);
        prev = cur;
    };

    // Zoom: `lo` satisfies Armijo with the lowest value seen, `hi` brackets.
    while used < config.max_line_evals {
        let width = hi.step - lo.step;
        if width.abs() <= 1e-16 * lo.step.abs().max(hi.step.abs()).max(1e-300) {
            break;
        }
        let guess = if hi.slope.is_finite() && hi.f.is_finite() {
            cubic_min(lo.step, lo.f, lo.slope, hi.step, hi.f, hi.slope)
        } else {
            None
        };
        let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
        let margin = 0.1 * (b - a);
        let trial = guess
            .filter(|t| *t > a + margin && *t < b - margin)
            .unwrap_or(0.5 * (lo.step + hi.step));
        let cur = evaluate(objective, x, d, trial, evals);
        used += 1;
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return finish(cur);
            }
            if cur.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Budget exhausted: accept the best sufficient-decrease point, if any.
    (lo.step > 0.0).then(|| finish(lo)).flatten()
}
