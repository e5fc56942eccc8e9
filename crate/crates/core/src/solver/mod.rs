//! The hybrid loop: a rank-one Frank-Wolfe (Hazan) step along the approximate
//! top eigenvector of `−∇f`, followed by local quasi-Newton refinement of the
//! factor, until the duality gap certifies `ε`-optimality.

use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::eig::{approx_max_eigvec, dense_max_eigpair, to_dense, EigResult, SymOperator};
use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::local_search::{improve, LsConfig};
use crate::objectives::Objective;

mod line_search;
mod probe;

pub use line_search::{line_search_2d, schedule, PlaneStep};
pub use probe::{estimate_curvature, probe_rate, ConvergenceProbe, ProbeRow, ProbeSeries};

/// Columns below this fraction of `‖V‖_F` are dropped after each iteration.
pub const RANK_HYGIENE_TOL: f64 = 1e-12;

/// A factor wider than it is tall is re-factored from its eigendecomposition,
/// keeping eigenvalues above this fraction of the largest.
pub const COMPRESS_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMethod {
    /// Restarted Lanczos on the gradient operator.
    Lanczos,
    /// Dense decomposition of the materialized operator (small `n` only).
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target accuracy; the loop stops once the duality gap is at most `eps`.
    pub eps: f64,
    /// Upper bound `t` on the trace of an optimal solution.
    pub trace_bound: f64,
    pub max_iters: usize,
    /// Stop before a rank-one step would exceed this rank.
    pub max_rank: Option<usize>,
    pub local_search: bool,
    pub ls: LsConfig,
    pub eig_method: EigMethod,
    pub eig_max_iters: usize,
    pub seed: u64,
    pub record_trace: bool,
    /// Accept unconverged eigenvectors and guarantee the line search does at
    /// least as well as the schedule's fallback point.
    pub enforce_fallback: bool,
}

impl SolverConfig {
    pub fn new(eps: f64, trace_bound: f64) -> Self {
        Self {
            eps,
            trace_bound,
            max_iters: 100,
            max_rank: None,
            local_search: true,
            ls: LsConfig::default(),
            eig_method: EigMethod::Lanczos,
            eig_max_iters: 1000,
            seed: 0,
            record_trace: true,
            enforce_fallback: true,
        }
    }

    /// Eigenvector accuracy `ε̃ = ε / (4t)`.
    pub fn eps_tilde(&self) -> f64 {
        self.eps / (4.0 * self.trace_bound)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.trace_bound > 0.0) || !self.trace_bound.is_finite() {
            return Err(Error::invalid(format!(
                "trace bound must be positive and finite, got {}",
                self.trace_bound
            )));
        }
        if self.eig_max_iters == 0 {
            return Err(Error::invalid("eig_max_iters must be positive"));
        }
        if self.max_rank == Some(0) {
            return Err(Error::invalid("max_rank must be at least 1"));
        }
        self.ls.validate()
    }
}

/// Duality gap `g(X) = t·max(λ_max(−∇f(X)), 0) + ∇f(X)•X` and the Wolfe dual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub f_value: f64,
    pub lambda_max_clamped: f64,
    pub grad_dot_x: f64,
    pub gap: f64,
    pub wolfe_dual: f64,
    /// Whether `λ_max` met the requested accuracy.
    pub eig_converged: bool,
}

/// One row of the convergence trace, taken after iteration `iter`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub gap: f64,
    pub rank: usize,
    /// Line-search weights of the step that produced this iterate.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Operator applications of the eigensolve at this iterate.
    pub eig_iters: usize,
    /// Wall time since the solve started. Excluded from determinism checks.
    pub seconds: f64,
}

impl IterationRecord {
    /// The record with its timing field zeroed.
    pub fn without_timing(&self) -> IterationRecord {
        IterationRecord {
            seconds: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The duality gap dropped to `eps`.
    Converged,
    MaxIterations,
    RankLimit,
    /// The observer asked to stop.
    Stopped,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub factor: Factor,
    pub f_value: f64,
    pub gap: GapReport,
    pub iterations: usize,
    pub rank: usize,
    pub status: SolveStatus,
    pub eps_tilde: f64,
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    /// `gap + ε̃·t`, an upper bound on `f(X) − f*` that accounts for the
    /// eigenvector accuracy.
    pub fn certified_bound(&self, trace_bound: f64) -> f64 {
        self.gap.gap + self.eps_tilde * trace_bound
    }
}

/// What happened in one rank-one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub alpha: f64,
    pub beta: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub eig_iters: usize,
    pub eig_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn eig_seed(seed: u64, iteration: usize) -> u64 {
    seed ^ (iteration as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn top_eigpair(op: &dyn SymOperator, accuracy: f64, config: &SolverConfig, iteration: usize) -> Result<EigResult> {
    let eig = match config.eig_method {
        EigMethod::Lanczos => approx_max_eigvec(op, accuracy, config.eig_max_iters, eig_seed(config.seed, iteration))?,
        EigMethod::Dense => dense_max_eigpair(&to_dense(op))?,
    };
    if !eig.converged && !config.enforce_fallback {
        return Err(Error::Numerical {
            iteration: eig.iterations,
            message: format!("eigensolver did not converge (residual {:e})", eig.residual),
        });
    }
    Ok(eig)
}

fn gap_from_eig(objective: &dyn Objective, v: &Factor, t: f64, eig: &EigResult) -> Result<GapReport> {
    let f_value = objective.value(v)?;
    let grad_dot_x = objective.grad_dot_x(v)?;
    let lambda_max_clamped = eig.rayleigh.max(0.0);
    let gap = t * lambda_max_clamped + grad_dot_x;
    Ok(GapReport {
        f_value,
        lambda_max_clamped,
        grad_dot_x,
        gap,
        wolfe_dual: f_value - gap,
        eig_converged: eig.converged,
    })
}

/// Duality gap at `VVᵀ` with `λ_max` computed to `eig_accuracy`.
///
/// Clamping `λ_max` at zero accounts for the slack direction of the
/// trace-bounded problem. With `Tr(X*) ≤ t`, `gap + eig_accuracy·t` bounds
/// `f(X) − f*`.
pub fn duality_gap(objective: &dyn Objective, v: &Factor, trace_bound: f64, eig_accuracy: f64) -> Result<GapReport> {
    let mut config = SolverConfig::new(4.0 * trace_bound * eig_accuracy, trace_bound);
    config.eig_max_iters = 10_000;
    duality_gap_with(objective, v, &config, eig_accuracy, 0).map(|(g, _)| g)
}

fn duality_gap_with(
    objective: &dyn Objective,
    v: &Factor,
    config: &SolverConfig,
    accuracy: f64,
    iteration: usize,
) -> Result<(GapReport, EigResult)> {
    if !(accuracy > 0.0) {
        return Err(Error::invalid("eigen accuracy must be positive"));
    }
    let op = objective.neg_grad_operator(v)?;
    let eig = top_eigpair(&*op, accuracy, config, iteration)?;
    let gap = gap_from_eig(objective, v, config.trace_bound, &eig)?;
    Ok((gap, eig))
}

/// One Hazan step: approximate top eigenvector of `−∇f(VVᵀ)`, then the
/// two-variable search, then `V ← [√α·V, √β·v]`.
pub fn rank_one_step(
    objective: &dyn Objective,
    v: &Factor,
    config: &SolverConfig,
    iteration: usize,
) -> Result<(Factor, StepRecord)> {
    config.validate()?;
    let op = objective.neg_grad_operator(v)?;
    let eig = top_eigpair(&*op, config.eps_tilde(), config, iteration)?;
    drop(op);
    step_along(objective, v, &eig, config, iteration)
}

fn step_along(
    objective: &dyn Objective,
    v: &Factor,
    eig: &EigResult,
    config: &SolverConfig,
    iteration: usize,
) -> Result<(Factor, StepRecord)> {
    let f_before = objective.value(v)?;
    let dir: &DVector<f64> = &eig.vector;
    let step = line_search_2d(
        objective,
        v,
        dir,
        iteration,
        config.trace_bound,
        config.enforce_fallback,
    )?;
    let next = v.scaled_concat(step.alpha, step.beta, dir);
    let f_after = objective.value(&next)?;
    Ok((
        next,
        StepRecord {
            alpha: step.alpha,
            beta: step.beta,
            f_before,
            f_after,
            eig_iters: eig.iterations,
            eig_converged: eig.converged,
        },
    ))
}

/// Runs the hybrid algorithm to `config.eps` or the iteration / rank limit.
pub fn solve(objective: &dyn Objective, config: &SolverConfig) -> Result<SolveResult> {
    solve_with_observer(objective, config, |_, _| Control::Continue)
}

/// [`solve`] with a callback after every iterate (including `X₀`); returning
/// [`Control::Stop`] ends the run at that iterate.
pub fn solve_with_observer(
    objective: &dyn Objective,
    config: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord, &Factor) -> Control,
) -> Result<SolveResult> {
    config.validate()?;
    let start = Instant::now();
    let t = config.trace_bound;
    let eps_tilde = config.eps_tilde();

    let mut v = objective.initial_factor(t)?;
    if objective.scale_invariant() {
        v = rescale_to_trace(v, t);
    }
    let (mut gap, mut eig) = duality_gap_with(objective, &v, config, eps_tilde, 0).map_err(|e| e.at_iteration(0))?;
    let mut trace = Vec::new();
    let mut record = IterationRecord {
        iter: 0,
        f: gap.f_value,
        gap: gap.gap,
        rank: v.rank(),
        alpha: None,
        beta: None,
        eig_iters: eig.iterations,
        seconds: start.elapsed().as_secs_f64(),
    };
    let mut control = observer(&record, &v);
    if config.record_trace {
        trace.push(record.clone());
    }

    let mut i = 0;
    let status = loop {
        if control == Control::Stop {
            break SolveStatus::Stopped;
        }
        if gap.gap <= config.eps {
            break SolveStatus::Converged;
        }
        if i >= config.max_iters {
            break SolveStatus::MaxIterations;
        }
        if config.max_rank.is_some_and(|k| v.rank() >= k) {
            break SolveStatus::RankLimit;
        }

        let (mut next, step) = step_along(objective, &v, &eig, config, i).map_err(|e| e.at_iteration(i))?;
        if config.local_search && next.rank() > 0 {
            next = improve(objective, &next, &config.ls).map_err(|e| e.at_iteration(i))?;
        }
        next.drop_negligible_columns(RANK_HYGIENE_TOL);
        next.compress_if_wide(COMPRESS_TOL);
        if objective.scale_invariant() {
            next = rescale_to_trace(next, t);
        }

        i += 1;
        v = next;
        (gap, eig) = duality_gap_with(objective, &v, config, eps_tilde, i).map_err(|e| e.at_iteration(i))?;
        record = IterationRecord {
            iter: i,
            f: gap.f_value,
            gap: gap.gap,
            rank: v.rank(),
            alpha: Some(step.alpha),
            beta: Some(step.beta),
            eig_iters: eig.iterations,
            seconds: start.elapsed().as_secs_f64(),
        };
        if gap.gap < -1e-9 * (1.0 + gap.f_value.abs()) {
            log::warn!(
                "iter {i}: negative gap {:.3e} at trace {:.3e} > t = {t:.3e}; the trace bound is too small to certify",
                gap.gap,
                v.trace()
            );
        }
        log::debug!(
            "iter {i}: f = {:.6e}, gap = {:.3e}, rank = {}",
            record.f,
            record.gap,
            record.rank
        );
        control = observer(&record, &v);
        if config.record_trace {
            trace.push(record.clone());
        }
    };

    Ok(SolveResult {
        f_value: gap.f_value,
        rank: v.rank(),
        factor: v,
        gap,
        iterations: i,
        status,
        eps_tilde,
        trace,
    })
}

fn rescale_to_trace(v: Factor, t: f64) -> Factor {
    let tau = v.trace();
    if tau > 0.0 && tau.is_finite() {
        v.scale((t / tau).sqrt())
    } else {
        v
    }
}
