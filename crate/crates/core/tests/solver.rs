mod common;

use common::*;
use hybrid_sdp::solver::{
    estimate_curvature, line_search_2d, probe_rate, schedule, ConvergenceProbe, RANK_HYGIENE_TOL,
};
use hybrid_sdp::{
    dense_max_eigpair, duality_gap, rank_one_step, solve, solve_with_observer, Control, EigMethod, Error, Factor,
    Objective, Quadratic, SolveStatus, SolverConfig, SparsePca, SpcaProblem,
};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

/// Exact minimizer of `½‖αX + βvvᵀ − B‖²` over `α, β ≥ 0` by enumerating
/// the active sets of the 2×2 quadrant QP.
fn quadrant_qp(x: &DMatrix<f64>, v: &DVector<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    let vxv = v.dot(&(x * v));
    let h = Matrix2::new(x.dot(x), vxv, vxv, 1.0);
    let c = Vector2::new(x.dot(b), v.dot(&(b * v)));
    let phi = |a: f64, bb: f64| 0.5 * (x * a + v * v.transpose() * bb - b).norm_squared();
    let mut cands = vec![(0.0, 0.0), (0.0, c[1].max(0.0))];
    if h[(0, 0)] > 0.0 {
        cands.push(((c[0] / h[(0, 0)]).max(0.0), 0.0));
    }
    if let Some(inv) = h.try_inverse() {
        let z = inv * c;
        if z[0] >= 0.0 && z[1] >= 0.0 {
            cands.push((z[0], z[1]));
        }
    }
    cands
        .into_iter()
        .min_by(|p, q| phi(p.0, p.1).total_cmp(&phi(q.0, q.1)))
        .unwrap()
}

#[test]
fn line_search_matches_closed_form() {
    let mut r = rng(21);
    for _ in 0..30 {
        let q = quadratic(6, &mut r);
        let v = random_factor(6, 2, &mut r);
        let dir = unit(gaussian(6, 1, &mut r).column(0).into_owned());
        let step = line_search_2d(&q, &v, &dir, 3, 10.0, true).unwrap();
        let (a, b) = quadrant_qp(&v.to_dense(), &dir, q.target());
        let scale = 1.0 + a.abs() + b.abs();
        assert!((step.alpha - a).abs() <= 1e-8 * scale, "alpha {} vs {a}", step.alpha);
        assert!((step.beta - b).abs() <= 1e-8 * scale, "beta {} vs {b}", step.beta);
    }
}

#[test]
fn line_search_unhelpful_direction_keeps_beta_zero() {
    // B = e1e1ᵀ, X = e1e1ᵀ/4, v = e2: adding vvᵀ only hurts, α solves the ray.
    let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
    let q = Quadratic::new(b).unwrap();
    let v = Factor::from_column(DVector::from_vec(vec![0.5, 0.0]));
    let dir = DVector::from_vec(vec![0.0, 1.0]);
    let step = line_search_2d(&q, &v, &dir, 1, 2.0, true).unwrap();
    assert_eq!(step.beta, 0.0);
    assert!((step.alpha - 4.0).abs() <= 1e-8);
}

#[test]
fn line_search_leaves_zero_on_sqrt_ray() {
    // Along βvvᵀ the metric objective is aβ − c√β: infinite slope at β = 0,
    // minimizer β* = (c / 2a)². A large trace bound makes the fallback poor.
    let obj = metric(5, 40, 1);
    let zero = Factor::zeros(5);
    let dir = dense_max_eigpair(&-obj.gradient_matrix(&zero).unwrap()).unwrap().vector;
    let ray = |beta: f64| obj.value(&zero.scaled_concat(1.0, beta, &dir)).unwrap();
    let (f1, f4) = (ray(1.0), ray(4.0));
    let a = (f4 - 2.0 * f1) / 2.0;
    let c = a - f1;
    let beta_star = (c / (2.0 * a)).powi(2);
    let step = line_search_2d(&obj, &zero, &dir, 0, 1e6 * beta_star, true).unwrap();
    assert!(
        (step.beta - beta_star).abs() <= 1e-4 * beta_star,
        "{} vs {beta_star}",
        step.beta
    );
    assert!((step.value - ray(beta_star)).abs() <= 1e-9 * ray(beta_star).abs());
}

#[test]
fn line_search_dominates_fallback_and_incumbent() {
    let mut r = rng(22);
    for inst in 0..50 {
        let n = 3 + inst % 6;
        let q = quadratic(n, &mut r);
        let v = random_factor(n, 1 + inst % 3, &mut r);
        let dir = unit(gaussian(n, 1, &mut r).column(0).into_owned());
        let t = 1.0 + (inst % 5) as f64;
        let i = inst % 20;
        let step = line_search_2d(&q, &v, &dir, i, t, true).unwrap();
        let a_i = schedule(i);
        let fallback = q.value(&v.scaled_concat(1.0 - a_i, a_i * t, &dir)).unwrap();
        let incumbent = q.value(&v).unwrap();
        assert!(step.value <= fallback, "instance {inst}");
        assert!(step.value <= incumbent, "instance {inst}");
        assert_eq!(
            step.value,
            q.value(&v.scaled_concat(step.alpha, step.beta, &dir)).unwrap()
        );
    }
}

#[test]
fn line_search_rejects_non_unit_direction() {
    let q = Quadratic::new(DMatrix::identity(2, 2)).unwrap();
    let dir = DVector::from_vec(vec![1.0, 1.0]);
    assert!(line_search_2d(&q, &Factor::zeros(2), &dir, 0, 1.0, true).is_err());
}

#[test]
fn first_step_from_zero_uses_top_eigenvector() {
    let mut r = rng(23);
    let b = random_symmetric(8, &mut r) + DMatrix::identity(8, 8) * 2.0;
    let q = Quadratic::new(b.clone()).unwrap();
    let cfg = SolverConfig::new(1e-8, 20.0);
    let (next, step) = rank_one_step(&q, &Factor::zeros(8), &cfg, 0).unwrap();
    let (vals, vecs) = jacobi_eigen(&b);
    assert!(step.beta > 0.0);
    let col = unit(next.matrix().column(0).into_owned());
    assert!((col.dot(&vecs.column(0)).abs() - 1.0).abs() <= 1e-6);
    assert!((step.beta - vals[0]).abs() <= 1e-6);
}

#[test]
fn linear_objective_gap() {
    // f(X) = Tr(X): −∇f = −I, so the clamped λ_max is 0 and gap = Tr(X).
    struct Trace(usize);
    impl Objective for Trace {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, v: &Factor) -> hybrid_sdp::Result<f64> {
            Ok(v.trace())
        }
        fn grad_factor(&self, v: &Factor) -> hybrid_sdp::Result<DMatrix<f64>> {
            Ok(v.matrix() * 2.0)
        }
        fn neg_grad_operator<'a>(&'a self, _v: &Factor) -> hybrid_sdp::Result<Box<dyn hybrid_sdp::SymOperator + 'a>> {
            Ok(Box::new(-DMatrix::<f64>::identity(self.0, self.0)))
        }
    }
    let f = Trace(3);
    let v = Factor::new(DMatrix::from_element(3, 1, 0.5));
    let g = duality_gap(&f, &v, 2.0, 1e-8).unwrap();
    assert_eq!(g.lambda_max_clamped, 0.0);
    assert!((g.gap - 0.75).abs() < 1e-14);
    let g0 = duality_gap(&f, &Factor::zeros(3), 2.0, 1e-8).unwrap();
    assert_eq!(g0.gap, 0.0);
    let res = solve(&f, &SolverConfig::new(1e-9, 2.0)).unwrap();
    assert_eq!(res.iterations, 0);
}

fn assert_monotone(trace: &[hybrid_sdp::IterationRecord]) {
    for w in trace.windows(2) {
        assert!(
            w[1].f <= w[0].f + 1e-12 * (1.0 + w[0].f.abs()),
            "f increased at iteration {}: {} -> {}",
            w[1].iter,
            w[0].f,
            w[1].f
        );
        assert!(w[1].rank <= w[0].rank + 1);
    }
}

#[test]
fn gap_dominates_primal_error() {
    let mut r = rng(24);
    for inst in 0..20 {
        let n = 4 + inst % 10;
        let q = quadratic(n, &mut r);
        let (_, f_star) = q.optimum();
        let t = q.optimal_trace() * 1.5 + 0.1;
        let mut cfg = SolverConfig::new(1e-7, t);
        cfg.local_search = inst % 2 == 0;
        cfg.seed = inst as u64;
        let eps_tilde = cfg.eps_tilde();
        let res = solve_with_observer(&q, &cfg, |rec, _| {
            assert!(rec.gap + eps_tilde * t >= rec.f - f_star - 1e-12 * (1.0 + f_star.abs()));
            Control::Continue
        })
        .unwrap();
        assert_monotone(&res.trace);
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.f_value - f_star <= res.certified_bound(t) + 1e-12);
        let recomputed = q.value(&res.factor).unwrap();
        assert!((recomputed - res.f_value).abs() <= 1e-12 * recomputed.abs().max(1.0));
        assert_eq!(res.gap.wolfe_dual, res.gap.f_value - res.gap.gap);
    }
}

#[test]
fn all_objectives_descend() {
    let mut r = rng(25);
    let mc = completion(8, 10, 0.4, &mut r);
    let ml = metric(6, 30, 26);
    let sp = spca(10, 27, 1e-6);
    let q = quadratic(9, &mut r);
    let cases: [(&dyn Objective, f64); 4] = [(&mc, 40.0), (&ml, 6.0), (&sp, 1.0), (&q, 10.0)];
    for (obj, t) in cases {
        for local in [false, true] {
            let mut cfg = SolverConfig::new(1e-6, t);
            cfg.max_iters = 25;
            cfg.local_search = local;
            let res = solve(obj, &cfg).unwrap();
            assert_monotone(&res.trace);
            assert!(res.rank <= res.iterations + obj.initial_factor(t).unwrap().rank());
        }
    }
}

#[test]
fn spca_rejects_zero_and_keeps_trace() {
    let sp = spca(8, 28, 1e-6);
    match sp.value(&Factor::zeros(8)) {
        Err(Error::Domain(_)) => {}
        other => panic!("expected domain error, got {other:?}"),
    }
    let mut cfg = SolverConfig::new(1e-6, 1.0);
    cfg.max_iters = 15;
    let res = solve_with_observer(&sp, &cfg, |_, v| {
        assert!((v.trace() - 1.0).abs() <= 1e-10);
        Control::Continue
    })
    .unwrap();
    assert!(res.f_value <= sp.value(&sp.initial_factor(1.0).unwrap()).unwrap());
}

#[test]
fn spca_single_entry_covariance() {
    // A = diag(a), with one dominant entry: the optimum is the matching axis.
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.5]));
    let sp = SparsePca::new(SpcaProblem::new(a, 0.2, 1e-6).unwrap());
    let res = solve(&sp, &SolverConfig::new(1e-8, 1.0)).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    let expect = 0.2 * hybrid_sdp::objectives::huber(1.0, 1e-6) / 2e-6 - 4.0;
    assert!((res.f_value - expect).abs() <= 1e-6);
}

#[test]
fn determinism() {
    let mut r = rng(29);
    let mc = completion(10, 12, 0.3, &mut r);
    let mut cfg = SolverConfig::new(1e-4, 30.0);
    cfg.max_iters = 20;
    cfg.seed = 99;
    let a = solve(&mc, &cfg).unwrap();
    let b = solve(&mc, &cfg).unwrap();
    let strip = |t: &[hybrid_sdp::IterationRecord]| t.iter().map(|x| x.without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(&a.trace), strip(&b.trace));
    assert_eq!(a.factor, b.factor);
}

#[test]
fn dense_and_lanczos_methods_agree() {
    let mut r = rng(30);
    let q = quadratic(12, &mut r);
    let t = q.optimal_trace() + 1.0;
    let mut cfg = SolverConfig::new(1e-8, t);
    let lanczos = solve(&q, &cfg).unwrap();
    cfg.eig_method = EigMethod::Dense;
    let dense = solve(&q, &cfg).unwrap();
    assert!((lanczos.f_value - dense.f_value).abs() <= 1e-7);
}

#[test]
fn rank_hygiene_drops_zeroed_columns() {
    let mut v = Factor::new(DMatrix::from_row_slice(2, 2, &[1.0, 1e-14, 0.0, 0.0]));
    assert_eq!(v.drop_negligible_columns(RANK_HYGIENE_TOL), 1);
    assert_eq!(v.rank(), 1);
}

#[test]
fn probe_quadratic_rate() {
    for seed in 0..3 {
        let mut r = rng(40 + seed);
        let q = quadratic(10, &mut r);
        let (_, f_star) = q.optimum();
        let t = q.optimal_trace().max(1e-3);
        let sampled = estimate_curvature(&q, t, 50, seed).unwrap();
        let probe = ConvergenceProbe::for_quadratic(t).unwrap().refined(sampled);
        let mut cfg = SolverConfig::new(1e-12, t);
        cfg.local_search = false;
        cfg.max_iters = 60;
        let pure = probe_rate(&q, Some(f_star), &cfg, &probe).unwrap();
        assert!(pure.satisfied(), "violations {:?}", pure.violations);
        assert_eq!(pure.rows.len(), 61);
        assert!(pure.rows[1].h <= 2.0 * probe.curvature_bound);

        cfg.local_search = true;
        let hybrid = probe_rate(&q, Some(f_star), &cfg, &probe).unwrap();
        for (a, b) in hybrid.rows.iter().zip(&pure.rows) {
            assert!(
                a.h <= b.h + 1e-9 * (1.0 + f_star.abs()),
                "iteration {}: {} > {}",
                a.iter,
                a.h,
                b.h
            );
        }
    }
}

#[test]
fn dense_eigpair_matches_jacobi() {
    let mut r = rng(31);
    for n in [1, 2, 5, 17] {
        let m = random_symmetric(n, &mut r);
        let (vals, _) = jacobi_eigen(&m);
        let d = dense_max_eigpair(&m).unwrap();
        assert!((d.rayleigh - vals[0]).abs() <= 1e-10);
    }
}
