use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hybrid_sdp::{approx_max_eigvec, dense_max_eigpair, solve, EigMethod, Objective, Quadratic, SolverConfig};
use hybrid_sdp_bench::{completion, factor, symmetric};

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_eigpair");
    for n in [100, 400] {
        let m = symmetric(n, 7);
        group.bench_with_input(BenchmarkId::new("lanczos_1e-6", n), &m, |b, m| {
            b.iter(|| approx_max_eigvec(m, 1e-6, 2000, 0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense", n), &m, |b, m| {
            b.iter(|| dense_max_eigpair(m).unwrap())
        });
    }
    group.finish();
}

fn completion_gradient(c: &mut Criterion) {
    let obj = completion(943, 1682, 80_000, 3);
    let v = factor(obj.dim(), 5, 4);
    let x = vec![1.0; obj.dim()];
    let mut group = c.benchmark_group("completion_100k_shape");
    group.bench_function("grad_factor_rank5", |b| b.iter(|| obj.grad_factor(&v).unwrap()));
    group.bench_function("neg_grad_matvec", |b| {
        let op = obj.neg_grad_operator(&v).unwrap();
        let mut y = vec![0.0; obj.dim()];
        b.iter(|| op.apply(&x, &mut y))
    });
    group.finish();
}

fn small_solve(c: &mut Criterion) {
    let q = Quadratic::new(symmetric(60, 11)).unwrap();
    let t = q.optimal_trace();
    let mut group = c.benchmark_group("solve_quadratic_60");
    group.sample_size(20);
    for (name, local_search) in [("hybrid", true), ("rank_one_only", false)] {
        let mut cfg = SolverConfig::new(1e-6, t);
        cfg.local_search = local_search;
        cfg.eig_method = EigMethod::Lanczos;
        cfg.record_trace = false;
        group.bench_function(name, |b| b.iter(|| solve(&q, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, eigen, completion_gradient, small_solve);
criterion_main!(benches);
