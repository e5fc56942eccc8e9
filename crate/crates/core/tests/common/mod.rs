#![allow(dead_code)]

use hybrid_sdp::data::{build_pairs, gen_clusters, synthetic_covariance};
use hybrid_sdp::{
    Factor, MatrixCompletion, MetricLearning, MetricProblem, Quadratic, Rating, RatingSet, SparsePca, SpcaProblem,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian(n, n, rng);
    (&a + a.transpose()) * 0.5
}

pub fn random_factor(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Factor {
    Factor::new(gaussian(n, k, rng))
}

pub fn quadratic(n: usize, rng: &mut ChaCha8Rng) -> Quadratic {
    Quadratic::new(random_symmetric(n, rng)).unwrap()
}

pub fn completion(users: usize, items: usize, density: f64, rng: &mut ChaCha8Rng) -> MatrixCompletion {
    let mut entries = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) {
                entries.push(Rating {
                    user: u,
                    item: i,
                    value: rng.random_range(1..=5) as f64,
                });
            }
        }
    }
    if entries.is_empty() {
        entries.push(Rating {
            user: 0,
            item: 0,
            value: 3.0,
        });
    }
    MatrixCompletion::new(RatingSet::new(users, items, entries).unwrap()).unwrap()
}

pub fn metric(dim: usize, n_points: usize, seed: u64) -> MetricLearning {
    let (data, _) = gen_clusters(dim, n_points, seed).unwrap();
    let (s, d) = build_pairs(&data, None, seed).unwrap();
    MetricLearning::new(MetricProblem::new(data.points, s, d, 1.0).unwrap()).unwrap()
}

pub fn spca(n: usize, seed: u64, huber_m: f64) -> SparsePca {
    let a = synthetic_covariance(n, 3 * n + 5, seed).unwrap();
    SparsePca::new(SpcaProblem::new(a, 0.2, huber_m).unwrap())
}

/// Cyclic Jacobi eigenvalue iteration; an eigen oracle independent of the
/// library's eigensolvers. Returns eigenvalues in descending order with the
/// matching eigenvectors as columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= 1e-26 * a.norm_squared().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let vals = idx.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (vals, vecs)
}

pub fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}
