//! Fixtures shared by the benchmarks.

use hybrid_sdp::{Factor, MatrixCompletion, Rating, RatingSet};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

pub fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian(n, n, seed);
    (&g + g.transpose()) * 0.5
}

/// Ratings in 1..=5 from a rank-3 model plus noise, `count` distinct cells.
pub fn completion(users: usize, items: usize, count: usize, seed: u64) -> MatrixCompletion {
    let mut r = rng(seed);
    let u = gaussian(users, 3, seed ^ 1) * 0.6;
    let w = gaussian(items, 3, seed ^ 2) * 0.6;
    let entries = index::sample(&mut r, users * items, count)
        .into_iter()
        .map(|cell| {
            let (user, item) = (cell / items, cell % items);
            let noise: f64 = r.sample(StandardNormal);
            let value = (3.5 + u.row(user).dot(&w.row(item)) + 0.8 * noise)
                .round()
                .clamp(1.0, 5.0);
            Rating { user, item, value }
        })
        .collect();
    MatrixCompletion::new(RatingSet::new(users, items, entries).expect("valid ratings")).expect("non-empty")
}

pub fn factor(rows: usize, rank: usize, seed: u64) -> Factor {
    Factor::new(gaussian(rows, rank, seed))
}
