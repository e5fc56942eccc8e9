//! Dataset loading, synthetic generators, splits, and evaluation metrics.

mod covariance;
mod labeled;
mod movielens;

pub use covariance::{
    build_covariance, load_matrix, sparsity_and_variance, subsample_columns, synthetic_covariance, top_eigenvector,
    Covariance, SparsityReport, DEFAULT_ZERO_TOL,
};
pub use labeled::{
    build_pairs, gen_clusters, load_labeled_csv, quality_q, write_labeled_csv, LabeledPoints, PairSets,
    CLUSTER_CENTERS, CLUSTER_NOISE_STD,
};
pub use movielens::{
    parse_movielens, rmse, split_per_user, write_movielens, ParsedRatings, RatingsFormat, SplitRatings, RATING_RANGE,
};
