use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-sdp",
    version,
    about = "Low-rank PSD optimization with rank-one updates and local refinement"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Matrix completion on a ratings file.
    Matcomp(MatcompArgs),
    /// Metric learning on labeled points.
    Metric(MetricArgs),
    /// Sparse PCA on a data or covariance matrix.
    Spca(SpcaArgs),
    /// Write a synthetic two-class cluster dataset as CSV.
    Gen(GenArgs),
    /// Check the O(1/i) rate on random quadratic objectives.
    Probe(ProbeArgs),
}

/// A positive number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

impl FromStr for AutoOr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| format!("expected a number or 'auto', got {s:?}"))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(format!("expected a positive finite number, got {v}"));
        }
        Ok(AutoOr::Value(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EigChoice {
    Lanczos,
    Dense,
}

impl From<EigChoice> for hybrid_sdp::EigMethod {
    fn from(c: EigChoice) -> Self {
        match c {
            EigChoice::Lanczos => hybrid_sdp::EigMethod::Lanczos,
            EigChoice::Dense => hybrid_sdp::EigMethod::Dense,
        }
    }
}

/// Options shared by the solving commands.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Target duality gap; `auto` uses the command's default.
    #[arg(long, default_value = "auto")]
    pub eps: AutoOr,

    /// Upper bound on the trace of the solution; `auto` uses the command's heuristic.
    #[arg(long, default_value = "auto")]
    pub trace_bound: AutoOr,

    /// Outer iteration cap.
    #[arg(long)]
    pub max_iters: Option<usize>,

    /// Stop once the factor reaches this rank.
    #[arg(long)]
    pub max_rank: Option<usize>,

    /// Seed for the eigensolver start vectors.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Skip the quasi-Newton refinement after each rank-one step.
    #[arg(long)]
    pub no_local_search: bool,

    #[arg(long, value_enum, default_value_t = EigChoice::Lanczos)]
    pub eig_method: EigChoice,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["train", "ratings"])))]
pub struct MatcompArgs {
    /// Training ratings (MovieLens tab or `::` format).
    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,

    /// Held-out ratings scored by RMSE (with --train).
    #[arg(long)]
    pub test: Option<PathBuf>,

    /// All ratings, split per user into train and test.
    #[arg(long)]
    pub ratings: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,

    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,

    /// Upper limit for the automatic trace bound.
    #[arg(long)]
    pub trace_cap: Option<f64>,

    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
pub struct MetricArgs {
    /// CSV of features with the class label in the last column.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Generate two-class cluster data instead of reading a file.
    #[arg(long, requires_all = ["dim", "n"])]
    pub synthetic: bool,

    #[arg(long)]
    pub dim: Option<usize>,

    #[arg(long)]
    pub n: Option<usize>,

    /// Seed of the synthetic generator and of pair / point subsampling.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    /// Class-stratified subsample of this many points.
    #[arg(long)]
    pub subsample: Option<usize>,

    /// Keep at most this many pairs of each kind.
    #[arg(long)]
    pub max_pairs: Option<usize>,

    /// Weight of the dissimilar-distance term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    /// Stop as soon as the quality Q exceeds this value.
    #[arg(long)]
    pub q_target: Option<f64>,

    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "covariance", "synthetic_dim"])))]
pub struct SpcaArgs {
    /// Raw samples (rows) by variables (columns); standardized before use.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// A covariance matrix used as is.
    #[arg(long)]
    pub covariance: Option<PathBuf>,

    /// Generate a standardized covariance of this dimension.
    #[arg(long)]
    pub synthetic_dim: Option<usize>,

    /// Samples behind the synthetic covariance.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Random subset of this many variables of --data.
    #[arg(long)]
    pub subsample_dim: Option<usize>,

    /// Seed of the synthetic covariance and of the variable subsample.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    /// Center --data without scaling to unit variance.
    #[arg(long)]
    pub no_normalize: bool,

    #[arg(long, default_value_t = hybrid_sdp::objectives::DEFAULT_RHO)]
    pub rho: f64,

    #[arg(long, default_value_t = hybrid_sdp::objectives::DEFAULT_HUBER_M)]
    pub huber_m: f64,

    /// Entries of the rounded vector at most this fraction of its largest
    /// magnitude count as zero.
    #[arg(long, default_value_t = hybrid_sdp::data::DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,

    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub dim: usize,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Dimension of the random quadratic target.
    #[arg(long, default_value_t = 20)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 100)]
    pub iters: usize,

    /// Random (X, Z, α) triples for the sampled curvature estimate.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,

    /// Also run the quasi-Newton refinement.
    #[arg(long)]
    pub local_search: bool,

    /// Write the (iter, h, bound) series as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
