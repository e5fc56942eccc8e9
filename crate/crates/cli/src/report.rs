//! Machine-readable run reports and convergence traces.

use std::io::Write;
use std::path::Path;

use hybrid_sdp::solver::ProbeRow;
use hybrid_sdp::{IterationRecord, SolveResult};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Header of the per-iteration trace CSV.
pub const TRACE_HEADER: &str = "iter,f,gap,rank,alpha,beta,eig_iters,seconds";

/// Header of the rate-probe CSV.
pub const PROBE_HEADER: &str = "iter,h,bound";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Parameters needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub eps: f64,
    pub eps_tilde: f64,
    pub trace_bound: f64,
    /// `"flag"` or the heuristic that chose `trace_bound`.
    pub trace_bound_source: String,
    pub seed: u64,
    pub max_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rank: Option<usize>,
    pub local_search: bool,
    pub eig_method: hybrid_sdp::EigMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub huber_m: Option<f64>,
    /// Command-specific data options (split seed, sizes, subsampling).
    pub data: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankRmse {
    pub rank: usize,
    pub iter: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metrics {
    Completion {
        #[serde(skip_serializing_if = "Option::is_none")]
        rmse: Option<f64>,
        train_rmse: f64,
        rmse_by_rank: Vec<RankRmse>,
        /// Milestone with the lowest test RMSE.
        #[serde(skip_serializing_if = "Option::is_none")]
        best: Option<RankRmse>,
    },
    Metric {
        q: f64,
        /// `Σ_S d² / (Σ_S̄ d)²`, the constrained-form objective.
        constrained_value: Option<f64>,
        similar_pairs: usize,
        dissimilar_pairs: usize,
    },
    Spca {
        /// `ρ·Σ|Y_ij| − A•Y` at the solution.
        original_value: f64,
        sparsity: f64,
        variance: f64,
        zero_tol: f64,
    },
    Probe {
        curvature_bound: f64,
        f_star: f64,
        violations: Vec<usize>,
    },
    Generated {
        points: usize,
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub config: Option<ConfigEcho>,
    pub status: Option<hybrid_sdp::SolveStatus>,
    pub f_value: Option<f64>,
    pub gap: Option<f64>,
    pub wolfe_dual: Option<f64>,
    pub certified_bound: Option<f64>,
    pub rank: Option<usize>,
    pub iterations: Option<usize>,
    pub seconds: f64,
    pub metrics: Metrics,
    pub inputs: Vec<InputFile>,
    pub version: String,
}

impl RunReport {
    pub fn new(problem: &str, metrics: Metrics) -> Self {
        Self {
            problem: problem.to_string(),
            config: None,
            status: None,
            f_value: None,
            gap: None,
            wolfe_dual: None,
            certified_bound: None,
            rank: None,
            iterations: None,
            seconds: 0.0,
            metrics,
            inputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn with_solve(mut self, config: ConfigEcho, result: &SolveResult) -> Self {
        self.certified_bound = Some(result.certified_bound(config.trace_bound));
        self.status = Some(result.status);
        self.f_value = Some(result.f_value);
        self.gap = Some(result.gap.gap);
        self.wolfe_dual = Some(result.gap.wolfe_dual);
        self.rank = Some(result.rank);
        self.iterations = Some(result.iterations);
        self.config = Some(config);
        self
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Writes the report to `path`, or to stdout when `path` is `None`.
    pub fn write(&self, path: Option<&Path>) -> Result<(), CliError> {
        write_text(path, &self.to_json())
    }
}

pub(crate) fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::output(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::output(Path::new("<stdout>"), e))
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        s.push_str(&format!(
            "{},{:e},{:e},{},{},{},{},{:.6}\n",
            r.iter,
            r.f,
            r.gap,
            r.rank,
            opt(r.alpha),
            opt(r.beta),
            r.eig_iters,
            r.seconds
        ));
    }
    s
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from(PROBE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{:e},{:e}\n", r.iter, r.h, r.bound));
    }
    s
}
