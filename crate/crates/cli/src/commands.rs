use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use hybrid_sdp::data::{
    build_covariance, build_pairs, gen_clusters, load_labeled_csv, load_matrix, parse_movielens, quality_q, rmse,
    sparsity_and_variance, split_per_user, subsample_columns, synthetic_covariance, write_labeled_csv, LabeledPoints,
    ParsedRatings,
};
use hybrid_sdp::solver::{estimate_curvature, probe_rate, ConvergenceProbe};
use hybrid_sdp::{
    solve_with_observer, Control, Factor, MatrixCompletion, MetricLearning, MetricProblem, Objective, Quadratic,
    Rating, RatingSet, SolveResult, SolverConfig, SparsePca, SpcaProblem,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};

use crate::args::{AutoOr, Cli, Command, GenArgs, MatcompArgs, MetricArgs, ProbeArgs, SolveArgs, SpcaArgs};
use crate::report::{probe_csv, trace_csv, write_text, ConfigEcho, InputFile, Metrics, RankRmse, RunReport};
use crate::CliError;

pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    match &cli.command {
        Command::Matcomp(a) => run_matcomp(a),
        Command::Metric(a) => run_metric(a),
        Command::Spca(a) => run_spca(a),
        Command::Gen(a) => run_gen(a),
        Command::Probe(a) => run_probe(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(path, e))
}

/// Trace bound with the source that chose it.
struct TraceBound {
    value: f64,
    source: String,
}

impl TraceBound {
    fn resolve(arg: AutoOr, heuristic: &str, auto: impl FnOnce() -> f64) -> Result<Self, CliError> {
        let (value, source) = match arg {
            AutoOr::Value(v) => (v, "flag".to_string()),
            AutoOr::Auto => (auto(), heuristic.to_string()),
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(CliError::Config(format!(
                "trace bound must be positive and finite, got {value}"
            )));
        }
        Ok(Self { value, source })
    }
}

/// Builds and validates the solver configuration.
fn solver_config(
    solve: &SolveArgs,
    eps_auto: f64,
    t: &TraceBound,
    default_max_iters: usize,
) -> Result<SolverConfig, CliError> {
    let eps = match solve.eps {
        AutoOr::Value(v) => v,
        AutoOr::Auto => eps_auto,
    };
    let mut cfg = SolverConfig::new(eps, t.value);
    cfg.max_iters = solve.max_iters.unwrap_or(default_max_iters);
    cfg.max_rank = solve.max_rank;
    cfg.local_search = !solve.no_local_search;
    cfg.eig_method = solve.eig_method.into();
    cfg.seed = solve.seed;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn echo(cfg: &SolverConfig, t: &TraceBound, data: Map<String, Value>) -> ConfigEcho {
    ConfigEcho {
        eps: cfg.eps,
        eps_tilde: cfg.eps_tilde(),
        trace_bound: cfg.trace_bound,
        trace_bound_source: t.source.clone(),
        seed: cfg.seed,
        max_iters: cfg.max_iters,
        max_rank: cfg.max_rank,
        local_search: cfg.local_search,
        eig_method: cfg.eig_method,
        lambda: None,
        rho: None,
        huber_m: None,
        data,
    }
}

fn write_outputs(report: &RunReport, result: &SolveResult, solve: &SolveArgs) -> Result<(), CliError> {
    if let Some(p) = &solve.trace_csv {
        write_text(Some(p), &trace_csv(&result.trace))?;
    }
    report.write(solve.out.as_deref())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{name} must be positive, got {v}")))
    }
}

/// Re-indexes two separately parsed rating files into a shared ID space.
fn merge_id_spaces(a: &ParsedRatings, b: &ParsedRatings) -> Result<(RatingSet, RatingSet), hybrid_sdp::Error> {
    let users: Vec<u64> = a
        .user_ids
        .iter()
        .chain(&b.user_ids)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let items: Vec<u64> = a
        .item_ids
        .iter()
        .chain(&b.item_ids)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let remap = |p: &ParsedRatings| {
        let entries = p
            .ratings
            .entries()
            .iter()
            .map(|r| Rating {
                user: users.binary_search(&p.user_ids[r.user]).expect("id present"),
                item: items.binary_search(&p.item_ids[r.item]).expect("id present"),
                value: r.value,
            })
            .collect();
        RatingSet::new(users.len(), items.len(), entries)
    };
    Ok((remap(a)?, remap(b)?))
}

/// Rank cap for matrix completion when `--max-rank` is absent; test RMSE
/// typically bottoms out well below it.
pub const DEFAULT_COMPLETION_MAX_RANK: usize = 10;

/// Trace heuristic `Σ|r| / √|Ω| · √(m·n)`. It is loose on purpose: a bound
/// below the optimum's trace would void the gap certificate.
pub(crate) fn completion_trace_heuristic(ratings: &RatingSet) -> f64 {
    let abs_sum: f64 = ratings.entries().iter().map(|r| r.value.abs()).sum();
    abs_sum / (ratings.len() as f64).sqrt() * ((ratings.users() * ratings.items()) as f64).sqrt()
}

pub fn run_matcomp(args: &MatcompArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut inputs = Vec::new();
    let mut data = Map::new();
    let (train, test) = if let Some(path) = &args.ratings {
        if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
            return Err(CliError::Config(format!(
                "--train-frac must be in (0, 1), got {}",
                args.train_frac
            )));
        }
        let parsed = parse_movielens(open(path)?, None).map_err(|e| CliError::input(path, e))?;
        inputs.push(InputFile::hash(path)?);
        let split =
            split_per_user(&parsed.ratings, args.train_frac, args.split_seed).map_err(|e| CliError::input(path, e))?;
        data.insert("split_seed".into(), json!(args.split_seed));
        data.insert("train_frac".into(), json!(args.train_frac));
        data.insert("duplicates".into(), json!(parsed.duplicates));
        data.insert("single_rating_users".into(), json!(split.single_rating_users));
        (split.train, Some(split.test))
    } else {
        let train_path = args.train.as_ref().expect("clap enforces a source");
        let test_path = args.test.as_ref().expect("clap requires --test with --train");
        let tr = parse_movielens(open(train_path)?, None).map_err(|e| CliError::input(train_path, e))?;
        let te = parse_movielens(open(test_path)?, None).map_err(|e| CliError::input(test_path, e))?;
        inputs.push(InputFile::hash(train_path)?);
        inputs.push(InputFile::hash(test_path)?);
        let (tr, te) = merge_id_spaces(&tr, &te).map_err(|e| CliError::input(test_path, e))?;
        (tr, Some(te))
    };
    data.insert("users".into(), json!(train.users()));
    data.insert("items".into(), json!(train.items()));
    data.insert("train_ratings".into(), json!(train.len()));
    data.insert("test_ratings".into(), json!(test.as_ref().map_or(0, RatingSet::len)));

    if let Some(cap) = args.trace_cap {
        positive("trace-cap", cap)?;
    }
    let t = TraceBound::resolve(args.solve.trace_bound, "completion_rms_scale", || {
        let h = completion_trace_heuristic(&train);
        args.trace_cap.map_or(h, |c| h.min(c))
    })?;
    let objective = MatrixCompletion::new(train.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let f0 = objective
        .value(&Factor::zeros(objective.dim()))
        .map_err(CliError::Solve)?;
    let mut cfg = solver_config(&args.solve, 1e-4 * (1.0 + f0), &t, 50)?;
    if args.solve.max_rank.is_none() {
        cfg.max_rank = Some(DEFAULT_COMPLETION_MAX_RANK);
    }

    let mut by_rank: Vec<RankRmse> = Vec::new();
    let mut best_rank = 0;
    let result = solve_with_observer(&objective, &cfg, |rec, v| {
        if let Some(test) = &test {
            if rec.rank > best_rank {
                best_rank = rec.rank;
                if let Ok(r) = rmse(test, v) {
                    by_rank.push(RankRmse {
                        rank: rec.rank,
                        iter: rec.iter,
                        rmse: r,
                    });
                }
            }
        }
        Control::Continue
    })
    .map_err(CliError::Solve)?;

    let test_rmse = match &test {
        Some(t) if !t.is_empty() => Some(rmse(t, &result.factor).map_err(CliError::Solve)?),
        _ => None,
    };
    let train_rmse = rmse(&train, &result.factor).map_err(CliError::Solve)?;
    let best = by_rank.iter().copied().min_by(|a, b| a.rmse.total_cmp(&b.rmse));
    let metrics = Metrics::Completion {
        rmse: test_rmse,
        train_rmse,
        rmse_by_rank: by_rank,
        best,
    };
    let mut report = RunReport::new("matcomp", metrics).with_solve(echo(&cfg, &t, data), &result);
    report.inputs = inputs;
    report.seconds = start.elapsed().as_secs_f64();
    write_outputs(&report, &result, &args.solve)?;
    Ok(report)
}

pub fn run_metric(args: &MetricArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    positive("lambda", args.lambda)?;
    let mut inputs = Vec::new();
    let mut data = Map::new();
    let mut points: LabeledPoints = if let Some(path) = &args.data {
        let p = load_labeled_csv(open(path)?).map_err(|e| CliError::input(path, e))?;
        inputs.push(InputFile::hash(path)?);
        p
    } else {
        let (dim, n) = (
            args.dim.expect("clap requires --dim"),
            args.n.expect("clap requires --n"),
        );
        data.insert("synthetic_dim".into(), json!(dim));
        data.insert("synthetic_n".into(), json!(n));
        gen_clusters(dim, n, args.data_seed)
            .map_err(|e| CliError::Config(e.to_string()))?
            .0
    };
    data.insert("data_seed".into(), json!(args.data_seed));
    if let Some(size) = args.subsample {
        points = points
            .stratified_subsample(size, args.data_seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        data.insert("subsample".into(), json!(size));
    }
    let (similar, dissimilar) =
        build_pairs(&points, args.max_pairs, args.data_seed).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(m) = args.max_pairs {
        data.insert("max_pairs".into(), json!(m));
    }
    data.insert("points".into(), json!(points.len()));
    let problem = MetricProblem::new(points.points.clone(), similar.clone(), dissimilar.clone(), args.lambda)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let objective = MetricLearning::new(problem).map_err(|e| CliError::Config(e.to_string()))?;

    let t = TraceBound::resolve(args.solve.trace_bound, "dimension", || points.dim() as f64)?;
    let cfg = solver_config(&args.solve, 1e-6, &t, 100)?;
    if let Some(q) = args.q_target {
        data.insert("q_target".into(), json!(q));
    }

    let result = solve_with_observer(&objective, &cfg, |_, v| match args.q_target {
        Some(target) if v.rank() > 0 => match quality_q(&points, &similar, &dissimilar, v) {
            Ok(q) if q > target => Control::Stop,
            _ => Control::Continue,
        },
        _ => Control::Continue,
    })
    .map_err(CliError::Solve)?;

    let q = quality_q(&points, &similar, &dissimilar, &result.factor).map_err(CliError::Solve)?;
    let constrained_value = objective.constrained_value(&result.factor).map_err(CliError::Solve)?;
    let metrics = Metrics::Metric {
        q,
        constrained_value,
        similar_pairs: similar.len(),
        dissimilar_pairs: dissimilar.len(),
    };
    let mut config = echo(&cfg, &t, data);
    config.lambda = Some(args.lambda);
    let mut report = RunReport::new("metric", metrics).with_solve(config, &result);
    report.inputs = inputs;
    report.seconds = start.elapsed().as_secs_f64();
    write_outputs(&report, &result, &args.solve)?;
    Ok(report)
}

pub fn run_spca(args: &SpcaArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    positive("rho", args.rho)?;
    positive("huber-m", args.huber_m)?;
    positive("zero-tol", args.zero_tol)?;
    let mut inputs = Vec::new();
    let mut data = Map::new();
    let covariance: DMatrix<f64> = if let Some(path) = &args.data {
        let mut raw = load_matrix(open(path)?).map_err(|e| CliError::input(path, e))?;
        inputs.push(InputFile::hash(path)?);
        if let Some(d) = args.subsample_dim {
            raw = subsample_columns(&raw, d, args.data_seed).map_err(|e| CliError::Config(e.to_string()))?;
            data.insert("subsample_dim".into(), json!(d));
            data.insert("data_seed".into(), json!(args.data_seed));
        }
        data.insert("samples".into(), json!(raw.nrows()));
        data.insert("normalize".into(), json!(!args.no_normalize));
        let cov = build_covariance(&raw, !args.no_normalize).map_err(|e| CliError::input(path, e))?;
        if !cov.constant_columns.is_empty() {
            data.insert("constant_columns".into(), json!(cov.constant_columns));
        }
        cov.matrix
    } else if let Some(path) = &args.covariance {
        if args.subsample_dim.is_some() {
            return Err(CliError::Config("--subsample-dim applies to --data only".into()));
        }
        let m = load_matrix(open(path)?).map_err(|e| CliError::input(path, e))?;
        inputs.push(InputFile::hash(path)?);
        if m.nrows() != m.ncols() {
            return Err(CliError::input(
                path,
                hybrid_sdp::Error::InvalidInput(format!("covariance must be square, got {}x{}", m.nrows(), m.ncols())),
            ));
        }
        m
    } else {
        let d = args.synthetic_dim.expect("clap enforces a source");
        data.insert("synthetic_dim".into(), json!(d));
        data.insert("samples".into(), json!(args.samples));
        data.insert("data_seed".into(), json!(args.data_seed));
        synthetic_covariance(d, args.samples, args.data_seed).map_err(|e| CliError::Config(e.to_string()))?
    };
    let problem =
        SpcaProblem::new(covariance.clone(), args.rho, args.huber_m).map_err(|e| CliError::Config(e.to_string()))?;
    let objective = SparsePca::new(problem);

    let t = TraceBound::resolve(args.solve.trace_bound, "unit_trace", || 1.0)?;
    let cfg = solver_config(&args.solve, 1e-6, &t, 100)?;
    let result = solve_with_observer(&objective, &cfg, |_, _| Control::Continue).map_err(CliError::Solve)?;

    let original_value = objective.original_value(&result.factor).map_err(CliError::Solve)?;
    let sv = sparsity_and_variance(&covariance, &result.factor, args.zero_tol).map_err(CliError::Solve)?;
    let metrics = Metrics::Spca {
        original_value,
        sparsity: sv.sparsity,
        variance: sv.variance,
        zero_tol: args.zero_tol,
    };
    let mut config = echo(&cfg, &t, data);
    config.rho = Some(args.rho);
    config.huber_m = Some(args.huber_m);
    let mut report = RunReport::new("spca", metrics).with_solve(config, &result);
    report.inputs = inputs;
    report.seconds = start.elapsed().as_secs_f64();
    write_outputs(&report, &result, &args.solve)?;
    Ok(report)
}

pub fn run_gen(args: &GenArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (points, _) = gen_clusters(args.dim, args.n, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut buf = Vec::new();
    write_labeled_csv(&points, &mut buf).expect("writing to memory");
    write_text(args.out.as_deref(), &String::from_utf8(buf).expect("CSV is UTF-8"))?;
    let mut report = RunReport::new(
        "gen",
        Metrics::Generated {
            points: points.len(),
            dim: points.dim(),
        },
    );
    report.seconds = start.elapsed().as_secs_f64();
    if let Some(p) = &args.report {
        report.write(Some(p))?;
    }
    Ok(report)
}

/// Symmetric Gaussian target `(G + Gᵀ)/2` for the rate probe.
pub(crate) fn probe_target(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g + g.transpose()) * 0.5
}

pub fn run_probe(args: &ProbeArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    if args.n == 0 || args.iters == 0 {
        return Err(CliError::Config("--n and --iters must be positive".into()));
    }
    let objective = Quadratic::new(probe_target(args.n, args.seed)).map_err(|e| CliError::Config(e.to_string()))?;
    let (_, f_star) = objective.optimum();
    let trace = objective.optimal_trace();
    let t = TraceBound {
        value: if trace > 0.0 { trace } else { 1.0 },
        source: "optimal_trace".into(),
    };
    let sampled = estimate_curvature(&objective, t.value, args.samples, args.seed).map_err(CliError::Solve)?;
    let probe = ConvergenceProbe::for_quadratic(t.value)
        .map_err(CliError::Solve)?
        .refined(sampled);

    let mut cfg = SolverConfig::new(1e-9, t.value);
    cfg.max_iters = args.iters;
    cfg.local_search = args.local_search;
    cfg.seed = args.seed;
    let series = probe_rate(&objective, Some(f_star), &cfg, &probe).map_err(CliError::Solve)?;

    if let Some(p) = &args.csv {
        write_text(Some(p), &probe_csv(&series.rows))?;
    }
    let mut data = Map::new();
    data.insert("n".into(), json!(args.n));
    data.insert("samples".into(), json!(args.samples));
    data.insert("sampled_curvature".into(), json!(sampled));
    let last = series.rows.last().expect("probe has rows");
    let mut report = RunReport::new(
        "probe",
        Metrics::Probe {
            curvature_bound: series.curvature_bound,
            f_star,
            violations: series.violations.clone(),
        },
    );
    report.config = Some(echo(&cfg, &t, data));
    report.f_value = Some(last.h + f_star);
    report.iterations = Some(last.iter);
    report.seconds = start.elapsed().as_secs_f64();
    report.write(args.out.as_deref())?;
    if series.satisfied() {
        Ok(report)
    } else {
        Err(CliError::BoundViolated(series.violations.len()))
    }
}
