use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{DSource, DataSpec, ExperimentConfig, GraphSpec, RegKind, TauSpec};
use super::reference::{reference_solution, ReferenceSolution};
use crate::error::{BenchError, Error};
use crate::inner::ToleranceSchedule;
use crate::model::{parse_libsvm, partition, synthetic_dataset, SmoothLoss, SmoothTerm, SyntheticConfig};
use crate::prox::Regularizer;
use crate::solvers::{run, validate_stepsizes, Algorithm, Problem, RunConfig, RunStatus, StepSizes, Trace};
use crate::topology::{generate_random_connected_graph, metropolis_hastings_weights, Graph, MixingMatrix};

/// Column order of the per-cell trace CSV.
pub const TRACE_COLUMNS: &[&str] = &[
    "k",
    "relative_error",
    "consensus_error",
    "kkt_residual",
    "d_norm_max",
    "inner_iterations",
    "comm_rounds",
    "wall_time_s",
];

/// Column order of `summary.csv`.
pub const SUMMARY_COLUMNS: &[&str] = &[
    "experiment_id",
    "problem_id",
    "algorithm",
    "schedule",
    "status",
    "outer_iters",
    "inner_iters_total",
    "comm_rounds",
    "final_rel_err",
    "wall_time_s",
    "seed",
];

/// Everything a cell needs, built once per repetition.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem_id: String,
    pub seed: u64,
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub problem: Problem,
    pub lipschitz: Vec<f64>,
    pub sizes: StepSizes,
}

fn io_err(path: &Path, e: std::io::Error) -> BenchError {
    BenchError::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// `rows x cols` matrix of standard normals, filled row by row.
pub fn random_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    m
}

/// Comma-separated rows, `#` comments allowed.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BenchError::Config { line: i + 1, msg: format!("{}: {e}", path.display()) })?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(BenchError::Config { line: i + 1, msg: format!("{}: ragged row", path.display()) });
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn build_graph(spec: &GraphSpec, seed_shift: u64) -> Result<Graph, Error> {
    Ok(match spec {
        GraphSpec::Random { n_agents, connectivity, seed } => {
            generate_random_connected_graph(*n_agents, *connectivity, seed.wrapping_add(seed_shift))?
        }
        GraphSpec::Ring(n) => Graph::ring(*n)?,
        GraphSpec::Path(n) => Graph::path(*n)?,
        GraphSpec::Complete(n) => Graph::complete(*n)?,
        GraphSpec::Star(n) => Graph::star(*n, 0)?,
        GraphSpec::File(p) => Graph::from_edge_list(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
    })
}

fn build_regularizer(cfg: &ExperimentConfig, n_features: usize, seed_shift: u64) -> Result<Regularizer, Error> {
    let w = cfg.reg.weight;
    Ok(match cfg.reg.kind {
        RegKind::None => Regularizer::zero(),
        RegKind::L1 => Regularizer::l1(w)?,
        RegKind::L2 => Regularizer::l2_norm(w)?,
        RegKind::GeneralizedLasso => {
            let d = match cfg.reg.d.as_ref().expect("checked at parse time") {
                DSource::RandomGaussian { rows, cols, seed } => {
                    random_gaussian_matrix(*rows, *cols, seed.wrapping_add(seed_shift))
                }
                DSource::Csv(p) => read_matrix_csv(p)?,
            };
            if d.ncols() != n_features {
                return Err(BenchError::Key {
                    key: "reg.d".into(),
                    msg: format!("D has {} columns but the data has {n_features} features", d.ncols()),
                }
                .into());
            }
            Regularizer::generalized_lasso(w, d)?
        }
    })
}

/// Step sizes from the config's `τ` spec and `τβ` (or explicit `β`).
pub fn resolve_stepsizes(cfg: &ExperimentConfig, lipschitz: &[f64]) -> StepSizes {
    let n = lipschitz.len();
    let mut sizes = match cfg.step.tau {
        TauSpec::PerAgent(c) => StepSizes::from_lipschitz(lipschitz, c, cfg.step.tau_beta, cfg.step.beta_reference),
        TauSpec::Shared(c) => StepSizes::shared_from_lipschitz(lipschitz, c, cfg.step.tau_beta),
        TauSpec::Value(t) => StepSizes::with_product(vec![t; n], cfg.step.tau_beta, cfg.step.beta_reference),
    };
    if let Some(b) = cfg.step.beta {
        sizes.beta = b;
    }
    sizes
}

/// Graph, data, problem and stepsizes for repetition `rep` (seeds shift by `rep`).
pub fn build_setup(cfg: &ExperimentConfig, rep: usize) -> Result<Setup, Error> {
    let shift = rep as u64;
    let graph = build_graph(&cfg.graph, shift)?;
    let mixing = metropolis_hastings_weights(&graph)?;
    let n_agents = graph.n_agents();
    let (dataset, data_tag) = match &cfg.data {
        DataSpec::Synthetic { n_features, n_samples, noise_std, density, label_flip, seed } => {
            let syn = synthetic_dataset(&SyntheticConfig {
                n_features: *n_features,
                n_samples: *n_samples,
                noise_std: *noise_std,
                seed: seed.wrapping_add(shift),
                kind: cfg.loss,
                density: *density,
                label_flip: *label_flip,
            })?;
            (syn.dataset, format!("synthetic{n_features}x{n_samples}"))
        }
        DataSpec::Libsvm { path, n_features } => {
            let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let ds = parse_libsvm(std::io::BufReader::new(f), *n_features)?;
            let stem = path.file_stem().map_or("libsvm".into(), |s| s.to_string_lossy().into_owned());
            (ds, stem)
        }
    };
    let n_features = dataset.n_features;
    let shards = partition(&dataset, n_agents, cfg.seed.wrapping_add(shift))?;
    let loss = SmoothLoss::new(cfg.loss, cfg.l2_weight)?;
    let smooth = shards.into_iter().map(|s| SmoothTerm::data(loss, s)).collect::<Result<Vec<_>, _>>()?;
    let reg = build_regularizer(cfg, n_features, shift)?;
    let problem = Problem::shared_reg(smooth, reg)?;
    let lipschitz = problem.lipschitz(cfg.lipschitz_mode)?;
    let sizes = resolve_stepsizes(cfg, &lipschitz);
    let loss_tag = match cfg.loss {
        crate::model::LossKind::LinearRegression => "linear",
        crate::model::LossKind::LogisticRegression => "logistic",
    };
    let reg_tag = match cfg.reg.kind {
        RegKind::None => "none",
        RegKind::L1 => "l1",
        RegKind::L2 => "l2",
        RegKind::GeneralizedLasso => "gl",
    };
    Ok(Setup {
        problem_id: format!("{data_tag}-{loss_tag}-{reg_tag}-N{n_agents}-s{}", cfg.seed.wrapping_add(shift)),
        seed: cfg.seed.wrapping_add(shift),
        graph,
        mixing,
        problem,
        lipschitz,
        sizes,
    })
}

/// Builds every repetition's setup and checks stepsizes for every algorithm.
/// Returns the warnings that `divergence_demo = true` would tolerate.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<Vec<String>, Error> {
    let mut notes = Vec::new();
    for rep in 0..cfg.repetitions {
        let setup = build_setup(cfg, rep)?;
        for &alg in &cfg.algorithms {
            let warnings = validate_stepsizes(alg, &setup.lipschitz, &setup.sizes, setup.mixing.spectral())?;
            if !warnings.is_empty() && !cfg.divergence_demo {
                return Err(crate::error::SolverError::Stepsize(format!("{alg}: {}", warnings.join("; "))).into());
            }
            notes.extend(warnings.into_iter().map(|w| format!("{alg} (rep {rep}): {w}")));
        }
    }
    Ok(notes)
}

pub fn run_config(cfg: &ExperimentConfig, setup: &Setup, alg: Algorithm, schedule: ToleranceSchedule, x_star: &DVector<f64>) -> RunConfig {
    let mut rc = RunConfig::new(alg, setup.sizes.clone(), setup.lipschitz.clone());
    rc.schedule = schedule;
    rc.inner = cfg.inner.clone();
    rc.baseline_tol = cfg.baseline_tol;
    rc.max_iters = cfg.max_iters;
    rc.rel_err_target = cfg.rel_err_target;
    rc.x_star = Some(x_star.clone());
    rc.allow_invalid_stepsizes = cfg.divergence_demo;
    rc
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub problem_id: String,
    pub algorithm: String,
    pub schedule: String,
    pub status: String,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub comm_rounds: usize,
    pub final_rel_err: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl SummaryRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.16e},{}",
            self.experiment_id,
            self.problem_id,
            self.algorithm,
            self.schedule,
            self.status,
            self.outer_iters,
            self.inner_iters_total,
            self.comm_rounds,
            fmt_opt(self.final_rel_err),
            self.wall_time_s,
            self.seed
        )
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// `name(eps0)`, as shown in summaries and trace headers.
pub fn schedule_label(s: &ToleranceSchedule) -> String {
    format!("{}({:e})", s.name(), s.eps0())
}

/// Trace CSV text: `#` header lines (ids, seeds, status), column header, one row per record.
pub fn trace_csv(trace: &Trace, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "# status={}", status_text(&trace.status));
    let _ = writeln!(out, "{}", TRACE_COLUMNS.join(","));
    for r in &trace.records {
        let d_max = r.d_norms.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            fmt_opt(r.relative_error),
            fmt_f(r.consensus_error),
            fmt_opt(r.kkt_residual),
            fmt_f(d_max),
            r.inner_iterations,
            r.comm_rounds,
            fmt_f(r.wall_time)
        );
    }
    out
}

fn status_text(s: &RunStatus) -> String {
    match s {
        RunStatus::Diverged { at } => format!("diverged@{at}"),
        other => other.label().to_string(),
    }
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub summary_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
    pub rows: Vec<SummaryRow>,
    pub references: Vec<ReferenceSolution>,
}

/// Runs every (repetition, algorithm, schedule) cell and writes one trace CSV
/// per cell plus `summary.csv` into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, Error> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut rows = Vec::new();
    let mut trace_paths = Vec::new();
    let mut references = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "# experiment_id={}", cfg.id);
    let _ = writeln!(summary, "# seed={} repetitions={}", cfg.seed, cfg.repetitions);
    let _ = writeln!(summary, "{}", SUMMARY_COLUMNS.join(","));

    for rep in 0..cfg.repetitions {
        let setup = build_setup(cfg, rep)?;
        let reference = reference_solution(&setup.problem, cfg.reference_tol, cfg.reference_max_iters)?;
        let cells: Vec<(Algorithm, ToleranceSchedule)> =
            cfg.algorithms.iter().flat_map(|&a| cfg.schedules.iter().map(move |&s| (a, s))).collect();
        let traces = cells
            .par_iter()
            .map(|&(alg, sched)| {
                let rc = run_config(cfg, &setup, alg, sched, &reference.x);
                run(&setup.problem, &setup.mixing, &rc).map_err(|e| {
                    Error::from(BenchError::Cell {
                        cell: format!("{}/{}/{}/rep{rep}", cfg.id, alg, schedule_label(&sched)),
                        source: Box::new(e.into()),
                    })
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        for ((alg, sched), trace) in cells.iter().zip(&traces) {
            let header = vec![
                format!("experiment_id={} problem_id={}", cfg.id, setup.problem_id),
                format!("algorithm={} schedule={}", alg, schedule_label(sched)),
                format!("seed={} repetition={rep}", setup.seed),
                format!("tau_max={} beta={}", fmt_f(setup.sizes.max_tau()), fmt_f(setup.sizes.beta)),
            ];
            let path = dir.join(format!("trace_{}_{}_r{rep}.csv", alg.name(), sched.name()));
            fs::write(&path, trace_csv(trace, &header)).map_err(|e| io_err(&path, e))?;
            trace_paths.push(path);
            let row = SummaryRow {
                experiment_id: cfg.id.clone(),
                problem_id: setup.problem_id.clone(),
                algorithm: alg.name().to_string(),
                schedule: schedule_label(sched),
                status: status_text(&trace.status),
                outer_iters: trace.outer_iterations(),
                inner_iters_total: trace.inner_iterations_total(),
                comm_rounds: trace.comm_rounds(),
                final_rel_err: trace.final_relative_error(),
                wall_time_s: trace.records.last().map_or(0.0, |r| r.wall_time),
                seed: setup.seed,
            };
            let _ = writeln!(summary, "{}", row.to_csv_line());
            rows.push(row);
        }
        references.push(reference);
    }
    let summary_path = dir.join("summary.csv");
    fs::write(&summary_path, summary).map_err(|e| io_err(&summary_path, e))?;
    Ok(ExperimentOutput { dir, summary_path, trace_paths, rows, references })
}

/// Drops the columns named in `timing` from a CSV text (comment lines kept).
pub fn strip_columns(csv: &str, timing: &[&str]) -> String {
    let mut keep: Option<Vec<bool>> = None;
    let mut out = String::new();
    for line in csv.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let mask = keep.get_or_insert_with(|| fields.iter().map(|f| !timing.contains(f)).collect());
        let kept: Vec<&str> = fields.iter().zip(mask.iter()).filter(|(_, k)| **k).map(|(f, _)| *f).collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}
