use thiserror::Error;

/// Errors raised while building graphs and mixing matrices.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("graph needs at least one agent")]
    NoAgents,
    #[error("connectivity ratio {0} outside (0, 1]")]
    BadRatio(f64),
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is {rows}x{cols}, expected {expected}x{expected}")]
    Dimension { rows: usize, cols: usize, expected: usize },
    #[error("malformed edge list at line {line}: {msg}")]
    EdgeList { line: usize, msg: String },
}

/// Errors raised while reading LIBSVM text.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty input: no samples found")]
    Empty,
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Errors raised by the smooth-loss model layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot split {samples} samples across {agents} agents")]
    TooManyAgents { agents: usize, samples: usize },
    #[error("need at least one agent")]
    NoAgents,
    #[error("shard has no samples")]
    EmptyShard,
    #[error("power iteration did not converge in {iters} steps (best estimate {estimate})")]
    PowerIteration { iters: usize, estimate: f64 },
    #[error("label {label} at sample {index} is not in {{-1, +1}}")]
    BadLabel { index: usize, label: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Errors raised by proximal mappings and the inner solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("prox weight must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("inner stepsizes violate t1/2 + t1*t2*|D^T D| < 1 (value {0})")]
    InnerStepsize(f64),
    #[error("inner tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("inner solver hit the {cap}-iteration cap (last step {last_step:e}, tol {tol:e})")]
    IterationCap { cap: usize, last_step: f64, tol: f64 },
    #[error("outer iteration index must be >= 1, got {0}")]
    BadIndex(usize),
}

/// Errors raised by the decentralized solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("agent {agent} at iteration {k}: {source}")]
    Inner {
        agent: usize,
        k: usize,
        #[source]
        source: ProxError,
    },
    #[error("agent {agent} at iteration {k}: {source}")]
    Model {
        agent: usize,
        k: usize,
        #[source]
        source: ModelError,
    },
    #[error("invalid stepsizes: {0}")]
    Stepsize(String),
    #[error("problem has {problem} agents but mixing matrix has {mixing}")]
    AgentCount { problem: usize, mixing: usize },
    #[error("state is missing the {0} required by this step")]
    MissingState(&'static str),
}

/// Errors raised by trace diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("series entry {index} is not positive ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("series too short: {len} < {min}")]
    TooShort { len: usize, min: usize },
    #[error("reference vector is zero")]
    ZeroReference,
    #[error("metric matrix {0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("trace is inexact; the monotonicity check requires exact prox steps")]
    InexactTrace,
    #[error("trace carries no {0}")]
    Missing(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Errors raised by experiment orchestration.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config key `{key}`: {msg}")]
    Key { key: String, msg: String },
    #[error("reference solver stopped at the {iters}-iteration cap with residual {residual:e} > {tol:e}")]
    ReferenceCap { iters: usize, residual: f64, tol: f64 },
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
    #[error("compare: {0}")]
    Compare(String),
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
