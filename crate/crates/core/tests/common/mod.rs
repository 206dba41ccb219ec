#![allow(dead_code)]

use std::path::Path;

use dipgm::bench::ExperimentConfig;
use dipgm::inner::{CvSettings, ToleranceSchedule};
use dipgm::model::SmoothTerm;
use dipgm::prox::Regularizer;
use dipgm::solvers::{Problem, StepContext};
use dipgm::topology::{metropolis_hastings_weights, Graph, MixingMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BASE_CONFIG: &str = "\
experiment.id = test
experiment.seed = 7
graph.kind = random
graph.n_agents = 10
graph.connectivity = 0.5
data.n_features = 20
data.n_samples = 300
loss.kind = linear
loss.l2 = 1.0
reg.kind = l1
reg.weight = 0.01
step.tau = 1.99/L_i
step.tau_beta = 0.5
stop.max_iters = 5000
stop.rel_err = 1e-5
";

/// `BASE_CONFIG` with the keys in `overrides` replaced.
pub fn config(overrides: &str) -> ExperimentConfig {
    config_in(overrides, Path::new("."))
}

pub fn config_in(overrides: &str, base: &Path) -> ExperimentConfig {
    let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_string();
    let keys: Vec<String> = overrides.lines().map(key).filter(|k| !k.is_empty()).collect();
    let mut text: String = BASE_CONFIG.lines().filter(|l| !keys.contains(&key(l))).map(|l| format!("{l}\n")).collect();
    text.push_str(overrides);
    ExperimentConfig::from_str_with_base(&text, base).expect("valid test config")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// `½xᵀHx − cᵀx` with `H = AᵀA/m + μI`.
pub fn random_quadratic(rng: &mut ChaCha8Rng, dim: usize, mu: f64) -> SmoothTerm {
    let a = random_matrix(rng, dim + 2, dim);
    let h = a.transpose() * &a / (dim + 2) as f64 + DMatrix::identity(dim, dim) * mu;
    SmoothTerm::quadratic(h, random_vector(rng, dim)).unwrap()
}

pub fn quadratic_problem(seed: u64, n_agents: usize, dim: usize, reg: Regularizer) -> Problem {
    let mut r = rng(seed);
    let smooth = (0..n_agents).map(|_| random_quadratic(&mut r, dim, 0.1)).collect();
    Problem::shared_reg(smooth, reg).unwrap()
}

pub fn single_mixing() -> MixingMatrix {
    MixingMatrix::from_matrix(DMatrix::from_element(1, 1, 1.0)).unwrap()
}

pub fn ring_mixing(n: usize) -> MixingMatrix {
    metropolis_hastings_weights(&Graph::ring(n).unwrap()).unwrap()
}

pub fn exact_ctx(inner: &CvSettings) -> StepContext<'_> {
    StepContext { schedule: ToleranceSchedule::Constant(1e-13), inner, baseline_tol: 1e-13 }
}

pub fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// `argmin_x θ‖Dx‖₁ + ½‖x − s‖²` by enumerating the sign pattern of `Dx`.
///
/// For a zero set `Z` and signs `σ` on the rest, the candidate is the projection
/// of `s − θD_σᵀσ` onto `null(D_Z)`. The minimizer is one of the candidates.
pub fn gl_prox_by_enumeration(d: &DMatrix<f64>, s: &DVector<f64>, theta: f64) -> DVector<f64> {
    let (m, n) = d.shape();
    let objective = |x: &DVector<f64>| theta * (d * x).abs().sum() + 0.5 * (x - s).norm_squared();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(m as u32) {
        let sign: Vec<f64> = (0..m).map(|j| (code / 3usize.pow(j as u32) % 3) as f64 - 1.0).collect();
        let zero: Vec<usize> = (0..m).filter(|&j| sign[j] == 0.0).collect();
        let sigma = DVector::from_vec(sign.clone());
        let mut x = s - d.transpose() * &sigma * theta;
        if !zero.is_empty() {
            let dz = DMatrix::from_fn(zero.len(), n, |a, c| d[(zero[a], c)]);
            let pinv = dz.clone().pseudo_inverse(1e-12).expect("svd");
            x -= pinv * (&dz * &x);
        }
        let dx = d * &x;
        let consistent = (0..m).all(|j| sign[j] == 0.0 || dx[j] * sign[j] >= -1e-12);
        let value = objective(&x);
        if consistent && best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    best.expect("the all-zero pattern is always consistent").1
}
