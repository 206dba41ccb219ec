use nalgebra::{DMatrix, DVector};

use crate::error::{BenchError, Error};
use crate::linalg::spectral_norm_sq;
use crate::model::LipschitzMode;
use crate::prox::{prox_l1, prox_l2norm, Regularizer};
use crate::solvers::Problem;

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-10;
pub const DEFAULT_REFERENCE_MAX_ITERS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    /// Accelerated proximal gradient with adaptive restart.
    Fista,
    /// Primal-dual splitting over `Σ_i h_i(K_i x)`.
    CondatVu,
}

impl ReferenceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fista => "fista",
            Self::CondatVu => "condat-vu",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub method: ReferenceMethod,
    pub iterations: usize,
}

/// Sum of the regularizers when it has a closed-form prox: all `ν_i‖x‖₁`
/// or all `ν_i‖x‖₂` (weights add up).
fn closed_form_sum(problem: &Problem) -> Option<Regularizer> {
    let regs = problem.regs();
    let total: f64 = regs.iter().map(Regularizer::weight).sum();
    if regs.iter().all(|g| matches!(g, Regularizer::L1 { .. }) || g.weight() == 0.0) {
        return Some(Regularizer::L1 { weight: total });
    }
    if regs.iter().all(|g| matches!(g, Regularizer::L2Norm { .. }) || g.weight() == 0.0) {
        return Some(Regularizer::L2Norm { weight: total });
    }
    None
}

/// Centralized solution of `min Σ_i f_i(x) + g_i(x)` to a KKT residual `≤ tol`.
///
/// Uses FISTA when `Σ g_i` has a closed-form prox, the primal-dual method otherwise.
pub fn reference_solution(problem: &Problem, tol: f64, max_iters: usize) -> Result<ReferenceSolution, Error> {
    if !(tol > 0.0) {
        return Err(BenchError::Key { key: "stop.reference_tol".into(), msg: format!("must be positive, got {tol}") }.into());
    }
    match closed_form_sum(problem) {
        Some(g) => fista(problem, &g, tol, max_iters),
        None => condat_vu(problem, tol, max_iters),
    }
}

fn lipschitz_sum(problem: &Problem) -> Result<f64, Error> {
    Ok(problem.lipschitz(LipschitzMode::Exact)?.iter().sum::<f64>().max(f64::MIN_POSITIVE))
}

fn closed_prox(g: &Regularizer, s: &DVector<f64>, t: f64) -> DVector<f64> {
    match g {
        Regularizer::L1 { weight } => prox_l1(s, t * weight).expect("weights validated"),
        Regularizer::L2Norm { weight } => prox_l2norm(s, t * weight).expect("weights validated"),
        Regularizer::GeneralizedLasso { .. } => unreachable!("no closed form"),
    }
}

/// Accelerated proximal gradient, step `1/L`, gradient-based restart.
/// Residual: `L‖x − prox_{g/L}(x − ∇F(x)/L)‖`.
pub fn fista(problem: &Problem, g: &Regularizer, tol: f64, max_iters: usize) -> Result<ReferenceSolution, Error> {
    let lip = lipschitz_sum(problem)?;
    let step = 1.0 / lip;
    let n = problem.dim();
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let gy = problem.gradient_sum(&y)?;
        let x_new = closed_prox(g, &(&y - &gy * step), step);
        let gx = problem.gradient_sum(&x_new)?;
        let p = closed_prox(g, &(&x_new - &gx * step), step);
        residual = lip * (&x_new - p).norm();
        if residual <= tol {
            let objective = problem.objective(&x_new)?;
            return Ok(ReferenceSolution { x: x_new, objective, kkt_residual: residual, method: ReferenceMethod::Fista, iterations: it });
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart momentum when it points uphill.
        if (&y - &x_new).dot(&(&x_new - &x)) > 0.0 {
            t = 1.0;
            y = x_new.clone();
        } else {
            y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            t = t_new;
        }
        x = x_new;
    }
    Err(BenchError::ReferenceCap { iters: max_iters, residual, tol }.into())
}

/// One `h_i(K_i x)` block.
struct Block {
    k: DMatrix<f64>,
    weight: f64,
    l2: bool,
}

impl Block {
    /// Projection onto the dual ball of `h`, i.e. `prox` of `h*`.
    fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.l2 {
            let nw = w.norm();
            if nw <= self.weight { w.clone() } else { w * (self.weight / nw) }
        } else {
            w.map(|v| v.clamp(-self.weight, self.weight))
        }
    }

    /// `prox_h(z)`.
    fn prox(&self, z: &DVector<f64>) -> DVector<f64> {
        if self.l2 {
            prox_l2norm(z, self.weight).expect("weights validated")
        } else {
            prox_l1(z, self.weight).expect("weights validated")
        }
    }
}

fn blocks(problem: &Problem) -> Vec<Block> {
    let n = problem.dim();
    problem
        .regs()
        .iter()
        .filter(|g| g.weight() > 0.0)
        .map(|g| match g {
            Regularizer::L1 { weight } => Block { k: DMatrix::identity(n, n), weight: *weight, l2: false },
            Regularizer::L2Norm { weight } => Block { k: DMatrix::identity(n, n), weight: *weight, l2: true },
            Regularizer::GeneralizedLasso { weight, d, .. } => Block { k: d.clone(), weight: *weight, l2: false },
        })
        .collect()
}

/// Primal-dual splitting for `F(x) + Σ_i h_i(K_i x)`:
///
/// ```text
/// x⁺  = x − t1(∇F(x) + Σ K_iᵀ w_i)
/// w_i⁺ = proj_{dom h_i*}(w_i + t2 K_i(2x⁺ − x))
/// ```
///
/// Residual: `‖∇F(x) + Σ K_iᵀw_i‖ + Σ‖K_i x − prox_{h_i}(K_i x + w_i)‖`.
pub fn condat_vu(problem: &Problem, tol: f64, max_iters: usize) -> Result<ReferenceSolution, Error> {
    let lip = lipschitz_sum(problem)?;
    let bl = blocks(problem);
    let k_norm_sq: f64 = bl.iter().map(|b| spectral_norm_sq(&b.k)).sum::<f64>().max(f64::MIN_POSITIVE);
    let t2 = lip / (2.0 * k_norm_sq);
    let t1 = 0.99 / lip;
    let n = problem.dim();
    let mut x = DVector::zeros(n);
    let mut w: Vec<DVector<f64>> = bl.iter().map(|b| DVector::zeros(b.k.nrows())).collect();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let grad = problem.gradient_sum(&x)?;
        let mut dir = grad.clone();
        for (b, wi) in bl.iter().zip(&w) {
            dir += b.k.tr_mul(wi);
        }
        if it % 10 == 1 || it == max_iters {
            let mut r = dir.norm();
            for (b, wi) in bl.iter().zip(&w) {
                let kx = &b.k * &x;
                r += (&kx - b.prox(&(&kx + wi))).norm();
            }
            residual = r;
            if residual <= tol {
                let objective = problem.objective(&x)?;
                return Ok(ReferenceSolution { x, objective, kkt_residual: residual, method: ReferenceMethod::CondatVu, iterations: it });
            }
        }
        let x_new = &x - dir * t1;
        let bar = &x_new * 2.0 - &x;
        for (b, wi) in bl.iter().zip(w.iter_mut()) {
            *wi = b.project(&(&*wi + (&b.k * &bar) * t2));
        }
        x = x_new;
    }
    Err(BenchError::ReferenceCap { iters: max_iters, residual, tol }.into())
}
