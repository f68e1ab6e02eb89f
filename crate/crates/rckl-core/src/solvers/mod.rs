//! Batch solvers: unconstrained Gauss-Newton and the constrained nullspace
//! SQP, both built on the sparse arrowhead Cholesky, plus the RTS smoother
//! fast path for unconstrained localization.
//!
//! Both loops share the backtracking line search on the L1 merit function
//! `φ₁(q, μ) = J(q) + μ ‖h(q)‖₁` (the unconstrained case degenerates to
//! plain cost, μ = 0). A step is accepted when
//!
//! ```text
//!   φ₁(q + α δq) ≤ φ₁(q) + η α D,   D = ∇Jᵀ δq - μ ‖h(q)‖₁,
//! ```
//!
//! with `μ ≥ ‖λ + δλ‖_∞ + margin` so `D < 0` and the merit strictly
//! decreases on every accepted iteration.

pub mod arrowhead;
pub mod rts;
pub mod sqp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use arrowhead::{solve_arrowhead, ArrowheadSolution};
pub use rts::{rts_smooth, StackedObservation};
pub use sqp::{
    extract_constrained_covariance, reduce_system, reduced_gradient_norm, sqp_step, Multipliers,
    SqpStep,
};

use crate::problem::{
    build_constraints, build_gn_system_with, constraint_l1, total_cost, EstimationProblem, Layout,
    OpPoint,
};
use crate::{Error, Result};

/// Iteration and line-search tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub constraint_tol: f64,
    /// Armijo slope fraction η ∈ (0, 1).
    pub armijo_eta: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    /// Merit penalty margin over ‖λ‖_∞.
    pub merit_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            constraint_tol: 1e-8,
            armijo_eta: 1e-4,
            backtrack: 0.5,
            merit_margin: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0 && self.constraint_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.armijo_eta > 0.0 && self.armijo_eta < 1.0) {
            return Err(Error::Config("armijo_eta must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One structured diagnostics row per iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub merit: f64,
    pub constraint_norm: f64,
    pub reduced_grad_norm: f64,
    pub alpha: f64,
    pub mu: f64,
    /// Smallest squared Cholesky pivot seen in the iteration's solve (lower
    /// bound flavor of an eigenvalue estimate).
    pub eigmin_est: f64,
    pub jittered: bool,
}

/// Convergence summary shared by both loops.
#[derive(Debug, Clone)]
pub struct SolveStats {
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub final_constraint_norm: f64,
    pub records: Vec<IterationRecord>,
}

/// Per-variable Gaussian belief in original coordinates.
#[derive(Debug, Clone)]
pub struct BeliefBlocks {
    /// Means and covariances for ξ_0..ξ_K (the anchor has zero covariance).
    pub states: Vec<(DVector<f64>, DMatrix<f64>)>,
    /// (landmark id, mean, covariance) for every estimated landmark.
    pub landmarks: Vec<(usize, DVector<f64>, DMatrix<f64>)>,
}

/// Gauss-Newton output: solution point plus covariance blocks of the free
/// variables in problem coordinates (lifted for Koopman engines).
pub struct GnSolution {
    pub op: OpPoint,
    pub cov_x: Vec<DMatrix<f64>>,
    pub cov_l: Vec<DMatrix<f64>>,
    pub stats: SolveStats,
}

/// SQP output: solution point, multipliers, and covariance blocks in the
/// constraint tangent coordinates (original degrees of freedom).
pub struct SqpSolution {
    pub op: OpPoint,
    pub lam: Multipliers,
    pub cov_x: Vec<DMatrix<f64>>,
    pub cov_l: Vec<DMatrix<f64>>,
    pub stats: SolveStats,
}

fn dot_blocks(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn grad_inf_norm(gx: &[DVector<f64>], gl: &[DVector<f64>]) -> f64 {
    gx.iter()
        .chain(gl.iter())
        .map(|g| if g.is_empty() { 0.0 } else { g.amax() })
        .fold(0.0, f64::max)
}

/// Backtracking line search on the merit function. Returns the accepted
/// step size, the new operating point, and the merit value there.
///
/// `dir_deriv` is the merit directional derivative `D`; a zero step is
/// accepted immediately with α = 1.
pub fn line_search(
    problem: &EstimationProblem,
    layout: &Layout,
    op: &OpPoint,
    dx: &[DVector<f64>],
    dl: &[DVector<f64>],
    merit0: f64,
    dir_deriv: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<(f64, OpPoint, f64)> {
    let step_inf = dx
        .iter()
        .chain(dl.iter())
        .map(|v| if v.is_empty() { 0.0 } else { v.amax() })
        .fold(0.0, f64::max);
    if step_inf == 0.0 {
        return Ok((1.0, op.clone(), merit0));
    }
    let slack = 1e-12 * (1.0 + merit0.abs());
    let mut alpha = 1.0;
    loop {
        let trial = op.step(layout, dx, dl, alpha);
        let merit = total_cost(problem, &trial) + mu * constraint_l1(problem, &trial, layout)?;
        if merit.is_finite() && merit <= merit0 + cfg.armijo_eta * alpha * dir_deriv + slack {
            return Ok((alpha, trial, merit));
        }
        alpha *= cfg.backtrack;
        if alpha < 1e-8 {
            return Err(Error::LineSearch { alpha });
        }
    }
}

/// Unconstrained Gauss-Newton (UKL and the model-based baselines).
///
/// Iterates assemble → arrowhead solve → line search until the gradient or
/// the step drops below tolerance; on a quadratic cost the first full step
/// lands on the minimum and the loop exits on the next gradient check. The
/// covariance blocks of F⁻¹ are extracted at the solution.
pub fn run_gauss_newton(
    problem: &EstimationProblem,
    init: OpPoint,
    cfg: &SolverConfig,
) -> Result<GnSolution> {
    cfg.validate()?;
    problem.validate()?;
    let layout = Layout::of(problem);
    let mut op = init;
    let mut records = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let sys = build_gn_system_with(problem, &op, &layout)?;
        let grad_norm = grad_inf_norm(&sys.gx, &sys.gl);
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let sol = solve_arrowhead(&sys, false)?;
        // ∇Jᵀ δq = -gᵀ δq; for F PSD this is nonpositive.
        let gd = dot_blocks(&sys.gx, &sol.dx) + dot_blocks(&sys.gl, &sol.dl);
        let cost0 = total_cost(problem, &op);
        let (alpha, new_op, merit) =
            line_search(problem, &layout, &op, &sol.dx, &sol.dl, cost0, -gd, 0.0, cfg)?;
        let step_norm = alpha * sol.max_step();
        op = new_op;
        iterations += 1;
        records.push(IterationRecord {
            iteration: iterations,
            cost: merit,
            merit,
            constraint_norm: 0.0,
            reduced_grad_norm: grad_norm,
            alpha,
            mu: 0.0,
            eigmin_est: sol.min_pivot_sq,
            jittered: sol.jittered,
        });
        if step_norm < cfg.step_tol {
            converged = true;
            break;
        }
    }

    let sys = build_gn_system_with(problem, &op, &layout)?;
    let sol = solve_arrowhead(&sys, true)?;
    let final_cost = total_cost(problem, &op);
    Ok(GnSolution {
        op,
        cov_x: sol.cov_x.expect("requested"),
        cov_l: sol.cov_l.expect("requested"),
        stats: SolveStats {
            converged,
            iterations,
            final_cost,
            final_constraint_norm: 0.0,
            records,
        },
    })
}

/// Constrained solve (CKL / RCKL): nullspace SQP iterations with the L1
/// merit line search, until the constraint violation and the reduced
/// gradient are both below tolerance. Covariances come from the reduced
/// Hessian at the solution, in tangent coordinates.
pub fn run_sqp(
    problem: &EstimationProblem,
    init: OpPoint,
    cfg: &SolverConfig,
) -> Result<SqpSolution> {
    cfg.validate()?;
    problem.validate()?;
    if problem.constraints.is_none() {
        return Err(Error::Config("run_sqp requires constraint specs".into()));
    }
    let layout = Layout::of(problem);
    let mut op = init;
    let mut records = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let cons0 = build_constraints(problem, &op, &layout)?;
    let mut lam = Multipliers::zeros_like(&cons0);
    let mut mu = 1.0;

    loop {
        let cons = build_constraints(problem, &op, &layout)?;
        let sys = build_gn_system_with(problem, &op, &layout)?;
        let h_norm = cons.max_violation();
        let red_grad = reduced_gradient_norm(&sys, &cons);
        if h_norm < cfg.constraint_tol && red_grad < cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }

        let step = sqp_step(&sys, &cons, &lam)?;
        let mut lam_trial = lam.clone();
        lam_trial.step(&step.dlam_x, &step.dlam_l, 1.0);
        mu = (lam_trial.max_abs() + cfg.merit_margin).max(mu.min(1e8)).max(1.0);

        let cost0 = total_cost(problem, &op);
        let l1 = constraint_l1(problem, &op, &layout)?;
        let merit0 = cost0 + mu * l1;
        let gd = dot_blocks(&sys.gx, &step.dx) + dot_blocks(&sys.gl, &step.dl);
        let dir_deriv = -gd - mu * l1;
        let (alpha, new_op, merit) =
            line_search(problem, &layout, &op, &step.dx, &step.dl, merit0, dir_deriv, mu, cfg)?;
        let step_norm = alpha * step.max_step();
        op = new_op;
        lam.step(&step.dlam_x, &step.dlam_l, alpha);
        iterations += 1;
        records.push(IterationRecord {
            iteration: iterations,
            cost: merit - mu * 0.0,
            merit,
            constraint_norm: h_norm,
            reduced_grad_norm: red_grad,
            alpha,
            mu,
            eigmin_est: step.min_pivot_sq,
            jittered: step.jittered,
        });
        if step_norm < cfg.step_tol {
            let cons_end = build_constraints(problem, &op, &layout)?;
            converged = cons_end.max_violation() < cfg.constraint_tol;
            break;
        }
    }

    let cons = build_constraints(problem, &op, &layout)?;
    let sys = build_gn_system_with(problem, &op, &layout)?;
    let (cov_x, cov_l) = extract_constrained_covariance(&sys, &cons)?;
    let final_cost = total_cost(problem, &op);
    let final_constraint_norm = cons.max_violation();
    Ok(SqpSolution {
        op,
        lam,
        cov_x,
        cov_l,
        stats: SolveStats {
            converged,
            iterations,
            final_cost,
            final_constraint_norm,
            records,
        },
    })
}
