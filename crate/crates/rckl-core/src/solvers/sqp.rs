//! Nullspace-method SQP step for the constrained Koopman problems.
//!
//! At each iteration the KKT system
//!
//! ```text
//!   [ F  Sᵀ ] [  δq ]   [ g + Sᵀ λ ]
//!   [ S  0  ] [ -δλ ] = [   -h     ]
//! ```
//!
//! is solved by splitting `δq = S_⊥ c_⊥ + S_∥ c_∥`: the normal component
//! restores linearized feasibility blockwise from `(S S_⊥) c_⊥ = -h`, and
//! the tangent component solves the reduced system
//! `(S_∥ᵀ F S_∥) c_∥ = S_∥ᵀ (g - F S_⊥ c_⊥)`, which keeps the SLAM
//! arrowhead sparsity because the bases are block-diagonal. Multipliers are
//! recovered blockwise from `(S S_⊥)ᵀ δλ = S_⊥ᵀ (F δq - g - Sᵀ λ)`.
//!
//! At convergence the covariance of the original variables is the inverse of
//! the reduced Hessian, extracted block-diagonally with the same arrowhead
//! machinery.

use nalgebra::{DMatrix, DVector};

use crate::linalg::min_eig_sym;
use crate::problem::{ArrowheadSystem, BlockConstraint, ConstraintSystem};
use crate::solvers::arrowhead::solve_arrowhead;
use crate::{Error, Result};

/// Lagrange multipliers, partitioned like the constraints.
#[derive(Debug, Clone)]
pub struct Multipliers {
    pub x: Vec<DVector<f64>>,
    pub l: Vec<DVector<f64>>,
}

impl Multipliers {
    pub fn zeros_like(cons: &ConstraintSystem) -> Self {
        Self {
            x: cons.state.iter().map(|b| DVector::zeros(b.h.len())).collect(),
            l: cons.lmk.iter().map(|b| DVector::zeros(b.h.len())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(self.l.iter())
            .map(|v| if v.is_empty() { 0.0 } else { v.amax() })
            .fold(0.0, f64::max)
    }

    pub fn step(&mut self, dx: &[DVector<f64>], dl: &[DVector<f64>], alpha: f64) {
        for (lam, d) in self.x.iter_mut().zip(dx) {
            *lam += alpha * d;
        }
        for (lam, d) in self.l.iter_mut().zip(dl) {
            *lam += alpha * d;
        }
    }
}

/// Result of one SQP linear solve.
#[derive(Debug, Clone)]
pub struct SqpStep {
    pub dx: Vec<DVector<f64>>,
    pub dl: Vec<DVector<f64>>,
    pub dlam_x: Vec<DVector<f64>>,
    pub dlam_l: Vec<DVector<f64>>,
    /// `‖S δq + h‖_∞` over all blocks (linearized feasibility post-check).
    pub feasibility_residual: f64,
    pub jittered: bool,
    pub min_pivot_sq: f64,
}

impl SqpStep {
    pub fn max_step(&self) -> f64 {
        self.dx
            .iter()
            .chain(self.dl.iter())
            .map(|v| if v.is_empty() { 0.0 } else { v.amax() })
            .fold(0.0, f64::max)
    }
}

fn block_normal_chol(b: &BlockConstraint) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    // S S_⊥ = S Sᵀ, SPD when S has full row rank.
    let m = &b.s * &b.basis.s_perp;
    nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Infeasible(format!(
            "constraint normal matrix not PD (eigmin {:.3e})",
            min_eig_sym(&m)
        ))
    })
}

/// Projects the full system onto the constraint tangent bases; the reduced
/// system keeps the arrowhead pattern with tangent-sized blocks.
pub fn reduce_system(sys: &ArrowheadSystem, cons: &ConstraintSystem) -> ArrowheadSystem {
    let ns = sys.num_state_blocks();
    let nl = sys.num_lmk_blocks();
    let td_x = cons.state.first().map_or(sys.state_dim, |b| b.basis.s_par.ncols());
    let td_l = cons.lmk.first().map_or(sys.lmk_dim, |b| b.basis.s_par.ncols());
    let mut red = ArrowheadSystem::zeros(ns, td_x, nl, td_l);
    for i in 0..ns {
        let p = &cons.state[i].basis.s_par;
        red.fx_diag[i] = p.transpose() * &sys.fx_diag[i] * p;
        red.gx[i] = p.transpose() * &sys.gx[i];
    }
    for i in 0..ns.saturating_sub(1) {
        red.fx_off[i] =
            cons.state[i + 1].basis.s_par.transpose() * &sys.fx_off[i] * &cons.state[i].basis.s_par;
    }
    for j in 0..nl {
        let p = &cons.lmk[j].basis.s_par;
        red.fl_diag[j] = p.transpose() * &sys.fl_diag[j] * p;
        red.gl[j] = p.transpose() * &sys.gl[j];
        red.cross[j] = sys.cross[j]
            .iter()
            .map(|(i, blk)| (*i, cons.state[*i].basis.s_par.transpose() * blk * p))
            .collect();
    }
    red
}

/// Infinity norm of the reduced gradient `S_∥ᵀ g` (zero at a KKT point).
pub fn reduced_gradient_norm(sys: &ArrowheadSystem, cons: &ConstraintSystem) -> f64 {
    let mut norm: f64 = 0.0;
    for (i, b) in cons.state.iter().enumerate() {
        let r = b.basis.s_par.transpose() * &sys.gx[i];
        if !r.is_empty() {
            norm = norm.max(r.amax());
        }
    }
    for (j, b) in cons.lmk.iter().enumerate() {
        let r = b.basis.s_par.transpose() * &sys.gl[j];
        if !r.is_empty() {
            norm = norm.max(r.amax());
        }
    }
    norm
}

/// Solves one SQP iteration with the nullspace method.
pub fn sqp_step(
    sys: &ArrowheadSystem,
    cons: &ConstraintSystem,
    lam: &Multipliers,
) -> Result<SqpStep> {
    let ns = sys.num_state_blocks();
    let nl = sys.num_lmk_blocks();
    debug_assert_eq!(cons.state.len(), ns);
    debug_assert_eq!(cons.lmk.len(), nl);

    // Normal step: (S S_⊥) c_⊥ = -h, blockwise.
    let mut chols_x = Vec::with_capacity(ns);
    let mut chols_l = Vec::with_capacity(nl);
    let mut t_perp_x = Vec::with_capacity(ns);
    let mut t_perp_l = Vec::with_capacity(nl);
    for b in &cons.state {
        let chol = block_normal_chol(b)?;
        let c_perp = chol.solve(&(-&b.h));
        t_perp_x.push(&b.basis.s_perp * c_perp);
        chols_x.push(chol);
    }
    for b in &cons.lmk {
        let chol = block_normal_chol(b)?;
        let c_perp = chol.solve(&(-&b.h));
        t_perp_l.push(&b.basis.s_perp * c_perp);
        chols_l.push(chol);
    }

    // Tangent step: reduced arrowhead with g_∥ = S_∥ᵀ (g - F t_⊥).
    let (ft_x, ft_l) = sys.matvec(&t_perp_x, &t_perp_l);
    let mut red = reduce_system(sys, cons);
    for i in 0..ns {
        red.gx[i] = cons.state[i].basis.s_par.transpose() * (&sys.gx[i] - &ft_x[i]);
    }
    for j in 0..nl {
        red.gl[j] = cons.lmk[j].basis.s_par.transpose() * (&sys.gl[j] - &ft_l[j]);
    }
    let red_sol = solve_arrowhead(&red, false)?;

    let dx: Vec<DVector<f64>> = (0..ns)
        .map(|i| &t_perp_x[i] + &cons.state[i].basis.s_par * &red_sol.dx[i])
        .collect();
    let dl: Vec<DVector<f64>> = (0..nl)
        .map(|j| &t_perp_l[j] + &cons.lmk[j].basis.s_par * &red_sol.dl[j])
        .collect();

    // Multiplier update: (S S_⊥)ᵀ δλ = S_⊥ᵀ (F δq - g - Sᵀ λ). The normal
    // matrix is symmetric, so the factor is reused.
    let (fdq_x, fdq_l) = sys.matvec(&dx, &dl);
    let mut dlam_x = Vec::with_capacity(ns);
    let mut dlam_l = Vec::with_capacity(nl);
    for i in 0..ns {
        let b = &cons.state[i];
        let rhs = b.basis.s_perp.transpose()
            * (&fdq_x[i] - &sys.gx[i] - b.s.transpose() * &lam.x[i]);
        dlam_x.push(chols_x[i].solve(&rhs));
    }
    for j in 0..nl {
        let b = &cons.lmk[j];
        let rhs = b.basis.s_perp.transpose()
            * (&fdq_l[j] - &sys.gl[j] - b.s.transpose() * &lam.l[j]);
        dlam_l.push(chols_l[j].solve(&rhs));
    }

    // Linearized feasibility post-check: S δq = -h.
    let mut feas: f64 = 0.0;
    for (i, b) in cons.state.iter().enumerate() {
        let r = &b.s * &dx[i] + &b.h;
        if !r.is_empty() {
            feas = feas.max(r.amax());
        }
    }
    for (j, b) in cons.lmk.iter().enumerate() {
        let r = &b.s * &dl[j] + &b.h;
        if !r.is_empty() {
            feas = feas.max(r.amax());
        }
    }

    Ok(SqpStep {
        dx,
        dl,
        dlam_x,
        dlam_l,
        feasibility_residual: feas,
        jittered: red_sol.jittered,
        min_pivot_sq: red_sol.min_pivot_sq,
    })
}

/// Covariance of the original (tangent) variables at the solution:
/// the block diagonal of `(S_∥ᵀ F S_∥)⁻¹`, one block per free state and
/// per free landmark, in tangent coordinates.
pub fn extract_constrained_covariance(
    sys: &ArrowheadSystem,
    cons: &ConstraintSystem,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let red = reduce_system(sys, cons);
    let sol = solve_arrowhead(&red, true)?;
    Ok((sol.cov_x.expect("requested"), sol.cov_l.expect("requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{LiftingSpec, RffBlockDef};

    /// Dense KKT oracle for small systems.
    pub(crate) fn dense_kkt(
        sys: &ArrowheadSystem,
        cons: &ConstraintSystem,
        lam: &Multipliers,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let (f, g) = sys.to_dense();
        let n = f.nrows();
        let nd = sys.state_dim;
        let ld = sys.lmk_dim;
        let m_total: usize = cons.state.iter().chain(cons.lmk.iter()).map(|b| b.h.len()).sum();
        let mut s = DMatrix::zeros(m_total, n);
        let mut h = DVector::zeros(m_total);
        let mut lam_stack = DVector::zeros(m_total);
        let mut row = 0;
        for (i, b) in cons.state.iter().enumerate() {
            let m = b.h.len();
            s.view_mut((row, i * nd), (m, nd)).copy_from(&b.s);
            h.rows_mut(row, m).copy_from(&b.h);
            lam_stack.rows_mut(row, m).copy_from(&lam.x[i]);
            row += m;
        }
        let base = sys.num_state_blocks() * nd;
        for (j, b) in cons.lmk.iter().enumerate() {
            let m = b.h.len();
            s.view_mut((row, base + j * ld), (m, ld)).copy_from(&b.s);
            h.rows_mut(row, m).copy_from(&b.h);
            lam_stack.rows_mut(row, m).copy_from(&lam.l[j]);
            row += m;
        }
        let mut kkt = DMatrix::zeros(n + m_total, n + m_total);
        kkt.view_mut((0, 0), (n, n)).copy_from(&f);
        kkt.view_mut((0, n), (n, m_total)).copy_from(&s.transpose());
        kkt.view_mut((n, 0), (m_total, n)).copy_from(&s);
        let mut rhs = DVector::zeros(n + m_total);
        rhs.rows_mut(0, n).copy_from(&(&g + s.transpose() * &lam_stack));
        rhs.rows_mut(n, m_total).copy_from(&(-&h));
        let sol = kkt.lu().solve(&rhs).expect("KKT invertible");
        let dq = sol.rows(0, n).into_owned();
        let dlam = -sol.rows(n, m_total).into_owned();
        let dx = (0..sys.num_state_blocks()).map(|i| dq.rows(i * nd, nd).into_owned()).collect();
        let dl = (0..sys.num_lmk_blocks())
            .map(|j| dq.rows(base + j * ld, ld).into_owned())
            .collect();
        let mut dlam_x = Vec::new();
        let mut dlam_l = Vec::new();
        let mut row = 0;
        for b in &cons.state {
            dlam_x.push(dlam.rows(row, b.h.len()).into_owned());
            row += b.h.len();
        }
        for b in &cons.lmk {
            dlam_l.push(dlam.rows(row, b.h.len()).into_owned());
            row += b.h.len();
        }
        (dx, dl, dlam_x, dlam_l)
    }

    fn toy_constraints(
        spec_x: &LiftingSpec,
        spec_l: &LiftingSpec,
        xs: &[DVector<f64>],
        ls: &[DVector<f64>],
    ) -> ConstraintSystem {
        ConstraintSystem {
            state: xs
                .iter()
                .map(|x| BlockConstraint {
                    h: spec_x.constraint_residual(x).unwrap(),
                    s: spec_x.constraint_jacobian(x).unwrap(),
                    basis: spec_x.nullspace_basis(x).unwrap(),
                })
                .collect(),
            lmk: ls
                .iter()
                .map(|l| BlockConstraint {
                    h: spec_l.constraint_residual(l).unwrap(),
                    s: spec_l.constraint_jacobian(l).unwrap(),
                    basis: spec_l.nullspace_basis(l).unwrap(),
                })
                .collect(),
        }
    }

    #[test]
    fn matches_dense_kkt_solve() {
        // Lifted 2-dim heads with features, slightly off-manifold points.
        let spec_x =
            LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 3, 1.0)], vec![], 3).unwrap();
        let spec_l =
            LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 2, 1.5)], vec![], 4).unwrap();
        let ns = 8;
        let nl = 2;
        let sys = crate::solvers::arrowhead::tests::random_arrowhead(
            ns,
            spec_x.lifted_dim(),
            nl,
            spec_l.lifted_dim(),
            0.5,
            9,
        );
        let xs: Vec<DVector<f64>> = (0..ns)
            .map(|i| {
                let head = DVector::from_vec(vec![0.3 * i as f64, 1.0 - 0.1 * i as f64]);
                let mut x = spec_x.lift(&head).unwrap();
                x[2] += 0.05; // off the feature manifold
                x
            })
            .collect();
        let ls: Vec<DVector<f64>> = (0..nl)
            .map(|j| {
                let head = DVector::from_vec(vec![1.0 + j as f64, -2.0]);
                let mut l = spec_l.lift(&head).unwrap();
                l[3] -= 0.1;
                l
            })
            .collect();
        let cons = toy_constraints(&spec_x, &spec_l, &xs, &ls);
        let mut lam = Multipliers::zeros_like(&cons);
        for v in lam.x.iter_mut().chain(lam.l.iter_mut()) {
            for i in 0..v.len() {
                v[i] = 0.1 * (i as f64 + 1.0);
            }
        }

        let step = sqp_step(&sys, &cons, &lam).unwrap();
        let (dx, dl, dlam_x, dlam_l) = dense_kkt(&sys, &cons, &lam);
        for i in 0..ns {
            assert!((&step.dx[i] - &dx[i]).amax() < 1e-8, "dx block {i}");
            assert!((&step.dlam_x[i] - &dlam_x[i]).amax() < 1e-8, "dlam_x block {i}");
        }
        for j in 0..nl {
            assert!((&step.dl[j] - &dl[j]).amax() < 1e-8, "dl block {j}");
            assert!((&step.dlam_l[j] - &dlam_l[j]).amax() < 1e-8, "dlam_l block {j}");
        }
        assert!(step.feasibility_residual < 1e-8);
    }

    #[test]
    fn zero_at_feasible_stationary_point() {
        let spec_x =
            LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 3, 1.0)], vec![], 5).unwrap();
        let spec_l = LiftingSpec::identity(2);
        let ns = 3;
        let xs: Vec<DVector<f64>> = (0..ns)
            .map(|i| spec_x.lift(&DVector::from_vec(vec![i as f64, 0.5])).unwrap())
            .collect();
        let cons = toy_constraints(&spec_x, &spec_l, &xs, &[]);
        // SPD F with zero gradient: KKT satisfied at a feasible point.
        let mut sys = crate::solvers::arrowhead::tests::random_arrowhead(
            ns,
            spec_x.lifted_dim(),
            0,
            2,
            0.0,
            11,
        );
        for g in sys.gx.iter_mut() {
            g.fill(0.0);
        }
        let lam = Multipliers::zeros_like(&cons);
        let step = sqp_step(&sys, &cons, &lam).unwrap();
        assert!(step.max_step() < 1e-10);
    }

    #[test]
    fn covariance_matches_dense_reduced_inverse() {
        let spec_x =
            LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 2, 1.2)], vec![], 6).unwrap();
        let spec_l =
            LiftingSpec::new(2, &[RffBlockDef::iso(vec![0, 1], 2, 0.8)], vec![], 7).unwrap();
        let (ns, nl) = (6, 2);
        let sys = crate::solvers::arrowhead::tests::random_arrowhead(
            ns,
            spec_x.lifted_dim(),
            nl,
            spec_l.lifted_dim(),
            0.8,
            13,
        );
        let xs: Vec<DVector<f64>> = (0..ns)
            .map(|i| spec_x.lift(&DVector::from_vec(vec![0.2 * i as f64, -0.4])).unwrap())
            .collect();
        let ls: Vec<DVector<f64>> = (0..nl)
            .map(|j| spec_l.lift(&DVector::from_vec(vec![j as f64, 2.0])).unwrap())
            .collect();
        let cons = toy_constraints(&spec_x, &spec_l, &xs, &ls);

        let (cov_x, cov_l) = extract_constrained_covariance(&sys, &cons).unwrap();

        // Dense oracle: stack S_par, invert S_parᵀ F S_par.
        let (f, _) = sys.to_dense();
        let tdx = 2;
        let tdl = 2;
        let n = f.nrows();
        let t = ns * tdx + nl * tdl;
        let mut s_par = DMatrix::zeros(n, t);
        for (i, b) in cons.state.iter().enumerate() {
            s_par
                .view_mut((i * spec_x.lifted_dim(), i * tdx), (spec_x.lifted_dim(), tdx))
                .copy_from(&b.basis.s_par);
        }
        let base_r = ns * spec_x.lifted_dim();
        let base_t = ns * tdx;
        for (j, b) in cons.lmk.iter().enumerate() {
            s_par
                .view_mut(
                    (base_r + j * spec_l.lifted_dim(), base_t + j * tdl),
                    (spec_l.lifted_dim(), tdl),
                )
                .copy_from(&b.basis.s_par);
        }
        let reduced = s_par.transpose() * &f * &s_par;
        let dense_inv = reduced.try_inverse().unwrap();
        for i in 0..ns {
            let expect = dense_inv.view((i * tdx, i * tdx), (tdx, tdx));
            assert!((&cov_x[i] - expect).amax() < 1e-8, "state cov {i}");
        }
        for j in 0..nl {
            let expect = dense_inv.view((base_t + j * tdl, base_t + j * tdl), (tdl, tdl));
            assert!((&cov_l[j] - expect).amax() < 1e-8, "landmark cov {j}");
        }
    }
}
