//! Sparse block Cholesky for the SLAM arrowhead pattern.
//!
//! With more pose blocks than landmark blocks, the states are eliminated
//! first: the block-tridiagonal state part factors without fill, the
//! landmark columns are carried through by block forward substitution, and a
//! dense Cholesky handles the landmark Schur complement. The total cost is
//! O(N³(V³ + V²K)). With more landmarks than poses the elimination order
//! flips: the block-diagonal landmark part is eliminated into a dense state
//! system, giving O(N³(K³ + K²V)).
//!
//! Covariance blocks (the diagonal blocks of F⁻¹) come from the same
//! factors: a Takahashi-style backward recursion on the tridiagonal factor
//! plus a low-rank correction through the landmark Schur complement, so no
//! dense inverse of the full system is ever formed.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{min_eig_sym, symmetrize};
use crate::problem::ArrowheadSystem;
use crate::{Error, Result};

/// Relative diagonal jitter applied once if the first factorization fails.
const JITTER_REL: f64 = 1e-10;

/// Solution of `F δq = g` with optional diagonal blocks of `F⁻¹`.
#[derive(Debug, Clone)]
pub struct ArrowheadSolution {
    pub dx: Vec<DVector<f64>>,
    pub dl: Vec<DVector<f64>>,
    pub cov_x: Option<Vec<DMatrix<f64>>>,
    pub cov_l: Option<Vec<DMatrix<f64>>>,
    /// Whether the jitter retry was needed.
    pub jittered: bool,
    /// Cheap positive-definiteness indicator: the smallest squared diagonal
    /// entry seen across all Cholesky factors.
    pub min_pivot_sq: f64,
}

impl ArrowheadSolution {
    pub fn max_step(&self) -> f64 {
        self.dx
            .iter()
            .chain(self.dl.iter())
            .map(|v| if v.is_empty() { 0.0 } else { v.amax() })
            .fold(0.0, f64::max)
    }
}

/// Solves the arrowhead system, retrying once with trace-scaled jitter if a
/// Cholesky fails; the second failure reports an eigenvalue estimate of the
/// offending block.
pub fn solve_arrowhead(sys: &ArrowheadSystem, compute_cov: bool) -> Result<ArrowheadSolution> {
    match solve_inner(sys, 0.0, compute_cov) {
        Ok(mut sol) => {
            sol.jittered = false;
            Ok(sol)
        }
        Err(Error::Indefinite { .. }) => {
            let scale = diag_scale(sys);
            let shift = JITTER_REL * scale;
            let mut sol = solve_inner(sys, shift, compute_cov)?;
            sol.jittered = true;
            Ok(sol)
        }
        Err(e) => Err(e),
    }
}

fn diag_scale(sys: &ArrowheadSystem) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for b in sys.fx_diag.iter().chain(sys.fl_diag.iter()) {
        total += b.diagonal().sum();
        count += b.nrows();
    }
    if count == 0 {
        1.0
    } else {
        (total / count as f64).abs().max(1.0)
    }
}

fn chol_block(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let eigmin_src = m.clone();
    nalgebra::Cholesky::new(m).ok_or_else(|| Error::Indefinite { eigmin: min_eig_sym(&eigmin_src) })
}

fn shifted(m: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    if shift != 0.0 {
        for i in 0..out.nrows() {
            out[(i, i)] += shift;
        }
    }
    out
}

fn min_diag_sq(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min)
}

fn solve_inner(sys: &ArrowheadSystem, shift: f64, compute_cov: bool) -> Result<ArrowheadSolution> {
    let ns = sys.num_state_blocks();
    let nl = sys.num_lmk_blocks();
    if ns == 0 && nl == 0 {
        return Err(Error::NothingToSolve);
    }
    if ns == 0 {
        return solve_landmarks_only(sys, shift, compute_cov);
    }
    if nl > ns {
        return solve_landmarks_first(sys, shift, compute_cov);
    }
    solve_states_first(sys, shift, compute_cov)
}

/// Block-bidiagonal Cholesky factor of the state tridiagonal part.
struct TridiagFactor {
    /// Lower-triangular diagonal factors L_i.
    l: Vec<DMatrix<f64>>,
    /// Sub-diagonal factors M_i = L[x_{i+1}, x_i].
    m: Vec<DMatrix<f64>>,
    min_pivot_sq: f64,
}

impl TridiagFactor {
    fn new(sys: &ArrowheadSystem, shift: f64) -> Result<Self> {
        let ns = sys.num_state_blocks();
        let mut l = Vec::with_capacity(ns);
        let mut m = Vec::with_capacity(ns.saturating_sub(1));
        let mut min_pivot = f64::INFINITY;
        for i in 0..ns {
            let mut d = shifted(&sys.fx_diag[i], shift);
            if i > 0 {
                // M_{i-1} solves M Lᵀ = F_off, i.e. L Mᵀ = F_offᵀ.
                let mt = l[i - 1]
                    .solve_lower_triangular(&sys.fx_off[i - 1].transpose())
                    .ok_or(Error::Indefinite { eigmin: 0.0 })?;
                let mi: DMatrix<f64> = mt.transpose();
                d -= &mi * mi.transpose();
                m.push(mi);
            }
            let chol = chol_block(d)?;
            let li = chol.l();
            min_pivot = min_pivot.min(min_diag_sq(&li));
            l.push(li);
        }
        Ok(Self { l, m, min_pivot_sq: min_pivot })
    }

    /// Forward substitution `L_x · out = rhs` on block-stacked columns.
    fn forward(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(rhs.len());
        for i in 0..rhs.len() {
            let mut b = rhs[i].clone();
            if i > 0 {
                b -= &self.m[i - 1] * &out[i - 1];
            }
            out.push(self.l[i].solve_lower_triangular(&b).expect("factor has positive diagonal"));
        }
        out
    }

    /// Backward substitution `L_xᵀ · out = rhs` on block-stacked columns.
    fn backward(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let ns = rhs.len();
        let mut out: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); ns];
        for i in (0..ns).rev() {
            let mut b = rhs[i].clone();
            if i + 1 < ns {
                b -= self.m[i].transpose() * &out[i + 1];
            }
            out[i] = self.l[i].tr_solve_lower_triangular(&b).expect("factor has positive diagonal");
        }
        out
    }

    /// Diagonal blocks of (L Lᵀ)⁻¹ by the backward Takahashi recursion
    /// T_i = L_i⁻ᵀ L_i⁻¹ + G_iᵀ T_{i+1} G_i with G_i = M_i L_i⁻¹.
    fn takahashi_diag(&self) -> Vec<DMatrix<f64>> {
        let ns = self.l.len();
        let mut t: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); ns];
        for i in (0..ns).rev() {
            let n = self.l[i].nrows();
            let linv = self.l[i]
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .expect("factor has positive diagonal");
            let mut ti = linv.transpose() * &linv;
            if i + 1 < ns {
                let g = &self.m[i] * &linv;
                ti += g.transpose() * &t[i + 1] * g;
            }
            symmetrize(&mut ti);
            t[i] = ti;
        }
        t
    }
}

/// Stacks the cross column of landmark block `j` as per-state blocks.
fn cross_column(sys: &ArrowheadSystem, j: usize) -> Vec<DMatrix<f64>> {
    let ns = sys.num_state_blocks();
    let mut col = vec![DMatrix::zeros(sys.state_dim, sys.lmk_dim); ns];
    for (i, blk) in &sys.cross[j] {
        col[*i] = blk.clone();
    }
    col
}

fn solve_states_first(
    sys: &ArrowheadSystem,
    shift: f64,
    compute_cov: bool,
) -> Result<ArrowheadSolution> {
    let ns = sys.num_state_blocks();
    let nl = sys.num_lmk_blocks();
    let nd = sys.state_dim;
    let ld = sys.lmk_dim;

    let factor = TridiagFactor::new(sys, shift)?;
    let mut min_pivot = factor.min_pivot_sq;

    // Z = L_x⁻¹ F_xl, stacked over landmarks: per state block, ns blocks of
    // nd × (nl·ld).
    let z: Vec<DMatrix<f64>> = if nl > 0 {
        let rhs: Vec<DMatrix<f64>> = (0..ns)
            .map(|i| {
                let mut b = DMatrix::zeros(nd, nl * ld);
                for j in 0..nl {
                    for (bi, blk) in &sys.cross[j] {
                        if *bi == i {
                            b.view_mut((0, j * ld), (nd, ld)).copy_from(blk);
                        }
                    }
                }
                b
            })
            .collect();
        factor.forward(&rhs)
    } else {
        Vec::new()
    };

    // Landmark Schur complement and its dense Cholesky.
    let (schur_chol, schur_l) = if nl > 0 {
        let mut schur = DMatrix::zeros(nl * ld, nl * ld);
        for j in 0..nl {
            schur
                .view_mut((j * ld, j * ld), (ld, ld))
                .copy_from(&shifted(&sys.fl_diag[j], shift));
        }
        for zi in &z {
            schur -= zi.transpose() * zi;
        }
        symmetrize(&mut schur);
        let chol = chol_block(schur)?;
        let l = chol.l();
        min_pivot = min_pivot.min(min_diag_sq(&l));
        (Some(chol), Some(l))
    } else {
        (None, None)
    };

    // Forward pass on the right-hand side.
    let gx_cols: Vec<DMatrix<f64>> = sys.gx.iter().map(|g| DMatrix::from_column_slice(nd, 1, g.as_slice())).collect();
    let p = factor.forward(&gx_cols);

    let (dl, pl) = if nl > 0 {
        let mut ql = DVector::zeros(nl * ld);
        for j in 0..nl {
            ql.rows_mut(j * ld, ld).copy_from(&sys.gl[j]);
        }
        for (i, zi) in z.iter().enumerate() {
            ql -= zi.transpose() * p[i].column(0);
        }
        let sl = schur_l.as_ref().expect("set when nl > 0");
        let pl = sl.solve_lower_triangular(&ql).expect("factor has positive diagonal");
        let dl_stack = sl.tr_solve_lower_triangular(&pl).expect("factor has positive diagonal");
        let dl: Vec<DVector<f64>> =
            (0..nl).map(|j| dl_stack.rows(j * ld, ld).into_owned()).collect();
        (dl, Some(dl_stack))
    } else {
        (Vec::new(), None)
    };

    // Backward pass for the states.
    let rhs_back: Vec<DMatrix<f64>> = (0..ns)
        .map(|i| {
            let mut b = p[i].clone();
            if let Some(dls) = &pl {
                b -= &z[i] * dls;
            }
            b
        })
        .collect();
    let dx_cols = factor.backward(&rhs_back);
    let dx: Vec<DVector<f64>> = dx_cols.iter().map(|c| c.column(0).into_owned()).collect();

    let (cov_x, cov_l) = if compute_cov {
        let taka = factor.takahashi_diag();
        if nl > 0 {
            let sigma_l = schur_chol.as_ref().expect("set when nl > 0").inverse();
            let y = factor.backward(&z); // L_xᵀ⁻¹ Z, rows are Gᵀ blocks
            let cov_x: Vec<DMatrix<f64>> = (0..ns)
                .map(|i| {
                    let mut c = taka[i].clone() + &y[i] * &sigma_l * y[i].transpose();
                    symmetrize(&mut c);
                    c
                })
                .collect();
            let cov_l: Vec<DMatrix<f64>> = (0..nl)
                .map(|j| {
                    let mut c = sigma_l.view((j * ld, j * ld), (ld, ld)).into_owned();
                    symmetrize(&mut c);
                    c
                })
                .collect();
            (Some(cov_x), Some(cov_l))
        } else {
            (Some(taka), Some(Vec::new()))
        }
    } else {
        (None, None)
    };

    Ok(ArrowheadSolution { dx, dl, cov_x, cov_l, jittered: false, min_pivot_sq: min_pivot })
}

fn solve_landmarks_only(
    sys: &ArrowheadSystem,
    shift: f64,
    compute_cov: bool,
) -> Result<ArrowheadSolution> {
    let nl = sys.num_lmk_blocks();
    let mut dl = Vec::with_capacity(nl);
    let mut cov = Vec::with_capacity(nl);
    let mut min_pivot = f64::INFINITY;
    for j in 0..nl {
        let chol = chol_block(shifted(&sys.fl_diag[j], shift))?;
        min_pivot = min_pivot.min(min_diag_sq(&chol.l()));
        dl.push(chol.solve(&sys.gl[j]));
        if compute_cov {
            cov.push(chol.inverse());
        }
    }
    Ok(ArrowheadSolution {
        dx: Vec::new(),
        dl,
        cov_x: compute_cov.then(Vec::new),
        cov_l: compute_cov.then_some(cov),
        jittered: false,
        min_pivot_sq: min_pivot,
    })
}

/// More landmarks than poses: eliminate the block-diagonal landmark part
/// into a dense state system.
fn solve_landmarks_first(
    sys: &ArrowheadSystem,
    shift: f64,
    compute_cov: bool,
) -> Result<ArrowheadSolution> {
    let ns = sys.num_state_blocks();
    let nl = sys.num_lmk_blocks();
    let nd = sys.state_dim;
    let ld = sys.lmk_dim;
    let n = ns * nd;

    let mut fx = DMatrix::zeros(n, n);
    let mut gx = DVector::zeros(n);
    for i in 0..ns {
        fx.view_mut((i * nd, i * nd), (nd, nd)).copy_from(&shifted(&sys.fx_diag[i], shift));
        gx.rows_mut(i * nd, nd).copy_from(&sys.gx[i]);
    }
    for i in 0..ns.saturating_sub(1) {
        fx.view_mut(((i + 1) * nd, i * nd), (nd, nd)).copy_from(&sys.fx_off[i]);
        fx.view_mut((i * nd, (i + 1) * nd), (nd, nd)).copy_from(&sys.fx_off[i].transpose());
    }

    let mut lmk_chols = Vec::with_capacity(nl);
    let mut min_pivot = f64::INFINITY;
    for j in 0..nl {
        let chol = chol_block(shifted(&sys.fl_diag[j], shift))?;
        min_pivot = min_pivot.min(min_diag_sq(&chol.l()));
        // Stack the cross column densely, eliminate into the state system.
        let col = cross_column(sys, j);
        let mut c = DMatrix::zeros(n, ld);
        for (i, blk) in col.iter().enumerate() {
            c.view_mut((i * nd, 0), (nd, ld)).copy_from(blk);
        }
        let winv_ct = chol.solve(&c.transpose());
        fx -= &c * &winv_ct;
        gx -= &c * chol.solve(&sys.gl[j]);
        lmk_chols.push((chol, c, winv_ct));
    }
    symmetrize(&mut fx);
    let fx_chol = chol_block(fx)?;
    min_pivot = min_pivot.min(min_diag_sq(&fx_chol.l()));
    let dx_stack = fx_chol.solve(&gx);
    let dx: Vec<DVector<f64>> = (0..ns).map(|i| dx_stack.rows(i * nd, nd).into_owned()).collect();

    let mut dl = Vec::with_capacity(nl);
    for (j, (chol, c, _)) in lmk_chols.iter().enumerate() {
        let rhs = &sys.gl[j] - c.transpose() * &dx_stack;
        dl.push(chol.solve(&rhs));
    }

    let (cov_x, cov_l) = if compute_cov {
        let sigma_x = fx_chol.inverse();
        let cov_x: Vec<DMatrix<f64>> = (0..ns)
            .map(|i| {
                let mut c = sigma_x.view((i * nd, i * nd), (nd, nd)).into_owned();
                symmetrize(&mut c);
                c
            })
            .collect();
        let cov_l: Vec<DMatrix<f64>> = lmk_chols
            .iter()
            .map(|(chol, _, winv_ct)| {
                let mut c = chol.inverse() + winv_ct * &sigma_x * winv_ct.transpose();
                symmetrize(&mut c);
                c
            })
            .collect();
        (Some(cov_x), Some(cov_l))
    } else {
        (None, None)
    };

    Ok(ArrowheadSolution { dx, dl, cov_x, cov_l, jittered: false, min_pivot_sq: min_pivot })
}
