//! Dense helpers shared by training, problem assembly, and the solvers.
//!
//! Bilinear maps are stored flat: an operator `C` acting on `l ⊗ x` is an
//! `n_y × (n_l · n_x)` matrix whose m-th column block `C_m` (of width `n_x`)
//! multiplies `l_m · x`. All helpers below follow that layout, which matches
//! `kron_vec(l, x)`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Kronecker product of two vectors, `a ⊗ b` (blocks `a_i · b`).
pub fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        out.rows_mut(i * b.len(), b.len()).axpy(a[i], b, 0.0);
    }
    out
}

/// Evaluates `C (l ⊗ x)` without forming the Kronecker vector.
pub fn bilinear_apply(c: &DMatrix<f64>, l: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let nx = x.len();
    debug_assert_eq!(c.ncols(), l.len() * nx);
    let mut out = DVector::zeros(c.nrows());
    for m in 0..l.len() {
        if l[m] != 0.0 {
            out.gemv(l[m], &c.columns(m * nx, nx), x, 1.0);
        }
    }
    out
}

/// Jacobian of `C (l ⊗ x)` with respect to `x`: the contraction `C (l ⊗ 1)`,
/// i.e. `Σ_m l_m C_m`.
pub fn bilinear_jac_x(c: &DMatrix<f64>, l: &DVector<f64>, nx: usize) -> DMatrix<f64> {
    debug_assert_eq!(c.ncols(), l.len() * nx);
    let mut out = DMatrix::zeros(c.nrows(), nx);
    for m in 0..l.len() {
        if l[m] != 0.0 {
            out += c.columns(m * nx, nx) * l[m];
        }
    }
    out
}

/// Jacobian of `C (l ⊗ x)` with respect to `l`: the contraction `C (1 ⊗ x)`,
/// whose m-th column is `C_m x`.
pub fn bilinear_jac_l(c: &DMatrix<f64>, x: &DVector<f64>, nl: usize) -> DMatrix<f64> {
    let nx = x.len();
    debug_assert_eq!(c.ncols(), nl * nx);
    let mut out = DMatrix::zeros(c.nrows(), nl);
    for m in 0..nl {
        out.column_mut(m).gemv(1.0, &c.columns(m * nx, nx), x, 0.0);
    }
    out
}

/// Contraction of a bilinear dynamics term with a known input:
/// `A + H (u ⊗ 1) = A + Σ_m u_m H_m`.
pub fn contract_input(a: &DMatrix<f64>, h: &DMatrix<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let nx = a.ncols();
    debug_assert_eq!(h.ncols(), u.len() * nx);
    let mut out = a.clone();
    for m in 0..u.len() {
        if u[m] != 0.0 {
            out += h.columns(m * nx, nx) * u[m];
        }
    }
    out
}

/// Symmetrizes a square matrix in place, `(M + Mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Smallest eigenvalue of a symmetric matrix (diagnostic use only).
pub fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

/// Cholesky with a single jitter retry.
///
/// On failure, adds `rel_jitter · mean(diag)` (floored at `abs_floor`) to the
/// diagonal and tries once more. The second failure is reported with an
/// eigenvalue estimate of the offending matrix.
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    rel_jitter: f64,
    abs_floor: f64,
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, bool)> {
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        return Ok((chol, false));
    }
    let scale = m.diagonal().mean().abs().max(1.0);
    let eps = (rel_jitter * scale).max(abs_floor);
    let mut jittered = m.clone();
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += eps;
    }
    match nalgebra::Cholesky::new(jittered) {
        Some(chol) => Ok((chol, true)),
        None => Err(Error::Indefinite { eigmin: min_eig_sym(m) }),
    }
}

/// Checks every entry is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Central finite-difference Jacobian of `f` at `x` (test oracle helper).
pub fn central_difference_jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..f0.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn randish(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        // Cheap deterministic fill, good enough for algebra identities.
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        })
    }

    #[test]
    fn kron_matches_definition() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let k = kron_vec(&a, &b);
        assert_eq!(k.as_slice(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn bilinear_contractions_agree() {
        let (ny, nl, nx) = (3, 4, 5);
        let c = randish(ny, nl * nx, 7);
        let l = randish(nl, 1, 8).column(0).into_owned();
        let x = randish(nx, 1, 9).column(0).into_owned();

        let direct = &c * kron_vec(&l, &x);
        let fast = bilinear_apply(&c, &l, &x);
        assert_relative_eq!(direct, fast, epsilon = 1e-12);

        let gx = bilinear_jac_x(&c, &l, nx);
        let gl = bilinear_jac_l(&c, &x, nl);
        assert_relative_eq!(&gx * &x, direct, epsilon = 1e-12);
        assert_relative_eq!(&gl * &l, direct, epsilon = 1e-12);
    }

    #[test]
    fn contract_input_matches_bilinear() {
        let (nx, nu) = (4, 3);
        let a = randish(nx, nx, 1);
        let h = randish(nx, nu * nx, 2);
        let u = randish(nu, 1, 3).column(0).into_owned();
        let x = randish(nx, 1, 4).column(0).into_owned();
        let ak = contract_input(&a, &h, &u);
        let direct = &a * &x + &h * kron_vec(&u, &x);
        assert_relative_eq!(&ak * &x, direct, epsilon = 1e-12);
    }

    #[test]
    fn jitter_recovers_semidefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 2.0]));
        let (_, jittered) = cholesky_with_jitter(&m, 1e-10, 1e-12).unwrap();
        assert!(jittered);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            cholesky_with_jitter(&bad, 1e-10, 1e-12),
            Err(Error::Indefinite { .. })
        ));
    }
}
