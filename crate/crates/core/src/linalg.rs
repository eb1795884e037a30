//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::dim(format!("matrix row {i}"), ncols, r.len()));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn vec_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `a^k` by repeated multiplication (k is small everywhere it is used).
pub fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = a * &out;
    }
    out
}

/// Spectral radius via the complex eigenvalues of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|x| x.abs() <= tol)
}

/// Controllability matrix `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        c.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    c
}

/// Orthonormal basis of the null space of `m` together with a particular
/// least-squares solution of `m x = rhs`.
///
/// Returns `(x_particular, basis, residual_inf)`; the basis has one column
/// per null-space direction.
pub fn nullspace_solve(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    rel_tol: f64,
) -> (DVector<f64>, DMatrix<f64>, f64) {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return (DVector::zeros(ncols), DMatrix::identity(ncols, ncols), 0.0);
    }
    // SVD of m^T (tall or square) gives the row space directly.
    let svd = m.transpose().svd(true, true);
    let u = svd.u.expect("svd u"); // ncols x r
    let v_t = svd.v_t.expect("svd v_t"); // r x nrows
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > rel_tol * smax).count()
    };
    // m = V S U^T  ->  x = U_r S_r^{-1} V_r^T rhs
    let mut x = DVector::zeros(ncols);
    for k in 0..rank {
        let coef = v_t.row(k).transpose().dot(rhs) / sv[k];
        x.axpy(coef, &u.column(k), 1.0);
    }
    // complete the basis of the row space to R^ncols
    let row_basis = u.columns(0, rank).into_owned();
    let basis = orthogonal_complement(&row_basis, ncols);
    let resid = inf_norm(&(m * &x - rhs));
    (x, basis, resid)
}

/// Orthonormal basis of the complement of span(cols(q)) in R^n, where `q`
/// already has orthonormal columns.
fn orthogonal_complement(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let r = q.ncols();
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    let proj = DMatrix::identity(n, n) - q * q.transpose();
    // eigenvectors of the projector with eigenvalue ~1
    let eig = proj.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = n - r;
    let mut basis = DMatrix::zeros(n, keep);
    for (c, &i) in idx.iter().take(keep).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_single_row() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let rhs = DVector::from_vec(vec![2.0]);
        let (x, basis, resid) = nullspace_solve(&m, &rhs, 1e-12);
        assert!(resid < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert_eq!(basis.ncols(), 2);
        assert!((&m * &basis).abs().max() < 1e-12);
        let gram = basis.transpose() * &basis;
        assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn inconsistent_equalities_leave_residual() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let rhs = DVector::from_vec(vec![0.0, 1.0]);
        let (_, basis, resid) = nullspace_solve(&m, &rhs, 1e-12);
        assert_eq!(basis.ncols(), 0);
        assert!((resid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank_and_radius() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
        assert_eq!(rank(&controllability_matrix(&a, &b), 1e-10), 2);
        assert!((spectral_radius(&(a * 0.5)) - 0.5).abs() < 1e-12);
    }
}
