//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn mat_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::invalid(format!("{what}: matrix has no rows")));
    }
    let m = rows[0].len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::invalid(format!("{what}: ragged or empty rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Largest singular value.
pub fn opnorm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest singular value.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Moore-Penrose pseudo-inverse, zeroing singular values below `rel_tol * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rel_tol * smax;
    let u = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");
    let k = svd.singular_values.len();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cut && s > 0.0 {
            out += (vt.row(i).transpose() * u.column(i).transpose()) / s;
        }
    }
    out
}

/// Pseudo-inverse square root of a symmetric PSD matrix.
pub fn psd_pinv_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = rel_tol * lmax;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let l = eig.eigenvalues[i];
        if l > cut && l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / l.sqrt();
        }
    }
    out
}

/// Radial projection onto the Frobenius ball of radius `b`; reports whether it moved.
pub fn project_frobenius(m: &DMatrix<f64>, b: f64) -> (DMatrix<f64>, bool) {
    let n = m.norm();
    if n > b {
        (m * (b / n), true)
    } else {
        (m.clone(), false)
    }
}

/// Flattens a matrix row-major.
pub fn flatten_rows(m: &DMatrix<f64>) -> Vec<f64> {
    mat_to_rows(m).into_iter().flatten().collect()
}

pub fn unflatten_rows(v: &[f64], nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |i, j| v[i * ncols + j])
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv(&m, 1e-10);
        assert_relative_eq!(p, DMatrix::from_element(2, 2, 0.25), epsilon = 1e-14);
        assert_relative_eq!(&m * &p * &m, m, epsilon = 1e-14);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let (c, s) = (0.6f64, 0.8f64);
        let a = DMatrix::from_row_slice(2, 2, &[0.5 * c, -0.5 * s, 0.5 * s, 0.5 * c]);
        assert_relative_eq!(spectral_radius(&a), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pinv_sqrt_squares_to_pinv() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_pinv_sqrt(&m, 1e-12);
        assert_relative_eq!(&r * &r, m.try_inverse().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn projection_is_radial() {
        let m = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let (p, active) = project_frobenius(&m, 1.0);
        assert!(active);
        assert_relative_eq!(p[(0, 1)], 0.8, epsilon = 1e-15);
        assert!(!project_frobenius(&m, 5.0).1);
    }
}
