//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Operator 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}

/// Principal square root of a symmetric positive-definite matrix.
pub fn spd_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::Singular("spd_sqrt"));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let q = &eig.eigenvectors;
    let r = q * d * q.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

pub fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// `‖M^k‖₂` for `k = 0..=horizon`.
pub fn power_norms(m: &DMatrix<f64>, horizon: usize) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(horizon + 1);
    let mut pow = DMatrix::<f64>::identity(n, n);
    out.push(norm2(&pow));
    for _ in 0..horizon {
        pow = &pow * m;
        out.push(norm2(&pow));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn radius_of_rotation_is_modulus() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&r), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = spd_sqrt(&p).unwrap();
        assert!((&s * &s - &p).norm() < 1e-12);
    }

    #[test]
    fn norm2_of_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -2.0, 1.0]));
        assert_abs_diff_eq!(norm2(&d), 2.0, epsilon = 1e-14);
    }
}
