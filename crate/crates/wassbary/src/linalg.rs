//! Symmetric positive-definite matrix helpers built on eigendecomposition.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as numerically nonpositive.
pub const SPD_EIGEN_FLOOR: f64 = 1e-12;

/// Symmetrize a square matrix as (S + Sᵀ)/2.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Apply `f` to the eigenvalues of a symmetric matrix, rebuilding Q f(Λ) Qᵀ.
///
/// Fails with a conditioning error if any eigenvalue is at or below the
/// floor, reporting the smallest one.
fn spd_eigen_map(s: &DMatrix<f64>, context: &str, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(s);
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= SPD_EIGEN_FLOOR {
        return Err(Error::Conditioning {
            context: context.to_string(),
            min_eigenvalue: min_eig,
        });
    }
    let mut lam = DMatrix::zeros(s.nrows(), s.ncols());
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        lam[(i, i)] = f(e);
    }
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * lam * q.transpose())))
}

/// Symmetric square root R of an SPD matrix, R·R = S.
pub fn matrix_sqrt_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_eigen_map(s, "matrix square root", f64::sqrt)
}

/// Symmetric inverse square root of an SPD matrix.
pub fn matrix_inv_sqrt_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_eigen_map(s, "matrix inverse square root", |e| 1.0 / e.sqrt())
}

/// Inverse of an SPD matrix via eigendecomposition.
pub fn matrix_inv_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_eigen_map(s, "matrix inverse", |e| 1.0 / e)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    symmetrize(s).symmetric_eigen().eigenvalues.min()
}

/// Check that a matrix is SPD within the given symmetry tolerance.
pub fn validate_spd(s: &DMatrix<f64>, context: &str) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::Shape(format!(
            "{context}: matrix is {}x{}, expected square",
            s.nrows(),
            s.ncols()
        )));
    }
    let min_eig = min_eigenvalue(s);
    if min_eig <= SPD_EIGEN_FLOOR {
        return Err(Error::Conditioning {
            context: context.to_string(),
            min_eigenvalue: min_eig,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn sqrt_of_identity_is_identity() {
        let s = DMatrix::identity(3, 3);
        let r = matrix_sqrt_spd(&s).unwrap();
        assert_abs_diff_eq!(r, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let r = matrix_sqrt_spd(&s).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back_on_random_wishart() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let d = 4;
            let a: DMatrix<f64> =
                DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
            let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
            let r = matrix_sqrt_spd(&s).unwrap();
            let err = (&r * &r - &s).norm() / s.norm();
            assert!(err <= 1e-10, "relative error {err}");
        }
    }

    #[test]
    fn singular_matrix_reports_conditioning_error() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        match matrix_sqrt_spd(&s) {
            Err(crate::error::Error::Conditioning { min_eigenvalue, .. }) => {
                assert!(min_eigenvalue <= SPD_EIGEN_FLOOR);
            }
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }
}
