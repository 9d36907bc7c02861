//! Self-adjoint / skew-adjoint decomposition under a weighted inner product
//! `⟨u, v⟩_W = uᴴ W v`.

use super::SpectralError;
use crate::linalg::CMatrix;
use crate::scalar::{lit, Scalar};

/// `G* = W⁻¹ Gᴴ W`, the adjoint of `G` in `⟨·,·⟩_W`.
pub fn weighted_adjoint<T: Scalar>(matrix: &CMatrix<T>, weights: &CMatrix<T>) -> Result<CMatrix<T>, SpectralError> {
    if matrix.rows() != matrix.cols() || weights.rows() != matrix.rows() || weights.cols() != matrix.cols() {
        return Err(SpectralError::BasisMismatch(format!(
            "matrix {}x{} with weights {}x{}",
            matrix.rows(),
            matrix.cols(),
            weights.rows(),
            weights.cols()
        )));
    }
    Ok(weights.solve_matrix(&matrix.adjoint().mul(weights))?)
}

/// Returns `(G_S, G_A) = (½(G + G*), ½(G − G*))`.
pub fn symmetric_antisymmetric_split<T: Scalar>(matrix: &CMatrix<T>, weights: &CMatrix<T>) -> Result<(CMatrix<T>, CMatrix<T>), SpectralError> {
    let adj = weighted_adjoint(matrix, weights)?;
    let half = lit::<T>(0.5);
    Ok((matrix.add(&adj).scale(half), matrix.sub(&adj).scale(half)))
}

/// Diagonal Gram matrix from positive weights.
pub fn diagonal_weights<T: Scalar>(w: &[T]) -> CMatrix<T> {
    CMatrix::from_diagonal(&w.iter().map(|&v| num_complex::Complex::new(v, T::zero())).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn identity_weights_give_hermitian_parts() {
        let mut g = CMatrix::<f64>::zeros(2, 2);
        g[(0, 1)] = Complex::new(1.0, 0.0);
        let (s, a) = symmetric_antisymmetric_split(&g, &CMatrix::identity(2)).unwrap();
        assert_eq!(s[(0, 1)], Complex::new(0.5, 0.0));
        assert_eq!(s[(1, 0)], Complex::new(0.5, 0.0));
        assert_eq!(a[(1, 0)], Complex::new(-0.5, 0.0));
    }
}
