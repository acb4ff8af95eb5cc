use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(s: &DenseMatrix) -> Result<DenseMatrix> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Cholesky requires a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    let fnorm = s.frobenius_norm();
    let max_asym = s.max_asymmetry();
    if max_asym > 1e-10 * (1.0 + fnorm) {
        return Err(Error::NotSymmetric { max_asym });
    }

    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if diag <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                pivot: diag,
                index: j,
            });
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / ljj);
        }
    }
    Ok(l)
}
