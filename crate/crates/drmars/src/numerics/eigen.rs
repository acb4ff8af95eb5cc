use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;

/// Spectral decomposition of a symmetric matrix.
///
/// Eigenvalues are sorted non-increasing; `vectors` holds the matching unit
/// eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

const SYMMETRY_REL_TOL: f64 = 1e-10;
const OFF_DIAG_REL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 64;

/// Full eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Simple and robust for the moderate orders used here (p up to a few
/// hundred). Sweeps stop once the off-diagonal Frobenius mass drops below
/// `1e-12` relative to the matrix norm.
pub fn sym_eigen(s: &DenseMatrix) -> Result<EigenResult> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition requires a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    let fnorm = s.frobenius_norm();
    let max_asym = s.max_asymmetry();
    if max_asym > SYMMETRY_REL_TOL * (1.0 + fnorm) {
        return Err(Error::NotSymmetric { max_asym });
    }

    // Work on the symmetrized matrix so the iteration sees an exactly
    // symmetric input.
    let mut a = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = 0.5 * (s.get(i, j) + s.get(j, i));
        }
    }
    let mut v = vec![vec![0.0f64; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let threshold = OFF_DIAG_REL_TOL * (1.0 + fnorm);
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s2 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s2 += 2.0 * a[i][j] * a[i][j];
                }
            }
            s2.sqrt()
        };
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p][p];
                let aqq = a[q][q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_rot = t * c;
                let tau = s_rot / (1.0 + c);

                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = aip - s_rot * (aiq + tau * aip);
                        a[i][q] = aiq + s_rot * (aip - tau * aiq);
                        a[p][i] = a[i][p];
                        a[q][i] = a[i][q];
                    }
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = vip - s_rot * (viq + tau * vip);
                    row[q] = viq + s_rot * (vip - tau * viq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "Jacobi eigen iteration did not converge".into(),
        ));
    }

    // Sort eigenpairs by descending eigenvalue, ties broken by original index
    // for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[i][order[j]])?;
    Ok(EigenResult { values, vectors })
}
