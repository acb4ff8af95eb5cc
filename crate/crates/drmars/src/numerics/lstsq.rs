use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, DenseMatrix};

/// Relative pivot tolerance for rank detection. Candidate designs often
/// contain near-duplicate columns when two knots coincide, so dropped
/// columns get zero coefficients instead of poisoning the solve.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Minimum-norm-flavoured least squares via column-pivoted Householder QR.
///
/// Columns whose pivot falls below `RANK_REL_TOL` times the largest pivot are
/// treated as linearly dependent and their coefficients are set to zero.
pub fn solve_least_squares(design: &DenseMatrix, response: &[f64]) -> Result<Vec<f64>> {
    let n = design.rows();
    let m = design.cols();
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "least squares requires at least one row and one column".into(),
        ));
    }
    if response.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows, response has length {}",
            response.len()
        )));
    }
    if let Some(v) = response.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("response contains {v}")));
    }

    // Working copy in column-major layout.
    let mut a: Vec<Vec<f64>> = design.columns();
    let mut b = response.to_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    let steps = m.min(n);
    // Householder vectors overwrite the strict lower parts of `a`; the
    // essential part of v lives in a[j][k..] after step k.
    let mut rank = 0usize;
    let mut first_pivot = 0.0f64;

    for k in 0..steps {
        // Column pivoting on exact residual norms (cheap at these sizes and
        // immune to the cancellation drift of norm downdating).
        let (best_j, best_norm) = (k..m)
            .map(|j| (j, dot(&a[j][k..], &a[j][k..]).sqrt()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if k == 0 {
            first_pivot = best_norm;
        }
        if best_norm == 0.0 || best_norm <= first_pivot * RANK_REL_TOL {
            break;
        }
        a.swap(k, best_j);
        perm.swap(k, best_j);

        // Householder reflector annihilating a[k][k+1..].
        let alpha = -a[k][k].signum() * best_norm;
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let scale = 2.0 * dot(tail, &v) / vnorm2;
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= scale * vi;
                }
            }
            let tail = &mut b[k..];
            let scale = 2.0 * dot(tail, &v) / vnorm2;
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= scale * vi;
            }
        }
        a[k][k] = alpha;
        for row in (k + 1)..n {
            a[k][row] = 0.0;
        }
        rank = k + 1;
    }

    // Back substitution on the leading rank x rank triangle.
    let mut coef_perm = vec![0.0; m];
    for i in (0..rank).rev() {
        let mut s = b[i];
        for j in (i + 1)..rank {
            s -= a[j][i] * coef_perm[j];
        }
        coef_perm[i] = s / a[i][i];
    }

    let mut coef = vec![0.0; m];
    for (k, &p) in perm.iter().enumerate() {
        coef[p] = coef_perm[k];
    }
    Ok(coef)
}

/// Residual sum of squares of `design * coef - response`.
pub fn residual_sum_of_squares(design: &DenseMatrix, coef: &[f64], response: &[f64]) -> f64 {
    let mut rss = 0.0;
    for i in 0..design.rows() {
        let r = dot(design.row(i), coef) - response[i];
        rss += r * r;
    }
    rss
}
