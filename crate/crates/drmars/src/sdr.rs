//! Central mean subspace estimation from the gradient field of a fitted
//! hinge-spline model: outer product of gradients, eigen-directions, and
//! cross-validated dimension selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mars::{self, MarsConfig, MarsModel};
use crate::numerics::{mix_stream, sym_eigen, DenseMatrix, RngStream};

/// Estimated dimension-reduction directions.
///
/// `directions` has orthonormal columns ordered by the descending
/// `eigenvalues` of the gradient outer-product matrix; `cv_table` is present
/// when the dimension was chosen by cross-validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdrEstimate {
    pub directions: DenseMatrix,
    pub eigenvalues: Vec<f64>,
    pub chosen_d: usize,
    pub cv_table: Option<Vec<(usize, f64)>>,
}

impl SdrEstimate {
    pub fn input_dim(&self) -> usize {
        self.directions.rows()
    }
}

/// Gradient of the fitted model at each row of `x`: row i holds
/// `sum_j coef_j * grad(term_j)(x_i)`. The intercept contributes nothing.
pub fn estimate_gradients(model: &MarsModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != model.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} covariates, got {}",
            model.n_vars(),
            x.cols()
        )));
    }
    let n = x.rows();
    let p = x.cols();
    let mut grads = DenseMatrix::zeros(n, p);
    let mut buf = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        for (term, &coef) in model.terms().iter().zip(&model.coefficients()[1..]) {
            if coef == 0.0 {
                continue;
            }
            term.grad(row, &mut buf)?;
            for (j, g) in buf.iter().enumerate() {
                if *g != 0.0 {
                    grads.set(i, j, grads.get(i, j) + coef * g);
                }
            }
        }
    }
    Ok(grads)
}

/// Outer product of gradients: `(1/n) * sum_i g_i g_i^T`, symmetric PSD.
pub fn opg_matrix(grads: &DenseMatrix) -> DenseMatrix {
    let n = grads.rows();
    let p = grads.cols();
    let mut sigma = DenseMatrix::zeros(p, p);
    for i in 0..n {
        let g = grads.row(i);
        for a in 0..p {
            let ga = g[a];
            if ga == 0.0 {
                continue;
            }
            for b in a..p {
                sigma.set(a, b, sigma.get(a, b) + ga * g[b]);
            }
        }
    }
    let inv_n = 1.0 / (n.max(1) as f64);
    for a in 0..p {
        for b in a..p {
            let v = sigma.get(a, b) * inv_n;
            sigma.set(a, b, v);
            sigma.set(b, a, v);
        }
    }
    sigma
}

/// Leading eigenvectors of a symmetric PSD matrix, with the full eigenvalue
/// spectrum retained. Each direction's largest-magnitude entry is made
/// positive so repeated runs agree on signs.
pub fn sdr_directions(sigma: &DenseMatrix, d: usize) -> Result<SdrEstimate> {
    let p = sigma.rows();
    if d < 1 || d > p {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} out of range 1..={p}"
        )));
    }
    let eig = sym_eigen(sigma)?;
    let mut directions = DenseMatrix::zeros(p, d);
    for j in 0..d {
        let col = eig.vectors.column(j);
        let mut lead = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[lead].abs() {
                lead = i;
            }
        }
        let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            directions.set(i, j, flip * col[i]);
        }
    }
    Ok(SdrEstimate {
        directions,
        eigenvalues: eig.values,
        chosen_d: d,
        cv_table: None,
    })
}

/// Full pipeline with a fixed target dimension: fit the spline model,
/// evaluate its gradients at the training points, form the outer-product
/// matrix, and take the leading eigenvectors.
pub fn fit_sdr(x: &DenseMatrix, y: &[f64], d: usize, cfg: &MarsConfig) -> Result<SdrEstimate> {
    let model = mars::fit(x, y, cfg)?;
    sdr_from_model(&model, x, d)
}

pub(crate) fn sdr_from_model(model: &MarsModel, x: &DenseMatrix, d: usize) -> Result<SdrEstimate> {
    let grads = estimate_gradients(model, x)?;
    let sigma = opg_matrix(&grads);
    sdr_directions(&sigma, d)
}

/// Ten-fold (by default) cross-validated choice of the reduction dimension.
///
/// For each candidate d the directions come from the whole sample; each fold
/// then gets an out-of-fold spline fit on the projected covariates and an
/// out-of-fold R² against the fold's responses. Ties go to the smaller d.
pub fn select_dimension(
    x: &DenseMatrix,
    y: &[f64],
    d_max: usize,
    folds: usize,
    cfg: &MarsConfig,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    validate_cv_shape(x.rows(), x.cols(), d_max, folds)?;
    let model = mars::fit(x, y, cfg)?;
    let full = sdr_from_model(&model, x, d_max)?;
    select_dimension_from(&full, x, y, d_max, folds, cfg, seed)
}

fn validate_cv_shape(n: usize, p: usize, d_max: usize, folds: usize) -> Result<()> {
    if d_max < 1 || d_max > p {
        return Err(Error::InvalidArgument(format!(
            "d_max {d_max} out of range 1..={p}"
        )));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    if n < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "{n} observations cannot fill {folds} folds of size >= 2"
        )));
    }
    Ok(())
}

/// Stream id namespace for fold shuffling.
const FOLD_STREAM: u64 = 0x666f_6c64;

pub(crate) fn select_dimension_from(
    full: &SdrEstimate,
    x: &DenseMatrix,
    y: &[f64],
    d_max: usize,
    folds: usize,
    cfg: &MarsConfig,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let n = x.rows();
    validate_cv_shape(n, x.cols(), d_max, folds)?;
    if full.directions.cols() < d_max {
        return Err(Error::InvalidArgument(
            "direction estimate has fewer columns than d_max".into(),
        ));
    }

    // Seeded shuffle split into nearly equal blocks; the last fold absorbs
    // the remainder.
    let mut rng = RngStream::new(seed, mix_stream(&[FOLD_STREAM, folds as u64]));
    let perm = rng.shuffled_indices(n);
    let base = n / folds;
    let fold_of = |k: usize| -> &[usize] {
        let start = k * base;
        let end = if k + 1 == folds { n } else { (k + 1) * base };
        &perm[start..end]
    };

    let cells: Vec<(usize, usize)> = (1..=d_max)
        .flat_map(|d| (0..folds).map(move |k| (d, k)))
        .collect();
    let r2_cells: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(d, k)| {
            let proj = project_onto(x, &full.directions, d)?;
            let fold = fold_of(k);
            let mut in_fold = vec![false; n];
            for &i in fold {
                in_fold[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|i| !in_fold[*i]).collect();
            let xt = take_rows(&proj, &train_rows);
            let yt: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();
            let inner = mars::fit(&xt, &yt, cfg)?;
            let xv = take_rows(&proj, fold);
            let preds = inner.predict(&xv)?;
            let ybar_out = yt.iter().sum::<f64>() / yt.len() as f64;
            let mut sse = 0.0;
            let mut sst = 0.0;
            for (j, &i) in fold.iter().enumerate() {
                sse += (y[i] - preds[j]) * (y[i] - preds[j]);
                sst += (y[i] - ybar_out) * (y[i] - ybar_out);
            }
            if sst <= 0.0 {
                return Err(Error::Degenerate(
                    "fold responses have zero variance about the out-of-fold mean".into(),
                ));
            }
            Ok(1.0 - sse / sst)
        })
        .collect();

    let mut table = Vec::with_capacity(d_max);
    for d in 1..=d_max {
        let mut acc = 0.0;
        for k in 0..folds {
            let idx = (d - 1) * folds + k;
            acc += match &r2_cells[idx] {
                Ok(v) => *v,
                Err(e) => return Err(Error::Degenerate(e.to_string())),
            };
        }
        table.push((d, acc / folds as f64));
    }
    let mut chosen = table[0];
    for &(d, cv) in &table[1..] {
        if cv > chosen.1 {
            chosen = (d, cv);
        }
    }
    Ok((chosen.0, table))
}

/// `x` times the first `d` direction columns.
pub(crate) fn project_onto(x: &DenseMatrix, directions: &DenseMatrix, d: usize) -> Result<DenseMatrix> {
    if x.cols() != directions.rows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns but directions expect {}",
            x.cols(),
            directions.rows()
        )));
    }
    let mut out = DenseMatrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        let row = x.row(i);
        for j in 0..d {
            let mut s = 0.0;
            for (k, &v) in row.iter().enumerate() {
                s += v * directions.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    Ok(out)
}

pub(crate) fn take_rows(x: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows.len(), x.cols());
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..x.cols() {
            out.set(r, j, x.get(i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisTerm, HingeFactor, HingeSign};
    use crate::numerics::{dot, RngStream};

    fn term(var: usize, knot: f64, sign: HingeSign) -> BasisTerm {
        BasisTerm::new(vec![HingeFactor::new(var, knot, sign).unwrap()]).unwrap()
    }

    #[test]
    fn intercept_only_model_has_zero_gradients() {
        let m = MarsModel::new(Vec::new(), vec![3.0], 0.0, 0.0, 5, 4).unwrap();
        let x = DenseMatrix::zeros(6, 4);
        let g = estimate_gradients(&m, &x).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_hinge_gradient_row() {
        let m = MarsModel::new(
            vec![term(0, 0.0, HingeSign::Plus)],
            vec![0.0, 3.0],
            0.0,
            0.0,
            5,
            3,
        )
        .unwrap();
        let x = DenseMatrix::new(1, 3, vec![0.5, 0.0, 0.0]).unwrap();
        let g = estimate_gradients(&m, &x).unwrap();
        assert_eq!(g.row(0), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences_off_knots() {
        let mut rng = RngStream::new(13, 0);
        let terms = vec![
            term(0, 0.1, HingeSign::Plus),
            term(1, -0.2, HingeSign::Minus),
            BasisTerm::new(vec![
                HingeFactor::new(0, -0.4, HingeSign::Plus).unwrap(),
                HingeFactor::new(2, 0.3, HingeSign::Minus).unwrap(),
            ])
            .unwrap(),
        ];
        let model = MarsModel::new(terms, vec![0.5, 1.5, -2.0, 0.75], 0.0, 0.0, 10, 3).unwrap();
        let h = 1e-6;
        let mut checked = 0;
        while checked < 50 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform_open(-1.0, 1.0)).collect();
            let off_knots = [0.1, -0.4].iter().all(|k| (x[0] - k).abs() > 1e-3)
                && (x[1] + 0.2).abs() > 1e-3
                && (x[2] - 0.3).abs() > 1e-3;
            if !off_knots {
                continue;
            }
            checked += 1;
            let xm = DenseMatrix::new(1, 3, x.clone()).unwrap();
            let g = estimate_gradients(&model, &xm).unwrap();
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm2 = x.clone();
                xp[j] += h;
                xm2[j] -= h;
                let fd =
                    (model.predict_row(&xp).unwrap() - model.predict_row(&xm2).unwrap()) / (2.0 * h);
                let scale = 1.0f64.max(fd.abs());
                assert!(
                    (g.get(0, j) - fd).abs() <= 1e-6 * scale,
                    "coordinate {j}: analytic {} vs fd {fd}",
                    g.get(0, j)
                );
            }
        }
    }

    #[test]
    fn gradients_linear_in_coefficients() {
        let terms = vec![term(0, 0.0, HingeSign::Plus), term(1, 0.2, HingeSign::Minus)];
        let mut rng = RngStream::new(3, 0);
        let x = DenseMatrix::from_fn(6, 2, |_, _| rng.uniform_open(-1.0, 1.0)).unwrap();
        let m1 = MarsModel::new(terms.clone(), vec![0.0, 1.0, -0.5], 0.0, 0.0, 6, 2).unwrap();
        let m2 = MarsModel::new(terms.clone(), vec![0.0, 0.25, 2.0], 0.0, 0.0, 6, 2).unwrap();
        let msum = MarsModel::new(terms, vec![0.0, 1.25, 1.5], 0.0, 0.0, 6, 2).unwrap();
        let g1 = estimate_gradients(&m1, &x).unwrap();
        let g2 = estimate_gradients(&m2, &x).unwrap();
        let gs = estimate_gradients(&msum, &x).unwrap();
        for i in 0..6 {
            for j in 0..2 {
                assert!((g1.get(i, j) + g2.get(i, j) - gs.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opg_examples() {
        let g = DenseMatrix::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let s = opg_matrix(&g);
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 2.0);
        assert_eq!(s.get(1, 1), 4.0);

        let g = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = opg_matrix(&g);
        assert_eq!(s.get(0, 0), 0.5);
        assert_eq!(s.get(1, 1), 0.5);
        assert_eq!(s.get(0, 1), 0.0);

        let s = opg_matrix(&DenseMatrix::zeros(4, 3));
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn directions_examples() {
        let mut s = DenseMatrix::zeros(3, 3);
        s.set(0, 0, 5.0);
        s.set(1, 1, 2.0);
        s.set(2, 2, 0.1);
        let est = sdr_directions(&s, 2).unwrap();
        assert_eq!(est.eigenvalues, vec![5.0, 2.0, 0.1]);
        assert!((est.directions.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((est.directions.get(1, 1) - 1.0).abs() < 1e-12);

        // Rank one: direction is the generating vector with positive leading
        // entry.
        let beta = [0.6, 0.8];
        let s = DenseMatrix::from_fn(2, 2, |i, j| beta[i] * beta[j]).unwrap();
        let est = sdr_directions(&s, 1).unwrap();
        assert!((est.directions.get(0, 0) - 0.6).abs() < 1e-10);
        assert!((est.directions.get(1, 0) - 0.8).abs() < 1e-10);

        assert!(sdr_directions(&s, 0).is_err());
        assert!(sdr_directions(&s, 3).is_err());
    }

    #[test]
    fn directions_are_orthonormal_with_small_residual() {
        let mut rng = RngStream::new(77, 0);
        let g = DenseMatrix::from_fn(40, 5, |_, _| rng.normal()).unwrap();
        let s = opg_matrix(&g);
        let est = sdr_directions(&s, 3).unwrap();
        for a in 0..3 {
            let ca = est.directions.column(a);
            for b in 0..3 {
                let cb = est.directions.column(b);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&ca, &cb) - expect).abs() < 1e-8);
            }
            // Eigen residual.
            let sv = s.mat_vec(&ca).unwrap();
            let lam = est.eigenvalues[a];
            let mut res = 0.0;
            for (i, v) in sv.iter().enumerate() {
                res += (v - lam * ca[i]) * (v - lam * ca[i]);
            }
            assert!(res.sqrt() <= 1e-8 * (1.0 + lam.abs()));
        }
    }

    #[test]
    fn near_degenerate_top_pair_recovers_span() {
        // Two nearly equal top eigenvalues: individual vectors are unstable
        // but the projector onto the top-2 span is well defined.
        let q = [
            [0.6, -0.8, 0.0],
            [0.8, 0.6, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let lam = [2.0, 2.0 - 1e-9, 0.1];
        let s = DenseMatrix::from_fn(3, 3, |i, j| {
            (0..3).map(|k| q[i][k] * lam[k] * q[j][k]).sum()
        })
        .unwrap();
        let est = sdr_directions(&s, 2).unwrap();
        // Projector onto span(est) vs projector onto span(q0, q1).
        for i in 0..3 {
            for j in 0..3 {
                let got: f64 = (0..2)
                    .map(|k| est.directions.get(i, k) * est.directions.get(j, k))
                    .sum();
                let expect: f64 = (0..2).map(|k| q[i][k] * q[j][k]).sum();
                assert!((got - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_response_gives_null_spectrum() {
        let mut rng = RngStream::new(5, 0);
        let x = DenseMatrix::from_fn(40, 4, |_, _| rng.uniform_open(-1.0, 1.0)).unwrap();
        let y = vec![2.0; 40];
        let est = fit_sdr(&x, &y, 2, &MarsConfig::default()).unwrap();
        assert!(est.eigenvalues.iter().all(|&v| v.abs() <= 1e-10));
        // Columns still orthonormal.
        let c0 = est.directions.column(0);
        let c1 = est.directions.column(1);
        assert!((dot(&c0, &c0) - 1.0).abs() < 1e-8);
        assert!(dot(&c0, &c1).abs() < 1e-8);
    }

    #[test]
    fn select_dimension_trivial_dmax_one() {
        let mut rng = RngStream::new(9, 0);
        let n = 60;
        let x = DenseMatrix::from_fn(n, 3, |_, _| rng.uniform_open(-1.0, 1.0)).unwrap();
        let y: Vec<f64> = (0..n).map(|i| x.get(i, 0) + 0.1 * rng.normal()).collect();
        let (d, table) = select_dimension(&x, &y, 1, 5, &MarsConfig::default(), 11).unwrap();
        assert_eq!(d, 1);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn select_dimension_validates_inputs() {
        let x = DenseMatrix::zeros(10, 2);
        let y = vec![0.0; 10];
        assert!(select_dimension(&x, &y, 0, 5, &MarsConfig::default(), 1).is_err());
        assert!(select_dimension(&x, &y, 1, 6, &MarsConfig::default(), 1).is_err());
    }
}
