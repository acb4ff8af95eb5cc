use crate::basis::{thin_sorted_values, BasisTerm, HingeFactor, HingeSign};
use crate::error::Result;
use crate::mars::{check_training_input, MarsConfig};
use crate::numerics::{dot, DenseMatrix};

/// Candidates whose RSS differs by less than this (relative to the total sum
/// of squares) count as tied and are broken by variable, then knot, then
/// parent index.
const TIE_REL: f64 = 1e-12;

/// A parent column counts as linearly dependent when its orthogonalized
/// residual falls below this fraction of its norm.
const Z_DEP_REL: f64 = 1e-10;

/// A hinge column adds no usable direction when its orthogonal mass falls
/// below this fraction of its squared norm.
const HINGE_DEP_FRAC: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    rss: f64,
    var: usize,
    knot: f64,
    parent: usize,
}

fn better(a: &Candidate, b: &Candidate, tie: f64) -> bool {
    if a.rss + tie < b.rss {
        return true;
    }
    if b.rss + tie < a.rss {
        return false;
    }
    (a.var, a.knot, a.parent) < (b.var, b.knot, b.parent)
}

/// Orthonormal basis of the current design span, stored row-major so the
/// knot scan touches contiguous memory per observation.
struct OrthoBasis {
    n: usize,
    m: usize,
    cap: usize,
    q: Vec<f64>,
}

impl OrthoBasis {
    fn new(n: usize, cap: usize) -> Self {
        Self {
            n,
            m: 0,
            cap,
            q: vec![0.0; n * cap],
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.cap..i * self.cap + self.m]
    }

    /// Subtracts the projection of `v` onto the basis (two passes for
    /// numerical stability) and returns the remaining norm.
    fn orthogonalize(&self, v: &mut [f64]) -> f64 {
        for _ in 0..2 {
            if self.m == 0 {
                break;
            }
            let mut coefs = vec![0.0; self.m];
            for i in 0..self.n {
                let vi = v[i];
                if vi != 0.0 {
                    for (c, qj) in coefs.iter_mut().zip(self.row(i)) {
                        *c += qj * vi;
                    }
                }
            }
            for i in 0..self.n {
                let row = self.row(i);
                let mut s = 0.0;
                for (c, qj) in coefs.iter().zip(row) {
                    s += c * qj;
                }
                v[i] -= s;
            }
        }
        dot(v, v).sqrt()
    }

    fn push_unit(&mut self, unit: &[f64]) {
        debug_assert!(self.m < self.cap);
        for i in 0..self.n {
            self.q[i * self.cap + self.m] = unit[i];
        }
        self.m += 1;
    }
}

struct ForwardState {
    n: usize,
    xcols: Vec<Vec<f64>>,
    sort_idx: Vec<Vec<u32>>,
    minspan: usize,
    endspan: usize,
}

impl ForwardState {
    fn new(x: &DenseMatrix, minspan: usize, endspan: usize) -> Self {
        let n = x.rows();
        let xcols = x.columns();
        let sort_idx = xcols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    col[a as usize]
                        .partial_cmp(&col[b as usize])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self {
            n,
            xcols,
            sort_idx,
            minspan,
            endspan,
        }
    }

    /// Candidate knots for `var` over rows where the parent column is
    /// nonzero, using the precomputed sort order. Must agree with
    /// `basis::candidate_knots`.
    fn knots_for(&self, var: usize, parent_col: &[f64]) -> Vec<f64> {
        let col = &self.xcols[var];
        let mut vals = Vec::with_capacity(self.n);
        for &i in &self.sort_idx[var] {
            let i = i as usize;
            if parent_col[i] != 0.0 {
                let v = col[i];
                if vals.last() != Some(&v) {
                    vals.push(v);
                }
            }
        }
        thin_sorted_values(&vals, self.minspan, self.endspan).expect("thinning cannot fail")
    }

    /// Scans all candidate knots for one (parent, variable) block.
    ///
    /// Adding the reflected pair spans the same space as adding the parent
    /// times the raw covariate plus one hinge member, so the scan
    /// orthogonalizes that linear column once and then sweeps the hinge with
    /// O(1) prefix-sum updates per knot.
    #[allow(clippy::too_many_arguments)]
    fn scan_block(
        &self,
        parent: usize,
        parent_col: &[f64],
        var: usize,
        knots: &[f64],
        basis: &OrthoBasis,
        resid: &[f64],
        rss: f64,
        tie: f64,
        best: &mut Option<Candidate>,
    ) {
        let xv = &self.xcols[var];
        let n = self.n;

        let mut z: Vec<f64> = (0..n).map(|i| parent_col[i] * xv[i]).collect();
        let z_norm = dot(&z, &z).sqrt();
        let z_resid = basis.orthogonalize(&mut z);
        let z_indep = z_norm > 0.0 && z_resid > Z_DEP_REL * z_norm;
        let (qz, rss_z) = if z_indep {
            let inv = 1.0 / z_resid;
            for v in z.iter_mut() {
                *v *= inv;
            }
            let gamma = dot(&z, resid);
            (Some(z), (rss - gamma * gamma).max(0.0))
        } else {
            (None, rss)
        };

        let m = basis.m;
        // Prefix accumulators over rows with x_var < knot: projections of the
        // hinge column onto each basis direction, onto qz, onto the residual,
        // and its own squared norm.
        let mut v_q = vec![0.0f64; m];
        let mut w_q = vec![0.0f64; m];
        let (mut v_z, mut w_z) = (0.0f64, 0.0f64);
        let (mut v_r, mut w_r) = (0.0f64, 0.0f64);
        let (mut p2, mut q2, mut r2) = (0.0f64, 0.0f64, 0.0f64);

        let order = &self.sort_idx[var];
        let mut ptr = 0usize;
        for &t in knots {
            while ptr < n {
                let i = order[ptr] as usize;
                let xi = xv[i];
                if xi >= t {
                    break;
                }
                let b = parent_col[i];
                if b != 0.0 {
                    let bx = b * xi;
                    for ((vq, wq), qj) in v_q.iter_mut().zip(w_q.iter_mut()).zip(basis.row(i)) {
                        *vq += b * qj;
                        *wq += bx * qj;
                    }
                    if let Some(qz) = &qz {
                        v_z += b * qz[i];
                        w_z += bx * qz[i];
                    }
                    v_r += b * resid[i];
                    w_r += bx * resid[i];
                    let b2 = b * b;
                    p2 += b2;
                    q2 += b2 * xi;
                    r2 += b2 * xi * xi;
                }
                ptr += 1;
            }
            let cnorm2 = (t * t * p2 - 2.0 * t * q2 + r2).max(0.0);
            let mut rss_t = rss_z;
            if cnorm2 > 0.0 {
                let mut ssq = 0.0;
                for (vq, wq) in v_q.iter().zip(&w_q) {
                    let a = t * vq - wq;
                    ssq += a * a;
                }
                if qz.is_some() {
                    let a = t * v_z - w_z;
                    ssq += a * a;
                }
                let w2 = cnorm2 - ssq;
                if w2 > HINGE_DEP_FRAC * cnorm2 {
                    let s1 = t * v_r - w_r;
                    rss_t = (rss_z - s1 * s1 / w2).max(0.0);
                }
            }
            let cand = Candidate {
                rss: rss_t,
                var,
                knot: t,
                parent,
            };
            match best {
                Some(b) if !better(&cand, b, tie) => {}
                _ => *best = Some(cand),
            }
        }
    }
}

/// Greedy forward stepwise pass: starting from the intercept, repeatedly adds
/// the reflected hinge pair giving the largest drop in training RSS until the
/// term budget is exhausted or the relative improvement stalls.
pub fn forward_pass(x: &DenseMatrix, y: &[f64], cfg: &MarsConfig) -> Result<Vec<BasisTerm>> {
    cfg.validate()?;
    check_training_input(x, y)?;
    let n = x.rows();
    let p = x.cols();
    let max_terms = cfg.resolved_max_terms(n, p);

    let state = ForwardState::new(x, cfg.minspan, cfg.resolved_endspan(n));

    let mut terms: Vec<BasisTerm> = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut basis = OrthoBasis::new(n, max_terms + 2);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    basis.push_unit(&vec![inv_sqrt_n; n]);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut rss = dot(&resid, &resid);
    let sst = rss;
    let tie = TIE_REL * sst.max(1.0);

    while terms.len() + 1 < max_terms {
        if rss <= 0.0 {
            break;
        }
        let mut best: Option<Candidate> = None;
        for parent in 0..cols.len() {
            let parent_term = if parent == 0 {
                None
            } else {
                Some(&terms[parent - 1])
            };
            let parent_degree = parent_term.map_or(0, BasisTerm::degree);
            if parent_degree + 1 > cfg.max_degree {
                continue;
            }
            let parent_col = &cols[parent];
            for var in 0..p {
                if parent_term.is_some_and(|t| t.uses_var(var)) {
                    continue;
                }
                let knots = state.knots_for(var, parent_col);
                if knots.is_empty() {
                    continue;
                }
                state.scan_block(
                    parent, parent_col, var, &knots, &basis, &resid, rss, tie, &mut best,
                );
            }
        }
        let Some(best) = best else { break };
        let rel_improvement = (rss - best.rss) / rss;
        if rel_improvement < cfg.forward_tol {
            break;
        }

        let parent_term = if best.parent == 0 {
            BasisTerm::intercept()
        } else {
            terms[best.parent - 1].clone()
        };
        let parent_col = cols[best.parent].clone();
        for sign in [HingeSign::Plus, HingeSign::Minus] {
            let factor = HingeFactor::new(best.var, best.knot, sign)?;
            let term = parent_term.with_factor(factor)?;
            let col: Vec<f64> = (0..n)
                .map(|i| parent_col[i] * factor.eval_scalar(state.xcols[best.var][i]))
                .collect();
            let col_norm = dot(&col, &col).sqrt();
            let mut work = col.clone();
            let res_norm = basis.orthogonalize(&mut work);
            if col_norm > 0.0 && res_norm > Z_DEP_REL * col_norm {
                let inv = 1.0 / res_norm;
                for v in work.iter_mut() {
                    *v *= inv;
                }
                let c = dot(&work, &resid);
                for (r, q) in resid.iter_mut().zip(&work) {
                    *r -= c * q;
                }
                basis.push_unit(&work);
            }
            cols.push(col);
            terms.push(term);
        }
        rss = dot(&resid, &resid);
    }
    Ok(terms)
}

/// Reference forward pass that refits every candidate pair with the pivoted
/// least-squares solver. Kept for tests: it must select the same terms as the
/// fast scan on small instances.
#[cfg(test)]
pub(crate) fn forward_pass_naive(
    x: &DenseMatrix,
    y: &[f64],
    cfg: &MarsConfig,
) -> Result<Vec<BasisTerm>> {
    use crate::basis::candidate_knots;

    cfg.validate()?;
    check_training_input(x, y)?;
    let n = x.rows();
    let p = x.cols();
    let max_terms = cfg.resolved_max_terms(n, p);
    let endspan = cfg.resolved_endspan(n);

    let mut terms: Vec<BasisTerm> = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let rss_of = |columns: &[Vec<f64>]| -> f64 {
        let d = DenseMatrix::from_columns(columns).unwrap();
        let c = crate::numerics::solve_least_squares(&d, y).unwrap();
        let fitted = d.mat_vec(&c).unwrap();
        y.iter()
            .zip(&fitted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut rss = rss_of(&cols);
    let sst = super::sum_sq_dev(y);
    let tie = TIE_REL * sst.max(1.0);

    while terms.len() + 1 < max_terms {
        if rss <= 0.0 {
            break;
        }
        let mut best: Option<Candidate> = None;
        for parent in 0..cols.len() {
            let parent_term = if parent == 0 {
                None
            } else {
                Some(&terms[parent - 1])
            };
            if parent_term.map_or(0, |t| t.degree()) + 1 > cfg.max_degree {
                continue;
            }
            let active: Vec<bool> = cols[parent].iter().map(|v| *v != 0.0).collect();
            for var in 0..p {
                if parent_term.is_some_and(|t| t.uses_var(var)) {
                    continue;
                }
                let knots = candidate_knots(x, var, &active, cfg.minspan, endspan)?;
                for knot in knots {
                    let mut trial = cols.clone();
                    for sign in [HingeSign::Plus, HingeSign::Minus] {
                        let f = HingeFactor::new(var, knot, sign)?;
                        trial.push(
                            (0..n)
                                .map(|i| cols[parent][i] * f.eval_scalar(x.get(i, var)))
                                .collect(),
                        );
                    }
                    let cand = Candidate {
                        rss: rss_of(&trial),
                        var,
                        knot,
                        parent,
                    };
                    match &best {
                        Some(b) if !better(&cand, b, tie) => {}
                        _ => best = Some(cand),
                    }
                }
            }
        }
        let Some(best) = best else { break };
        if (rss - best.rss) / rss < cfg.forward_tol {
            break;
        }
        let parent_term = if best.parent == 0 {
            BasisTerm::intercept()
        } else {
            terms[best.parent - 1].clone()
        };
        for sign in [HingeSign::Plus, HingeSign::Minus] {
            let f = HingeFactor::new(best.var, best.knot, sign)?;
            let col = (0..n)
                .map(|i| cols[best.parent][i] * f.eval_scalar(x.get(i, best.var)))
                .collect();
            cols.push(col);
            terms.push(parent_term.with_factor(f)?);
        }
        rss = rss_of(&cols);
    }
    Ok(terms)
}
