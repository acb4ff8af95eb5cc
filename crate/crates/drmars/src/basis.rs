//! Hinge functions and tensor-product basis terms.
//!
//! A hinge is `(x_k - t)+` or `(t - x_k)+` at a knot `t`; a basis term is a
//! product of hinges over distinct covariates. The empty product is the
//! intercept. Terms evaluate pointwise and carry an analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HingeSign {
    /// (x_k - t)+
    Plus,
    /// (t - x_k)+
    Minus,
}

/// One hinge factor: variable index, knot location, and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingeFactor {
    pub var_index: usize,
    pub knot: f64,
    pub sign: HingeSign,
}

impl HingeFactor {
    pub fn new(var_index: usize, knot: f64, sign: HingeSign) -> Result<Self> {
        if !knot.is_finite() {
            return Err(Error::NonFinite(format!("hinge knot is {knot}")));
        }
        Ok(Self {
            var_index,
            knot,
            sign,
        })
    }

    #[inline]
    pub fn eval_scalar(&self, x_k: f64) -> f64 {
        match self.sign {
            HingeSign::Plus => (x_k - self.knot).max(0.0),
            HingeSign::Minus => (self.knot - x_k).max(0.0),
        }
    }

    /// d/dx_k of the hinge; zero exactly at the knot (open indicators).
    #[inline]
    pub fn deriv_scalar(&self, x_k: f64) -> f64 {
        match self.sign {
            HingeSign::Plus => {
                if x_k > self.knot {
                    1.0
                } else {
                    0.0
                }
            }
            HingeSign::Minus => {
                if x_k < self.knot {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn hinge_eval(h: &HingeFactor, x: &[f64]) -> Result<f64> {
    if h.var_index >= x.len() {
        return Err(Error::IndexOutOfRange(format!(
            "hinge variable {} but input has {} coordinates",
            h.var_index,
            x.len()
        )));
    }
    Ok(h.eval_scalar(x[h.var_index]))
}

/// A product of hinges over distinct variables; the empty term is the
/// intercept. Factors are kept sorted by variable index so that equal terms
/// compare and serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisTerm {
    factors: Vec<HingeFactor>,
}

impl BasisTerm {
    pub fn intercept() -> Self {
        Self {
            factors: Vec::new(),
        }
    }

    pub fn new(mut factors: Vec<HingeFactor>) -> Result<Self> {
        for f in &factors {
            if !f.knot.is_finite() {
                return Err(Error::NonFinite(format!("hinge knot is {}", f.knot)));
            }
        }
        factors.sort_by(|a, b| a.var_index.cmp(&b.var_index));
        if factors.windows(2).any(|w| w[0].var_index == w[1].var_index) {
            return Err(Error::InvalidArgument(
                "basis term factors must use distinct variables".into(),
            ));
        }
        Ok(Self { factors })
    }

    /// Child term: this term's factors plus one new hinge.
    pub fn with_factor(&self, f: HingeFactor) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.push(f);
        Self::new(factors)
    }

    pub fn factors(&self) -> &[HingeFactor] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn uses_var(&self, var: usize) -> bool {
        self.factors.iter().any(|f| f.var_index == var)
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.factors.last().map(|f| f.var_index)
    }

    /// Product of hinge values; 1 for the intercept, always >= 0.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut prod = 1.0;
        for f in &self.factors {
            if f.var_index >= x.len() {
                return Err(Error::IndexOutOfRange(format!(
                    "term uses variable {} but input has {} coordinates",
                    f.var_index,
                    x.len()
                )));
            }
            prod *= f.eval_scalar(x[f.var_index]);
            if prod == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(prod)
    }

    /// Gradient of the product rule: the partial for each factor is its
    /// indicator derivative times the product of the remaining factors.
    pub fn grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if out.len() != x.len() {
            return Err(Error::DimensionMismatch(
                "gradient buffer length must match input dimension".into(),
            ));
        }
        out.fill(0.0);
        let r = self.factors.len();
        if r == 0 {
            return Ok(());
        }
        let mut vals = Vec::with_capacity(r);
        for f in &self.factors {
            if f.var_index >= x.len() {
                return Err(Error::IndexOutOfRange(format!(
                    "term uses variable {} but input has {} coordinates",
                    f.var_index,
                    x.len()
                )));
            }
            vals.push(f.eval_scalar(x[f.var_index]));
        }
        // prefix[i] = product of vals[..i], suffix[i] = product of vals[i+1..]
        let mut prefix = vec![1.0; r];
        for i in 1..r {
            prefix[i] = prefix[i - 1] * vals[i - 1];
        }
        let mut suffix = vec![1.0; r];
        for i in (0..r - 1).rev() {
            suffix[i] = suffix[i + 1] * vals[i + 1];
        }
        for (i, f) in self.factors.iter().enumerate() {
            let others = prefix[i] * suffix[i];
            if others != 0.0 {
                out[f.var_index] = f.deriv_scalar(x[f.var_index]) * others;
            }
        }
        Ok(())
    }
}

pub fn term_eval(t: &BasisTerm, x: &[f64]) -> Result<f64> {
    t.eval(x)
}

pub fn term_grad(t: &BasisTerm, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    t.grad(x, &mut out)?;
    Ok(out)
}

/// Design matrix for a term list: column 0 is all ones, column j+1 evaluates
/// `terms[j]` on each row of `x`. The term list excludes the intercept.
pub fn design_matrix(terms: &[BasisTerm], x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = x.rows();
    let p = x.cols();
    for t in terms {
        if let Some(maxv) = t.max_var_index() {
            if maxv >= p {
                return Err(Error::IndexOutOfRange(format!(
                    "term uses variable {maxv} but data has {p} columns"
                )));
            }
        }
    }
    let mut out = DenseMatrix::zeros(n, terms.len() + 1);
    for i in 0..n {
        let row = x.row(i);
        out.set(i, 0, 1.0);
        for (j, t) in terms.iter().enumerate() {
            out.set(i, j + 1, t.eval(row)?);
        }
    }
    Ok(out)
}

/// Candidate knots for a variable: sorted unique observed values on the rows
/// where the parent term is active, trimmed by `endspan` order statistics at
/// each end, then thinned to every `minspan`-th value.
pub fn candidate_knots(
    x: &DenseMatrix,
    var: usize,
    parent_active: &[bool],
    minspan: usize,
    endspan: usize,
) -> Result<Vec<f64>> {
    if var >= x.cols() {
        return Err(Error::IndexOutOfRange(format!(
            "variable {var} out of range for {} columns",
            x.cols()
        )));
    }
    if parent_active.len() != x.rows() {
        return Err(Error::DimensionMismatch(
            "active mask length must equal the number of rows".into(),
        ));
    }
    let mut vals: Vec<f64> = (0..x.rows())
        .filter(|&i| parent_active[i])
        .map(|i| x.get(i, var))
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    thin_sorted_values(&vals, minspan, endspan)
}

/// Trimming/thinning of an already sorted, deduplicated value list.
pub(crate) fn thin_sorted_values(
    sorted_unique: &[f64],
    minspan: usize,
    endspan: usize,
) -> Result<Vec<f64>> {
    let minspan = minspan.max(1);
    let len = sorted_unique.len();
    if len <= 2 * endspan {
        return Ok(Vec::new());
    }
    let kept = &sorted_unique[endspan..len - endspan];
    Ok(kept.iter().copied().step_by(minspan).collect())
}

/// Default endspan: trims 5% of the sample from each end, at least one
/// observation and at most ten.
pub fn default_endspan(n: usize) -> usize {
    (n / 20).clamp(1, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hf(var: usize, knot: f64, sign: HingeSign) -> HingeFactor {
        HingeFactor::new(var, knot, sign).unwrap()
    }

    #[test]
    fn hinge_eval_examples() {
        let h = hf(0, 0.5, HingeSign::Plus);
        assert!((hinge_eval(&h, &[0.7]).unwrap() - 0.2).abs() < 1e-15);
        let h = hf(0, 0.5, HingeSign::Minus);
        assert_eq!(hinge_eval(&h, &[0.7]).unwrap(), 0.0);
        let h = hf(1, -0.25, HingeSign::Minus);
        assert!((hinge_eval(&h, &[0.0, -1.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(hinge_eval(&hf(3, 0.0, HingeSign::Plus), &[1.0]).is_err());
    }

    #[test]
    fn term_eval_examples() {
        let intercept = BasisTerm::intercept();
        assert_eq!(intercept.eval(&[1.0, -4.0]).unwrap(), 1.0);

        let t = BasisTerm::new(vec![
            hf(0, 0.0, HingeSign::Plus),
            hf(1, 0.0, HingeSign::Plus),
        ])
        .unwrap();
        assert_eq!(t.eval(&[0.5, 0.5]).unwrap(), 0.25);
        assert_eq!(t.eval(&[-0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn term_rejects_repeated_variable() {
        assert!(BasisTerm::new(vec![
            hf(0, 0.0, HingeSign::Plus),
            hf(0, 1.0, HingeSign::Minus),
        ])
        .is_err());
    }

    #[test]
    fn term_grad_examples() {
        let t = BasisTerm::new(vec![
            hf(0, 0.0, HingeSign::Plus),
            hf(1, 0.0, HingeSign::Plus),
        ])
        .unwrap();
        let g = term_grad(&t, &[0.5, 0.5, 9.0]).unwrap();
        assert_eq!(g, vec![0.5, 0.5, 0.0]);

        let single = BasisTerm::new(vec![hf(0, 0.3, HingeSign::Plus)]).unwrap();
        assert_eq!(term_grad(&single, &[1.0, 2.0]).unwrap(), vec![1.0, 0.0]);

        let g = term_grad(&t, &[-0.5, 0.5]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);

        // Exactly at the knot both indicators are off.
        let g = term_grad(&single, &[0.3]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn grad_of_minus_hinge_is_negative_indicator() {
        let t = BasisTerm::new(vec![hf(0, 0.5, HingeSign::Minus)]).unwrap();
        assert_eq!(term_grad(&t, &[0.0]).unwrap(), vec![-1.0]);
        assert_eq!(term_grad(&t, &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn design_matrix_examples() {
        let x = DenseMatrix::new(3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        let d = design_matrix(&[], &x).unwrap();
        assert_eq!(d.cols(), 1);
        assert_eq!(d.column(0), vec![1.0, 1.0, 1.0]);

        let t = BasisTerm::new(vec![hf(0, 0.0, HingeSign::Plus)]).unwrap();
        let d = design_matrix(&[t], &x).unwrap();
        assert_eq!(d.column(0), vec![1.0, 1.0, 1.0]);
        assert_eq!(d.column(1), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn design_matrix_matches_pointwise_eval() {
        use crate::numerics::RngStream;
        let mut rng = RngStream::new(5, 0);
        let x = DenseMatrix::from_fn(8, 3, |_, _| rng.normal()).unwrap();
        let terms = vec![
            BasisTerm::new(vec![hf(0, 0.1, HingeSign::Plus)]).unwrap(),
            BasisTerm::new(vec![
                hf(1, -0.2, HingeSign::Minus),
                hf(2, 0.4, HingeSign::Plus),
            ])
            .unwrap(),
        ];
        let d = design_matrix(&terms, &x).unwrap();
        for i in 0..8 {
            for (j, t) in terms.iter().enumerate() {
                assert_eq!(d.get(i, j + 1), t.eval(x.row(i)).unwrap());
            }
        }
    }

    #[test]
    fn candidate_knots_examples() {
        let x = DenseMatrix::new(3, 1, vec![3.0, 1.0, 2.0]).unwrap();
        let ks = candidate_knots(&x, 0, &[true, true, true], 1, 0).unwrap();
        assert_eq!(ks, vec![1.0, 2.0, 3.0]);

        let x = DenseMatrix::new(3, 1, vec![1.0, 1.0, 2.0]).unwrap();
        let ks = candidate_knots(&x, 0, &[true, true, true], 1, 0).unwrap();
        assert_eq!(ks, vec![1.0, 2.0]);

        // Mask restriction.
        let x = DenseMatrix::new(4, 1, vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let ks = candidate_knots(&x, 0, &[true, false, false, true], 1, 0).unwrap();
        assert_eq!(ks, vec![1.0, 4.0]);
    }

    #[test]
    fn candidate_knots_trim_and_thin() {
        // 100 sorted values, endspan 2, minspan 5 -> 20 candidates and none
        // among the two smallest/largest observations.
        let vals: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let x = DenseMatrix::new(100, 1, vals).unwrap();
        let ks = candidate_knots(&x, 0, &vec![true; 100], 5, 2).unwrap();
        assert_eq!(ks.len(), 20);
        assert!(ks.iter().all(|&k| k >= 2.0 && k <= 97.0));
    }

    #[test]
    fn candidate_knots_can_be_empty() {
        let x = DenseMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        let ks = candidate_knots(&x, 0, &[true, true], 1, 1).unwrap();
        assert!(ks.is_empty());
    }

    #[test]
    fn default_endspan_matches_rule() {
        assert_eq!(default_endspan(10), 1);
        assert_eq!(default_endspan(100), 5);
        assert_eq!(default_endspan(500), 10);
        assert_eq!(default_endspan(5000), 10);
    }
}
