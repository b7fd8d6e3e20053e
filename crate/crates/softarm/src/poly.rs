//! Real polynomials with ascending coefficients, used for the p̄-scheduled
//! plant parameters and the identification fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    /// coeffs[i] multiplies x^i.
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::constant(0.0);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    /// Strict positivity probed on a dense grid over [lo, hi].
    pub fn positive_on(&self, lo: f64, hi: f64) -> bool {
        grid(lo, hi).all(|x| self.eval(x) > 0.0)
    }

    /// Non-decreasing over [lo, hi], probed on a dense grid.
    pub fn increasing_on(&self, lo: f64, hi: f64) -> bool {
        let d = self.derivative();
        grid(lo, hi).all(|x| d.eval(x) >= 0.0)
    }
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    const POINTS: usize = 201;
    (0..POINTS).map(move |i| lo + (hi - lo) * i as f64 / (POINTS - 1) as f64)
}

impl Polynomial {
    /// Least-squares fit of the given degree through (x, y) pairs.
    pub fn fit(x: &[f64], y: &[f64], degree: usize) -> crate::error::Result<Polynomial> {
        use crate::error::Error;
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < degree + 1 {
            return Err(Error::invalid(format!(
                "need at least {} points for a degree-{degree} fit, got {}",
                degree + 1,
                x.len()
            )));
        }
        let vander = nalgebra::DMatrix::from_fn(x.len(), degree + 1, |r, c| x[r].powi(c as i32));
        let rhs = nalgebra::DVector::from_column_slice(y);
        let svd = vander.svd(true, true);
        let coeffs = svd
            .solve(&rhs, 1e-14)
            .map_err(|_| Error::NumericalConditioning { condition: f64::NAN })?;
        Ok(Polynomial::new(coeffs.iter().cloned().collect()))
    }

    /// Largest relative deviation from `other` over a dense grid of [lo, hi],
    /// normalized by the sup of |other|.
    pub fn sup_relative_error(&self, other: &Polynomial, lo: f64, hi: f64) -> f64 {
        let mut max_diff: f64 = 0.0;
        let mut max_ref: f64 = 0.0;
        for x in grid(lo, hi) {
            max_diff = max_diff.max((self.eval(x) - other.eval(x)).abs());
            max_ref = max_ref.max(other.eval(x).abs());
        }
        if max_ref == 0.0 {
            return if max_diff == 0.0 { 0.0 } else { f64::INFINITY };
        }
        max_diff / max_ref
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivative() {
        // 1 + 2x + 3x^2
        let p = Polynomial::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(2.0), 1.0 + 4.0 + 12.0);
        let d = p.derivative();
        assert_eq!(d.coeffs, vec![2.0, 6.0]);
        assert_eq!(Polynomial::constant(5.0).derivative().coeffs, vec![0.0]);
    }

    #[test]
    fn range_checks() {
        let k = Polynomial::new(vec![-1.0, 4.0]); // 4x − 1
        assert!(k.positive_on(1.0, 1.2));
        assert!(!k.positive_on(0.0, 1.2));
        assert!(k.increasing_on(1.0, 1.2));
        assert!(!Polynomial::new(vec![1.0, -0.1]).increasing_on(1.0, 1.2));
    }
}
