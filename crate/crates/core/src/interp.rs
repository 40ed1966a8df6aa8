//! Natural cubic spline over strictly increasing samples.
//!
//! Used for tabulated mass profiles and for turning sampled fields back into
//! callables that an ODE right-hand side can query between samples.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} knots vs {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.len() < 4 {
            return Err(invalid(
                "table",
                "cubic interpolation needs at least 4 samples",
            ));
        }
        if let Some(bad) = knots.iter().chain(values.iter()).find(|v| !v.is_finite()) {
            return Err(invalid("table", format!("non-finite sample {bad}")));
        }
        if let Some(index) = knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneGrid { index: index + 1 });
        }
        let curvature = natural_curvature(&knots, &values);
        Ok(Self {
            knots,
            values,
            curvature,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&t) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let i = self.knots.partition_point(|&k| k <= t);
        Ok(i.saturating_sub(1).min(self.knots.len() - 2))
    }

    /// Value of the interpolant at `t`.
    pub fn value(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        let (a, b, h) = self.weights(i, t);
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        Ok(a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0)
    }

    /// Analytic first derivative of the interpolant at `t`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        let (a, b, h) = self.weights(i, t);
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        Ok(
            (self.values[i + 1] - self.values[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0
                + (3.0 * b * b - 1.0) / 6.0 * h * m1,
        )
    }

    fn weights(&self, i: usize, t: f64) -> (f64, f64, f64) {
        let h = self.knots[i + 1] - self.knots[i];
        let b = (t - self.knots[i]) / h;
        (1.0 - b, b, h)
    }
}

/// Solves the tridiagonal system for natural end conditions (zero curvature at both ends).
fn natural_curvature(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    let interior = n - 2;
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for k in 0..interior {
        let i = k + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[k] = (h0 + h1) / 3.0;
        upper[k] = h1 / 6.0;
        rhs[k] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    // Forward sweep; the matrix is symmetric and strictly diagonally dominant.
    for k in 1..interior {
        let lower = x[k + 1] - x[k];
        let w = lower / 6.0 / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    for k in (0..interior).rev() {
        let next = if k + 1 < interior { m[k + 2] } else { 0.0 };
        m[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knot_values() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(x.clone(), y.clone()).unwrap();
        for (t, v) in x.iter().zip(&y) {
            assert!((s.value(*t).unwrap() - v).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_for_linear_data() {
        let x = vec![0.0, 0.5, 1.7, 2.0, 3.1];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t - 1.0).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for t in [0.1, 0.9, 2.5, 3.1] {
            assert!((s.value(t).unwrap() - (2.0 * t - 1.0)).abs() < 1e-13);
            assert!((s.derivative(t).unwrap() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(CubicSpline::new(vec![0.0, 1.0, 2.0], vec![1.0; 3]).is_err());
        assert!(matches!(
            CubicSpline::new(vec![0.0, 1.0, 1.0, 2.0], vec![1.0; 4]),
            Err(Error::NonMonotoneGrid { index: 2 })
        ));
        let s = CubicSpline::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0; 4]).unwrap();
        assert!(matches!(s.value(3.5), Err(Error::OutOfDomain { .. })));
    }
}
