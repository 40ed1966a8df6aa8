//! Five-point finite-difference stencils on uniform samples.

use crate::error::{Error, Result};

/// Checks that `t` is uniformly spaced and returns the spacing.
pub fn uniform_spacing(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let h = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if let Some(index) = t.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneGrid { index: index + 1 });
    }
    let scale = t[0].abs().max(t[t.len() - 1].abs()).max(h);
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * scale {
            return Err(Error::InsufficientData(format!(
                "samples are not uniformly spaced (interval {k})"
            )));
        }
    }
    Ok(h)
}

/// Second derivative at interior index `j` (needs `2 <= j < len - 2`).
pub fn second_derivative(f: &[f64], j: usize, h: f64) -> f64 {
    (-f[j + 2] + 16.0 * f[j + 1] - 30.0 * f[j] + 16.0 * f[j - 1] - f[j - 2]) / (12.0 * h * h)
}

/// Fourth-order first derivative at any index of a series with at least five samples.
pub fn first_derivative(f: &[f64], j: usize, h: f64) -> f64 {
    let n = f.len();
    debug_assert!(n >= 5);
    let d = if j >= 2 && j + 2 < n {
        f[j - 2] - 8.0 * f[j - 1] + 8.0 * f[j + 1] - f[j + 2]
    } else if j == 0 {
        -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
    } else if j == 1 {
        -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
    } else if j == n - 2 {
        3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]
    } else {
        25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]
    };
    d / (12.0 * h)
}
