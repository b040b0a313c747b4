//! Central finite differences with a coordinate-scaled step policy.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Relative step sizes for central differences.
///
/// The actual step for a coordinate `c` is `scale * max(1, |c|)`. `first`
/// is used when differentiating quantities that are themselves evaluated
/// in closed form; `second` when the differentiated quantity already
/// carries one finite-difference or jet level (curvature, Laplacians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdPolicy {
    pub first: f64,
    pub second: f64,
}

impl Default for FdPolicy {
    fn default() -> Self {
        Self {
            first: 1e-5,
            second: 1e-4,
        }
    }
}

#[inline]
pub fn step_for(scale: f64, coord: f64) -> f64 {
    scale * coord.abs().max(1.0)
}

/// Jacobian of `f` at `x`; column `j` holds the partials with respect to `x[j]`.
pub fn jacobian<F>(f: F, x: &DVector<f64>, scale: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let h = step_for(scale, x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        cols.push((fp - fm) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Gradient of a scalar function.
pub fn gradient<F>(f: F, x: &DVector<f64>, scale: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let h = step_for(scale, x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        g[j] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Step along direction `d` from `x`, scaled so the largest coordinate
/// change matches the coordinate step policy. Returns `None` for `d = 0`.
pub fn directional_step(x: &DVector<f64>, d: &DVector<f64>, scale: f64) -> Option<f64> {
    let dmax = d.amax();
    if dmax == 0.0 {
        return None;
    }
    Some(step_for(scale, x.amax()) / dmax)
}

/// Derivative of the scalar `f` along `d`.
pub fn directional_scalar<F>(f: F, x: &DVector<f64>, d: &DVector<f64>, scale: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let Some(h) = directional_step(x, d, scale) else {
        return Ok(0.0);
    };
    let fp = f(&(x + d * h))?;
    let fm = f(&(x - d * h))?;
    Ok((fp - fm) / (2.0 * h))
}

/// Derivative of the vector-valued `f` along `d`.
pub fn directional_vector<F>(
    f: F,
    x: &DVector<f64>,
    d: &DVector<f64>,
    scale: f64,
    out_len: usize,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let Some(h) = directional_step(x, d, scale) else {
        return Ok(DVector::zeros(out_len));
    };
    let fp = f(&(x + d * h))?;
    let fm = f(&(x - d * h))?;
    Ok((fp - fm) / (2.0 * h))
}

/// Relative discrepancy `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Max-norm relative discrepancy between two matrices.
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_quadratic_map() {
        let f = |x: &DVector<f64>| Ok(DVector::from_vec(vec![x[0] * x[1], x[0] * x[0] - 3.0 * x[1]]));
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let j = jacobian(f, &x, 1e-5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0, 1.5, 3.0, -3.0]);
        assert!((j - expected).amax() < 1e-8);
    }

    #[test]
    fn directional_derivative_of_zero_direction_is_zero() {
        let x = DVector::from_vec(vec![0.3, 0.1]);
        let d = DVector::zeros(2);
        let v = directional_scalar(|z: &DVector<f64>| Ok(z[0].exp()), &x, &d, 1e-5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn directional_matches_gradient_contraction() {
        let f = |z: &DVector<f64>| Ok(z[0].sin() * z[1] + z[2].powi(3));
        let x = DVector::from_vec(vec![0.4, -1.2, 2.5]);
        let d = DVector::from_vec(vec![0.3, 2.0, -0.7]);
        let g = gradient(f, &x, 1e-5).unwrap();
        let dd = directional_scalar(f, &x, &d, 1e-5).unwrap();
        assert!((g.dot(&d) - dd).abs() < 1e-7);
    }
}
