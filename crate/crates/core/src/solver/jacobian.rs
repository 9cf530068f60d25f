use nalgebra::DMatrix;

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Central-difference Jacobian of `f` at `theta`.
///
/// Column `j` uses step `h_j = fd_step_rel * max(1, |theta_j|)`, shrunk to
/// half the distance to a finite bound when the bound is closer.
pub fn jacobian_fd<F>(f: F, theta: &ParamVector, cfg: &SolverConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let space = theta.space();
    let x = theta.values();
    let k = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut point = x.to_vec();
    for j in 0..k {
        let mut h = cfg.fd_step_rel * x[j].abs().max(1.0);
        let room = (x[j] - space.lower[j]).min(space.upper[j] - x[j]);
        if room <= h {
            h = 0.5 * room;
        }
        point[j] = x[j] + h;
        let plus = f(&point);
        point[j] = x[j] - h;
        let minus = f(&point);
        point[j] = x[j];
        let (plus, minus) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p, m),
            _ => return Err(Error::NonFiniteEntry { row: 0, col: j }),
        };
        let m = jac.get_or_insert_with(|| DMatrix::zeros(plus.len(), k));
        for i in 0..plus.len() {
            let d = (plus[i] - minus[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
            m[(i, j)] = d;
        }
    }
    jac.ok_or_else(|| Error::ShapeMismatch("empty parameter vector".into()))
}

/// Sign and `ln|det M|` from a partially pivoted LU factorization.
/// Singular (or non-square) input gives `(0, -inf)`.
pub fn lu_logdet(m: &DMatrix<f64>) -> (i8, f64) {
    if !m.is_square() || m.nrows() == 0 || m.iter().any(|v| !v.is_finite()) {
        return (0, f64::NEG_INFINITY);
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign: f64 = lu.p().determinant();
    let mut logabs = 0.0;
    for d in u.diagonal().iter() {
        if *d == 0.0 {
            return (0, f64::NEG_INFINITY);
        }
        sign *= d.signum();
        logabs += d.abs().ln();
    }
    (sign as i8, logabs)
}

pub fn logabsdet(m: &DMatrix<f64>) -> f64 {
    lu_logdet(m).1
}
