//! Dynamic panel with fixed effects:
//! `y_it = alpha_i + rho y_{i,t-1} + beta x_it + sigma eps_it`.
//!
//! Auxiliary statistics are the LSDV estimates `(rho, beta, sigma2)`, i.e.
//! the zero of the within-transformed moment conditions, so the binding
//! function is the identity in the limit.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LtProblem, Model};
use crate::error::{Error, Result};
use crate::param::{AuxVector, ParamSpace, Transform};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    pub n: usize,
    pub t: usize,
    pub rho: f64,
    pub beta: f64,
    pub sigma2: f64,
    /// SD of the fixed effects `alpha_i`.
    pub alpha_sd: f64,
    /// AR(1) coefficient of the regressor; 0 gives iid draws.
    pub x_ar: f64,
    /// Innovation SD of the regressor process.
    pub x_sd: f64,
    /// Pre-sample periods simulated from `y = 0`; 0 means `y_i0 = 0`.
    pub burn_in: usize,
    /// Hold the regressor at the observed design in simulations.
    pub condition_on_x: bool,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 6,
            rho: 0.6,
            beta: 1.0,
            sigma2: 2.0,
            alpha_sd: 1.0,
            x_ar: 0.4,
            x_sd: 1.0,
            burn_in: 0,
            condition_on_x: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    pub n: usize,
    pub t: usize,
    /// Row-major `n x t`.
    pub y: Vec<f64>,
    pub ylag: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PanelInnovations {
    pub alpha: Vec<f64>,
    /// Regressor path, `n x (burn_in + t)`.
    pub x: Vec<f64>,
    /// Standardized shocks, `n x (burn_in + t)`.
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PanelModel {
    cfg: PanelConfig,
    truth: [f64; 3],
    space: Arc<ParamSpace>,
    fixed_x: Option<Arc<Vec<f64>>>,
}

pub fn panel_space() -> Arc<ParamSpace> {
    ParamSpace::new(&[
        ("rho", -1.0, 1.0, Transform::Atanh),
        ("beta", f64::NEG_INFINITY, f64::INFINITY, Transform::Identity),
        ("sigma2", 0.0, f64::INFINITY, Transform::Log),
    ])
}

impl PanelModel {
    pub fn new(cfg: PanelConfig) -> Result<Self> {
        if !(cfg.rho.abs() < 1.0) {
            return Err(Error::InvalidParam(format!("|rho| must be < 1, got {}", cfg.rho)));
        }
        if !(cfg.sigma2 > 0.0) {
            return Err(Error::NonPositiveVariance(cfg.sigma2));
        }
        if cfg.t < 2 || cfg.n * (cfg.t - 1) <= 3 {
            return Err(Error::InvalidParam(format!("panel {}x{} too small", cfg.n, cfg.t)));
        }
        if !(cfg.x_ar.abs() < 1.0) {
            return Err(Error::InvalidParam("regressor AR coefficient must be < 1".into()));
        }
        Ok(Self {
            truth: [cfg.rho, cfg.beta, cfg.sigma2],
            cfg,
            space: panel_space(),
            fixed_x: None,
        })
    }

    pub fn config(&self) -> &PanelConfig {
        &self.cfg
    }

    /// A copy whose simulations reuse the observed regressor values.
    pub fn conditioned_on(&self, data: &PanelData) -> Self {
        let mut out = self.clone();
        out.fixed_x = Some(Arc::new(data.x.clone()));
        out
    }

    fn periods(&self) -> usize {
        self.cfg.burn_in + self.cfg.t
    }
}

impl Model for PanelModel {
    type Innovations = PanelInnovations;
    type Data = PanelData;

    fn name(&self) -> &'static str {
        "panel"
    }

    fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    fn truth(&self) -> &[f64] {
        &self.truth
    }

    fn sample_size(&self) -> usize {
        self.cfg.n * self.cfg.t
    }

    fn draw_innovations(&self, rng: &mut Stream) -> PanelInnovations {
        let (n, t, l) = (self.cfg.n, self.cfg.t, self.periods());
        let phi = self.cfg.x_ar;
        let stationary_sd = self.cfg.x_sd / (1.0 - phi * phi).sqrt();
        let alpha: Vec<f64> =
            (0..n).map(|_| self.cfg.alpha_sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut x = vec![0.0; n * l];
        for i in 0..n {
            let mut prev = stationary_sd * rng.sample::<f64, _>(StandardNormal);
            for k in 0..l {
                if k > 0 {
                    prev = phi * prev + self.cfg.x_sd * rng.sample::<f64, _>(StandardNormal);
                }
                x[i * l + k] = prev;
            }
        }
        let eps = (0..n * l).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(fixed) = &self.fixed_x {
            for i in 0..n {
                x[i * l + self.cfg.burn_in..(i + 1) * l].copy_from_slice(&fixed[i * t..(i + 1) * t]);
            }
        }
        PanelInnovations { alpha, x, eps }
    }

    fn simulate(&self, theta: &[f64], eps: &PanelInnovations) -> PanelData {
        let (n, t, l, burn) = (self.cfg.n, self.cfg.t, self.periods(), self.cfg.burn_in);
        let (rho, beta, sd) = (theta[0], theta[1], theta[2].max(0.0).sqrt());
        let mut data = PanelData { n, t, y: vec![0.0; n * t], ylag: vec![0.0; n * t], x: vec![0.0; n * t] };
        for i in 0..n {
            let mut prev = 0.0;
            for k in 0..l {
                let xk = eps.x[i * l + k];
                let y = eps.alpha[i] + rho * prev + beta * xk + sd * eps.eps[i * l + k];
                if k >= burn {
                    let j = i * t + k - burn;
                    data.y[j] = y;
                    data.ylag[j] = prev;
                    data.x[j] = xk;
                }
                prev = y;
            }
        }
        data
    }

    fn aux_stats(&self, data: &PanelData) -> Result<AuxVector> {
        panel_lsdv(data).and_then(|v| AuxVector::new(v.to_vec()))
    }

    fn simulated_aux(&self, theta: &[f64], eps: &PanelInnovations) -> Result<Vec<f64>> {
        let (n, t, l, burn) = (self.cfg.n, self.cfg.t, self.periods(), self.cfg.burn_in);
        let (rho, beta, sd) = (theta[0], theta[1], theta[2].max(0.0).sqrt());
        let mut ys = vec![0.0; t];
        let mut yl = vec![0.0; t];
        let mut xs = vec![0.0; t];
        let mut sums = CrossProducts::default();
        for i in 0..n {
            let mut prev = 0.0;
            let row = i * l;
            for k in 0..l {
                let xk = eps.x[row + k];
                let y = eps.alpha[i] + rho * prev + beta * xk + sd * eps.eps[row + k];
                if k >= burn {
                    ys[k - burn] = y;
                    yl[k - burn] = prev;
                    xs[k - burn] = xk;
                }
                prev = y;
            }
            sums.add_unit(&ys, &yl, &xs);
        }
        sums.solve(n * t, t).map(|v| v.to_vec())
    }

    fn direct_md(&self, psi_hat: &AuxVector) -> Option<Vec<f64>> {
        Some(psi_hat.0.clone())
    }

    fn initial_guess(&self, psi_hat: &AuxVector) -> Vec<f64> {
        vec![psi_hat.0[0].clamp(-0.99, 0.99), psi_hat.0[1], psi_hat.0[2].max(1e-6)]
    }

    /// Moment covariance mapped to auxiliary-statistic space through the
    /// moment Jacobian: `G^{-1} S G^{-T}`.
    fn aux_covariance(&self, data: &PanelData, psi_hat: &AuxVector) -> Result<DMatrix<f64>> {
        let s = panel_moment_covariance(data, &psi_hat.0)?;
        let g = panel_moment_jacobian(data, &psi_hat.0);
        let gi = g.try_inverse().ok_or(Error::SingularDesign)?;
        Ok(&gi * s * gi.transpose())
    }

    fn md_covariance(&self, data: &PanelData, psi_hat: &AuxVector) -> Result<DMatrix<f64>> {
        Ok(self.aux_covariance(data, psi_hat)? / self.sample_size() as f64)
    }

    fn lt_problem(&self, data: &PanelData, psi_hat: &AuxVector) -> Result<LtProblem> {
        let sigma = panel_moment_covariance(data, &psi_hat.0)?;
        let weight = sigma.clone().try_inverse().ok_or(Error::SingularCovariance)?;
        let observed = Arc::new(data.clone());
        Ok(LtProblem {
            space: self.space.clone(),
            moments: Arc::new(move |theta: &[f64]| panel_moments(theta, &observed).map(|g| g.to_vec())),
            weight,
            sigma,
            n: (data.n * data.t) as f64,
            center: psi_hat.0.clone(),
        })
    }
}

/// Within-unit cross products accumulated across units.
#[derive(Debug, Default, Clone, Copy)]
struct CrossProducts {
    ll: f64,
    lx: f64,
    xx: f64,
    ly: f64,
    xy: f64,
    yy: f64,
}

impl CrossProducts {
    fn add_unit(&mut self, y: &[f64], yl: &[f64], x: &[f64]) {
        let t = y.len() as f64;
        let my = y.iter().sum::<f64>() / t;
        let ml = yl.iter().sum::<f64>() / t;
        let mx = x.iter().sum::<f64>() / t;
        for k in 0..y.len() {
            let (a, b, c) = (yl[k] - ml, x[k] - mx, y[k] - my);
            self.ll += a * a;
            self.lx += a * b;
            self.xx += b * b;
            self.ly += a * c;
            self.xy += b * c;
            self.yy += c * c;
        }
    }

    fn solve(&self, nobs: usize, t: usize) -> Result<[f64; 3]> {
        let det = self.ll * self.xx - self.lx * self.lx;
        if !(det.abs() > 1e-12 * (self.ll * self.xx).abs()) || !det.is_finite() {
            return Err(Error::SingularDesign);
        }
        let rho = (self.xx * self.ly - self.lx * self.xy) / det;
        let beta = (self.ll * self.xy - self.lx * self.ly) / det;
        let ssr = (self.yy - rho * self.ly - beta * self.xy).max(0.0);
        let sigma2 = ssr / nobs as f64 / (1.0 - 1.0 / t as f64);
        Ok([rho, beta, sigma2])
    }
}

fn check_shape(data: &PanelData) -> Result<()> {
    let nt = data.n * data.t;
    if data.t < 2 || data.y.len() != nt || data.ylag.len() != nt || data.x.len() != nt {
        return Err(Error::ShapeMismatch(format!(
            "panel {}x{} with vectors {}/{}/{}",
            data.n,
            data.t,
            data.y.len(),
            data.ylag.len(),
            data.x.len()
        )));
    }
    Ok(())
}

/// Demeaned `(y, y_{-1}, x)` per observation.
fn within(data: &PanelData) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = data.t;
    let demean = |v: &[f64]| -> Vec<f64> {
        v.chunks_exact(t)
            .flat_map(|row| {
                let m = row.iter().sum::<f64>() / t as f64;
                row.iter().map(move |z| z - m)
            })
            .collect()
    };
    (demean(&data.y), demean(&data.ylag), demean(&data.x))
}

/// LSDV: least squares on within-transformed data, with
/// `sigma2 = mean squared residual / (1 - 1/T)`.
pub fn panel_lsdv(data: &PanelData) -> Result<[f64; 3]> {
    check_shape(data)?;
    let mut sums = CrossProducts::default();
    for i in 0..data.n {
        let r = i * data.t..(i + 1) * data.t;
        sums.add_unit(&data.y[r.clone()], &data.ylag[r.clone()], &data.x[r]);
    }
    let mut theta = sums.solve(data.n * data.t, data.t)?;
    // Recompute sigma2 from explicit residuals; the cross-product shortcut
    // loses a few digits to cancellation.
    let (y, yl, x) = within(data);
    let ssr: f64 = (0..y.len())
        .map(|j| {
            let u = y[j] - theta[0] * yl[j] - theta[1] * x[j];
            u * u
        })
        .sum();
    theta[2] = ssr / y.len() as f64 / (1.0 - 1.0 / data.t as f64);
    Ok(theta)
}

/// Per-observation moment contributions `g_it`.
pub fn panel_moment_contributions(theta: &[f64], data: &PanelData) -> Result<Vec<[f64; 3]>> {
    check_shape(data)?;
    if theta.len() != 3 {
        return Err(Error::ShapeMismatch(format!("theta of length {}", theta.len())));
    }
    let c = theta[2] * (1.0 - 1.0 / data.t as f64);
    let (y, yl, x) = within(data);
    Ok((0..y.len())
        .map(|j| {
            let u = y[j] - theta[0] * yl[j] - theta[1] * x[j];
            [yl[j] * u, x[j] * u, u * u - c]
        })
        .collect())
}

/// Sample-average moments on demeaned data.
pub fn panel_moments(theta: &[f64], data: &PanelData) -> Result<[f64; 3]> {
    let g = panel_moment_contributions(theta, data)?;
    let n = g.len() as f64;
    let mut out = [0.0; 3];
    for gi in &g {
        for k in 0..3 {
            out[k] += gi[k];
        }
    }
    Ok(out.map(|v| v / n))
}

/// Centered second-moment matrix `1/(NT) sum g g' - gbar gbar'`.
pub fn panel_moment_covariance(data: &PanelData, theta: &[f64]) -> Result<DMatrix<f64>> {
    let g = panel_moment_contributions(theta, data)?;
    let n = g.len() as f64;
    let mut mean = [0.0; 3];
    let mut m = Matrix3::<f64>::zeros();
    for gi in &g {
        for a in 0..3 {
            mean[a] += gi[a] / n;
            for b in 0..3 {
                m[(a, b)] += gi[a] * gi[b] / n;
            }
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            m[(a, b)] -= mean[a] * mean[b];
        }
    }
    Ok(DMatrix::from_iterator(3, 3, m.iter().copied()))
}

/// `W = (1/(NT) sum g g' - gbar gbar')^{-1}`.
pub fn panel_weighting_matrix(data: &PanelData, theta: &[f64]) -> Result<DMatrix<f64>> {
    let s = panel_moment_covariance(data, theta)?;
    let chol = s.cholesky().ok_or(Error::SingularCovariance)?;
    let w = chol.inverse();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok((&w + w.transpose()) * 0.5)
}

/// Analytic Jacobian of [`panel_moments`] with respect to `theta`.
pub fn panel_moment_jacobian(data: &PanelData, theta: &[f64]) -> DMatrix<f64> {
    let (y, yl, x) = within(data);
    let n = y.len() as f64;
    let (mut ll, mut lx, mut xx, mut ul, mut ux) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..y.len() {
        let u = y[j] - theta[0] * yl[j] - theta[1] * x[j];
        ll += yl[j] * yl[j];
        lx += yl[j] * x[j];
        xx += x[j] * x[j];
        ul += u * yl[j];
        ux += u * x[j];
    }
    let c = 1.0 - 1.0 / data.t as f64;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            -ll / n, -lx / n, 0.0, //
            -lx / n, -xx / n, 0.0, //
            -2.0 * ul / n, -2.0 * ux / n, -c,
        ],
    )
}

/// Gaussian log-likelihood of the within-transformed data, conditional on
/// `y_i0`. Each unit's `T` residuals are mapped to `T-1` orthonormal
/// contrasts, which removes the fixed effect and leaves `N(0, sigma2 I)`.
pub fn panel_exact_loglik(theta: &[f64], data: &PanelData) -> Result<f64> {
    check_shape(data)?;
    let sigma2 = theta[2];
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    let (y, yl, x) = within(data);
    let ssr: f64 = (0..y.len())
        .map(|j| {
            let u = y[j] - theta[0] * yl[j] - theta[1] * x[j];
            u * u
        })
        .sum();
    let dof = (data.n * (data.t - 1)) as f64;
    Ok(-0.5 * dof * (2.0 * std::f64::consts::PI * sigma2).ln() - ssr / (2.0 * sigma2))
}

impl PanelData {
    /// One row per `(i, t)` with columns `i,t,y,x`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "i,t,y,x")?;
        for i in 0..self.n {
            for t in 0..self.t {
                let j = i * self.t + t;
                writeln!(f, "{},{},{},{}", i + 1, t + 1, self.y[j], self.x[j])?;
            }
        }
        f.flush()?;
        Ok(())
    }
}
