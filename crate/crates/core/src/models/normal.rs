//! `y_t ~ N(m, sigma^2)` with auxiliary statistics (mean, MLE variance).

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LtProblem, Model};
use crate::error::{Error, Result};
use crate::param::{AuxVector, ParamSpace, Transform};
use crate::rng::Stream;

#[derive(Debug, Clone)]
pub struct NormalModel {
    t: usize,
    truth: [f64; 2],
    space: Arc<ParamSpace>,
}

pub type NormalData = Vec<f64>;

pub fn normal_space() -> Arc<ParamSpace> {
    ParamSpace::new(&[
        ("m", f64::NEG_INFINITY, f64::INFINITY, Transform::Identity),
        ("sigma2", 0.0, f64::INFINITY, Transform::Log),
    ])
}

/// Sample mean and variance with divisor `T`.
pub fn normal_aux_stats(data: &[f64]) -> Result<AuxVector> {
    if data.len() < 2 {
        return Err(Error::ShapeMismatch(format!("need T >= 2, got {}", data.len())));
    }
    let t = data.len() as f64;
    let mean = data.iter().sum::<f64>() / t;
    let var = data.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / t;
    if var == 0.0 || data.iter().all(|&y| y == data[0]) {
        return Err(Error::DegenerateSample);
    }
    AuxVector::new(vec![mean, var])
}

/// Innovation mean and `sum (e_t - ebar)^2 / T`.
fn innovation_moments(e: &[f64]) -> (f64, f64) {
    let t = e.len() as f64;
    let ebar = e.iter().sum::<f64>() / t;
    let v = e.iter().map(|x| (x - ebar) * (x - ebar)).sum::<f64>() / t;
    (ebar, v)
}

/// Closed-form solution of `aux_stats(simulate(theta, e)) = psi_hat`.
pub fn normal_exact_solve(psi_hat: &AuxVector, e: &[f64]) -> Result<[f64; 2]> {
    let (ebar, v) = innovation_moments(e);
    if v <= 0.0 {
        return Err(Error::DegenerateInnovations);
    }
    let sigma2 = psi_hat.0[1] / v;
    Ok([psi_hat.0[0] - sigma2.sqrt() * ebar, sigma2])
}

impl NormalModel {
    pub fn new(t: usize, m: f64, sigma2: f64) -> Result<Self> {
        if t < 6 {
            return Err(Error::InvalidParam(format!("T must be at least 6, got {t}")));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::NonPositiveVariance(sigma2));
        }
        Ok(Self { t, truth: [m, sigma2], space: normal_space() })
    }

    pub fn t(&self) -> usize {
        self.t
    }
}

impl Model for NormalModel {
    type Innovations = Vec<f64>;
    type Data = NormalData;

    fn name(&self) -> &'static str {
        "normal"
    }

    fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    fn truth(&self) -> &[f64] {
        &self.truth
    }

    fn sample_size(&self) -> usize {
        self.t
    }

    fn draw_innovations(&self, rng: &mut Stream) -> Vec<f64> {
        (0..self.t).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn simulate(&self, theta: &[f64], eps: &Vec<f64>) -> Vec<f64> {
        let sd = theta[1].sqrt();
        eps.iter().map(|e| theta[0] + sd * e).collect()
    }

    fn aux_stats(&self, data: &Vec<f64>) -> Result<AuxVector> {
        normal_aux_stats(data)
    }

    fn simulated_aux(&self, theta: &[f64], eps: &Vec<f64>) -> Result<Vec<f64>> {
        let (ebar, v) = innovation_moments(eps);
        Ok(vec![theta[0] + theta[1].sqrt() * ebar, theta[1] * v])
    }

    /// `E[psi_hat] = (m, sigma^2 (T-1)/T)`.
    fn analytic_binding(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let t = self.t as f64;
        Some(vec![theta[0], theta[1] * (t - 1.0) / t])
    }

    fn exact_solve(&self, psi_hat: &AuxVector, eps: &Vec<f64>) -> Option<Vec<f64>> {
        normal_exact_solve(psi_hat, eps).ok().map(|s| s.to_vec())
    }

    fn initial_guess(&self, psi_hat: &AuxVector) -> Vec<f64> {
        let t = self.t as f64;
        vec![psi_hat.0[0], psi_hat.0[1] * t / (t - 1.0)]
    }

    /// `diag(sigma_hat^2, 2 sigma_hat^4)`.
    fn aux_covariance(&self, _data: &Vec<f64>, psi_hat: &AuxVector) -> Result<DMatrix<f64>> {
        let s2 = psi_hat.0[1];
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![s2, 2.0 * s2 * s2])))
    }

    fn md_covariance(&self, _data: &Vec<f64>, psi_hat: &AuxVector) -> Result<DMatrix<f64>> {
        let t = self.t as f64;
        let s2 = psi_hat.0[1] * t / (t - 1.0);
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            s2 / t,
            2.0 * s2 * s2 / (t - 1.0),
        ])))
    }

    /// Laplace-type problem built on the asymptotic binding `psi(theta) = theta`
    /// with weights from the preliminary variance estimates.
    fn lt_problem(&self, data: &Vec<f64>, psi_hat: &AuxVector) -> Result<LtProblem> {
        let sigma = self.aux_covariance(data, psi_hat)?;
        let weight = sigma.clone().try_inverse().ok_or(Error::SingularCovariance)?;
        let target = psi_hat.0.clone();
        Ok(LtProblem {
            space: self.space.clone(),
            moments: Arc::new(move |theta: &[f64]| Ok(vec![target[0] - theta[0], target[1] - theta[1]])),
            weight,
            sigma,
            n: self.t as f64,
            center: psi_hat.0.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, SeedSpec};

    #[test]
    fn aux_stats_examples() {
        assert_eq!(normal_aux_stats(&[1.0; 4]), Err(Error::DegenerateSample));
        assert_eq!(normal_aux_stats(&[0.0, 2.0]).unwrap().0, vec![1.0, 1.0]);
    }

    #[test]
    fn aux_stats_law_of_large_numbers() {
        let mut rng = derive_stream(SeedSpec::new(3, 0));
        let y: Vec<f64> = (0..1_000_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a = normal_aux_stats(&y).unwrap();
        assert!(a.0[0].abs() < 0.01 && (a.0[1] - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_solve_hand_example() {
        let psi = AuxVector(vec![0.0, 3.0]);
        let theta = normal_exact_solve(&psi, &[-1.0, 1.0]).unwrap();
        assert!((theta[0]).abs() < 1e-15 && (theta[1] - 3.0).abs() < 1e-15);
        assert_eq!(normal_exact_solve(&psi, &[0.5, 0.5]), Err(Error::DegenerateInnovations));
    }

    #[test]
    fn exact_solve_round_trips() {
        let model = NormalModel::new(10, 0.0, 2.0).unwrap();
        for k in 0..20 {
            let e = model.innovations(SeedSpec::new(11, k));
            let psi = AuxVector(vec![0.7, 1.3]);
            let theta = normal_exact_solve(&psi, &e).unwrap();
            let back = normal_aux_stats(&model.simulate(&theta, &e)).unwrap();
            assert!((back.0[0] - 0.7).abs() < 1e-12 && (back.0[1] - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_scale_innovations() {
        // sum (e - ebar)^2 / T = 1
        let e = [1.0, -1.0, 1.0, -1.0];
        let psi = AuxVector(vec![0.5, 2.0]);
        let theta = normal_exact_solve(&psi, &e).unwrap();
        assert!((theta[1] - 2.0).abs() < 1e-15 && (theta[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fused_path_matches_dataset_path() {
        let model = NormalModel::new(8, 0.0, 1.0).unwrap();
        let e = model.innovations(SeedSpec::new(5, 5));
        let theta = [0.3, 1.7];
        let a = model.simulated_aux(&theta, &e).unwrap();
        let b = model.aux_stats(&model.simulate(&theta, &e)).unwrap().0;
        assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
    }

    #[test]
    fn binding_function_matches_simulation_mean() {
        let model = NormalModel::new(6, 1.0, 2.0).unwrap();
        let n = 100_000;
        let (mut s, mut ss) = (0.0, 0.0);
        for k in 0..n {
            let e = model.innovations(SeedSpec::new(9, k));
            let a = model.simulated_aux(&[1.0, 2.0], &e).unwrap()[1];
            s += a;
            ss += a * a;
        }
        let mean = s / n as f64;
        let se = ((ss / n as f64 - mean * mean) / n as f64).sqrt();
        let binding = model.analytic_binding(&[1.0, 2.0]).unwrap()[1];
        assert!((mean - binding).abs() < 3.0 * se, "{mean} vs {binding} (se {se})");
    }
}
