use nalgebra::DMatrix;

use super::check_square;
use crate::error::{Error, Result};
use crate::models::{Model, Observed};
use crate::param::{EstimateMeta, EstimateSummary, ParamVector};
use crate::solver::{minimize_j, SolverConfig};

/// Minimum-distance estimator using the analytic binding function, or the
/// model's direct solution when the statistics are the estimator itself.
pub fn md_estimate<M: Model>(
    model: &M,
    obs: &Observed<M>,
    w: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<EstimateSummary> {
    check_square(w, obs.psi_hat.len())?;
    let space = model.space().clone();
    let point = if let Some(theta) = model.direct_md(&obs.psi_hat) {
        ParamVector::new(space, theta)?
    } else if model.analytic_binding(model.truth()).is_some() {
        let psi_hat = obs.psi_hat.as_slice();
        let residual = |theta: &[f64]| -> Result<Vec<f64>> {
            let psi = model.analytic_binding(theta).ok_or(Error::NoBindingFunction)?;
            Ok(psi_hat.iter().zip(&psi).map(|(a, b)| a - b).collect())
        };
        let theta0 = ParamVector::new(space, model.initial_guess(&obs.psi_hat))?;
        let report = minimize_j(residual, &theta0, w, cfg)?;
        if !report.converged {
            return Err(Error::NoConvergence { best_objective: report.final_objective });
        }
        report.solution
    } else {
        return Err(Error::NoBindingFunction);
    };
    let cov = model.md_covariance(&obs.data, &obs.psi_hat)?;
    let spread = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let meta = EstimateMeta { estimator: "MD".into(), ..Default::default() };
    EstimateSummary::new(point, spread, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NormalModel;
    use crate::param::AuxVector;

    #[test]
    fn normal_md_inverts_the_binding() {
        let model = NormalModel::new(10, 0.0, 2.0).unwrap();
        let obs = Observed { data: vec![0.0; 10], psi_hat: AuxVector(vec![0.4, 1.8]) };
        let est = md_estimate(&model, &obs, &DMatrix::identity(2, 2), &SolverConfig::default()).unwrap();
        assert!((est.point[0] - 0.4).abs() < 1e-10);
        assert!((est.point[1] - 2.0).abs() < 1e-10);
        let psi = model.analytic_binding(est.point.values()).unwrap();
        assert!((psi[1] - 1.8).abs() < 1e-8);
    }

    #[test]
    fn exact_inversion_at_known_point() {
        let model = NormalModel::new(8, 0.0, 1.0).unwrap();
        let star = [-0.3, 0.7];
        let psi = model.analytic_binding(&star).unwrap();
        let obs = Observed { data: vec![0.0; 8], psi_hat: AuxVector(psi) };
        let w = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let est = md_estimate(&model, &obs, &w, &SolverConfig::default()).unwrap();
        assert!((est.point[0] - star[0]).abs() < 1e-10 && (est.point[1] - star[1]).abs() < 1e-10);
    }
}
