use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{check_square, PriorSpec};
use crate::error::{Error, Result};
use crate::models::{Model, Observed};
use crate::param::{ParamSpace, ParamVector};
use crate::rng::{tags, SeedSpec};
use crate::solver::{lu_logdet, jacobian_fd, minimize_j, SolverConfig};
use crate::weights::{DrawDiagnostics, WeightedDraws};

/// Replacement streams tried per draw before giving up.
const MAX_ATTEMPTS: u64 = 32;

/// A weighted root of `map(theta) = target`.
pub(super) struct RootDraw {
    pub theta: Vec<f64>,
    pub log_weight: f64,
    pub diag: DrawDiagnostics,
}

/// Solves `map(theta) = target` under weighting `w` and weights the root by
/// `prior / |det d map / d theta|`. Returns `None` when the solve fails to
/// reach the tolerance, which includes roots outside the parameter box.
pub(super) fn root_draw<F>(
    space: &std::sync::Arc<ParamSpace>,
    map: F,
    target: &[f64],
    theta0: Vec<f64>,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    cfg: &SolverConfig,
) -> Result<Option<RootDraw>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let theta0 = ParamVector::new(space.clone(), theta0)?;
    let residual = |theta: &[f64]| -> Result<Vec<f64>> {
        Ok(target.iter().zip(map(theta)?).map(|(a, b)| a - b).collect())
    };
    let report = match minimize_j(residual, &theta0, w, cfg) {
        Ok(r) if r.converged => r,
        Ok(_) | Err(Error::ObjectiveNaN) => return Ok(None),
        Err(e) => return Err(e),
    };
    let jac = match jacobian_fd(&map, &report.solution, cfg) {
        Ok(j) => j,
        Err(Error::NonFiniteEntry { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (sign, logabs) = lu_logdet(&jac);
    let theta = report.solution.into_values();
    let log_prior = prior.log_density(space, &theta);
    // A singular Jacobian maps to zero weight rather than infinite weight.
    let log_weight = if logabs == f64::NEG_INFINITY { f64::NEG_INFINITY } else { log_prior - logabs };
    let diag = DrawDiagnostics { converged: true, jac_logdet: logabs, jac_sign: sign, iterations: report.iterations };
    Ok(Some(RootDraw { theta, log_weight, diag }))
}

/// Reverse sampler: for each `b`, fresh innovations, an exact solve of
/// `psi^b(theta) = psi_hat`, and weight `prior / |Jacobian|`.
///
/// A failed solve is discarded and retried on a replacement stream; the
/// number of failures is recorded in `failures`.
pub fn reverse_sampler<M: Model>(
    model: &M,
    obs: &Observed<M>,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    b: usize,
    seed: SeedSpec,
    cfg: &SolverConfig,
) -> Result<WeightedDraws> {
    check_square(w, obs.psi_hat.len())?;
    prior.validate(model.space())?;
    if b == 0 {
        return Err(Error::EmptyDraws);
    }
    let space = model.space();
    let psi_hat = &obs.psi_hat;
    let fallback = model.initial_guess(psi_hat);
    let results: Vec<(RootDraw, usize)> = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_ATTEMPTS {
                let stream = if attempt == 0 {
                    seed.sub(tags::RS, i)
                } else {
                    seed.sub(tags::RS_RETRY, (i << 8) | attempt)
                };
                let eps = model.innovations(stream);
                let theta0 = model
                    .exact_solve(psi_hat, &eps)
                    .filter(|t| space.interior(t))
                    .unwrap_or_else(|| fallback.clone());
                let map = |theta: &[f64]| model.simulated_aux(theta, &eps);
                if let Some(d) = root_draw(space, map, psi_hat.as_slice(), theta0, w, prior, cfg)? {
                    return Ok((d, attempt as usize));
                }
            }
            Err(Error::TooManyFailures { failed: MAX_ATTEMPTS as usize, total: 1 })
        })
        .collect::<Result<_>>()
        .map_err(|e| match e {
            Error::TooManyFailures { .. } => Error::TooManyFailures { failed: b, total: b },
            e => e,
        })?;
    let failures: usize = results.iter().map(|r| r.1).sum();
    if failures * 100 > b {
        return Err(Error::TooManyFailures { failed: failures, total: b });
    }
    let mut draws = Vec::with_capacity(b);
    let mut logw = Vec::with_capacity(b);
    let mut diags = Vec::with_capacity(b);
    for (d, _) in results {
        draws.push(d.theta);
        logw.push(d.log_weight);
        diags.push(d.diag);
    }
    let mut out = WeightedDraws::from_log_weights(space.clone(), draws, logw, diags)?;
    out.failures = failures;
    Ok(out)
}

/// The same draws weighted by the prior alone, i.e. omitting the Jacobian
/// factor. This is the incorrect weighting used as a control.
pub fn without_jacobian(draws: &WeightedDraws) -> Result<WeightedDraws> {
    let logw = draws
        .log_weights()
        .iter()
        .zip(draws.diagnostics())
        .map(|(l, d)| if d.jac_logdet.is_finite() { l + d.jac_logdet } else { *l })
        .collect();
    draws.reweighted(logw)
}
