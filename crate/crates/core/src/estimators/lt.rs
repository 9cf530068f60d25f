use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::mh::metropolis;
use super::rs::root_draw;
use super::{check_square, covariance_factor, ChainConfig, PriorSpec, ProposalSpec};
use crate::error::{Error, Result};
use crate::models::LtProblem;
use crate::rng::{derive_stream, tags, SeedSpec};
use crate::solver::SolverConfig;
use crate::weights::{DrawDiagnostics, WeightedDraws};

/// `-(n/2) g' W g`, or `-inf` when the moments cannot be evaluated.
pub(super) fn log_quasi_likelihood(g: Result<Vec<f64>>, w: &DMatrix<f64>, n: f64) -> f64 {
    match g {
        Ok(g) if g.iter().all(|v| v.is_finite()) => {
            let g = DVector::from_vec(g);
            -0.5 * n * (g.transpose() * w * &g)[(0, 0)]
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Metropolis-Hastings on the quasi-posterior `exp(-J(theta)) prior(theta)`
/// with `J = (n/2) g' W g`. Starts at the MD point.
pub fn lt_chain(
    problem: &LtProblem,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    cfg: &ChainConfig,
) -> Result<WeightedDraws> {
    check_square(w, problem.weight.nrows())?;
    prior.validate(&problem.space)?;
    let target = |theta: &[f64]| {
        let lp = prior.log_density(&problem.space, theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + log_quasi_likelihood((problem.moments)(theta), w, problem.n)
    };
    let start = problem.center.clone();
    let start_value = target(&start);
    if !start_value.is_finite() {
        return Err(Error::InitializationFailure { attempts: 1 });
    }
    metropolis(&problem.space, start, start_value, proposal, cfg, |theta, _| target(theta))
}

/// Gaussian perturbations `a_b ~ N(0, sigma)` from `seed.sub(PERTURB, b)`.
pub(super) fn perturbation(factor: &DMatrix<f64>, seed: SeedSpec, b: u64) -> DVector<f64> {
    let mut rng = derive_stream(seed.sub(tags::PERTURB, b));
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample(StandardNormal));
    factor * z
}

/// Collects root draws; failed solves become zero-weight draws at `fallback`.
pub(super) fn assemble(
    space: &std::sync::Arc<crate::param::ParamSpace>,
    results: Vec<Option<super::rs::RootDraw>>,
    fallback: &[f64],
) -> Result<WeightedDraws> {
    let b = results.len();
    let mut draws = Vec::with_capacity(b);
    let mut logw = Vec::with_capacity(b);
    let mut diags = Vec::with_capacity(b);
    let mut failures = 0;
    for r in results {
        match r {
            Some(d) => {
                draws.push(d.theta);
                logw.push(d.log_weight);
                diags.push(d.diag);
            }
            None => {
                failures += 1;
                draws.push(fallback.to_vec());
                logw.push(f64::NEG_INFINITY);
                diags.push(DrawDiagnostics::default());
            }
        }
    }
    let mut out = WeightedDraws::from_log_weights(space.clone(), draws, logw, diags)?;
    out.failures = failures;
    Ok(out)
}

/// Optimization view of the quasi-posterior: for each `b`, solve
/// `g(theta) = a_b / sqrt(n)` exactly and weight by `prior / |dg/dtheta|`.
///
/// Roots outside the parameter box get zero weight, which reproduces the
/// truncation of the quasi-posterior at the support boundary.
pub fn lt_optimization(
    problem: &LtProblem,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    b: usize,
    seed: SeedSpec,
    cfg: &SolverConfig,
) -> Result<WeightedDraws> {
    let k = problem.weight.nrows();
    check_square(w, k)?;
    check_square(&problem.sigma, k)?;
    prior.validate(&problem.space)?;
    if b == 0 {
        return Err(Error::EmptyDraws);
    }
    let factor = covariance_factor(&problem.sigma)?;
    let scale = problem.n.sqrt();
    let results = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            let a: Vec<f64> = perturbation(&factor, seed, i).iter().map(|v| v / scale).collect();
            root_draw(&problem.space, &*problem.moments, &a, problem.center.clone(), w, prior, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(&problem.space, results, &problem.center)
}
