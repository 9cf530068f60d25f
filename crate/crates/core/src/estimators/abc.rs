use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mh::metropolis;
use super::{check_square, ChainConfig, PriorSpec, ProposalSpec};
use crate::error::{Error, Result};
use crate::models::{Model, Observed};
use crate::param::ParamVector;
use crate::rng::{derive_stream, tags};
use crate::solver::{minimize_j, SolverConfig};
use crate::weights::WeightedDraws;

/// Cap on initialization attempts.
const MAX_INIT: u64 = 10_000;
/// Initialization attempts that use an exact solve before falling back to
/// random points around the MD guess.
const SOLVE_INIT: u64 = 10;

fn distance(psi_hat: &[f64], psi: &[f64], w: &DMatrix<f64>) -> f64 {
    let v = DVector::from_iterator(psi.len(), psi_hat.iter().zip(psi).map(|(a, b)| a - b));
    (v.transpose() * w * &v)[(0, 0)].max(0.0).sqrt()
}

/// MCMC-ABC: a proposal `theta'` is accepted with probability
/// `1{||psi_hat - psi'|| <= delta} * min(1, prior(theta') / prior(theta))`,
/// where `psi'` is simulated from fresh innovations (`cfg.seed.sub(ABC, i)`
/// for iteration `i`) and `||v|| = sqrt(v' W v)`.
///
/// The chain starts at a point whose simulated statistics lie in the
/// `delta` ball, found by solving `psi^1(theta) = psi_hat` on an
/// initialization stream or, failing that, by random search.
pub fn mcmc_abc_chain<M: Model>(
    model: &M,
    obs: &Observed<M>,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    cfg: &ChainConfig,
    solver: &SolverConfig,
) -> Result<WeightedDraws> {
    check_square(w, obs.psi_hat.len())?;
    prior.validate(model.space())?;
    cfg.validate()?;
    proposal.validate(model.dim())?;
    let space = model.space();
    let psi_hat = obs.psi_hat.as_slice();
    let guess = model.initial_guess(&obs.psi_hat);
    let start = initialize(model, obs, w, prior, proposal, cfg, solver, &guess)?;
    let start_value = prior.log_density(space, &start);
    metropolis(space, start, start_value, proposal, cfg, |theta, it| {
        let lp = prior.log_density(space, theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let eps = model.innovations(cfg.seed.sub(tags::ABC, it));
        match model.simulated_aux(theta, &eps) {
            Ok(psi) if distance(psi_hat, &psi, w) <= cfg.delta => lp,
            _ => f64::NEG_INFINITY,
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn initialize<M: Model>(
    model: &M,
    obs: &Observed<M>,
    w: &DMatrix<f64>,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    cfg: &ChainConfig,
    solver: &SolverConfig,
    guess: &[f64],
) -> Result<Vec<f64>> {
    let space = model.space();
    let psi_hat = obs.psi_hat.as_slice();
    let mut rng = derive_stream(cfg.seed.child(tags::ABC_INIT).child(tags::RESTART));
    for attempt in 0..MAX_INIT {
        let eps = model.innovations(cfg.seed.sub(tags::ABC_INIT, attempt));
        let candidate = if attempt < SOLVE_INIT {
            let theta0 = model
                .exact_solve(&obs.psi_hat, &eps)
                .filter(|t| space.interior(t))
                .unwrap_or_else(|| guess.to_vec());
            let Ok(theta0) = ParamVector::new(space.clone(), theta0) else { continue };
            let residual = |theta: &[f64]| -> Result<Vec<f64>> {
                Ok(psi_hat.iter().zip(model.simulated_aux(theta, &eps)?).map(|(a, b)| a - b).collect())
            };
            match minimize_j(residual, &theta0, w, solver) {
                Ok(r) => r.solution.into_values(),
                Err(_) => continue,
            }
        } else {
            guess
                .iter()
                .zip(&proposal.scale)
                .map(|(g, s)| g + 5.0 * s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        if prior.log_density(space, &candidate) == f64::NEG_INFINITY {
            continue;
        }
        if let Ok(psi) = model.simulated_aux(&candidate, &eps) {
            if distance(psi_hat, &psi, w) <= cfg.delta {
                return Ok(candidate);
            }
        }
    }
    Err(Error::InitializationFailure { attempts: MAX_INIT as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NormalModel;
    use crate::rng::SeedSpec;

    #[test]
    fn infinite_tolerance_accepts_every_interior_proposal() {
        let model = NormalModel::new(10, 0.0, 2.0).unwrap();
        let obs = Observed::draw(&model, SeedSpec::new(31, 0)).unwrap();
        let prop = ProposalSpec { scale: vec![0.1, 0.1], adapt_window: 0 };
        let cfg = ChainConfig::new(500, 0, 1, SeedSpec::new(31, 1));
        let d = mcmc_abc_chain(&model, &obs, &DMatrix::identity(2, 2), &PriorSpec::Flat, &prop, &cfg, &SolverConfig::default())
            .unwrap();
        assert!(d.acceptance_rate.unwrap() > 0.99);
    }

    #[test]
    fn start_lies_in_the_ball() {
        let model = NormalModel::new(10, 0.0, 2.0).unwrap();
        let obs = Observed::draw(&model, SeedSpec::new(32, 0)).unwrap();
        let prop = ProposalSpec { scale: vec![0.3, 0.3], adapt_window: 0 };
        let mut cfg = ChainConfig::new(200, 0, 1, SeedSpec::new(32, 1));
        cfg.delta = 1e-6;
        let w = DMatrix::identity(2, 2);
        let start = initialize(&model, &obs, &w, &PriorSpec::Flat, &prop, &cfg, &SolverConfig::default(), &[0.0, 1.0])
            .unwrap();
        assert!(start[1] > 0.0);
    }
}
