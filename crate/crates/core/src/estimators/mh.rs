//! Random-walk Metropolis-Hastings kernel shared by the chain estimators.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChainConfig, ProposalSpec};
use crate::error::Result;
use crate::param::ParamSpace;
use crate::rng::{derive_stream, tags};
use crate::weights::WeightedDraws;
use std::sync::Arc;

const ADAPT_BATCH: usize = 100;

/// Runs `burn_in + b * thin` iterations from `start`, whose log target is
/// `start_value`.
///
/// `eval(theta, iteration)` returns the log target of a proposal inside the
/// box; it may be stochastic (ABC), in which case the kernel is the
/// pseudo-marginal one: the current state keeps the value it was accepted
/// with. Proposals outside the box are rejected without evaluation.
pub(crate) fn metropolis<F>(
    space: &Arc<ParamSpace>,
    start: Vec<f64>,
    start_value: f64,
    proposal: &ProposalSpec,
    cfg: &ChainConfig,
    mut eval: F,
) -> Result<WeightedDraws>
where
    F: FnMut(&[f64], u64) -> f64,
{
    cfg.validate()?;
    proposal.validate(space.dim())?;
    let mut rng = derive_stream(cfg.seed.child(tags::CHAIN));
    let total = cfg.burn_in + cfg.b * cfg.thin;
    let adapt = proposal.adapt_window.min(cfg.burn_in);
    let mut lambda = 1.0;
    let mut current = start;
    let mut value = start_value;
    let mut kept = Vec::with_capacity(cfg.b);
    let (mut window_acc, mut kept_acc) = (0usize, 0usize);
    let mut cand = current.clone();
    for it in 0..total {
        for ((c, x), s) in cand.iter_mut().zip(&current).zip(&proposal.scale) {
            let z: f64 = rng.sample(StandardNormal);
            *c = x + lambda * s * z;
        }
        let u: f64 = rng.gen();
        let accepted = space.interior(&cand) && {
            let v = eval(&cand, it as u64);
            if v > f64::NEG_INFINITY && u.ln() < v - value {
                value = v;
                true
            } else {
                false
            }
        };
        if accepted {
            current.copy_from_slice(&cand);
            window_acc += 1;
            if it >= cfg.burn_in {
                kept_acc += 1;
            }
        }
        if it < adapt && (it + 1) % ADAPT_BATCH == 0 {
            let rate = window_acc as f64 / ADAPT_BATCH as f64;
            if rate < 0.15 {
                lambda *= 0.7;
            } else if rate > 0.5 {
                lambda *= 1.4;
            }
            window_acc = 0;
        }
        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0 {
            kept.push(current.clone());
        }
    }
    let mut draws = WeightedDraws::uniform(space.clone(), kept)?;
    draws.acceptance_rate = Some(kept_acc as f64 / (cfg.b * cfg.thin) as f64);
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Transform;
    use crate::rng::SeedSpec;

    fn line() -> Arc<ParamSpace> {
        ParamSpace::new(&[("x", f64::NEG_INFINITY, f64::INFINITY, Transform::Identity)])
    }

    #[test]
    fn standard_normal_target() {
        let cfg = ChainConfig::new(20_000, 2_000, 5, SeedSpec::new(9, 0));
        let prop = ProposalSpec { scale: vec![2.4], adapt_window: 1_000 };
        let d = metropolis(&line(), vec![3.0], -4.5, &prop, &cfg, |x, _| -0.5 * x[0] * x[0]).unwrap();
        let mean = d.mean_values()[0];
        let sd = d.sd_values()[0];
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
        let rate = d.acceptance_rate.unwrap();
        assert!((0.1..=0.6).contains(&rate), "acceptance {rate}");
    }

    #[test]
    fn same_seed_same_chain() {
        let cfg = ChainConfig::new(100, 10, 2, SeedSpec::new(4, 1));
        let prop = ProposalSpec { scale: vec![1.0], adapt_window: 0 };
        let a = metropolis(&line(), vec![0.0], 0.0, &prop, &cfg, |x, _| -x[0].abs()).unwrap();
        let b = metropolis(&line(), vec![0.0], 0.0, &prop, &cfg, |x, _| -x[0].abs()).unwrap();
        assert_eq!(a.draws(), b.draws());
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
    }
}
