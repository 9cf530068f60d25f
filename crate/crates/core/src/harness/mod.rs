//! Monte Carlo replication engine, result tables, density grids and the
//! figure bundle.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    bootstrap_bias_correct, lt_chain, lt_optimization, mcmc_abc_chain, md_estimate, reverse_sampler,
    slt_chain, slt_optimization, smd_estimate, ChainConfig, PriorSpec, ProposalSpec,
};
use crate::models::{Model, NormalModel, Observed, PanelModel};
use crate::oracles::bc_posterior_mean_numeric;
use crate::param::ParamVector;
use crate::rng::SeedSpec;
use crate::weights::WeightedDraws;

mod config;
mod figure;
mod output;
pub mod selftest;

pub use config::{
    EstimatorConfig, EstimatorKind, ExperimentConfig, FigureConfig, ModelConfig, NormalConfig, RunConfig, Weighting,
};
pub use figure::{emit_figure_data, figure1, linear_grid, weighted_kde, DensityGrid, Figure1};
pub use output::{emit_table, read_table_csv, ParsedTable, TableFormat};

/// Hooks the harness needs beyond [`Model`].
pub trait HarnessModel: Model + Sized {
    /// Exact posterior mean under `prior`, where the likelihood is known.
    fn bc_mean(&self, _obs: &Observed<Self>, _prior: &PriorSpec) -> Result<Vec<f64>> {
        Err(Error::UnsupportedEstimator(format!("bc for the {} model", self.name())))
    }
}

impl HarnessModel for NormalModel {
    fn bc_mean(&self, obs: &Observed<Self>, prior: &PriorSpec) -> Result<Vec<f64>> {
        let alpha = match prior {
            PriorSpec::Flat => 0.0,
            PriorSpec::Power { param, alpha } if param == "sigma2" => *alpha,
            PriorSpec::Power { param, .. } => {
                return Err(Error::InvalidParam(format!("bc prior on {param}")));
            }
        };
        let psi = obs.psi_hat.as_slice();
        Ok(vec![psi[0], bc_posterior_mean_numeric(self.t(), psi[1], alpha)?])
    }
}

impl HarnessModel for PanelModel {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub estimator: String,
    pub param: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub mc_se: f64,
    pub failures: usize,
}

/// Per-replication point estimates of one estimator; `None` marks a failed
/// replication.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResults {
    pub label: String,
    pub values: Vec<Option<Vec<f64>>>,
    /// Summed wall-clock seconds over replications.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicationTable {
    pub config: ExperimentConfig,
    pub params: Vec<String>,
    pub truth: Vec<f64>,
    pub rows: Vec<TableRow>,
    pub results: Vec<EstimatorResults>,
}

/// Equality of results; wall-clock timings are ignored.
impl PartialEq for ReplicationTable {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.truth == other.truth
            && self.rows == other.rows
            && self.results.len() == other.results.len()
            && self.results.iter().zip(&other.results).all(|(a, b)| a.label == b.label && a.values == b.values)
    }
}

impl ReplicationTable {
    pub fn row(&self, estimator: &str, param: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.param == param)
    }

    pub fn results(&self, estimator: &str) -> Option<&EstimatorResults> {
        self.results.iter().find(|r| r.label == estimator)
    }

    fn from_results(
        config: ExperimentConfig,
        params: Vec<String>,
        truth: Vec<f64>,
        results: Vec<EstimatorResults>,
    ) -> Result<Self> {
        let r = config.replications;
        let mut rows = Vec::new();
        for res in &results {
            let ok: Vec<&Vec<f64>> = res.values.iter().flatten().collect();
            let failures = r - ok.len();
            if failures * 20 > r {
                return Err(Error::TooManyFailures { failed: failures, total: r });
            }
            let n = ok.len() as f64;
            for (j, name) in params.iter().enumerate() {
                let mean = ok.iter().map(|v| v[j]).sum::<f64>() / n;
                let sd = if ok.len() > 1 {
                    (ok.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                rows.push(TableRow {
                    estimator: res.label.clone(),
                    param: name.clone(),
                    truth: truth[j],
                    mean,
                    sd,
                    bias: mean - truth[j],
                    mc_se: sd / n.sqrt(),
                    failures,
                });
            }
        }
        Ok(Self { config, params, truth, rows, results })
    }
}

fn weighting_matrix<M: Model>(model: &M, obs: &Observed<M>, w: Weighting) -> Result<DMatrix<f64>> {
    let k = obs.psi_hat.len();
    match w {
        Weighting::Identity => Ok(DMatrix::identity(k, k)),
        Weighting::Efficient => {
            let cov = model.aux_covariance(&obs.data, &obs.psi_hat)?;
            let inv = cov.try_inverse().ok_or(Error::SingularCovariance)?;
            Ok((&inv + inv.transpose()) * 0.5)
        }
    }
}

/// Point estimate of one configured estimator on one dataset. Samplers
/// report the weighted posterior mean.
pub fn run_estimator<M: HarnessModel>(
    model: &M,
    obs: &Observed<M>,
    e: &EstimatorConfig,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    let space = model.space();
    let chain = || ChainConfig { b: e.b, burn_in: e.burn_in, thin: e.thin, delta: e.delta, s: e.s, seed };
    let proposal = || -> Result<ProposalSpec> {
        Ok(ProposalSpec::from_covariance(&model.md_covariance(&obs.data, &obs.psi_hat)?, e.adapt_window))
    };
    let mean = |d: WeightedDraws| Ok(d.mean_values());
    match e.kind {
        EstimatorKind::Ml => Ok(obs.psi_hat.0.clone()),
        EstimatorKind::Md => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            Ok(md_estimate(model, obs, &w, &e.solver)?.point.into_values())
        }
        EstimatorKind::Smd => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            Ok(smd_estimate(model, obs, &w, e.s, seed, &e.solver)?.point.into_values())
        }
        EstimatorKind::Rs => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            mean(reverse_sampler(model, obs, &w, &e.prior, e.b, seed, &e.solver)?)
        }
        EstimatorKind::Abc => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            mean(mcmc_abc_chain(model, obs, &w, &e.prior, &proposal()?, &chain(), &e.solver)?)
        }
        EstimatorKind::Lt | EstimatorKind::LtOpt => {
            let problem = model.lt_problem(&obs.data, &obs.psi_hat)?;
            let w = match e.weighting {
                Weighting::Efficient => problem.weight.clone(),
                Weighting::Identity => DMatrix::identity(problem.weight.nrows(), problem.weight.ncols()),
            };
            if e.kind == EstimatorKind::Lt {
                mean(lt_chain(&problem, &w, &e.prior, &proposal()?, &chain())?)
            } else {
                mean(lt_optimization(&problem, &w, &e.prior, e.b, seed, &e.solver)?)
            }
        }
        EstimatorKind::Slt => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            mean(slt_chain(model, obs, &w, &e.prior, &proposal()?, &chain(), &e.solver)?)
        }
        EstimatorKind::SltOpt => {
            let w = weighting_matrix(model, obs, e.weighting)?;
            let sigma = model.aux_covariance(&obs.data, &obs.psi_hat)?;
            mean(slt_optimization(model, obs, &sigma, &w, &e.prior, e.s, e.b, seed, &e.solver)?)
        }
        EstimatorKind::Bootstrap => {
            let theta_hat = ParamVector::new(space.clone(), obs.psi_hat.0.clone())?;
            Ok(bootstrap_bias_correct(model, &theta_hat, e.b, seed)?.point.into_values())
        }
        EstimatorKind::Bc => model.bc_mean(obs, &e.prior),
    }
}

/// Stream of estimator `i` in replication `r`.
pub fn estimator_seed(master_seed: u64, r: u64, i: usize) -> SeedSpec {
    SeedSpec::new(master_seed, r).child(0xe571_0000 + i as u64)
}

/// Runs every configured estimator on `R` datasets. Replication `r`
/// observes the dataset drawn from stream `(master_seed, r)`. The result
/// does not depend on the number of worker threads.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<ReplicationTable> {
    cfg.validate()?;
    match &cfg.model {
        ModelConfig::Normal(n) => run_model(&NormalModel::new(n.t, n.m, n.sigma2)?, cfg),
        ModelConfig::Panel(p) => run_model(&PanelModel::new(p.clone())?, cfg),
    }
}

fn run_model<M: HarnessModel>(model: &M, cfg: &ExperimentConfig) -> Result<ReplicationTable> {
    let per_rep: Vec<Vec<(Option<Vec<f64>>, f64)>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let obs = Observed::draw(model, SeedSpec::new(cfg.master_seed, r));
            cfg.estimators
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let start = Instant::now();
                    let value = obs
                        .as_ref()
                        .ok()
                        .and_then(|obs| run_estimator(model, obs, e, estimator_seed(cfg.master_seed, r, i)).ok())
                        .filter(|v| v.iter().all(|x| x.is_finite()));
                    (value, start.elapsed().as_secs_f64())
                })
                .collect()
        })
        .collect();
    let results = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(i, e)| EstimatorResults {
            label: e.label(),
            values: per_rep.iter().map(|rep| rep[i].0.clone()).collect(),
            seconds: per_rep.iter().map(|rep| rep[i].1).sum(),
        })
        .collect();
    ReplicationTable::from_results(cfg.clone(), model.space().names.clone(), model.truth().to_vec(), results)
}
