//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use simest::estimators::{
    lt_chain, lt_optimization, md_estimate, reverse_sampler, slt_optimization, smd_estimate, ChainConfig, PriorSpec,
    ProposalSpec,
};
use simest::harness::{
    figure1, run_replications, EstimatorConfig, EstimatorKind, ExperimentConfig, ModelConfig, NormalConfig,
    ReplicationTable,
};
use simest::models::{Model, NormalModel, Observed, PanelConfig, PanelModel};
use simest::oracles::{
    bc_posterior_stats, exact_posterior_cdf, kappa_lt, table2_row, NormalOracleInput, Table2Estimator,
};
use simest::param::ParamVector;
use simest::rng::{derive_stream, tags, SeedSpec};
use simest::solver::{jacobian_fd, logabsdet, SolverConfig};
use simest::weights::{batch_means_se, normalize_weights, weighted_ecdf_distance, weighted_mean, WeightedDraws};

/// Outcome of one banded quantity.
struct Item {
    what: String,
    ok: bool,
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.2e}")
    } else {
        format!("{x:.5}")
    }
}

#[derive(Default)]
struct Report {
    items: Vec<Item>,
    notes: Vec<String>,
}

impl Report {
    fn band(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        let ok = (lo..=hi).contains(&value);
        self.items.push(Item { what: format!("{what} = {} in [{}, {}]", num(value), num(lo), num(hi)), ok });
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.items.push(Item { what: what.into(), ok });
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.ok)
    }
}

fn normal_experiment(name: &str, replications: usize, seed: u64, estimators: Vec<EstimatorConfig>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        replications,
        master_seed: seed,
        out_dir: "out".into(),
        model: ModelConfig::Normal(NormalConfig { t: 10, m: 0.0, sigma2: 2.0 }),
        estimators,
    }
}

fn labelled(kind: EstimatorKind, label: &str, edit: impl FnOnce(&mut EstimatorConfig)) -> EstimatorConfig {
    let mut e = EstimatorConfig::new(kind);
    e.label = Some(label.into());
    edit(&mut e);
    e
}

fn mean_within(r: &mut Report, table: &ReplicationTable, label: &str, param: &str, expected: f64, ses: f64) {
    let row = table.row(label, param).expect("configured row");
    let half = ses * row.mc_se;
    r.band(&format!("{label} {param} mean"), row.mean, expected - half, expected + half);
}

/// Monte Carlo means of the normal-model estimators against closed forms.
fn criterion_1(r: &mut Report) {
    let (t, sigma2) = (10, 2.0);
    let mut est = vec![
        EstimatorConfig::new(EstimatorKind::Md),
        labelled(EstimatorKind::Smd, "SMD-S1", |e| e.s = 1),
        labelled(EstimatorKind::Smd, "SMD-S20", |e| e.s = 20),
        labelled(EstimatorKind::Bootstrap, "Bootstrap", |e| e.b = 100),
    ];
    for alpha in [0.0, 1.0, 2.0, 3.0] {
        est.push(labelled(EstimatorKind::Bc, &format!("BC-{alpha}"), |e| {
            e.prior = if alpha == 0.0 { PriorSpec::Flat } else { PriorSpec::power("sigma2", alpha) }
        }));
    }
    let table = run_replications(&normal_experiment("criterion1", 2000, 101, est)).unwrap();
    let input = NormalOracleInput::new(t, sigma2);
    let expected = |e: Table2Estimator, s: usize| table2_row(e, &NormalOracleInput { s, ..input }).unwrap().expected;
    mean_within(r, &table, "MD", "sigma2", expected(Table2Estimator::Md, 1), 3.0);
    mean_within(r, &table, "SMD-S1", "sigma2", expected(Table2Estimator::Smd, 1), 3.0);
    mean_within(r, &table, "SMD-S20", "sigma2", expected(Table2Estimator::Smd, 20), 3.0);
    mean_within(r, &table, "Bootstrap", "sigma2", expected(Table2Estimator::Bootstrap, 1), 3.0);
    // The posterior mean is linear in sigma2_hat, whose expectation is sigma2 (T-1)/T.
    let e_s2hat = sigma2 * (t as f64 - 1.0) / t as f64;
    for alpha in [0.0, 1.0, 2.0, 3.0] {
        let (_, mean) = bc_posterior_stats(&NormalOracleInput { sigma2_hat: e_s2hat, alpha, ..input }).unwrap();
        mean_within(r, &table, &format!("BC-{alpha}"), "sigma2", mean, 3.0);
    }
    for label in ["MD", "SMD-S1", "SMD-S20", "Bootstrap"] {
        mean_within(r, &table, label, "m", 0.0, 3.0);
    }
}

/// Reverse sampler against the exact posterior, with and without the Jacobian.
fn criterion_2(r: &mut Report) {
    let fig = figure1(10, 50_000, 202).unwrap();
    let oracle = fig.oracle_input();
    let cdf = |x: f64| exact_posterior_cdf(&oracle, x).unwrap();
    let with = weighted_ecdf_distance(&fig.draws, 1, cdf).unwrap();
    let without = weighted_ecdf_distance(&fig.unweighted, 1, cdf).unwrap();
    r.band("ECDF distance with Jacobian", with, 0.0, 0.02);
    r.band("ECDF distance without Jacobian", without, 0.05, f64::INFINITY);
    r.check(format!("without ({without:.4}) farther than with ({with:.4})"), without > with);
}

/// Reducing prior: RS posterior mean equals the SMD closed form on the
/// same innovations.
fn criterion_3(r: &mut Report) {
    let model = NormalModel::new(10, 0.0, 2.0).unwrap();
    let prior = PriorSpec::power("sigma2", 2.0);
    let w = DMatrix::identity(2, 2);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for d in 0..20 {
        let obs = Observed::draw(&model, SeedSpec::new(303, d)).unwrap();
        let seed = SeedSpec::new(304, d);
        let draws = reverse_sampler(&model, &obs, &w, &prior, 100, seed, &SolverConfig::default()).unwrap();
        failures += draws.failures;
        let rs = draws.mean_values()[1];
        let sum_v: f64 = (0..100)
            .map(|b| {
                let e = model.innovations(seed.sub(tags::RS, b));
                let mean = e.iter().sum::<f64>() / e.len() as f64;
                e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / e.len() as f64
            })
            .sum();
        let smd = obs.psi_hat.as_slice()[1] * 100.0 / sum_v;
        worst = worst.max((rs - smd).abs());
    }
    r.check(format!("no replaced draws ({failures})"), failures == 0);
    r.band("max |RS - SMD| over 20 datasets", worst, 0.0, 1e-8);
}

/// LT posterior mean against the Mills-ratio closed form; optimization view
/// against the chain.
fn criterion_4(r: &mut Report) {
    let model = NormalModel::new(6, 0.0, 1.0).unwrap();
    let obs = Observed::draw(&model, SeedSpec::new(404, 0)).unwrap();
    let problem = model.lt_problem(&obs.data, &obs.psi_hat).unwrap();
    let s2hat = obs.psi_hat.as_slice()[1];
    let target = s2hat * (1.0 + kappa_lt(6));
    let proposal = ProposalSpec::from_covariance(&model.md_covariance(&obs.data, &obs.psi_hat).unwrap(), 5000);
    let cfg = ChainConfig::new(100_000, 5000, 5, SeedSpec::new(404, 1));
    let chain = lt_chain(&problem, &problem.weight, &PriorSpec::Flat, &proposal, &cfg).unwrap();
    let chain_mean = chain.mean_values()[1];
    let chain_se = batch_means_se(&chain.component(1).collect::<Vec<_>>(), 50);
    r.band("lt_chain mean / closed form", chain_mean / target, 0.99, 1.01);
    let opt = lt_optimization(
        &problem,
        &problem.weight,
        &PriorSpec::Flat,
        100_000,
        SeedSpec::new(404, 2),
        &SolverConfig::default(),
    )
    .unwrap();
    let opt_mean = opt.mean_values()[1];
    let pooled = (chain_se.powi(2) + opt.importance_se(1).powi(2)).sqrt();
    r.band("lt_optimization - lt_chain", opt_mean - chain_mean, -2.0 * pooled, 2.0 * pooled);
    r.note(format!("closed form {target:.5}, chain {chain_mean:.5} (se {chain_se:.5}), optimization {opt_mean:.5}"));
}

fn table3_design(rho: f64, with_chains: bool) -> ExperimentConfig {
    let mut est = vec![
        EstimatorConfig::new(EstimatorKind::Ml),
        labelled(EstimatorKind::Smd, "SMD", |e| e.s = 500),
    ];
    if with_chains {
        est.push(labelled(EstimatorKind::Rs, "RS", |e| e.b = 500));
        est.push(labelled(EstimatorKind::Abc, "ABC", |e| {
            e.b = 500;
            e.delta = 0.025;
            e.thin = 500;
        }));
    }
    ExperimentConfig {
        name: format!("panel-rho-{rho}"),
        replications: 200,
        master_seed: 505,
        out_dir: "out".into(),
        model: ModelConfig::Panel(PanelConfig { rho, ..PanelConfig::default() }),
        estimators: est,
    }
}

fn bias(table: &ReplicationTable, label: &str, param: &str) -> f64 {
    table.row(label, param).expect("configured row").bias
}

/// Dynamic panel at desk scale, both designs.
fn criterion_5(r: &mut Report, table3: &ReplicationTable) {
    r.band("MLE rho mean", table3.row("MLE", "rho").unwrap().mean, 0.419 - 0.015, 0.419 + 0.015);
    r.band("SMD rho bias", bias(table3, "SMD", "rho"), -0.002 - 0.010, -0.002 + 0.010);
    r.band("RS rho bias", bias(table3, "RS", "rho"), -0.001 - 0.010, -0.001 + 0.010);
    r.band("SMD sigma2 bias", bias(table3, "SMD", "sigma2"), -0.011 - 0.05, -0.011 + 0.05);
    r.band("RS sigma2 bias", bias(table3, "RS", "sigma2"), 0.099 - 0.06, 0.099 + 0.06);
    r.band("ABC rho mean", table3.row("ABC", "rho").unwrap().mean, 0.588 - 0.02, 0.588 + 0.02);
    let table4 = run_replications(&table3_design(0.9, false)).unwrap();
    r.band("rho=0.9 MLE rho bias", bias(&table4, "MLE", "rho"), -0.149 - 0.015, -0.149 + 0.015);
    r.band("rho=0.9 SMD rho bias", bias(&table4, "SMD", "rho"), -0.010, 0.010);
    for res in &table3.results {
        r.note(format!("{} {:.0}s", res.label, res.seconds));
    }
}

fn random_pd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(k, k) * 0.2
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_draw_diff(a: &WeightedDraws, b: &WeightedDraws) -> f64 {
    a.draws().iter().zip(b.draws()).map(|(x, y)| max_diff(x, y)).fold(0.0, f64::max)
}

/// Exactly identified estimators do not depend on the weighting matrix.
fn w_invariance<M: Model>(r: &mut Report, name: &str, model: &M, seed: u64) {
    let solver = SolverConfig { objective_tol: 1e-20, ..SolverConfig::default() };
    let k = model.dim();
    let mut rng = derive_stream(SeedSpec::new(seed, 999));
    let (mut md, mut smd, mut rs, mut lt, mut slt) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut lt_means = Vec::new();
    for d in 0..20 {
        let obs = Observed::draw(model, SeedSpec::new(seed, d)).unwrap();
        let id = DMatrix::identity(k, k);
        let w = random_pd(&mut rng, k);
        let s = SeedSpec::new(seed + 1, d);
        let md_at = |w: &DMatrix<f64>| md_estimate(model, &obs, w, &solver).unwrap().point.into_values();
        md = md.max(max_diff(&md_at(&id), &md_at(&w)));
        let smd_at = |w: &DMatrix<f64>| smd_estimate(model, &obs, w, 5, s, &solver).unwrap().point.into_values();
        smd = smd.max(max_diff(&smd_at(&id), &smd_at(&w)));
        let rs_at = |w: &DMatrix<f64>| reverse_sampler(model, &obs, w, &PriorSpec::Flat, 20, s, &solver).unwrap();
        rs = rs.max(max_draw_diff(&rs_at(&id), &rs_at(&w)));
        let problem = model.lt_problem(&obs.data, &obs.psi_hat).unwrap();
        let lt_at = |w: &DMatrix<f64>| lt_optimization(&problem, w, &PriorSpec::Flat, 20, s, &solver).unwrap();
        lt = lt.max(max_draw_diff(&lt_at(&id), &lt_at(&w)));
        let sigma = model.aux_covariance(&obs.data, &obs.psi_hat).unwrap();
        let slt_at =
            |w: &DMatrix<f64>| slt_optimization(model, &obs, &sigma, w, &PriorSpec::Flat, 5, 20, s, &solver).unwrap();
        slt = slt.max(max_draw_diff(&slt_at(&id), &slt_at(&w)));
        if d < 3 {
            let proposal = ProposalSpec::from_covariance(&model.md_covariance(&obs.data, &obs.psi_hat).unwrap(), 500);
            let cfg = ChainConfig::new(5000, 500, 2, s);
            let chain_mean = |w: &DMatrix<f64>| lt_chain(&problem, w, &PriorSpec::Flat, &proposal, &cfg).unwrap().mean_values();
            lt_means.push((chain_mean(&id), chain_mean(&w)));
        }
    }
    for (what, v) in [("MD", md), ("SMD", smd), ("RS draws", rs), ("LT-opt draws", lt), ("SLT-opt draws", slt)] {
        r.band(&format!("{name} {what} max change"), v, 0.0, 1e-6);
    }
    for (a, b) in lt_means {
        r.note(format!("{name} lt_chain mean, W = I {a:.4?} vs random W {b:.4?}"));
    }
}

fn criterion_6(r: &mut Report) {
    w_invariance(r, "normal", &NormalModel::new(10, 0.5, 2.0).unwrap(), 606);
    w_invariance(r, "panel", &PanelModel::new(PanelConfig::default()).unwrap(), 616);
}

fn det3(m: &DMatrix<f64>) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]) - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Jacobians, determinants, weights and thread-count determinism.
fn criterion_7(r: &mut Report) {
    let mut rng = derive_stream(SeedSpec::new(707, 0));
    let model = NormalModel::new(10, 0.0, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let (mut id_err, mut map_err) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let theta = vec![rng.gen_range(-5.0..5.0), rng.gen_range(0.1..10.0)];
        let p = ParamVector::new(model.space().clone(), theta.clone()).unwrap();
        let jac = jacobian_fd(|t| Ok(t.to_vec()), &p, &cfg).unwrap();
        id_err = id_err.max(max_rel(&jac, &DMatrix::identity(2, 2)));
        let eps = model.innovations(SeedSpec::new(708, rng.gen()));
        let ebar = eps.iter().sum::<f64>() / 10.0;
        let v = eps.iter().map(|e| (e - ebar).powi(2)).sum::<f64>() / 10.0;
        let exact = DMatrix::from_row_slice(2, 2, &[1.0, ebar / (2.0 * theta[1].sqrt()), 0.0, v]);
        let jac = jacobian_fd(|t| model.simulated_aux(t, &eps), &p, &cfg).unwrap();
        map_err = map_err.max(max_rel(&jac, &exact));
    }
    r.band("jacobian_fd identity map rel err", id_err, 0.0, 1e-6);
    r.band("jacobian_fd normal map rel err", map_err, 0.0, 1e-6);

    let mut det_err = 0.0f64;
    for _ in 0..200 {
        let m = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-2.0..2.0));
        let det = det3(&m);
        if det.abs() > 1e-6 {
            det_err = det_err.max((logabsdet(&m) - det.abs().ln()).abs());
        }
    }
    r.band("logabsdet vs cofactor determinant", det_err, 0.0, 1e-10);

    let mut weights_ok = true;
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1e3)).collect();
        let c = 10f64.powf(rng.gen_range(-6.0..6.0));
        let a = normalize_weights(&raw).unwrap();
        let b = normalize_weights(&raw.iter().map(|w| w * c).collect::<Vec<_>>()).unwrap();
        weights_ok &= (a.iter().sum::<f64>() - 1.0).abs() < 1e-12 && max_diff(&a, &b) < 1e-12;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1e3..1e3), 1.0]).collect();
        let uniform = WeightedDraws::uniform(model.space().clone(), xs.clone()).unwrap();
        let mean = weighted_mean(&uniform).unwrap()[0];
        let arith = xs.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        weights_ok &= (mean - arith).abs() <= 1e-12 * 1e3;
    }
    r.check("normalize_weights / weighted_mean properties", weights_ok);

    let mut cfg = table3_design(0.6, false);
    cfg.replications = 8;
    cfg.estimators.push(labelled(EstimatorKind::Rs, "RS", |e| e.b = 50));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_replications(&cfg).unwrap())
    };
    r.check("run_replications bit-identical on 1 and 4 threads", run(1) == run(4));
}

/// Bias ordering in the panel run.
fn criterion_8(r: &mut Report, table3: &ReplicationTable) {
    let (smd_rho, mle_rho) = (bias(table3, "SMD", "rho"), bias(table3, "MLE", "rho"));
    r.check(format!("|SMD rho bias| {:.4} < |MLE rho bias| {:.4}", smd_rho.abs(), mle_rho.abs()), smd_rho.abs() < mle_rho.abs());
    let (smd_s2, rs_s2) = (bias(table3, "SMD", "sigma2"), bias(table3, "RS", "sigma2"));
    r.check(format!("|SMD sigma2 bias| {:.4} < |RS sigma2 bias| {:.4}", smd_s2.abs(), rs_s2.abs()), smd_s2.abs() < rs_s2.abs());
}

fn run(id: usize, title: &str, f: impl FnOnce(&mut Report)) -> bool {
    let start = Instant::now();
    let mut report = Report::default();
    let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut report)));
    let passed = outcome.is_ok() && report.passed();
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id}: {tag}  {title}  ({:.1}s)", start.elapsed().as_secs_f64());
    for item in &report.items {
        println!("    [{}] {}", if item.ok { "ok" } else { "FAIL" }, item.what);
    }
    for note in &report.notes {
        println!("    note: {note}");
    }
    if let Err(e) = outcome {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        println!("    panicked: {}", msg.unwrap_or_default());
    }
    passed
}

/// The rho = 0.6 panel run shared by criteria 5 and 8.
fn table3() -> &'static ReplicationTable {
    static TABLE: OnceLock<ReplicationTable> = OnceLock::new();
    TABLE.get_or_init(|| run_replications(&table3_design(0.6, true)).unwrap())
}

fn main() {
    // ACCEPTANCE_ONLY=1,4 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(&str, fn(&mut Report)); 8] = [
        ("normal-model estimator means match closed forms", criterion_1),
        ("reverse sampler recovers the exact posterior", criterion_2),
        ("reverse sampler under the reducing prior equals SMD", criterion_3),
        ("Laplace-type posterior mean and its optimization view", criterion_4),
        ("dynamic panel designs at desk scale", |r| criterion_5(r, table3())),
        ("exactly identified estimators ignore the weighting matrix", criterion_6),
        ("numerical infrastructure", criterion_7),
        ("bias ordering in the panel design", |r| criterion_8(r, table3())),
    ];
    let results: Vec<bool> = criteria
        .into_iter()
        .enumerate()
        .filter(|(i, _)| only.as_ref().map_or(true, |o| o.contains(&(i + 1))))
        .map(|(i, (title, f))| run(i + 1, title, f))
        .collect();
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
