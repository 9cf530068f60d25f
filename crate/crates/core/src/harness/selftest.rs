//! Fast end-to-end checks against known bands.

use crate::error::Result;
use crate::oracles::{exact_posterior_cdf, table2_row, NormalOracleInput, Table2Estimator};
use crate::weights::weighted_ecdf_distance;

use super::{figure1, run_replications, EstimatorConfig, EstimatorKind, ExperimentConfig, ModelConfig, NormalConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, lo, hi }
    }

    pub fn passed(&self) -> bool {
        (self.lo..=self.hi).contains(&self.value)
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.6} in [{:.6}, {:.6}]", self.name, self.value, self.lo, self.hi)
    }
}

/// Monte Carlo means of the normal-model estimators against their closed
/// forms (±4 MC SE), and the reverse sampler against the exact posterior.
pub fn run(master_seed: u64) -> Result<Vec<Check>> {
    let (t, sigma2) = (10, 2.0);
    let mut smd = EstimatorConfig::new(EstimatorKind::Smd);
    smd.s = 20;
    let mut boot = EstimatorConfig::new(EstimatorKind::Bootstrap);
    boot.b = 200;
    let cfg = ExperimentConfig {
        name: "selftest".into(),
        replications: 1000,
        master_seed,
        out_dir: "out".into(),
        model: ModelConfig::Normal(NormalConfig { t, m: 0.0, sigma2 }),
        estimators: vec![EstimatorConfig::new(EstimatorKind::Md), smd, boot, EstimatorConfig::new(EstimatorKind::Bc)],
    };
    let table = run_replications(&cfg)?;
    let input = NormalOracleInput::new(t, sigma2);
    let mut checks = Vec::new();
    for (label, est) in [
        ("MD", Table2Estimator::Md),
        ("SMD", Table2Estimator::Smd),
        ("Bootstrap", Table2Estimator::Bootstrap),
        ("BC", Table2Estimator::BcFlat),
    ] {
        let s = if est == Table2Estimator::Smd { 20 } else { 1 };
        let expected = table2_row(est, &NormalOracleInput { s, ..input })?.expected;
        let row = table.row(label, "sigma2").expect("configured estimator");
        let band = 4.0 * row.mc_se;
        checks.push(Check::new(format!("{label} sigma2 mean"), row.mean, expected - band, expected + band));
    }
    let fig = figure1(t, 20_000, master_seed)?;
    let j = 1;
    let oracle = fig.oracle_input();
    let cdf = |x: f64| exact_posterior_cdf(&oracle, x).unwrap_or(f64::NAN);
    let with = weighted_ecdf_distance(&fig.draws, j, cdf)?;
    let without = weighted_ecdf_distance(&fig.unweighted, j, cdf)?;
    checks.push(Check::new("RS ECDF distance to exact posterior", with, 0.0, 0.02));
    checks.push(Check::new("RS without Jacobian ECDF distance", without, 0.05, f64::INFINITY));
    for g in &fig.grids {
        checks.push(Check::new(format!("{} density integral", g.label), g.integral(), 0.99, 1.01));
    }
    Ok(checks)
}
