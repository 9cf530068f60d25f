//! Weighted kernel densities and the RS-versus-exact-posterior figure.

use std::io::Write;

use nalgebra::DMatrix;
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::{reverse_sampler, without_jacobian, PriorSpec};
use crate::models::{Model, NormalModel, Observed};
use crate::oracles::{exact_posterior, NormalOracleInput};
use crate::rng::SeedSpec;
use crate::solver::SolverConfig;
use crate::weights::WeightedDraws;

const MIN_EFFECTIVE_DRAWS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub label: String,
}

impl DensityGrid {
    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Trapezoid-rule L1 distance; the grids must match.
    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let diff: Vec<f64> = self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).collect();
        Ok(trapezoid(&self.grid, &diff))
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// `n` equally spaced points from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

fn weighted_quantile(sorted: &[(f64, f64)], p: f64) -> f64 {
    let mut cum = 0.0;
    for &(x, w) in sorted {
        cum += w;
        if cum >= p {
            return x;
        }
    }
    sorted.last().map_or(f64::NAN, |s| s.0)
}

/// Gaussian-kernel density of component `j`. The bandwidth is Silverman's
/// rule `0.9 min(sd, IQR/1.34) n^(-1/5)` with `n` the effective sample
/// size, floored at 1.5 grid steps.
pub fn weighted_kde(draws: &WeightedDraws, j: usize, grid: &[f64], label: &str) -> Result<DensityGrid> {
    if j >= draws.dim() {
        return Err(Error::ShapeMismatch(format!("component {j} of {}", draws.dim())));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParam("grid must be increasing with at least two points".into()));
    }
    let ess = draws.effective_size();
    if !(ess >= MIN_EFFECTIVE_DRAWS) {
        return Err(Error::TooFewEffectiveDraws(ess));
    }
    let mut pts: Vec<(f64, f64)> = draws
        .component(j)
        .zip(draws.norm_weights().iter().copied())
        .filter(|p| p.1 > 0.0)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mean: f64 = pts.iter().map(|(x, w)| x * w).sum();
    let sd = pts.iter().map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>().sqrt();
    let iqr = weighted_quantile(&pts, 0.75) - weighted_quantile(&pts, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let floor = 1.5 * (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let bandwidth = (0.9 * spread * ess.powf(-0.2)).max(floor);
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            // Draws are sorted: only those within 10 bandwidths contribute.
            let lo = pts.partition_point(|p| p.0 < g - 10.0 * bandwidth);
            let hi = pts.partition_point(|p| p.0 <= g + 10.0 * bandwidth);
            pts[lo..hi].iter().map(|(x, w)| w * (-0.5 * ((g - x) / bandwidth).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect();
    Ok(DensityGrid { grid: grid.to_vec(), density, bandwidth, label: label.to_string() })
}

/// Long-format CSV `label,x,density`; all grids must share one x vector.
pub fn emit_figure_data<W: Write>(grids: &[DensityGrid], out: W) -> Result<()> {
    if let Some(first) = grids.first() {
        if grids.iter().any(|g| g.grid != first.grid || g.density.len() != first.grid.len()) {
            return Err(Error::GridMismatch);
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "x", "density"])?;
    for g in grids {
        for (x, d) in g.grid.iter().zip(&g.density) {
            w.write_record([g.label.as_str(), &x.to_string(), &d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One dataset, its exact posterior for `sigma2` and the reverse sampler
/// with and without the Jacobian weight.
#[derive(Debug, Clone)]
pub struct Figure1 {
    pub t: usize,
    pub sigma2_hat: f64,
    pub draws: WeightedDraws,
    pub unweighted: WeightedDraws,
    pub grids: Vec<DensityGrid>,
}

impl Figure1 {
    pub fn grid(&self, label: &str) -> Option<&DensityGrid> {
        self.grids.iter().find(|g| g.label == label)
    }

    pub fn oracle_input(&self) -> NormalOracleInput {
        NormalOracleInput { sigma2_hat: self.sigma2_hat, ..NormalOracleInput::new(self.t, 1.0) }
    }
}

const FIGURE_POINTS: usize = 400;

/// Normal model with `m = 0`, `sigma2 = 1`; flat prior, `b` RS draws.
pub fn figure1(t: usize, b: usize, seed: u64) -> Result<Figure1> {
    let model = NormalModel::new(t, 0.0, 1.0)?;
    let root = SeedSpec::new(seed, 0);
    let obs = Observed::draw(&model, root)?;
    let w = DMatrix::identity(2, 2);
    let draws = reverse_sampler(&model, &obs, &w, &PriorSpec::Flat, b, root.child(1), &SolverConfig::default())?;
    let unweighted = without_jacobian(&draws)?;
    let sigma2_hat = obs.psi_hat.as_slice()[1];
    let input = NormalOracleInput { sigma2_hat, ..NormalOracleInput::new(t, 1.0) };
    let exact = exact_posterior(&input)?;
    let j = model.space().index_of("sigma2").expect("normal model has sigma2");
    let grid = linear_grid(0.0, exact.inverse_cdf(0.9995), FIGURE_POINTS);
    let exact_grid = DensityGrid {
        density: grid.iter().map(|&x| if x > 0.0 { exact.pdf(x) } else { 0.0 }).collect(),
        grid: grid.clone(),
        bandwidth: 0.0,
        label: "exact_posterior".into(),
    };
    let grids = vec![
        exact_grid,
        weighted_kde(&draws, j, &grid, "rs_jacobian")?,
        weighted_kde(&unweighted, j, &grid, "rs_no_jacobian")?,
    ];
    Ok(Figure1 { t, sigma2_hat, draws, unweighted, grids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamSpace, Transform};
    use crate::rng::derive_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn uniform(xs: Vec<f64>) -> WeightedDraws {
        let space = ParamSpace::new(&[("x", f64::NEG_INFINITY, f64::INFINITY, Transform::Identity)]);
        WeightedDraws::uniform(space, xs.into_iter().map(|x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn point_mass_concentrates_at_zero() {
        let grid = linear_grid(-1.0, 1.0, 201);
        let g = weighted_kde(&uniform(vec![0.0; 500]), 0, &grid, "p").unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-6);
        assert!((g.bandwidth - 0.015).abs() < 1e-12);
        let mass_near_zero: f64 = trapezoid(&grid[90..111], &g.density[90..111]);
        assert!(mass_near_zero > 0.99);
    }

    #[test]
    fn standard_normal_draws_recover_the_pdf() {
        let mut rng = derive_stream(SeedSpec::new(5, 5));
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = linear_grid(-5.0, 5.0, 201);
        let g = weighted_kde(&uniform(xs), 0, &grid, "n").unwrap();
        let dev = grid
            .iter()
            .zip(&g.density)
            .map(|(&x, d)| (d - crate::oracles::std_normal_pdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.02, "{dev}");
        assert!((g.integral() - 1.0).abs() < 0.01);
    }

    #[test]
    fn too_few_effective_draws() {
        let grid = linear_grid(-1.0, 1.0, 11);
        assert!(matches!(weighted_kde(&uniform(vec![0.1; 50]), 0, &grid, "x"), Err(Error::TooFewEffectiveDraws(_))));
    }

    #[test]
    fn figure_data_layout() {
        let g = DensityGrid { grid: vec![0.0, 1.0, 2.0], density: vec![0.0, 1.0, 0.0], bandwidth: 0.1, label: "a".into() };
        let mut buf = Vec::new();
        emit_figure_data(std::slice::from_ref(&g), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3);
        assert_eq!(text.lines().nth(2).unwrap(), "a,1,1");
        let other = DensityGrid { grid: vec![0.0, 1.0, 3.0], label: "b".into(), ..g.clone() };
        assert!(matches!(emit_figure_data(&[g, other], Vec::new()), Err(Error::GridMismatch)));
    }

    #[test]
    fn figure1_bundle() {
        let fig = figure1(10, 4000, 3).unwrap();
        let labels: Vec<&str> = fig.grids.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels, ["exact_posterior", "rs_jacobian", "rs_no_jacobian"]);
        for g in &fig.grids {
            assert!(g.density.iter().all(|&d| d >= 0.0));
            let i = g.integral();
            assert!((0.99..=1.01).contains(&i), "{} {i}", g.label);
        }
        let exact = fig.grid("exact_posterior").unwrap();
        let with = fig.grid("rs_jacobian").unwrap().l1_distance(exact).unwrap();
        let without = fig.grid("rs_no_jacobian").unwrap().l1_distance(exact).unwrap();
        let between = fig.grid("rs_jacobian").unwrap().l1_distance(fig.grid("rs_no_jacobian").unwrap()).unwrap();
        assert!(with < without, "{with} {without}");
        assert!(between > 0.05, "{between}");
    }
}
