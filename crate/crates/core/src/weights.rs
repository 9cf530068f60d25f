//! Weighted posterior draws and the aggregations the estimators need.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::param::{ParamSpace, ParamVector};

/// Normalizes nonnegative weights so they sum to one.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NonFiniteWeight { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Normalizes weights given on the log scale. The maximum is subtracted
/// before exponentiating; `-inf` entries get weight zero.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let rel = relative_weights(log_w)?;
    normalize_weights(&rel)
}

/// `exp(log_w - max(log_w))`.
fn relative_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in log_w.iter().enumerate() {
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::NonFiniteWeight { index, value });
        }
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllZeroWeights);
    }
    Ok(log_w.iter().map(|l| (l - max).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawDiagnostics {
    pub converged: bool,
    /// `ln |det J|` of the binding Jacobian at the draw; NaN when not computed.
    pub jac_logdet: f64,
    /// Sign of the Jacobian determinant (0 when not computed or singular).
    pub jac_sign: i8,
    pub iterations: usize,
}

impl Default for DrawDiagnostics {
    fn default() -> Self {
        Self { converged: true, jac_logdet: f64::NAN, jac_sign: 0, iterations: 0 }
    }
}

/// Posterior draws with importance weights.
///
/// `raw_weights` are stored relative to the largest raw weight, which
/// leaves the normalized weights unchanged while avoiding overflow when
/// Jacobian determinants span many orders of magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDraws {
    space: Arc<ParamSpace>,
    draws: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    raw_weights: Vec<f64>,
    norm_weights: Vec<f64>,
    diagnostics: Vec<DrawDiagnostics>,
    /// Draws discarded and replaced because the solver failed.
    pub failures: usize,
    /// MH acceptance rate over the kept segment, for chains.
    pub acceptance_rate: Option<f64>,
}

impl WeightedDraws {
    pub fn from_log_weights(
        space: Arc<ParamSpace>,
        draws: Vec<Vec<f64>>,
        log_weights: Vec<f64>,
        diagnostics: Vec<DrawDiagnostics>,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptyDraws);
        }
        if draws.len() != log_weights.len() || draws.len() != diagnostics.len() {
            return Err(Error::ShapeMismatch("draws, weights and diagnostics lengths".into()));
        }
        if let Some(d) = draws.iter().find(|d| d.len() != space.dim()) {
            return Err(Error::ShapeMismatch(format!("draw of length {}", d.len())));
        }
        let raw_weights = relative_weights(&log_weights)?;
        let norm_weights = normalize_weights(&raw_weights)?;
        Ok(Self {
            space,
            draws,
            log_weights,
            raw_weights,
            norm_weights,
            diagnostics,
            failures: 0,
            acceptance_rate: None,
        })
    }

    pub fn uniform(space: Arc<ParamSpace>, draws: Vec<Vec<f64>>) -> Result<Self> {
        let n = draws.len();
        Self::from_log_weights(space, draws, vec![0.0; n], vec![DrawDiagnostics::default(); n])
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn draw(&self, b: usize) -> Result<ParamVector> {
        ParamVector::new(self.space.clone(), self.draws[b].clone())
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw_weights
    }

    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    pub fn diagnostics(&self) -> &[DrawDiagnostics] {
        &self.diagnostics
    }

    pub fn component(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.draws.iter().map(move |d| d[j])
    }

    /// Kish effective sample size, `1 / sum(w^2)`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.norm_weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Number of draws whose Jacobian determinant sign differs from the
    /// majority sign. Nonzero counts hint that the binding map is not
    /// one-to-one over the sampled region.
    pub fn jacobian_sign_changes(&self) -> usize {
        let pos = self.diagnostics.iter().filter(|d| d.jac_sign > 0).count();
        let neg = self.diagnostics.iter().filter(|d| d.jac_sign < 0).count();
        pos.min(neg)
    }

    /// The same draws reweighted with new log weights (e.g. the no-Jacobian
    /// control in the reverse-sampler diagnostics).
    pub fn reweighted(&self, log_weights: Vec<f64>) -> Result<Self> {
        let mut out = Self::from_log_weights(
            self.space.clone(),
            self.draws.clone(),
            log_weights,
            self.diagnostics.clone(),
        )?;
        out.failures = self.failures;
        out.acceptance_rate = self.acceptance_rate;
        Ok(out)
    }

    pub fn mean_values(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for (d, w) in self.draws.iter().zip(&self.norm_weights) {
            for (m, x) in mean.iter_mut().zip(d) {
                *m += w * x;
            }
        }
        mean
    }

    /// Weighted standard deviation per component.
    pub fn sd_values(&self) -> Vec<f64> {
        let mean = self.mean_values();
        let mut var = vec![0.0; self.dim()];
        for (d, w) in self.draws.iter().zip(&self.norm_weights) {
            for ((v, x), m) in var.iter_mut().zip(d).zip(&mean) {
                *v += w * (x - m) * (x - m);
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }

    /// Monte Carlo standard error of the weighted mean of component `j`,
    /// using the delta-method form for self-normalized importance sampling.
    /// For correlated chain output use [`batch_means_se`] instead.
    pub fn importance_se(&self, j: usize) -> f64 {
        let mean = self.mean_values()[j];
        self.draws
            .iter()
            .zip(&self.norm_weights)
            .map(|(d, w)| w * w * (d[j] - mean) * (d[j] - mean))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn weighted_mean(w: &WeightedDraws) -> Result<ParamVector> {
    if w.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mean = w.mean_values();
    // A convex combination stays in the (convex) box up to rounding.
    let clamped = mean
        .iter()
        .zip(w.space.lower.iter().zip(&w.space.upper))
        .map(|(&m, (&lo, &hi))| m.clamp(lo, hi))
        .collect();
    ParamVector::new(w.space.clone(), clamped)
}

/// Sup-norm distance between the weighted ECDF of component `j` and `cdf`.
pub fn weighted_ecdf_distance(
    w: &WeightedDraws,
    j: usize,
    cdf: impl Fn(f64) -> f64,
) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if j >= w.dim() {
        return Err(Error::ShapeMismatch(format!("component {j} of {}", w.dim())));
    }
    let mut pts: Vec<(f64, f64)> =
        w.draws.iter().zip(&w.norm_weights).map(|(d, &wt)| (d[j], wt)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0.0;
    let mut dist: f64 = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let x = pts[i].0;
        let before = cum;
        while i < pts.len() && pts[i].0 == x {
            cum += pts[i].1;
            i += 1;
        }
        let f = cdf(x);
        dist = dist.max((f - before).abs()).max((cum - f).abs());
    }
    Ok(dist)
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(xs.len());
    let size = xs.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|k| xs[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Transform;
    use proptest::prelude::*;

    fn line() -> Arc<ParamSpace> {
        ParamSpace::new(&[("x", f64::NEG_INFINITY, f64::INFINITY, Transform::Identity)])
    }

    fn draws_1d(xs: &[f64], w: &[f64]) -> WeightedDraws {
        let logw = w.iter().map(|w| w.ln()).collect();
        WeightedDraws::from_log_weights(
            line(),
            xs.iter().map(|&x| vec![x]).collect(),
            logw,
            vec![DrawDiagnostics::default(); xs.len()],
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[2.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(normalize_weights(&[0.0, 0.0]), Err(Error::AllZeroWeights));
        assert!(matches!(
            normalize_weights(&[1.0, f64::NAN]),
            Err(Error::NonFiniteWeight { index: 1, .. })
        ));
        assert!(matches!(
            normalize_weights(&[1.0, f64::INFINITY]),
            Err(Error::NonFiniteWeight { .. })
        ));
    }

    #[test]
    fn log_weights_survive_huge_spread() {
        let w = normalize_log_weights(&[-1000.0, -1000.0 + 3f64.ln(), f64::NEG_INFINITY]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12 && w[2] == 0.0);
        assert_eq!(normalize_log_weights(&[f64::NEG_INFINITY]), Err(Error::AllZeroWeights));
    }

    #[test]
    fn weighted_mean_examples() {
        let w = draws_1d(&[1.0, 3.0], &[0.5, 0.5]);
        assert_eq!(weighted_mean(&w).unwrap()[0], 2.0);
        let w = draws_1d(&[1.0, 3.0], &[1.0, 0.0]);
        assert_eq!(weighted_mean(&w).unwrap()[0], 1.0);
        assert_eq!(WeightedDraws::uniform(line(), vec![]), Err(Error::EmptyDraws));
    }

    #[test]
    fn ecdf_single_point() {
        let w = draws_1d(&[0.3], &[1.0]);
        let d = weighted_ecdf_distance(&w, 0, |_| 0.5).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ecdf_perfect_quantiles() {
        let b = 999;
        let xs: Vec<f64> = (1..=b).map(|i| i as f64 / (b + 1) as f64).collect();
        let w = WeightedDraws::uniform(line(), xs.iter().map(|&x| vec![x]).collect()).unwrap();
        let d = weighted_ecdf_distance(&w, 0, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d <= 1.0 / (b + 1) as f64 + 1e-12, "d = {d}");
    }

    #[test]
    fn ecdf_ties_are_one_jump() {
        let w = draws_1d(&[0.25, 0.75, 0.75], &[1.0, 1.0, 1.0]);
        let d = weighted_ecdf_distance(&w, 0, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - (0.75 - 1.0 / 3.0)).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn batch_means_of_iid_series() {
        let xs: Vec<f64> = (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // Perfectly balanced batches: zero variance of the batch means.
        assert!(batch_means_se(&xs, 20) < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(
            raw in prop::collection::vec(0.0f64..1e3, 1..40),
            c in 1e-6f64..1e6,
        ) {
            prop_assume!(raw.iter().any(|&w| w > 0.0));
            let a = normalize_weights(&raw).unwrap();
            let scaled: Vec<f64> = raw.iter().map(|w| w * c).collect();
            let b = normalize_weights(&scaled).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn uniform_mean_is_arithmetic_mean(xs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let w = WeightedDraws::uniform(line(), xs.iter().map(|&x| vec![x]).collect()).unwrap();
            let m = weighted_mean(&w).unwrap()[0];
            let a = xs.iter().sum::<f64>() / xs.len() as f64;
            prop_assert!((m - a).abs() <= 1e-14 * a.abs().max(xs.iter().fold(0.0f64, |s, x| s.max(x.abs()))));
        }
    }
}
