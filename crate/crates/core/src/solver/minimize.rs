use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::param::{ParamSpace, ParamVector};
use crate::rng::{derive_stream, tags, SeedSpec};

/// Residual map and weighting matrix, viewed in unconstrained coordinates.
struct Problem<'a, F> {
    residual: &'a F,
    space: &'a ParamSpace,
    w: &'a DMatrix<f64>,
    cfg: &'a SolverConfig,
}

struct Eval {
    r: DVector<f64>,
    obj: f64,
}

struct Run {
    u: Vec<f64>,
    obj: f64,
    iterations: usize,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn eval(&self, u: &[f64]) -> Option<Eval> {
        let theta = self.space.from_unconstrained(u);
        if !self.space.interior(&theta) {
            return None;
        }
        let r = (self.residual)(&theta).ok()?;
        if r.len() != self.w.nrows() || r.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let r = DVector::from_vec(r);
        let obj = (r.transpose() * self.w * &r)[(0, 0)];
        obj.is_finite().then_some(Eval { r, obj })
    }

    fn objective(&self, u: &[f64]) -> f64 {
        self.eval(u).map_or(f64::INFINITY, |e| e.obj)
    }

    fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        let k = u.len();
        let mut jac = DMatrix::zeros(self.w.nrows(), k);
        let mut p = u.to_vec();
        for j in 0..k {
            let h = self.cfg.fd_step_rel * u[j].abs().max(1.0);
            p[j] = u[j] + h;
            let plus = self.eval(&p)?;
            p[j] = u[j] - h;
            let minus = self.eval(&p)?;
            p[j] = u[j];
            jac.set_column(j, &((plus.r - minus.r) / (2.0 * h)));
        }
        Some(jac)
    }

    /// Damped Gauss-Newton. With `lambda = 0` and a square Jacobian the step
    /// is the Newton step `-J^{-1} r` regardless of `W`.
    fn gauss_newton(&self, u0: Vec<f64>) -> Option<Run> {
        let mut u = u0;
        let mut cur = self.eval(&u)?;
        let mut lambda = 0.0;
        let mut iterations = 0;
        while iterations < self.cfg.max_iter && cur.obj > 0.0 {
            iterations += 1;
            let Some(jac) = self.jacobian(&u) else { break };
            let jtw = jac.transpose() * self.w;
            let a = &jtw * &jac;
            let g = &jtw * &cur.r;
            let mut accepted = None;
            for _ in 0..16 {
                let mut m = a.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += lambda * a[(i, i)].abs().max(1e-12);
                }
                let Some(step) = m.lu().solve(&(-&g)) else {
                    lambda = (lambda * 10.0).max(1e-6);
                    continue;
                };
                let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                match self.eval(&cand) {
                    Some(e) if e.obj < cur.obj => {
                        accepted = Some((cand, e, step.amax()));
                        break;
                    }
                    _ => lambda = (lambda * 10.0).max(1e-6),
                }
            }
            let Some((cand, e, step_norm)) = accepted else { break };
            lambda = if lambda < 1e-9 { 0.0 } else { lambda / 10.0 };
            let scale = 1.0 + u.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            u = cand;
            cur = e;
            if cur.obj <= self.cfg.objective_tol && step_norm <= self.cfg.param_tol * scale {
                break;
            }
        }
        Some(Run { u, obj: cur.obj, iterations })
    }
}

/// Derivative-free Nelder-Mead minimization. Returns the best vertex and its
/// value.
pub fn nelder_mead<G>(f: G, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> (Vec<f64>, f64)
where
    G: Fn(&[f64]) -> f64,
{
    let k = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for j in 0..k {
        let mut v = x0.to_vec();
        v[j] += step * x0[j].abs().max(1.0);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut evals = k + 1;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[k].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread.abs() <= tol * (1.0 + simplex[0].1.abs()) && size <= tol.sqrt() {
            break;
        }
        let centroid: Vec<f64> = (0..k)
            .map(|j| simplex[..k].iter().map(|(v, _)| v[j]).sum::<f64>() / k as f64)
            .collect();
        let worst = simplex[k].0.clone();
        let refl = lerp(&centroid, &worst, -1.0);
        let fr = f(&refl);
        evals += 1;
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst, -2.0);
            let fe = f(&exp);
            evals += 1;
            simplex[k] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (refl, fr);
        } else {
            let (target, ft) = if fr < simplex[k].1 { (refl, fr) } else { (worst, simplex[k].1) };
            let con = lerp(&centroid, &target, 0.5);
            let fc = f(&con);
            evals += 1;
            if fc < ft {
                simplex[k] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    *v = lerp(&best, v, 0.5);
                    *fv = f(v);
                }
                evals += k;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Minimizes `J(theta) = g(theta)' W g(theta)` where `g` is `residual`.
///
/// Runs damped Gauss-Newton from `theta0`, falls back to Nelder-Mead on
/// stagnation, and restarts from `theta0` jittered by 10% relative noise.
/// Returns the best point found; `converged` is set iff its objective is at
/// most `objective_tol`.
pub fn minimize_j<F>(
    residual: F,
    theta0: &ParamVector,
    w: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<SolveReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let space = theta0.space();
    let k = theta0.dim();
    if !w.is_square() || w.nrows() == 0 {
        return Err(Error::ShapeMismatch("weighting matrix must be square".into()));
    }
    let problem = Problem { residual: &residual, space, w, cfg };
    let mut jitter = derive_stream(SeedSpec::new(cfg.restart_seed, 0).child(tags::RESTART));
    let mut best: Option<Run> = None;
    let mut total_iter = 0;
    for attempt in 0..=cfg.restarts {
        let start_theta: Vec<f64> = if attempt == 0 {
            theta0.values().to_vec()
        } else {
            let z: Vec<f64> = (0..k).map(|_| jitter.sample(StandardNormal)).collect();
            let t: Vec<f64> = theta0.values().iter().zip(&z).map(|(x, z)| x * (1.0 + 0.1 * z)).collect();
            if space.interior(&t) {
                t
            } else {
                let u = space.to_unconstrained(theta0.values());
                space.from_unconstrained(&u.iter().zip(&z).map(|(u, z)| u + 0.1 * z * u.abs().max(1.0)).collect::<Vec<_>>())
            }
        };
        if !space.interior(&start_theta) {
            continue;
        }
        let u0 = space.to_unconstrained(&start_theta);
        let Some(mut run) = problem.gauss_newton(u0) else { continue };
        total_iter += run.iterations;
        if run.obj > cfg.objective_tol {
            let (u_nm, _) = nelder_mead(|u| problem.objective(u), &run.u, 0.05, 400 * k, 1e-16);
            if let Some(polished) = problem.gauss_newton(u_nm) {
                total_iter += polished.iterations;
                if polished.obj < run.obj {
                    run = polished;
                }
            }
        }
        let done = run.obj <= cfg.objective_tol;
        if best.as_ref().map_or(true, |b| run.obj < b.obj) {
            best = Some(run);
        }
        if done {
            break;
        }
    }
    let best = best.ok_or(Error::ObjectiveNaN)?;
    let solution = ParamVector::new(space.clone(), space.from_unconstrained(&best.u))?;
    Ok(SolveReport {
        solution,
        final_objective: best.obj,
        iterations: total_iter,
        converged: best.obj <= cfg.objective_tol,
        jacobian: None,
        jac_logdet_abs: None,
        jac_sign: 0,
    })
}

/// Solves `psi_sim(theta) = psi_hat` for an exactly identified map with
/// fixed innovations.
pub fn solve_exact_identified<F>(
    psi_sim: F,
    psi_hat: &[f64],
    theta0: &ParamVector,
    cfg: &SolverConfig,
) -> Result<SolveReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k = theta0.dim();
    if psi_hat.len() != k {
        return Err(Error::ShapeMismatch(format!("{} statistics for {k} parameters", psi_hat.len())));
    }
    let residual = |theta: &[f64]| -> Result<Vec<f64>> {
        let s = psi_sim(theta)?;
        Ok(s.iter().zip(psi_hat).map(|(a, b)| a - b).collect())
    };
    let report = minimize_j(residual, theta0, &DMatrix::identity(k, k), cfg)?;
    if !report.converged {
        return Err(Error::NoConvergence { best_objective: report.final_objective });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Transform;
    use std::sync::Arc;

    fn free(k: usize) -> Arc<ParamSpace> {
        let names: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
        let entries: Vec<(&str, f64, f64, Transform)> = names
            .iter()
            .map(|n| (n.as_str(), f64::NEG_INFINITY, f64::INFINITY, Transform::Identity))
            .collect();
        ParamSpace::new(&entries)
    }

    #[test]
    fn convex_quadratic() {
        let theta0 = ParamVector::new(free(1), vec![0.0]).unwrap();
        let rep = minimize_j(|x| Ok(vec![x[0] - 2.0]), &theta0, &DMatrix::identity(1, 1), &SolverConfig::default())
            .unwrap();
        assert!(rep.converged && rep.final_objective < 1e-10);
        assert!((rep.solution[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock_residuals() {
        let cfg = SolverConfig::default();
        let theta0 = ParamVector::new(free(2), vec![-1.2, 1.0]).unwrap();
        let rep = minimize_j(
            |x| Ok(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]),
            &theta0,
            &DMatrix::identity(2, 2),
            &cfg,
        )
        .unwrap();
        assert!(rep.converged);
        assert!((rep.solution[0] - 1.0).abs() < cfg.param_tol && (rep.solution[1] - 1.0).abs() < cfg.param_tol);
    }

    #[test]
    fn identity_binding() {
        let theta0 = ParamVector::new(free(2), vec![0.0, 0.0]).unwrap();
        let rep =
            solve_exact_identified(|x| Ok(x.to_vec()), &[0.3, 1.7], &theta0, &SolverConfig::default()).unwrap();
        assert!((rep.solution[0] - 0.3).abs() < 1e-12 && (rep.solution[1] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn nan_everywhere_is_an_error() {
        let theta0 = ParamVector::new(free(1), vec![0.0]).unwrap();
        let r = minimize_j(|_| Ok(vec![f64::NAN]), &theta0, &DMatrix::identity(1, 1), &SolverConfig::default());
        assert_eq!(r, Err(Error::ObjectiveNaN));
    }

    #[test]
    fn unreachable_target_reports_no_convergence() {
        let theta0 = ParamVector::new(free(1), vec![0.5]).unwrap();
        let cfg = SolverConfig { max_iter: 50, ..Default::default() };
        let r = solve_exact_identified(|x| Ok(vec![x[0] * x[0]]), &[-1.0], &theta0, &cfg);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
        let rep = minimize_j(|x| Ok(vec![x[0] * x[0] + 1.0]), &theta0, &DMatrix::identity(1, 1), &cfg).unwrap();
        assert!(!rep.converged && (rep.final_objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let (x, f) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2), &[0.0, 0.0], 0.5, 2000, 1e-20);
        assert!(f < 1e-12 && (x[0] - 1.0).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5);
    }
}
