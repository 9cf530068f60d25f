//! Exact-identification solves, quasi-distance minimization and
//! finite-difference Jacobians.
//!
//! Solves run in the unconstrained coordinates given by each parameter's
//! [`Transform`](crate::param::Transform); Jacobians used for importance
//! weights are taken in the natural parameterization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::param::ParamVector;

mod jacobian;
mod minimize;

pub use jacobian::{jacobian_fd, logabsdet, lu_logdet};
pub use minimize::{minimize_j, nelder_mead, solve_exact_identified};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Convergence threshold on the (unscaled) objective `g' W g`.
    pub objective_tol: f64,
    pub param_tol: f64,
    pub max_iter: usize,
    pub fd_step_rel: f64,
    pub restarts: usize,
    /// Seed for restart jitter.
    pub restart_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            objective_tol: 1e-10,
            param_tol: 1e-9,
            max_iter: 200,
            fd_step_rel: 1e-6,
            restarts: 3,
            restart_seed: 0x5eed,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.objective_tol > 0.0
            && self.param_tol > 0.0
            && self.max_iter > 0
            && self.fd_step_rel > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("solver settings must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: ParamVector,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian: Option<DMatrix<f64>>,
    pub jac_logdet_abs: Option<f64>,
    pub jac_sign: i8,
}

impl SolveReport {
    /// Attaches the Jacobian of `f` at the solution and its log-determinant.
    pub fn attach_jacobian<F>(&mut self, f: F, cfg: &SolverConfig) -> crate::Result<()>
    where
        F: Fn(&[f64]) -> crate::Result<Vec<f64>>,
    {
        let jac = jacobian_fd(f, &self.solution, cfg)?;
        let (sign, logabs) = lu_logdet(&jac);
        self.jac_sign = sign;
        self.jac_logdet_abs = Some(logabs);
        self.jacobian = Some(jac);
        Ok(())
    }
}
