//! C ABI over `simest`.
//!
//! Every fallible function returns a [`SimestStatus`]; on failure the
//! message is available from [`simest_last_error`] on the same thread.
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use simest::estimators::{reverse_sampler, PriorSpec};
use simest::harness::{emit_table, run_replications, ExperimentConfig, ReplicationTable, TableFormat};
use simest::models::{NormalModel, Observed};
use simest::oracles::{table2_row, NormalOracleInput, Table2Estimator};
use simest::rng::SeedSpec;
use simest::solver::SolverConfig;
use simest::weights::WeightedDraws;
use simest::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimestStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NoConvergence = 4,
    TooManyFailures = 5,
    Numerical = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

impl From<&Error> for SimestStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::UnsupportedEstimator(_) => Self::Config,
            Error::InvalidParam(_) | Error::ShapeMismatch(_) | Error::NonPositiveVariance(_) => Self::InvalidArgument,
            Error::NoConvergence { .. } | Error::ObjectiveNaN | Error::InitializationFailure { .. } => {
                Self::NoConvergence
            }
            Error::TooManyFailures { .. } => Self::TooManyFailures,
            Error::Io(_) => Self::Io,
            _ => Self::Numerical,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: SimestStatus, msg: &str) -> SimestStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (SimestStatus, String)>) -> SimestStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SimestStatus::Ok
        }
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(SimestStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> (SimestStatus, String) {
    (SimestStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (SimestStatus, String) {
    (SimestStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SimestStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SimestStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn simest_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parsed experiment configuration.
pub struct SimestExperiment(ExperimentConfig);

/// Result of a replication experiment.
pub struct SimestTable(ReplicationTable);

/// Weighted posterior draws.
pub struct SimestDraws(WeightedDraws);

/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_experiment_from_toml(toml: *const c_char, out: *mut *mut SimestExperiment) -> SimestStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ExperimentConfig::from_toml(c_str(toml, "toml")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SimestExperiment(cfg)));
        Ok(())
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn simest_experiment_set_seed(exp: *mut SimestExperiment, master_seed: u64) -> SimestStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("experiment"))?;
        exp.0.master_seed = master_seed;
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn simest_experiment_free(exp: *mut SimestExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_run_replications(exp: *const SimestExperiment, out: *mut *mut SimestTable) -> SimestStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let table = run_replications(&exp.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SimestTable(table)));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn simest_table_free(table: *mut SimestTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Summary statistics of one (estimator, parameter) pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimestRow {
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub mc_se: f64,
    pub failures: usize,
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn simest_table_len(table: *const SimestTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.rows.len())
}

/// # Safety
/// `table` must be a live handle; `estimator` and `param` NUL-terminated;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_table_find(
    table: *const SimestTable,
    estimator: *const c_char,
    param: *const c_char,
    out: *mut SimestRow,
) -> SimestStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (est, param) = (c_str(estimator, "estimator")?, c_str(param, "param")?);
        let r = table
            .0
            .row(est, param)
            .ok_or_else(|| (SimestStatus::OutOfRange, format!("no row for {est}/{param}")))?;
        *out = SimestRow { truth: r.truth, mean: r.mean, sd: r.sd, bias: r.bias, mc_se: r.mc_se, failures: r.failures };
        Ok(())
    })
}

/// Writes the table as CSV with the configuration in a comment header.
///
/// # Safety
/// `table` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn simest_table_write_csv(table: *const SimestTable, path: *const c_char) -> SimestStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        let path = Path::new(c_str(path, "path")?);
        let file = std::fs::File::create(path).map_err(|e| lib_err(e.into()))?;
        emit_table(&table.0, TableFormat::Csv, std::io::BufWriter::new(file)).map_err(lib_err)
    })
}

/// Reverse sampler for the normal model on the observed sample `data`,
/// under the prior `sigma2^(-alpha)`.
///
/// # Safety
/// `data` must point to `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_normal_reverse_sampler(
    data: *const f64,
    len: usize,
    alpha: f64,
    b: usize,
    seed: u64,
    out: *mut *mut SimestDraws,
) -> SimestStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let sample = std::slice::from_raw_parts(data, len).to_vec();
        let model = NormalModel::new(len, 0.0, 1.0).map_err(lib_err)?;
        let obs = Observed::new(&model, sample).map_err(lib_err)?;
        let prior = if alpha == 0.0 { PriorSpec::Flat } else { PriorSpec::power("sigma2", alpha) };
        let draws = reverse_sampler(
            &model,
            &obs,
            &DMatrix::identity(2, 2),
            &prior,
            b,
            SeedSpec::new(seed, 0),
            &SolverConfig::default(),
        )
        .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SimestDraws(draws)));
        Ok(())
    })
}

/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_len(draws: *const SimestDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_dim(draws: *const SimestDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.0.dim())
}

/// Kish effective sample size, or NaN for a null handle.
///
/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_effective_size(draws: *const SimestDraws) -> f64 {
    draws.as_ref().map_or(f64::NAN, |d| d.0.effective_size())
}

/// Copies draw `index` into `theta` (`dim` doubles) and its normalized
/// weight into `weight`.
///
/// # Safety
/// `draws` must be a live handle, `theta` must point to `dim` writable
/// doubles and `weight` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_get(
    draws: *const SimestDraws,
    index: usize,
    theta: *mut f64,
    dim: usize,
    weight: *mut f64,
) -> SimestStatus {
    guard(|| {
        let d = &draws.as_ref().ok_or_else(|| null("draws"))?.0;
        if theta.is_null() || weight.is_null() {
            return Err(null("output"));
        }
        if dim != d.dim() {
            return Err((SimestStatus::InvalidArgument, format!("dim {dim}, expected {}", d.dim())));
        }
        if index >= d.len() {
            return Err((SimestStatus::OutOfRange, format!("draw {index} of {}", d.len())));
        }
        ptr::copy_nonoverlapping(d.draws()[index].as_ptr(), theta, dim);
        *weight = d.norm_weights()[index];
        Ok(())
    })
}

/// Weighted mean of the draws into `out` (`dim` doubles).
///
/// # Safety
/// `draws` must be a live handle and `out` point to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_mean(draws: *const SimestDraws, out: *mut f64, dim: usize) -> SimestStatus {
    guard(|| {
        let d = &draws.as_ref().ok_or_else(|| null("draws"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if dim != d.dim() {
            return Err((SimestStatus::InvalidArgument, format!("dim {dim}, expected {}", d.dim())));
        }
        let mean = d.mean_values();
        ptr::copy_nonoverlapping(mean.as_ptr(), out, dim);
        Ok(())
    })
}

/// # Safety
/// `draws` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn simest_draws_free(draws: *mut SimestDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

/// Closed-form moments of a normal-model estimator of `sigma2`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimestOracleRow {
    pub expected: f64,
    pub bias: f64,
    pub variance: f64,
    /// Value given `sigma2_hat`; NaN where the estimator is random.
    pub conditional: f64,
}

/// `estimator` is one of ml, md, bc_flat, bc_reducing, rs_flat,
/// rs_reducing, smd, lt_flat, slt_flat, bootstrap.
///
/// # Safety
/// `estimator` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn simest_oracle_table2(
    estimator: *const c_char,
    t: usize,
    s: usize,
    b: usize,
    sigma2: f64,
    sigma2_hat: f64,
    out: *mut SimestOracleRow,
) -> SimestStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let est = Table2Estimator::parse(c_str(estimator, "estimator")?).map_err(lib_err)?;
        let input = NormalOracleInput { s, b, sigma2_hat, ..NormalOracleInput::new(t, sigma2) };
        let row = table2_row(est, &input).map_err(lib_err)?;
        *out = SimestOracleRow {
            expected: row.expected,
            bias: row.bias,
            variance: row.variance,
            conditional: row.conditional.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
