//! C interface to jsdrazor.
//!
//! Every fallible function returns a status code (`JSDR_OK` on success) and
//! writes results through out-pointers. On failure the message is available
//! from `jsdr_last_error_message` on the same thread. Strings returned by the
//! library must be released with `jsdr_string_free`, models with
//! `jsdr_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use jsdrazor::bolfi::{bolfi_minimize, sic_bolfi, BolfiOptions};
use jsdrazor::categorical::{Categorical, CountVector};
use jsdrazor::divergence;
use jsdrazor::error::Error;
use jsdrazor::estimate::{min_jsd_fit, mle_fit, FitOptions};
use jsdrazor::experiment::{run_experiment, ExperimentConfig};
use jsdrazor::model::{example_model, loglinear_default, multilogit_model, LoglinearVariant, ParametricModel};
use jsdrazor::optim::ParamBox;
use jsdrazor::razor::{score_models, sic, sic_jsd, ScoreOptions};
use jsdrazor::simulators::ModelSimulator;

pub const JSDR_OK: i32 = 0;
pub const JSDR_ERR_EMPTY_DATA: i32 = 1;
pub const JSDR_ERR_DIMENSION: i32 = 2;
pub const JSDR_ERR_DOMAIN: i32 = 3;
pub const JSDR_ERR_CONFIG: i32 = 4;
pub const JSDR_ERR_UNDERFLOW: i32 = 5;
pub const JSDR_ERR_BOUNDARY: i32 = 6;
pub const JSDR_ERR_SAMPLE_TOO_SMALL: i32 = 7;
pub const JSDR_ERR_UNSUPPORTED_DIMENSION: i32 = 8;
pub const JSDR_ERR_HESSIAN_NOT_PD: i32 = 9;
pub const JSDR_ERR_SIMULATOR_CONTRACT: i32 = 10;
pub const JSDR_ERR_SIMULATOR: i32 = 11;
pub const JSDR_ERR_CONSTRAINT: i32 = 12;
pub const JSDR_ERR_UNSUPPORTED_SCALE: i32 = 13;
pub const JSDR_ERR_IO: i32 = 14;
pub const JSDR_ERR_NULL_POINTER: i32 = 100;
pub const JSDR_ERR_INVALID_UTF8: i32 = 101;
pub const JSDR_ERR_BUFFER_TOO_SMALL: i32 = 102;
pub const JSDR_ERR_PANIC: i32 = 103;

/// Opaque parametric model.
pub struct JsdrModel {
    inner: ParametricModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.code(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(JSDR_ERR_NULL_POINTER, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JSDR_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            JSDR_ERR_PANIC
        }
    }
}

unsafe fn f64s<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn counts<'a>(p: *const u64, k: usize) -> Result<CountVector, Failure> {
    if p.is_null() {
        return Err(null("counts"));
    }
    Ok(CountVector::new(slice::from_raw_parts(p, k).to_vec()))
}

unsafe fn model<'a>(m: *const JsdrModel) -> Result<&'a ParametricModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(JSDR_ERR_INVALID_UTF8, format!("{what}: {e}")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn jsdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn jsdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn jsdr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

type DivFn = fn(&Categorical, &Categorical) -> jsdrazor::error::Result<f64>;

unsafe fn divergence_call(f: DivFn, p: *const f64, q: *const f64, k: usize, out: *mut f64) -> i32 {
    guard(|| {
        let p = Categorical::new(f64s(p, k, "p")?.to_vec())?;
        let q = Categorical::new(f64s(q, k, "q")?.to_vec())?;
        put(out, f(&p, &q)?, "out")
    })
}

/// Jensen–Shannon divergence in nats between two length-`k` distributions.
///
/// # Safety
/// `p` and `q` must point to `k` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_jsd(p: *const f64, q: *const f64, k: usize, out: *mut f64) -> i32 {
    divergence_call(divergence::jsd, p, q, k, out)
}

/// Kullback–Leibler divergence KL(p‖q); may be +infinity.
///
/// # Safety
/// As for [`jsdr_jsd`].
#[no_mangle]
pub unsafe extern "C" fn jsdr_kl(p: *const f64, q: *const f64, k: usize, out: *mut f64) -> i32 {
    divergence_call(divergence::kl, p, q, k, out)
}

/// Variation distance sum |p_i − q_i|, in [0, 2].
///
/// # Safety
/// As for [`jsdr_jsd`].
#[no_mangle]
pub unsafe extern "C" fn jsdr_total_variation(p: *const f64, q: *const f64, k: usize, out: *mut f64) -> i32 {
    divergence_call(divergence::total_variation, p, q, k, out)
}

fn boxed(m: ParametricModel) -> *mut JsdrModel {
    Box::into_raw(Box::new(JsdrModel { inner: m }))
}

/// Three-category example model with 0, 1 or 2 free parameters on [-3, 3].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_example(active_dims: usize, out: *mut *mut JsdrModel) -> i32 {
    guard(|| put(out, boxed(example_model(active_dims)?), "out"))
}

/// 2×2 log-linear model on [-2, 2]^d; `saturated` selects the
/// three-parameter variant.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_loglinear(saturated: bool, out: *mut *mut JsdrModel) -> i32 {
    let v = if saturated { LoglinearVariant::Saturated } else { LoglinearVariant::TwoParam };
    guard(|| put(out, boxed(loglinear_default(v)?), "out"))
}

/// Multilogit model from a row-major (k−1)×q predictor matrix, using the
/// first `active_dims` columns, on the box [lower, upper].
///
/// # Safety
/// `predictors` must hold `rows * cols` doubles; `lower` and `upper` must
/// hold `active_dims` doubles each; `name` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_multilogit(
    name: *const c_char,
    predictors: *const f64,
    rows: usize,
    cols: usize,
    active_dims: usize,
    lower: *const f64,
    upper: *const f64,
    out: *mut *mut JsdrModel,
) -> i32 {
    guard(|| {
        let name = if name.is_null() { "model" } else { text(name, "name")? };
        let a = nalgebra::DMatrix::from_row_slice(rows, cols, f64s(predictors, rows * cols, "predictors")?);
        let bounds = ParamBox::new(f64s(lower, active_dims, "lower")?.to_vec(), f64s(upper, active_dims, "upper")?.to_vec())?;
        put(out, boxed(multilogit_model(name, &a, active_dims, bounds)?), "out")
    })
}

/// # Safety
/// `m` must come from a `jsdr_model_*` constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_free(m: *mut JsdrModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of free parameters, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_dim(m: *const JsdrModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.dim())
}

/// Number of categories, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_k(m: *const JsdrModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.k())
}

/// Category probabilities at θ, written to `out` (capacity `k`).
///
/// # Safety
/// `theta` must hold `d` doubles and `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn jsdr_model_probs(m: *const JsdrModel, theta: *const f64, d: usize, out: *mut f64, k: usize) -> i32 {
    guard(|| {
        let m = model(m)?;
        let p = m.probs(f64s(theta, d, "theta")?)?;
        if k < m.k() {
            return Err(Failure(JSDR_ERR_BUFFER_TOO_SMALL, format!("out holds {k} values, need {}", m.k())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, m.k()).copy_from_slice(p.probs());
        Ok(())
    })
}

/// Fit result written by the fitting functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct JsdrFit {
    /// Attained divergence (JSD/BOLFI) or −ln likelihood (ML).
    pub objective: f64,
    /// Criterion value: SIC-JSD, SIC or SIC-BOLFI.
    pub score: f64,
    pub evaluations: usize,
    pub converged: bool,
}

unsafe fn write_theta(theta_out: *mut f64, capacity: usize, theta: &[f64]) -> Result<(), Failure> {
    if theta.is_empty() {
        return Ok(());
    }
    if capacity < theta.len() {
        return Err(Failure(JSDR_ERR_BUFFER_TOO_SMALL, format!("theta_out holds {capacity} values, need {}", theta.len())));
    }
    if theta_out.is_null() {
        return Err(null("theta_out"));
    }
    slice::from_raw_parts_mut(theta_out, theta.len()).copy_from_slice(theta);
    Ok(())
}

/// Minimum-JSD fit and SIC-JSD score on observed counts.
///
/// # Safety
/// `counts` must hold `k` values; `theta_out` must hold `theta_capacity`
/// doubles (may be NULL when the model has no parameters); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_fit_sic_jsd(
    m: *const JsdrModel,
    counts_ptr: *const u64,
    k: usize,
    seed: u64,
    theta_out: *mut f64,
    theta_capacity: usize,
    out: *mut JsdrFit,
) -> i32 {
    guard(|| {
        let m = model(m)?;
        let c = counts(counts_ptr, k)?;
        let fit = min_jsd_fit(m, &c.empirical()?, &FitOptions::default(), seed)?;
        let score = sic_jsd(m, &c, &fit)?;
        write_theta(theta_out, theta_capacity, &fit.theta_hat)?;
        let r = JsdrFit { objective: fit.objective, score, evaluations: fit.evaluations, converged: fit.converged };
        put(out, r, "out")
    })
}

/// Maximum-likelihood fit and SIC score on observed counts.
///
/// # Safety
/// As for [`jsdr_fit_sic_jsd`].
#[no_mangle]
pub unsafe extern "C" fn jsdr_fit_sic(
    m: *const JsdrModel,
    counts_ptr: *const u64,
    k: usize,
    seed: u64,
    theta_out: *mut f64,
    theta_capacity: usize,
    out: *mut JsdrFit,
) -> i32 {
    guard(|| {
        let m = model(m)?;
        let c = counts(counts_ptr, k)?;
        let fit = mle_fit(m, &c, &FitOptions::default(), seed)?;
        let score = sic(m, &c, &fit)?;
        write_theta(theta_out, theta_capacity, &fit.theta_hat)?;
        let r = JsdrFit { objective: fit.objective, score, evaluations: fit.evaluations, converged: fit.converged };
        put(out, r, "out")
    })
}

/// SIC-BOLFI with the model used only as a multinomial simulator:
/// `budget` simulator calls, default BOLFI settings otherwise.
///
/// # Safety
/// As for [`jsdr_fit_sic_jsd`].
#[no_mangle]
pub unsafe extern "C" fn jsdr_fit_sic_bolfi(
    m: *const JsdrModel,
    counts_ptr: *const u64,
    k: usize,
    budget: usize,
    seed: u64,
    theta_out: *mut f64,
    theta_capacity: usize,
    out: *mut JsdrFit,
) -> i32 {
    guard(|| {
        let m = model(m)?;
        let c = counts(counts_ptr, k)?;
        let opts = BolfiOptions { budget, ..Default::default() };
        let sim = ModelSimulator::new(m.clone());
        let fit = bolfi_minimize(&sim, &c.empirical()?, c.total(), &opts, seed)?;
        let score = sic_bolfi(&fit, m.dim(), c.total())?;
        write_theta(theta_out, theta_capacity, &fit.theta_hat)?;
        let r = JsdrFit { objective: fit.objective, score, evaluations: fit.evaluations, converged: fit.converged };
        put(out, r, "out")
    })
}

/// Score `n_models` models on the counts and return the report as a JSON
/// string in `json_out` (free with `jsdr_string_free`). `with_sic` adds SIC
/// scores. The selected model index is in the report.
///
/// # Safety
/// `models` must hold `n_models` live model pointers; `counts` must hold `k`
/// values; `json_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_score_models_json(
    models: *const *const JsdrModel,
    n_models: usize,
    counts_ptr: *const u64,
    k: usize,
    with_sic: bool,
    seed: u64,
    json_out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        if models.is_null() {
            return Err(null("models"));
        }
        let ms = slice::from_raw_parts(models, n_models)
            .iter()
            .map(|&p| model(p).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let c = counts(counts_ptr, k)?;
        let opts = ScoreOptions { with_sic, ..Default::default() };
        let report = score_models(&ms, &c, &opts, seed)?;
        put(json_out, into_c_string(report.to_json()), "json_out")
    })
}

/// Run an experiment from a TOML config string (JSON when `is_json`),
/// write selections.csv, rates.csv and report.json to `out_dir` (NULL uses
/// the config's output_dir), and return the report JSON in `json_out`
/// (may be NULL).
///
/// # Safety
/// `config` must be a NUL-terminated string; `out_dir` NULL or
/// NUL-terminated; `json_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn jsdr_run_experiment(
    config: *const c_char,
    is_json: bool,
    out_dir: *const c_char,
    jobs: usize,
    json_out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let s = text(config, "config")?;
        let cfg = if is_json { ExperimentConfig::from_json_str(s)? } else { ExperimentConfig::from_toml_str(s)? };
        let out = run_experiment(&cfg, jobs.max(1))?;
        let dir = if out_dir.is_null() { cfg.output_dir.clone() } else { Path::new(text(out_dir, "out_dir")?).to_path_buf() };
        out.write_to(&dir)?;
        if !json_out.is_null() {
            let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
            json_out.write(into_c_string(json));
        }
        Ok(())
    })
}
