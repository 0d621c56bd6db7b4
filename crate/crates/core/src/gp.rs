//! Gaussian-process regression with a squared-exponential kernel, used as
//! the surrogate for the expected discrepancy.
//!
//! Inputs are mapped to the unit cube of the parameter box and outputs are
//! standardized at each hyperparameter fit. Between fits, new observations
//! are appended to the Cholesky factor in O(t²) with the standardization
//! held fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};

use crate::optim::{latin_hypercube, ParamBox};
use crate::rng::rng_from_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpOptions {
    /// Lengthscale bounds on the unit-cube scale.
    pub lengthscale_min: f64,
    pub lengthscale_max: f64,
    /// Signal variance upper bound is `signal_var_factor · var(y) + 1e-6`.
    pub signal_var_factor: f64,
    /// Noise variance upper bound is `noise_var_factor · var(y) + 1e-8`.
    pub noise_var_factor: f64,
    pub starts: usize,
    /// Starts used when a warm start is supplied (warm, default, then LHS).
    pub warm_starts: usize,
    /// L-BFGS iterations per start of the marginal-likelihood search.
    pub max_iter: usize,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            lengthscale_min: 0.05,
            lengthscale_max: 10.0,
            signal_var_factor: 4.0,
            noise_var_factor: 1.0,
            starts: 4,
            warm_starts: 4,
            max_iter: 80,
        }
    }
}

/// Kernel hyperparameters on the standardized output scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyper {
    pub fn initial(d: usize) -> Self {
        Self { lengthscales: vec![0.3; d], signal_var: 1.0, noise_var: 0.1 }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self { lengthscales: v[..d].iter().map(|x| x.exp()).collect(), signal_var: v[d].exp(), noise_var: v[d + 1].exp() }
    }
}

/// Lower-triangular factor stored by rows; row i holds i+1 entries.
#[derive(Debug, Clone, Default)]
pub(crate) struct PackedCholesky {
    rows: Vec<Vec<f64>>,
}

impl PackedCholesky {
    /// Factor a symmetric matrix given by its lower rows.
    fn factor(a: &[Vec<f64>]) -> Option<Self> {
        let mut l = Self::default();
        for row in a {
            l.push_row(row)?;
        }
        Some(l)
    }

    /// Append the row [k(x_new, X), k(x_new, x_new)].
    fn push_row(&mut self, a: &[f64]) -> Option<()> {
        let n = self.rows.len();
        let mut v = self.forward(&a[..n]);
        let diag = a[n] - v.iter().map(|x| x * x).sum::<f64>();
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        v.push(diag.sqrt());
        self.rows.push(v);
        Some(())
    }

    /// Solve L v = b.
    pub(crate) fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate().take(b.len()) {
            let s: f64 = row[..i].iter().zip(&v).map(|(a, b)| a * b).sum();
            v.push((b[i] - s) / row[i]);
        }
        v
    }

    /// Solve Lᵀ x = v.
    fn backward(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut x = v.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, item) in x.iter_mut().enumerate().take(i) {
                *item -= self.rows[i][j] * xi;
            }
        }
        x
    }

    fn log_det_half(&self) -> f64 {
        self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum()
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

/// Fitted GP surrogate.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    bounds: ParamBox,
    /// Training inputs on the unit cube.
    inputs: Vec<Vec<f64>>,
    /// Raw outputs.
    outputs: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
    hyper: Hyper,
    jitter: f64,
    chol: PackedCholesky,
    alpha: Vec<f64>,
    /// Set when the outputs had zero spread at the last fit.
    pub degenerate: bool,
}

const JITTER_START: f64 = 1e-9;
const JITTER_ESCALATIONS: usize = 3;

fn sq_exp(a: &[f64], b: &[f64], hyper: &Hyper) -> f64 {
    let mut r = 0.0;
    for s in 0..a.len() {
        let t = (a[s] - b[s]) / hyper.lengthscales[s];
        r += t * t;
    }
    hyper.signal_var * (-0.5 * r).exp()
}

fn factor_with_jitter(inputs: &[Vec<f64>], hyper: &Hyper) -> Option<(PackedCholesky, f64)> {
    let build = |jitter: f64| -> Vec<Vec<f64>> {
        inputs
            .iter()
            .enumerate()
            .map(|(i, xi)| {
                let mut row: Vec<f64> = inputs[..i].iter().map(|xj| sq_exp(xi, xj, hyper)).collect();
                row.push(hyper.signal_var + hyper.noise_var + jitter);
                row
            })
            .collect()
    };
    if let Some(l) = PackedCholesky::factor(&build(0.0)) {
        return Some((l, 0.0));
    }
    let mut jitter = JITTER_START;
    for _ in 0..JITTER_ESCALATIONS {
        if let Some(l) = PackedCholesky::factor(&build(jitter)) {
            return Some((l, jitter));
        }
        jitter *= 100.0;
    }
    None
}

/// Log marginal likelihood and its gradient in log-hyperparameter space,
/// with the per-dimension squared distances cached.
struct LmlObjective<'a> {
    t: usize,
    sq_dists: Vec<Vec<f64>>,
    ys: &'a [f64],
}

impl<'a> LmlObjective<'a> {
    fn new(inputs: &[Vec<f64>], ys: &'a [f64]) -> Self {
        let t = inputs.len();
        let d = inputs.first().map_or(0, |x| x.len());
        let sq_dists = (0..d)
            .map(|s| {
                let mut v = Vec::with_capacity(t * t.saturating_sub(1) / 2);
                for i in 0..t {
                    for j in 0..i {
                        let r = inputs[i][s] - inputs[j][s];
                        v.push(r * r);
                    }
                }
                v
            })
            .collect();
        Self { t, sq_dists, ys }
    }

    // Signal part of the kernel matrix (diagonal = signal variance).
    fn signal_kernel(&self, h: &Hyper) -> DMatrix<f64> {
        let t = self.t;
        let inv: Vec<f64> = h.lengthscales.iter().map(|l| -0.5 / (l * l)).collect();
        let mut k = DMatrix::<f64>::zeros(t, t);
        let mut idx = 0;
        for i in 0..t {
            for j in 0..i {
                let mut r = 0.0;
                for (d, w) in self.sq_dists.iter().zip(&inv) {
                    r += d[idx] * w;
                }
                let v = h.signal_var * r.exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
                idx += 1;
            }
            k[(i, i)] = h.signal_var;
        }
        k
    }

    fn factor(&self, ks: &DMatrix<f64>, noise: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut jitter = 0.0;
        for attempt in 0..=JITTER_ESCALATIONS {
            let mut k = ks.clone();
            for i in 0..self.t {
                k[(i, i)] += noise + jitter;
            }
            if let Some(c) = k.cholesky() {
                return Some(c);
            }
            jitter = if attempt == 0 { JITTER_START } else { jitter * 100.0 };
        }
        None
    }

    fn lml(&self, c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> (f64, DVector<f64>) {
        let l = c.l_dirty();
        let mut v = DVector::from_column_slice(self.ys);
        l.solve_lower_triangular_mut(&mut v);
        let log_det_half: f64 = (0..self.t).map(|i| l[(i, i)].ln()).sum();
        let lml = -0.5 * v.norm_squared() - log_det_half - 0.5 * self.t as f64 * LN_2PI;
        (lml, c.solve(&DVector::from_column_slice(self.ys)))
    }

    #[cfg(test)]
    fn value(&self, h: &Hyper) -> Option<f64> {
        let c = self.factor(&self.signal_kernel(h), h.noise_var)?;
        Some(self.lml(&c).0)
    }

    /// LML and its gradient with respect to (ln ℓ_s, ln σ², ln noise).
    fn value_grad(&self, h: &Hyper) -> Option<(f64, Vec<f64>)> {
        let ks = self.signal_kernel(h);
        let c = self.factor(&ks, h.noise_var)?;
        let (lml, alpha) = self.lml(&c);
        let kinv = c.inverse();
        let t = self.t;
        let d = self.sq_dists.len();
        // W = ααᵀ − K⁻¹; dL/dθ = ½ Σ_ij W_ij ∂K_ij/∂θ
        let mut g = vec![0.0; d + 2];
        let mut idx = 0;
        for i in 0..t {
            for j in 0..i {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                let kij = ks[(i, j)];
                // each off-diagonal pair appears twice, cancelling the ½
                g[d] += w * kij;
                for s in 0..d {
                    let l2 = h.lengthscales[s] * h.lengthscales[s];
                    g[s] += w * kij * self.sq_dists[s][idx] / l2;
                }
                idx += 1;
            }
        }
        let mut diag_w = 0.0;
        for i in 0..t {
            diag_w += alpha[i] * alpha[i] - kinv[(i, i)];
        }
        g[d] += 0.5 * diag_w * h.signal_var;
        g[d + 1] = 0.5 * diag_w * h.noise_var;
        Some((lml, g))
    }
}

/// Negative LML over an unconstrained reparametrization of the hyper box:
/// v = lo + (hi − lo)·sigmoid(z).
struct BoxedNegLml<'a> {
    objective: &'a LmlObjective<'a>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    // last (z, −LML, ∇_z) so a cost call followed by a gradient call at the
    // same point factors K once
    last: RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
}

const FAILED_COST: f64 = 1e10;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl<'a> BoxedNegLml<'a> {
    fn new(objective: &'a LmlObjective<'a>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { objective, lo, hi, last: RefCell::new(None) }
    }

    fn eval(&self, z: &[f64]) -> (f64, Vec<f64>) {
        if let Some((zl, f, g)) = self.last.borrow().as_ref() {
            if zl.as_slice() == z {
                return (*f, g.clone());
            }
        }
        let out = match self.objective.value_grad(&Hyper::from_log(&self.to_box(z))) {
            Some((l, g)) => (
                -l,
                g.iter()
                    .zip(z)
                    .zip(self.lo.iter().zip(&self.hi))
                    .map(|((g, z), (lo, hi))| {
                        let s = sigmoid(*z);
                        -g * (hi - lo) * s * (1.0 - s)
                    })
                    .collect(),
            ),
            None => (FAILED_COST, vec![0.0; z.len()]),
        };
        *self.last.borrow_mut() = Some((z.to_vec(), out.0, out.1.clone()));
        out
    }

    fn to_box(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.lo.iter().zip(&self.hi)).map(|(z, (lo, hi))| lo + (hi - lo) * sigmoid(*z)).collect()
    }

    fn from_box(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (lo, hi))| {
                let u = ((v - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                (u / (1.0 - u)).ln()
            })
            .collect()
    }
}

impl CostFunction for BoxedNegLml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(z).0)
    }
}

impl Gradient for BoxedNegLml<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, z: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(z).1)
    }
}

// L-BFGS from one start; returns (log-hyper, −LML), never worse than the start.
fn lbfgs_from(problem: &BoxedNegLml, start: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let z0 = problem.from_box(start);
    let f0 = problem.cost(&z0).unwrap_or(FAILED_COST);
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7)
        .with_tolerance_grad(1e-5)
        .and_then(|s| s.with_tolerance_cost(1e-9))
        .expect("valid tolerance");
    let run = Executor::new(BoxedNegLml::new(problem.objective, problem.lo.clone(), problem.hi.clone()), solver)
    .configure(|state| state.param(z0.clone()).max_iters(max_iter as u64))
    .run();
    match run {
        Ok(res) => {
            let st = res.state();
            match (st.get_best_param(), st.get_best_cost()) {
                (Some(z), f) if f.is_finite() && f < f0 => (problem.to_box(z), f),
                _ => (problem.to_box(&z0), f0),
            }
        }
        Err(_) => (problem.to_box(&z0), f0),
    }
}

fn lml_from(chol: &PackedCholesky, y: &[f64]) -> (f64, Vec<f64>) {
    let v = chol.forward(y);
    let alpha = chol.backward(&v);
    let fit: f64 = v.iter().map(|x| x * x).sum();
    let lml = -0.5 * fit - chol.log_det_half() - 0.5 * y.len() as f64 * LN_2PI;
    (lml, alpha)
}

fn standardize(y: &[f64]) -> (f64, f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-12 * mean.abs().max(1e-300) && sd > 0.0 {
        (mean, sd, false)
    } else {
        (mean, 1.0, true)
    }
}

impl GpSurrogate {
    /// Fit hyperparameters by maximizing the log marginal likelihood from
    /// `opts.starts` starts. The first start is `warm` when given.
    pub fn fit(
        bounds: &ParamBox,
        x: &[Vec<f64>],
        y: &[f64],
        opts: &GpOptions,
        warm: Option<&Hyper>,
        seed: u64,
    ) -> Result<Self> {
        let d = bounds.dim();
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        if x.len() < 2 {
            return Err(Error::Config(format!("a GP needs at least 2 observations, got {}", x.len())));
        }
        if let Some(bad) = x.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension { expected: d, got: bad.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("GP outputs must be finite".into()));
        }
        let inputs: Vec<Vec<f64>> = x.iter().map(|p| bounds.to_unit(p)).collect();
        let (y_mean, y_sd, degenerate) = standardize(y);
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();
        let hyper_box = Self::hyper_box(d, opts)?;

        let hyper = if degenerate {
            let mut h = warm.cloned().unwrap_or_else(|| Hyper::initial(d));
            h.noise_var = hyper_box.lower()[d + 1].exp();
            h.signal_var = hyper_box.lower()[d].exp();
            h
        } else {
            let objective = LmlObjective::new(&inputs, &ys);
            let problem = BoxedNegLml::new(&objective, hyper_box.lower().to_vec(), hyper_box.upper().to_vec());
            let first = hyper_box.clamp(&warm.cloned().unwrap_or_else(|| Hyper::initial(d)).to_log());
            let mut starts = vec![first];
            if warm.is_some() {
                starts.push(hyper_box.clamp(&Hyper::initial(d).to_log()));
            }
            let wanted = if warm.is_some() { opts.warm_starts.max(1) } else { opts.starts };
            starts.truncate(wanted);
            if wanted > starts.len() {
                starts.extend(latin_hypercube(wanted - starts.len(), &hyper_box, &mut rng_from_seed(seed)));
            }
            let mut best: Option<(Vec<f64>, f64)> = None;
            for s in &starts {
                let (x, f) = lbfgs_from(&problem, s, opts.max_iter);
                if best.as_ref().is_none_or(|b| f < b.1) {
                    best = Some((x, f));
                }
            }
            Hyper::from_log(&best.expect("at least one start").0)
        };
        Self::with_hyper_unit(bounds.clone(), inputs, y.to_vec(), y_mean, y_sd, hyper, degenerate)
    }

    /// Condition a GP with fixed hyperparameters (standardized scale).
    pub fn with_hyper(bounds: &ParamBox, x: &[Vec<f64>], y: &[f64], hyper: Hyper) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = x.iter().map(|p| bounds.to_unit(p)).collect();
        let (y_mean, y_sd, degenerate) = standardize(y);
        Self::with_hyper_unit(bounds.clone(), inputs, y.to_vec(), y_mean, y_sd, hyper, degenerate)
    }

    fn with_hyper_unit(
        bounds: ParamBox,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        y_mean: f64,
        y_sd: f64,
        hyper: Hyper,
        degenerate: bool,
    ) -> Result<Self> {
        let (chol, jitter) = factor_with_jitter(&inputs, &hyper)
            .ok_or_else(|| Error::Domain("kernel matrix is not positive definite after jitter".into()))?;
        let ys: Vec<f64> = outputs.iter().map(|v| (v - y_mean) / y_sd).collect();
        let (_, alpha) = lml_from(&chol, &ys);
        Ok(Self { bounds, inputs, outputs, y_mean, y_sd, hyper, jitter, chol, alpha, degenerate })
    }

    fn hyper_box(d: usize, opts: &GpOptions) -> Result<ParamBox> {
        let mut lo = vec![opts.lengthscale_min.ln(); d];
        let mut hi = vec![opts.lengthscale_max.ln(); d];
        lo.push(1e-6f64.ln());
        hi.push((opts.signal_var_factor + 1e-6).ln());
        lo.push(1e-8f64.ln());
        hi.push((opts.noise_var_factor + 1e-8).ln());
        ParamBox::new(lo, hi)
    }

    /// Add one observation without refitting hyperparameters. Falls back
    /// to a full factorization with jitter if the rank-one append fails;
    /// returns true in that case.
    pub fn append(&mut self, x: &[f64], y: f64) -> Result<bool> {
        let u = self.bounds.to_unit(x);
        let mut row: Vec<f64> = self.inputs.iter().map(|xi| sq_exp(&u, xi, &self.hyper)).collect();
        row.push(self.hyper.signal_var + self.hyper.noise_var + self.jitter);
        self.inputs.push(u);
        self.outputs.push(y);
        let mut refactored = false;
        if self.chol.push_row(&row).is_none() {
            let (chol, jitter) = factor_with_jitter(&self.inputs, &self.hyper)
                .ok_or_else(|| Error::Domain("kernel matrix is not positive definite after jitter".into()))?;
            self.chol = chol;
            self.jitter = jitter;
            refactored = true;
        }
        let ys = self.standardized_outputs();
        self.alpha = lml_from(&self.chol, &ys).1;
        Ok(refactored)
    }

    fn standardized_outputs(&self) -> Vec<f64> {
        self.outputs.iter().map(|v| (v - self.y_mean) / self.y_sd).collect()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.inputs.iter().map(|u| self.bounds.from_unit(u)).collect()
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Log marginal likelihood of the standardized outputs.
    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from(&self.chol, &self.standardized_outputs()).0
    }

    /// Log marginal likelihood at other hyperparameters, same data.
    pub fn log_marginal_likelihood_at(&self, hyper: &Hyper) -> Option<f64> {
        factor_with_jitter(&self.inputs, hyper).map(|(l, _)| lml_from(&l, &self.standardized_outputs()).0)
    }

    pub(crate) fn kernel_unit(&self, a: &[f64], b: &[f64]) -> f64 {
        sq_exp(a, b, &self.hyper)
    }

    pub(crate) fn unit_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub(crate) fn cholesky(&self) -> &PackedCholesky {
        &self.chol
    }

    pub(crate) fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub(crate) fn scale(&self) -> (f64, f64) {
        (self.y_mean, self.y_sd)
    }

    /// Posterior mean and variance of the latent function at a unit-cube point.
    pub(crate) fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let k: Vec<f64> = self.inputs.iter().map(|xi| sq_exp(u, xi, &self.hyper)).collect();
        let m: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.forward(&k);
        let var = (self.hyper.signal_var - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_sd * m, var * self.y_sd * self.y_sd)
    }

    /// Posterior mean only; O(t).
    pub(crate) fn mean_unit(&self, u: &[f64]) -> f64 {
        let m: f64 = self.inputs.iter().zip(&self.alpha).map(|(xi, a)| sq_exp(u, xi, &self.hyper) * a).sum();
        self.y_mean + self.y_sd * m
    }

    /// Posterior mean and variance at θ (original scale).
    pub fn predict(&self, theta: &[f64]) -> (f64, f64) {
        self.predict_unit(&self.bounds.to_unit(theta))
    }
}

/// Convenience wrapper: fit a GP from scratch with default warm start.
pub fn gp_fit(bounds: &ParamBox, x: &[Vec<f64>], y: &[f64], opts: &GpOptions, seed: u64) -> Result<GpSurrogate> {
    GpSurrogate::fit(bounds, x, y, opts, None, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::halton_point;

    fn smooth(x: &[f64]) -> f64 {
        (3.0 * x[0]).sin() + 0.5 * (2.0 * x[1]).cos()
    }

    #[test]
    fn cholesky_append_matches_full() {
        let a = [vec![4.0], vec![2.0, 3.0], vec![0.4, 0.5, 2.0]];
        let l = PackedCholesky::factor(&a).unwrap();
        assert!((l.rows[0][0] - 2.0).abs() < 1e-15);
        let b = [1.0, 2.0, 3.0];
        let x = l.backward(&l.forward(&b));
        // A x = b
        let full = [[4.0, 2.0, 0.4], [2.0, 3.0, 0.5], [0.4, 0.5, 2.0]];
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| full[i][j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }
        assert!(PackedCholesky::factor(&[vec![1.0], vec![2.0, 1.0]]).is_none());
    }

    #[test]
    fn interpolates_noise_free_data() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..50).map(|i| b.from_unit(&halton_point(i, 2, 1))).collect();
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let gp = gp_fit(&b, &x, &y, &GpOptions::default(), 3).unwrap();
        for (p, v) in x.iter().zip(&y) {
            assert!((gp.predict(p).0 - v).abs() < 1e-4, "{} vs {v}", gp.predict(p).0);
        }
        assert!(!gp.degenerate);
    }

    #[test]
    fn degenerate_outputs() {
        let b = ParamBox::cube(1, 0.0, 1.0).unwrap();
        let gp = gp_fit(&b, &[vec![0.2], vec![0.7]], &[0.3, 0.3], &GpOptions::default(), 1).unwrap();
        assert!(gp.degenerate);
        for i in 0..=20 {
            assert!((gp.predict(&[i as f64 / 20.0]).0 - 0.3).abs() < 1e-6);
        }
        assert!(gp_fit(&b, &[vec![0.2]], &[0.3], &GpOptions::default(), 1).is_err());
    }

    #[test]
    fn variance_smaller_near_data() {
        let b = ParamBox::cube(2, -3.0, 3.0).unwrap();
        let x = vec![vec![0.0, 0.0], vec![0.5, -0.2], vec![-0.4, 0.3]];
        let y = vec![0.1, 0.2, 0.15];
        let gp = gp_fit(&b, &x, &y, &GpOptions::default(), 2).unwrap();
        let near = gp.predict(&x[0]).1;
        let far = gp.predict(&[3.0, 3.0]).1;
        assert!(near <= far);
    }

    #[test]
    fn fitting_improves_marginal_likelihood() {
        let b = ParamBox::cube(1, 0.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![halton_point(i, 1, 5)[0]]).collect();
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin() + 0.05 * ((p[0] * 97.0).sin())).collect();
        let gp = gp_fit(&b, &x, &y, &GpOptions::default(), 2).unwrap();
        let initial = gp.log_marginal_likelihood_at(&Hyper::initial(1)).unwrap();
        assert!(gp.log_marginal_likelihood() >= initial);
        let h = gp.hyper();
        assert!(h.lengthscales[0] >= 0.01 - 1e-12 && h.lengthscales[0] <= 10.0 + 1e-12);
    }

    #[test]
    fn dense_objective_matches_packed_factor() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..30).map(|i| b.from_unit(&crate::optim::halton_point(i, 2, 4))).collect();
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let gp = gp_fit(&b, &x, &y, &GpOptions::default(), 3).unwrap();
        let ys = gp.standardized_outputs();
        let obj = LmlObjective::new(gp.unit_inputs(), &ys);
        for h in [gp.hyper().clone(), Hyper::initial(2)] {
            let a = obj.value(&h).unwrap();
            let b = gp.log_marginal_likelihood_at(&h).unwrap();
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..25).map(|i| b.from_unit(&halton_point(i, 2, 5))).collect();
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let x_unit: Vec<Vec<f64>> = x.iter().map(|p| b.to_unit(p)).collect();
        let obj = LmlObjective::new(&x_unit, &y);
        let h = Hyper { lengthscales: vec![0.3, 0.7], signal_var: 0.8, noise_var: 1e-2 };
        let (f, g) = obj.value_grad(&h).unwrap();
        assert!((f - obj.value(&h).unwrap()).abs() < 1e-10);
        let v = h.to_log();
        for j in 0..v.len() {
            let step = 1e-5;
            let mut up = v.clone();
            up[j] += step;
            let mut dn = v.clone();
            dn[j] -= step;
            let fd = (obj.value(&Hyper::from_log(&up)).unwrap() - obj.value(&Hyper::from_log(&dn)).unwrap()) / (2.0 * step);
            assert!((fd - g[j]).abs() < 1e-5 * fd.abs().max(1.0), "{j}: {fd} {}", g[j]);
        }
    }

    #[test]
    fn append_equals_refactor() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..12).map(|i| b.from_unit(&halton_point(i, 2, 9))).collect();
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let h = Hyper { lengthscales: vec![0.4, 0.6], signal_var: 1.2, noise_var: 1e-3 };
        let mut inc = GpSurrogate::with_hyper(&b, &x[..8], &y[..8], h.clone()).unwrap();
        let (m, s) = inc.scale();
        for i in 8..12 {
            inc.append(&x[i], y[i]).unwrap();
        }
        let mut full = GpSurrogate::with_hyper(&b, &x, &y, h).unwrap();
        // same standardization for a like-for-like comparison
        full.y_mean = m;
        full.y_sd = s;
        full.alpha = lml_from(&full.chol, &full.standardized_outputs()).1;
        for p in [[0.1, 0.2], [-0.7, 0.9]] {
            let (a, va) = inc.predict(&p);
            let (c, vc) = full.predict(&p);
            assert!((a - c).abs() < 1e-10 && (va - vc).abs() < 1e-10);
        }
    }
}
