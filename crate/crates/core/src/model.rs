//! Parametric categorical models θ ↦ p(θ) and their differential calculus:
//! Jacobian, Fisher information, and the gradient and Hessian of
//! θ ↦ D_JS(p̂, p(θ)).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::categorical::Categorical;
use crate::divergence::phi_prime_ratio;
use crate::error::{check_dims, Error, Result};
use crate::optim::ParamBox;

/// Probabilities below this are treated as underflow when inverted.
pub const PROB_FLOOR: f64 = 1e-300;

/// A smooth map from parameters to the interior of the simplex.
pub trait ProbabilityMap: Send + Sync {
    fn k(&self) -> usize;
    fn dim(&self) -> usize;
    /// Write p(θ) into `out` (length k).
    fn probs_into(&self, theta: &[f64], out: &mut [f64]);
    /// Analytic k×d Jacobian, if available.
    fn jacobian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    /// Analytic second derivatives: one d×d matrix per category.
    fn second_derivatives(&self, _theta: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

/// p(θ) = softmax(Bθ) for a fixed k×d design matrix B.
#[derive(Debug, Clone)]
pub struct SoftmaxLinear {
    design: DMatrix<f64>,
}

impl SoftmaxLinear {
    pub fn new(design: DMatrix<f64>) -> Result<Self> {
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("design matrix has non-finite entries".into()));
        }
        Ok(Self { design })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    // Centered design rows B_i - E_p[B].
    fn centered(&self, p: &[f64]) -> DMatrix<f64> {
        let (k, d) = self.design.shape();
        let mean: Vec<f64> = (0..d).map(|s| (0..k).map(|i| p[i] * self.design[(i, s)]).sum::<f64>()).collect();
        DMatrix::from_fn(k, d, |i, s| self.design[(i, s)] - mean[s])
    }

    fn probs_vec(&self, theta: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.k()];
        self.probs_into(theta, &mut p);
        p
    }
}

impl ProbabilityMap for SoftmaxLinear {
    fn k(&self) -> usize {
        self.design.nrows()
    }

    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn probs_into(&self, theta: &[f64], out: &mut [f64]) {
        let (k, d) = self.design.shape();
        let mut max = f64::NEG_INFINITY;
        for i in 0..k {
            let mut eta = 0.0;
            for s in 0..d {
                eta += self.design[(i, s)] * theta[s];
            }
            out[i] = eta;
            max = max.max(eta);
        }
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    fn jacobian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let p = self.probs_vec(theta);
        let c = self.centered(&p);
        Some(DMatrix::from_fn(c.nrows(), c.ncols(), |i, s| p[i] * c[(i, s)]))
    }

    fn second_derivatives(&self, theta: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let p = self.probs_vec(theta);
        let c = self.centered(&p);
        let (k, d) = c.shape();
        let cov = DMatrix::from_fn(d, d, |s, t| (0..k).map(|i| p[i] * c[(i, s)] * c[(i, t)]).sum::<f64>());
        Some((0..k).map(|i| DMatrix::from_fn(d, d, |s, t| p[i] * (c[(i, s)] * c[(i, t)] - cov[(s, t)]))).collect())
    }
}

type ProbsFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// A model given by a user closure; derivatives fall back to finite differences.
pub struct ClosureMap {
    k: usize,
    d: usize,
    probs: Box<ProbsFn>,
    jacobian: Option<Box<JacFn>>,
}

impl ProbabilityMap for ClosureMap {
    fn k(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn probs_into(&self, theta: &[f64], out: &mut [f64]) {
        (self.probs)(theta, out)
    }
    fn jacobian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(theta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoglinearVariant {
    TwoParam,
    Saturated,
}

impl LoglinearVariant {
    pub fn dim(self) -> usize {
        match self {
            LoglinearVariant::TwoParam => 2,
            LoglinearVariant::Saturated => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    Multilogit { active_dims: usize },
    Loglinear { variant: LoglinearVariant },
    Custom,
}

/// A candidate model: name, compact parameter box and probability map.
#[derive(Clone)]
pub struct ParametricModel {
    name: String,
    bounds: ParamBox,
    family: Family,
    map: Arc<dyn ProbabilityMap>,
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("name", &self.name)
            .field("k", &self.k())
            .field("d", &self.dim())
            .field("bounds", &self.bounds)
            .field("family", &self.family)
            .finish()
    }
}

impl ParametricModel {
    /// Wrap an arbitrary map. The map must agree with `bounds` on d, have
    /// d < k, and give interior probabilities at the box center and corners.
    pub fn new(name: impl Into<String>, bounds: ParamBox, family: Family, map: Arc<dyn ProbabilityMap>) -> Result<Self> {
        check_dims(map.dim(), bounds.dim())?;
        if map.k() < 2 {
            return Err(Error::Config(format!("a model needs k >= 2 categories, got {}", map.k())));
        }
        if map.dim() >= map.k() {
            return Err(Error::Config(format!("model dimension {} must be below k = {}", map.dim(), map.k())));
        }
        let m = Self { name: name.into(), bounds, family, map };
        let mut probe = vec![m.bounds.center()];
        if m.dim() <= 10 {
            probe.extend(m.bounds.corners());
        }
        let mut buf = vec![0.0; m.k()];
        for theta in probe {
            m.map.probs_into(&theta, &mut buf);
            let sum: f64 = buf.iter().sum();
            if let Some(i) = buf.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("p_{i}({theta:?}) = {} is not strictly positive", buf[i])));
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("p({theta:?}) sums to {sum}")));
            }
        }
        Ok(m)
    }

    /// Build from a closure writing p(θ) into a length-k buffer.
    pub fn from_fn<F>(name: impl Into<String>, k: usize, bounds: ParamBox, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let d = bounds.dim();
        let map = ClosureMap { k, d, probs: Box::new(f), jacobian: None };
        Self::new(name, bounds, Family::Custom, Arc::new(map))
    }

    /// As [`from_fn`](Self::from_fn) with an analytic k×d Jacobian.
    pub fn from_fn_with_jacobian<F, J>(name: impl Into<String>, k: usize, bounds: ParamBox, f: F, jac: J) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let d = bounds.dim();
        let map = ClosureMap { k, d, probs: Box::new(f), jacobian: Some(Box::new(jac)) };
        Self::new(name, bounds, Family::Custom, Arc::new(map))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn k(&self) -> usize {
        self.map.k()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn map(&self) -> &Arc<dyn ProbabilityMap> {
        &self.map
    }

    pub(crate) fn probs_into(&self, theta: &[f64], out: &mut [f64]) {
        self.map.probs_into(theta, out)
    }

    pub(crate) fn probs_vec(&self, theta: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.k()];
        self.map.probs_into(theta, &mut p);
        p
    }

    /// p(θ) as a categorical distribution. θ may lie anywhere the map is
    /// defined; no box check is made.
    pub fn probs(&self, theta: &[f64]) -> Result<Categorical> {
        check_dims(self.dim(), theta.len())?;
        Categorical::new(self.probs_vec(theta))
    }

    fn require_interior(&self, theta: &[f64]) -> Result<()> {
        check_dims(self.dim(), theta.len())?;
        if !self.bounds.contains_strictly(theta) {
            return Err(Error::Domain(format!("theta {theta:?} is not strictly inside the parameter box")));
        }
        Ok(())
    }
}

/// Multinomial-logit family: p_i(θ) ∝ exp(⟨α_i, θ⟩) with α_k = 0.
/// `predictors` holds the k−1 non-base rows; only the first `active_dims`
/// columns are used, which fixes the trailing parameters at zero.
pub fn multilogit_model(
    name: impl Into<String>,
    predictors: &DMatrix<f64>,
    active_dims: usize,
    bounds: ParamBox,
) -> Result<ParametricModel> {
    if predictors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("predictors must be finite".into()));
    }
    if active_dims > predictors.ncols() {
        return Err(Error::Config(format!(
            "active_dims {active_dims} exceeds predictor dimension {}",
            predictors.ncols()
        )));
    }
    let k = predictors.nrows() + 1;
    let design = DMatrix::from_fn(k, active_dims, |i, s| if i + 1 < k { predictors[(i, s)] } else { 0.0 });
    let map = SoftmaxLinear::new(design)?;
    ParametricModel::new(name, bounds, Family::Multilogit { active_dims }, Arc::new(map))
}

/// Predictors of the three-category example: α₁ = (1,0), α₂ = (0,1).
pub fn example_predictors() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])
}

/// The nested three-category family with `active_dims` ∈ {0,1,2} free
/// parameters on [-3, 3].
pub fn example_model(active_dims: usize) -> Result<ParametricModel> {
    let bounds = ParamBox::cube(active_dims, -3.0, 3.0)?;
    multilogit_model(format!("M{active_dims}"), &example_predictors(), active_dims, bounds)
}

/// Effect-coded X, Y levels for the four cells of a 2×2 table.
pub const EFFECT_X: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
pub const EFFECT_Y: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// Log-linear model for a 2×2 table with effect coding;
/// θ = (λ^X, λ^Y) or (λ^X, λ^Y, λ^XY).
pub fn loglinear_model(variant: LoglinearVariant, bounds: ParamBox) -> Result<ParametricModel> {
    let d = variant.dim();
    let design = DMatrix::from_fn(4, d, |i, s| match s {
        0 => EFFECT_X[i],
        1 => EFFECT_Y[i],
        _ => EFFECT_X[i] * EFFECT_Y[i],
    });
    let name = match variant {
        LoglinearVariant::TwoParam => "two_param",
        LoglinearVariant::Saturated => "saturated",
    };
    ParametricModel::new(name, bounds, Family::Loglinear { variant }, Arc::new(SoftmaxLinear::new(design)?))
}

/// The log-linear model on its default box [-2, 2]^d.
pub fn loglinear_default(variant: LoglinearVariant) -> Result<ParametricModel> {
    loglinear_model(variant, ParamBox::cube(variant.dim(), -2.0, 2.0)?)
}

fn fd_step(x: f64, rel: f64) -> f64 {
    rel.max(rel * x.abs())
}

fn fd_jacobian(m: &ParametricModel, theta: &[f64], rel: f64) -> DMatrix<f64> {
    let (k, d) = (m.k(), m.dim());
    let mut jac = DMatrix::zeros(k, d);
    let mut x = theta.to_vec();
    let (mut plus, mut minus) = (vec![0.0; k], vec![0.0; k]);
    for s in 0..d {
        let h = fd_step(theta[s], rel);
        x[s] = theta[s] + h;
        m.probs_into(&x, &mut plus);
        x[s] = theta[s] - h;
        m.probs_into(&x, &mut minus);
        x[s] = theta[s];
        for i in 0..k {
            jac[(i, s)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

fn jacobian_unchecked(m: &ParametricModel, theta: &[f64]) -> DMatrix<f64> {
    m.map.jacobian(theta).unwrap_or_else(|| fd_jacobian(m, theta, 1e-6))
}

fn second_derivatives_unchecked(m: &ParametricModel, theta: &[f64]) -> Vec<DMatrix<f64>> {
    if let Some(h) = m.map.second_derivatives(theta) {
        return h;
    }
    let (k, d) = (m.k(), m.dim());
    let mut out = vec![DMatrix::zeros(d, d); k];
    let mut x = theta.to_vec();
    let analytic = m.map.jacobian(theta).is_some();
    let rel = if analytic { 1e-6 } else { 1e-4 };
    let jac_at = |x: &[f64]| m.map.jacobian(x).unwrap_or_else(|| fd_jacobian(m, x, 1e-4));
    for t in 0..d {
        let h = fd_step(theta[t], rel);
        x[t] = theta[t] + h;
        let jp = jac_at(&x);
        x[t] = theta[t] - h;
        let jm = jac_at(&x);
        x[t] = theta[t];
        for (i, hess) in out.iter_mut().enumerate() {
            for s in 0..d {
                hess[(s, t)] = (jp[(i, s)] - jm[(i, s)]) / (2.0 * h);
            }
        }
    }
    for hess in &mut out {
        let sym = (&*hess + hess.transpose()) * 0.5;
        *hess = sym;
    }
    out
}

/// k×d matrix whose row j is ∂p_j/∂θ. Analytic when the map provides it,
/// otherwise central differences with step max(1e-6, 1e-6|θ_s|).
pub fn jacobian(m: &ParametricModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    m.require_interior(theta)?;
    Ok(jacobian_unchecked(m, theta))
}

/// I(θ) = Σ_s p_s′ᵀ p_s′ / p_s(θ) = AᵀA with A = diag(p^{-1/2}) J.
pub fn fisher_info(m: &ParametricModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    m.require_interior(theta)?;
    let p = m.probs_vec(theta);
    if let Some(i) = p.iter().position(|&v| v <= PROB_FLOOR) {
        return Err(Error::NumericalUnderflow { index: i, value: p[i] });
    }
    let jac = jacobian_unchecked(m, theta);
    let a = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, s| jac[(i, s)] / p[i].sqrt());
    Ok(symmetrize(a.transpose() * a))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn require_interior_data(p_hat: &Categorical, m: &ParametricModel) -> Result<()> {
    check_dims(m.k(), p_hat.k())?;
    if let Some(i) = p_hat.probs().iter().position(|&v| v <= 0.0) {
        return Err(Error::Boundary(i));
    }
    Ok(())
}

/// ∇_θ D_JS(p̂, p(θ)) = Σ_i ½ ln(2p_i / (p̂_i + p_i)) ∇p_i.
pub fn jsd_gradient(p_hat: &Categorical, m: &ParametricModel, theta: &[f64]) -> Result<DVector<f64>> {
    require_interior_data(p_hat, m)?;
    m.require_interior(theta)?;
    let p = m.probs_vec(theta);
    let jac = jacobian_unchecked(m, theta);
    let w = DVector::from_iterator(p.len(), p_hat.probs().iter().zip(&p).map(|(&a, &b)| phi_prime_ratio(a, b)));
    Ok(jac.transpose() * w)
}

/// Hessian of θ ↦ D_JS(p̂, p(θ)):
/// Σ_i φ′_i ∇²p_i + ½ I(θ) − ½ A(p̂,θ)ᵀA(p̂,θ), where A(p̂,θ) scales row i
/// of the Jacobian by (p̂_i + p_i)^{-1/2}.
pub fn jsd_hessian(p_hat: &Categorical, m: &ParametricModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    require_interior_data(p_hat, m)?;
    let info = fisher_info(m, theta)?;
    let p = m.probs_vec(theta);
    let jac = jacobian_unchecked(m, theta);
    let d = m.dim();
    let mut h = info * 0.5;
    let a = DMatrix::from_fn(jac.nrows(), d, |i, s| jac[(i, s)] / (p_hat.probs()[i] + p[i]).sqrt());
    h -= a.transpose() * a * 0.5;
    let weights: Vec<f64> = p_hat.probs().iter().zip(&p).map(|(&a, &b)| phi_prime_ratio(a, b)).collect();
    if weights.iter().any(|w| *w != 0.0) {
        for (w, second) in weights.iter().zip(second_derivatives_unchecked(m, theta)) {
            h += second * *w;
        }
    }
    Ok(symmetrize(h))
}

/// Determinant with the empty-matrix convention det = 1.
pub fn det(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        1.0
    } else {
        m.determinant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::jsd_slices;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn example_family_values() {
        let m2 = example_model(2).unwrap();
        for v in m2.probs(&[0.0, 0.0]).unwrap().probs() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        let m1 = example_model(1).unwrap();
        let p = m1.probs(&[0.7]).unwrap();
        let e = 0.7f64.exp();
        assert!(close(p.probs()[0], e / (e + 2.0), 1e-15));
        assert!(close(p.probs()[0], 0.50172, 1e-5));
        assert!(close(p.probs()[1], 0.24914, 1e-5));
        let m0 = example_model(0).unwrap();
        assert_eq!(m0.dim(), 0);
        for v in m0.probs(&[]).unwrap().probs() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn nesting_is_exact() {
        let pred = DMatrix::from_row_slice(3, 3, &[0.3, -1.0, 2.0, 1.5, 0.2, -0.7, -0.4, 0.9, 0.1]);
        let b = |d| ParamBox::cube(d, -3.0, 3.0).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            for l1 in 0..3 {
                for l2 in l1 + 1..=3 {
                    let a = multilogit_model("a", &pred, l1, b(l1)).unwrap();
                    let c = multilogit_model("c", &pred, l2, b(l2)).unwrap();
                    let mut padded = t[..l1].to_vec();
                    padded.resize(l2, 0.0);
                    assert_eq!(a.probs_vec(&t[..l1]), c.probs_vec(&padded));
                }
            }
        }
    }

    #[test]
    fn loglinear_values() {
        let m = loglinear_default(LoglinearVariant::TwoParam).unwrap();
        let p = m.probs_vec(&[1.0, 0.0]);
        let e = 1f64.exp();
        let z = 2.0 * e + 2.0 / e;
        assert!(close(p[0], e / z, 1e-15) && close(p[1], e / z, 1e-15));
        assert!(close(p[2], 1.0 / e / z, 1e-15) && close(p[3], 1.0 / e / z, 1e-15));
        let s = loglinear_default(LoglinearVariant::Saturated).unwrap();
        assert_eq!(s.probs_vec(&[0.0, 0.0, 0.0]), vec![0.25; 4]);
        let q = s.probs_vec(&[0.0, 0.0, 0.5]);
        let h = 0.5f64.exp();
        assert!(close(q[0], h / (2.0 * h + 2.0 / h), 1e-15));
        assert_eq!(q[0], q[3]);
    }

    #[test]
    fn rejects_bad_models() {
        let pred = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(multilogit_model("x", &pred, 1, ParamBox::cube(1, -1.0, 1.0).unwrap()).is_err());
        // d must be below k
        let pred = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(multilogit_model("x", &pred, 2, ParamBox::cube(2, -1.0, 1.0).unwrap()).is_err());
        assert!(example_model(3).is_err());
    }

    #[test]
    fn jacobian_columns_sum_to_zero_and_match_fd() {
        let m = example_model(2).unwrap();
        let mut rng = rng_from_seed(11);
        for _ in 0..100 {
            let t = [rng.random_range(-2.9..2.9), rng.random_range(-2.9..2.9)];
            let j = jacobian(&m, &t).unwrap();
            let fd = fd_jacobian(&m, &t, 1e-6);
            assert!((&j - &fd).amax() < 1e-6);
            for s in 0..2 {
                assert!(j.column(s).sum().abs() < 1e-15);
            }
        }
        assert!(jacobian(&m, &[3.0, 0.0]).is_err());
        let j0 = jacobian(&example_model(0).unwrap(), &[]).unwrap();
        assert_eq!(j0.shape(), (3, 0));
    }

    fn fisher_b1_i(t: &[f64]) -> [f64; 3] {
        let (e1, e2) = (t[0].exp(), t[1].exp());
        let z = 1.0 + e1 + e2;
        let c = z.powi(-3);
        let i11 = c * e1 * (e1 + (1.0 + e2).powi(2) + e1 * e2);
        let i12 = -c * e1 * e2 * (1.0 + e1 + e2);
        let i22 = c * e2 * (e2 + (1.0 + e1).powi(2) + e1 * e2);
        [i11, i12, i22]
    }

    #[test]
    fn fisher_closed_forms() {
        let m1 = example_model(1).unwrap();
        assert!(close(fisher_info(&m1, &[0.0]).unwrap()[(0, 0)], 2.0 / 9.0, 1e-12));
        let m2 = example_model(2).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let t = [rng.random_range(-2.9..2.9), rng.random_range(-2.9..2.9)];
            let i = fisher_info(&m2, &t).unwrap();
            let [a, b, c] = fisher_b1_i(&t);
            assert!(close(i[(0, 0)], a, 1e-8) && close(i[(0, 1)], b, 1e-8) && close(i[(1, 1)], c, 1e-8));
            let x = rng.random_range(-2.9..2.9);
            let ex = f64::exp(x);
            assert!(close(fisher_info(&m1, &[x]).unwrap()[(0, 0)], 2.0 * ex / (2.0 + ex).powi(2), 1e-12));
        }
        let i0 = fisher_info(&example_model(0).unwrap(), &[]).unwrap();
        assert_eq!(i0.shape(), (0, 0));
        assert_eq!(det(&i0), 1.0);
    }

    #[test]
    fn fisher_relabeling_invariant() {
        let pred = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 1.5, 0.2, -0.4, 0.9]);
        let perm = DMatrix::from_row_slice(3, 2, &[-0.4, 0.9, 0.5, -1.0, 1.5, 0.2]);
        let b = ParamBox::cube(2, -3.0, 3.0).unwrap();
        let a = multilogit_model("a", &pred, 2, b.clone()).unwrap();
        let c = multilogit_model("c", &perm, 2, b).unwrap();
        let t = [0.3, -0.8];
        let diff = fisher_info(&a, &t).unwrap() - fisher_info(&c, &t).unwrap();
        assert!(diff.amax() < 1e-14);
    }

    fn fd_jsd_gradient(p_hat: &[f64], m: &ParametricModel, t: &[f64]) -> Vec<f64> {
        let f = |x: &[f64]| jsd_slices(p_hat, &m.probs_vec(x));
        (0..t.len())
            .map(|s| {
                let h = 1e-6;
                let (mut a, mut b) = (t.to_vec(), t.to_vec());
                a[s] += h;
                b[s] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn random_interior(rng: &mut crate::rng::Rng, k: usize) -> Categorical {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        Categorical::from_weights(w).unwrap()
    }

    #[test]
    fn gradient_matches_fd_and_vanishes_on_model() {
        let m = example_model(2).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let p_hat = random_interior(&mut rng, 3);
            let t = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
            let g = jsd_gradient(&p_hat, &m, &t).unwrap();
            let fd = fd_jsd_gradient(p_hat.probs(), &m, &t);
            for s in 0..2 {
                assert!(close(g[s], fd[s], 1e-6), "{g} vs {fd:?}");
            }
            let on = m.probs(&t).unwrap();
            assert!(jsd_gradient(&on, &m, &t).unwrap().amax() < 1e-16);
        }
        let boundary = Categorical::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(jsd_gradient(&boundary, &m, &[0.0, 0.0]), Err(Error::Boundary(2)));
        let m0 = example_model(0).unwrap();
        assert_eq!(jsd_gradient(&Categorical::uniform(3), &m0, &[]).unwrap().len(), 0);
    }

    #[test]
    fn hessian_matches_fd_and_quarter_fisher() {
        let m = loglinear_default(LoglinearVariant::Saturated).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let p_hat = random_interior(&mut rng, 4);
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let h = jsd_hessian(&p_hat, &m, &t).unwrap();
            for s in 0..3 {
                let mut a = t.clone();
                let mut b = t.clone();
                let step = 1e-5;
                a[s] += step;
                b[s] -= step;
                let ga = jsd_gradient(&p_hat, &m, &a).unwrap();
                let gb = jsd_gradient(&p_hat, &m, &b).unwrap();
                for r in 0..3 {
                    assert!(close(h[(r, s)], (ga[r] - gb[r]) / (2.0 * step), 1e-5));
                }
            }
            let on = m.probs(&t).unwrap();
            let diff = jsd_hessian(&on, &m, &t).unwrap() - fisher_info(&m, &t).unwrap() * 0.25;
            assert!(diff.amax() < 1e-12);
        }
    }

    #[test]
    fn custom_model_uses_finite_differences() {
        let b = ParamBox::cube(1, -2.0, 2.0).unwrap();
        let custom = ParametricModel::from_fn("c", 3, b, |t, out| {
            let e = t[0].exp();
            out[0] = e / (e + 2.0);
            out[1] = 1.0 / (e + 2.0);
            out[2] = 1.0 / (e + 2.0);
        })
        .unwrap();
        let builtin = example_model(1).unwrap();
        for &x in &[-1.5, 0.0, 0.4, 1.9] {
            let a = fisher_info(&custom, &[x]).unwrap()[(0, 0)];
            let b = fisher_info(&builtin, &[x]).unwrap()[(0, 0)];
            assert!(close(a, b, 1e-8));
            let p_hat = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
            let ha = jsd_hessian(&p_hat, &custom, &[x]).unwrap()[(0, 0)];
            let hb = jsd_hessian(&p_hat, &builtin, &[x]).unwrap()[(0, 0)];
            assert!(close(ha, hb, 1e-6), "{ha} {hb}");
        }
    }

    #[test]
    fn custom_model_boundary_probability_rejected() {
        let b = ParamBox::cube(1, -1.0, 1.0).unwrap();
        let r = ParametricModel::from_fn("bad", 2, b, |t, out| {
            out[0] = t[0].max(0.0);
            out[1] = 1.0 - out[0];
        });
        assert!(r.is_err());
    }

    #[test]
    fn strong_identifiability_grid() {
        for m in [example_model(1).unwrap(), example_model(2).unwrap(), loglinear_default(LoglinearVariant::Saturated).unwrap()] {
            let d = m.dim();
            let steps = if d == 3 { 9 } else { 21 };
            let mut pts = vec![];
            let mut idx = vec![0usize; d];
            loop {
                let t: Vec<f64> = (0..d)
                    .map(|s| m.bounds().lower()[s] + m.bounds().width(s) * idx[s] as f64 / (steps - 1) as f64)
                    .collect();
                pts.push((t.clone(), m.probs_vec(&t)));
                let mut s = 0;
                while s < d {
                    idx[s] += 1;
                    if idx[s] < steps {
                        break;
                    }
                    idx[s] = 0;
                    s += 1;
                }
                if s == d {
                    break;
                }
            }
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    let dp: f64 = pts[a].1.iter().zip(&pts[b].1).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    assert!(dp > 1e-9);
                }
            }
        }
    }
}
