//! Model scores: SIC, SIC-JSD with coarse and refined penalties, the
//! Laplace-approximated JSD razor, and the selection rule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::categorical::{entropy, CountVector};
use crate::divergence::{jsd_slices, kl_slices};
use crate::error::{check_dims, Error, Result};
use crate::estimate::{min_jsd_fit, mle_fit, FitOptions, FitResult};
use crate::model::{det, fisher_info, jsd_hessian, ParametricModel};
use crate::quadrature::integrate;

/// Largest n_o rejected by the JSD criteria (they need n_o > 8π).
pub const MIN_SAMPLE_EXCLUSIVE: u64 = 25;
/// Largest dimension for which V(Θ) is computed by tensor quadrature.
pub const MAX_QUADRATURE_DIM: usize = 3;
/// Scores closer than this are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn check_sample(n_o: u64) -> Result<()> {
    if n_o <= MIN_SAMPLE_EXCLUSIVE {
        return Err(Error::SampleTooSmall(n_o));
    }
    Ok(())
}

/// d ln √(n_o / 8π).
pub fn jsd_penalty(d: usize, n_o: u64) -> f64 {
    d as f64 * 0.5 * (n_o as f64 / (8.0 * PI)).ln()
}

/// 2 n_o D_JS(p̂, p(θ̂)) + d ln √(n_o / 8π).
pub fn sic_jsd(m: &ParametricModel, c: &CountVector, fit: &FitResult) -> Result<f64> {
    check_dims(m.k(), c.k())?;
    check_dims(m.dim(), fit.theta_hat.len())?;
    check_sample(c.total())?;
    let p_hat = c.empirical()?;
    let j = jsd_slices(p_hat.probs(), &m.probs_vec(&fit.theta_hat));
    Ok(2.0 * c.total() as f64 * j + jsd_penalty(m.dim(), c.total()))
}

/// −ln P_θ̂(D) + (d/2) ln n_o, with −ln P_θ̂(D) = n_o H(p̂) + n_o D_KL(p̂, p(θ̂)).
pub fn sic(m: &ParametricModel, c: &CountVector, mle: &FitResult) -> Result<f64> {
    check_dims(m.k(), c.k())?;
    check_dims(m.dim(), mle.theta_hat.len())?;
    if c.total() < 2 {
        return Err(Error::SampleTooSmall(c.total()));
    }
    let p_hat = c.empirical()?;
    let n = c.total() as f64;
    let nll = n * entropy(p_hat.probs()) + n * kl_slices(p_hat.probs(), &m.probs_vec(&mle.theta_hat));
    Ok(nll + 0.5 * m.dim() as f64 * n.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSettings {
    pub nodes: usize,
    /// Coarser rule used for the convergence check.
    pub check_nodes: usize,
    /// Relative disagreement between the two rules that raises a warning.
    pub tolerance: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { nodes: 64, check_nodes: 32, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    /// V(Θ) = ∫_Θ √det I(θ) dθ.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Riemannian volume of the box under the Fisher metric; 1 when d = 0.
pub fn volume(m: &ParametricModel, q: &QuadratureSettings) -> Result<Volume> {
    let d = m.dim();
    if d == 0 {
        return Ok(Volume { value: 1.0, warning: None });
    }
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::UnsupportedDimension { dim: d, max: MAX_QUADRATURE_DIM });
    }
    let mut failure = None;
    let mut integrand = |t: &[f64]| match fisher_info(m, t) {
        Ok(i) => det(&i).max(0.0).sqrt(),
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let fine = integrate(m.bounds(), q.nodes, &mut integrand);
    let coarse = integrate(m.bounds(), q.check_nodes, &mut integrand);
    if let Some(e) = failure {
        return Err(e);
    }
    let rel = (fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE);
    let warning = (rel > q.tolerance).then(|| {
        format!("quadrature not converged: {} vs {} nodes differ by {rel:.3e} (relative)", q.nodes, q.check_nodes)
    });
    Ok(Volume { value: fine, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// ln(V(Θ)/V_c(Θ)) with det H ≈ det I / 4^d:
/// (d/2) ln(n_o/2π) + ln V(Θ) − d ln 2 = d ln √(n_o/8π) + ln V(Θ).
pub fn refined_penalty(m: &ParametricModel, c: &CountVector, q: &QuadratureSettings) -> Result<Penalty> {
    check_dims(m.k(), c.k())?;
    let v = volume(m, q)?;
    Ok(refined_penalty_from_volume(m.dim(), c.total(), &v))
}

pub fn refined_penalty_from_volume(d: usize, n_o: u64, v: &Volume) -> Penalty {
    let df = d as f64;
    let value = 0.5 * df * (n_o as f64 / (2.0 * PI)).ln() + v.value.ln() - df * std::f64::consts::LN_2;
    Penalty { value, warning: v.warning.clone() }
}

/// SIC-JSD with the refined penalty in place of the coarse one.
pub fn sic_jsd_refined(m: &ParametricModel, c: &CountVector, fit: &FitResult, v: &Volume) -> Result<f64> {
    let coarse = sic_jsd(m, c, fit)?;
    Ok(coarse - jsd_penalty(m.dim(), c.total()) + refined_penalty_from_volume(m.dim(), c.total(), v).value)
}

/// −ln R ≈ 2 n_o D_JS(p̂, p(θ̂)) + (d/2) ln(n_o/2π) + ln V(Θ)
///        + ½ ln(det H_Φ(p̂, θ̂) / det I(θ̂)),
/// with the exact Hessian of the JSD at the fit.
pub fn razor_laplace(m: &ParametricModel, c: &CountVector, fit: &FitResult, q: &QuadratureSettings) -> Result<f64> {
    check_dims(m.k(), c.k())?;
    check_dims(m.dim(), fit.theta_hat.len())?;
    let p_hat = c.empirical()?;
    let n = c.total() as f64;
    let j = jsd_slices(p_hat.probs(), &m.probs_vec(&fit.theta_hat));
    let d = m.dim();
    if d == 0 {
        return Ok(2.0 * n * j);
    }
    let h = jsd_hessian(&p_hat, m, &fit.theta_hat)?;
    if h.clone().cholesky().is_none() {
        return Err(Error::HessianNotPd);
    }
    let info = fisher_info(m, &fit.theta_hat)?;
    let v = volume(m, q)?;
    Ok(2.0 * n * j + 0.5 * d as f64 * (n / (2.0 * PI)).ln() + v.value.ln() + 0.5 * (det(&h) / det(&info)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    SicJsd,
    Sic,
    Refined,
    Laplace,
    SicBolfi,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::SicJsd => "sic_jsd",
            Criterion::Sic => "sic",
            Criterion::Refined => "refined",
            Criterion::Laplace => "laplace",
            Criterion::SicBolfi => "sic_bolfi",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sic_jsd" => Criterion::SicJsd,
            "sic" => Criterion::Sic,
            "refined" => Criterion::Refined,
            "laplace" => Criterion::Laplace,
            "sic_bolfi" => Criterion::SicBolfi,
            other => return Err(Error::Config(format!("unknown criterion '{other}'"))),
        })
    }
}

/// Index of the smallest score; ties within [`TIE_TOLERANCE`] go to the
/// smaller dimension, then the smaller index.
pub fn argmin_with_tiebreak(scores: &[f64], dims: &[usize]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Config("no candidate models".into()));
    }
    check_dims(scores.len(), dims.len())?;
    let mut best = 0;
    for i in 1..scores.len() {
        let (a, b) = (scores[i], scores[best]);
        if a < b - TIE_TOLERANCE || ((a - b).abs() <= TIE_TOLERANCE && dims[i] < dims[best]) {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model_names: Vec<String>,
    pub sic_jsd: Vec<f64>,
    pub sic: Option<Vec<f64>>,
    pub refined: Option<Vec<f64>>,
    pub fits: Vec<FitResult>,
    pub selected_index: usize,
    pub n_o: u64,
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub fit: FitOptions,
    pub quadrature: QuadratureSettings,
    pub with_sic: bool,
    pub with_refined: bool,
    /// Criterion that decides `selected_index`.
    pub primary: Option<Criterion>,
}

/// Fit every model to the counts and assemble a report.
pub fn score_models(models: &[ParametricModel], c: &CountVector, opts: &ScoreOptions, seed: u64) -> Result<ScoreReport> {
    if models.is_empty() {
        return Err(Error::Config("no candidate models".into()));
    }
    let p_hat = c.empirical()?;
    let primary = opts.primary.unwrap_or(Criterion::SicJsd);
    let mut fits = Vec::with_capacity(models.len());
    let mut jsd_scores = Vec::with_capacity(models.len());
    let mut sic_scores = Vec::new();
    let mut refined_scores = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let s = crate::rng::split(seed, i as u64);
        let fit = min_jsd_fit(m, &p_hat, &opts.fit, s)?;
        jsd_scores.push(sic_jsd(m, c, &fit)?);
        if opts.with_sic || primary == Criterion::Sic {
            let mle = mle_fit(m, c, &opts.fit, s)?;
            sic_scores.push(sic(m, c, &mle)?);
        }
        if opts.with_refined || primary == Criterion::Refined {
            let v = volume(m, &opts.quadrature)?;
            refined_scores.push(sic_jsd_refined(m, c, &fit, &v)?);
        }
        fits.push(fit);
    }
    let dims: Vec<usize> = models.iter().map(|m| m.dim()).collect();
    let decisive = match primary {
        Criterion::SicJsd => &jsd_scores,
        Criterion::Sic => &sic_scores,
        Criterion::Refined => &refined_scores,
        other => return Err(Error::Config(format!("criterion {} is not available in exact scoring", other.as_str()))),
    };
    let selected_index = argmin_with_tiebreak(decisive, &dims)?;
    Ok(ScoreReport {
        model_names: models.iter().map(|m| m.name().to_string()).collect(),
        sic_jsd: jsd_scores,
        sic: (!sic_scores.is_empty()).then_some(sic_scores),
        refined: (!refined_scores.is_empty()).then_some(refined_scores),
        fits,
        selected_index,
        n_o: c.total(),
    })
}
