//! Minimum-JSD and maximum-likelihood fits of a parametric model.

use serde::{Deserialize, Serialize};

use crate::categorical::{entropy, Categorical, CountVector};
use crate::divergence::{jsd_slices, kl_slices};
use crate::error::{check_dims, Result};
use crate::model::{jsd_gradient, jsd_hessian, ParametricModel};
use crate::optim::{latin_hypercube, minimize_in_box, NelderMeadOptions, ParamBox};
use crate::rng::{rng_from_seed, split};

use rand::Rng as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// Attained divergence (JSD fits) or −ln P_θ̂(D) (likelihood fits), nats.
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Polish the best local minimum with damped Newton steps on the JSD
    /// gradient when the data are interior.
    pub newton_refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        let nm = NelderMeadOptions::default();
        Self { starts: 8, max_iter: nm.max_iter, f_tol: nm.f_tol, x_tol: nm.x_tol, newton_refine: false }
    }
}

impl FitOptions {
    fn nelder_mead(&self) -> NelderMeadOptions {
        NelderMeadOptions { max_iter: self.max_iter, f_tol: self.f_tol, x_tol: self.x_tol, ..Default::default() }
    }
}

/// Size of the Latin hypercube from which the first starts are taken.
pub const LHS_POOL: usize = 8;

/// Start points for the multi-start search. The first `LHS_POOL` come from
/// one Latin hypercube; any further ones are uniform draws, each from its
/// own stream. The list for `n` starts is a prefix of the list for `n + 1`.
pub fn start_points(bounds: &ParamBox, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = latin_hypercube(LHS_POOL, bounds, &mut rng_from_seed(split(seed, 0)));
    pts.truncate(starts);
    for r in LHS_POOL..starts {
        let mut rng = rng_from_seed(split(seed, r as u64 + 1));
        pts.push((0..bounds.dim()).map(|s| rng.random_range(bounds.lower()[s]..=bounds.upper()[s])).collect());
    }
    pts
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// Ordering used to merge restarts: objective, then norm, then lexicographic.
fn better(a: (&[f64], f64), b: (&[f64], f64)) -> bool {
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    let (na, nb) = (norm(a.0), norm(b.0));
    if na != nb {
        return na < nb;
    }
    a.0.iter().zip(b.0).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

fn multistart<F>(m: &ParametricModel, f: F, opts: &FitOptions, seed: u64) -> FitResult
where
    F: Fn(&[f64]) -> f64,
{
    let bounds = m.bounds();
    if m.dim() == 0 {
        return FitResult { theta_hat: vec![], objective: f(&[]), evaluations: 1, converged: true, restarts_used: 0 };
    }
    let nm = opts.nelder_mead();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evaluations = 0;
    let starts = start_points(bounds, opts.starts.max(1), seed);
    for x0 in &starts {
        let r = minimize_in_box(&f, bounds, x0, &nm);
        evaluations += r.evaluations;
        let fx = f(&r.x);
        evaluations += 1;
        let replace = match &best {
            None => true,
            Some((bx, bf, _)) => better((&r.x, fx), (bx, *bf)),
        };
        if replace {
            best = Some((r.x, fx, r.converged));
        }
    }
    let (theta_hat, objective, converged) = best.expect("at least one start");
    FitResult { theta_hat, objective, evaluations, converged, restarts_used: starts.len() }
}

/// θ̂ = argmin over the box of D_JS(p̂, p(θ)), by multi-start Nelder–Mead.
pub fn min_jsd_fit(m: &ParametricModel, p_hat: &Categorical, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    check_dims(m.k(), p_hat.k())?;
    let data = p_hat.probs();
    let objective = |t: &[f64]| jsd_slices(data, &m.probs_vec(t));
    let mut fit = multistart(m, objective, opts, seed);
    if opts.newton_refine && m.dim() > 0 {
        if let Some((t, f, evals)) = newton_refine(m, p_hat, &fit.theta_hat, fit.objective) {
            fit.theta_hat = t;
            fit.objective = f;
            fit.evaluations += evals;
        }
    }
    Ok(fit)
}

// Damped Newton on the JSD using the analytic gradient and Hessian. Only
// applies when p̂ and θ are interior; steps are accepted only on decrease.
fn newton_refine(m: &ParametricModel, p_hat: &Categorical, theta: &[f64], f0: f64) -> Option<(Vec<f64>, f64, usize)> {
    let f = |t: &[f64]| jsd_slices(p_hat.probs(), &m.probs_vec(t));
    let mut t = theta.to_vec();
    let mut ft = f0;
    let mut evals = 0;
    let mut improved = false;
    for _ in 0..20 {
        let g = jsd_gradient(p_hat, m, &t).ok()?;
        let h = jsd_hessian(p_hat, m, &t).ok()?;
        let step = match h.cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-6 {
            let cand: Vec<f64> = t.iter().zip(step.iter()).map(|(a, s)| a - alpha * s).collect();
            if m.bounds().contains_strictly(&cand) {
                let fc = f(&cand);
                evals += 1;
                if fc < ft {
                    t = cand;
                    ft = fc;
                    accepted = true;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted || g.amax() < 1e-14 {
            break;
        }
    }
    improved.then_some((t, ft, evals))
}

/// Maximum-likelihood fit: θ̂ minimizes D_KL(p̂, p(θ)). The reported
/// objective is −ln P_θ̂(D) = n_o H(p̂) + n_o D_KL(p̂, p(θ̂)).
pub fn mle_fit(m: &ParametricModel, c: &CountVector, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    check_dims(m.k(), c.k())?;
    let p_hat = c.empirical()?;
    let data = p_hat.probs();
    let objective = |t: &[f64]| kl_slices(data, &m.probs_vec(t));
    let mut fit = multistart(m, objective, opts, seed);
    let n = c.total() as f64;
    fit.objective = n * entropy(data) + n * fit.objective;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::sample_multinomial;
    use crate::model::{example_model, loglinear_default, LoglinearVariant};

    #[test]
    fn recovers_exact_parameters() {
        let m = example_model(2).unwrap();
        let p = m.probs(&[0.7, 0.2]).unwrap();
        let fit = min_jsd_fit(&m, &p, &FitOptions::default(), 1).unwrap();
        assert!((fit.theta_hat[0] - 0.7).abs() < 1e-5 && (fit.theta_hat[1] - 0.2).abs() < 1e-5, "{fit:?}");
        assert!(fit.objective < 1e-12);
        assert!(fit.converged);
        assert_eq!(fit.restarts_used, 8);

        let n = example_model(1).unwrap();
        let q = n.probs(&[0.7]).unwrap();
        assert!(mle_fit(&n, &CountVector::new(vec![0, 0, 0]), &FitOptions::default(), 1).is_err());
        assert!(min_jsd_fit(&n, &Categorical::uniform(2), &FitOptions::default(), 1).is_err());
        let fit = min_jsd_fit(&n, &q, &FitOptions::default(), 2).unwrap();
        assert!((fit.theta_hat[0] - 0.7).abs() < 1e-5);
    }

    #[test]
    fn uniform_model_needs_no_search() {
        let m = example_model(0).unwrap();
        let p = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        let fit = min_jsd_fit(&m, &p, &FitOptions::default(), 0).unwrap();
        assert_eq!(fit.objective, jsd_slices(p.probs(), &[1.0 / 3.0; 3]));
        assert!(fit.theta_hat.is_empty());
        assert_eq!(fit.evaluations, 1);
    }

    #[test]
    fn first_order_condition_at_fit() {
        let m = example_model(2).unwrap();
        let p = CountVector::new(vec![50, 30, 20]).empirical().unwrap();
        let fit = min_jsd_fit(&m, &p, &FitOptions::default(), 3).unwrap();
        let g = jsd_gradient(&p, &m, &fit.theta_hat).unwrap();
        assert!(g.amax() < 1e-6, "{g}");
        // saturated in this case: the three-category model with d=2 fits exactly
        assert!(fit.objective < 1e-12);
        let m1 = example_model(1).unwrap();
        let fit = min_jsd_fit(&m1, &p, &FitOptions::default(), 3).unwrap();
        assert!(jsd_gradient(&p, &m1, &fit.theta_hat).unwrap().amax() < 1e-6);
    }

    #[test]
    fn saturated_loglinear_likelihood() {
        let m = loglinear_default(LoglinearVariant::Saturated).unwrap();
        let c = CountVector::new(vec![30, 25, 20, 25]);
        let fit = mle_fit(&m, &c, &FitOptions::default(), 9).unwrap();
        let h = entropy(c.empirical().unwrap().probs());
        assert!((fit.objective - 100.0 * h).abs() < 1e-8, "{}", fit.objective - 100.0 * h);
        let jfit = min_jsd_fit(&m, &c.empirical().unwrap(), &FitOptions::default(), 9).unwrap();
        assert!(jfit.objective < 1e-6);
    }

    #[test]
    fn mle_recovers_exact_parameters() {
        let m = example_model(2).unwrap();
        let p = m.probs(&[-0.4, 1.1]).unwrap();
        let counts: Vec<u64> = p.probs().iter().map(|v| (v * 1e6).round() as u64).collect();
        let c = CountVector::new(counts);
        let fit = mle_fit(&m, &c, &FitOptions::default(), 4).unwrap();
        let exact = min_jsd_fit(&m, &c.empirical().unwrap(), &FitOptions::default(), 4).unwrap();
        for s in 0..2 {
            assert!((fit.theta_hat[s] - exact.theta_hat[s]).abs() < 1e-5);
            assert!((fit.theta_hat[s] - [-0.4, 1.1][s]).abs() < 1e-5);
        }
    }

    #[test]
    fn jsd_and_mle_agree_at_large_n() {
        let m = example_model(1).unwrap();
        let c = sample_multinomial(&m.probs(&[0.7]).unwrap(), 100_000, 17);
        let a = min_jsd_fit(&m, &c.empirical().unwrap(), &FitOptions::default(), 1).unwrap();
        let b = mle_fit(&m, &c, &FitOptions::default(), 1).unwrap();
        assert!((a.theta_hat[0] - b.theta_hat[0]).abs() < 0.01);
    }

    #[test]
    fn restarts_are_nested_and_monotone() {
        let m = loglinear_default(LoglinearVariant::TwoParam).unwrap();
        let c = CountVector::new(vec![40, 10, 5, 45]);
        let p = c.empirical().unwrap();
        let pts5 = start_points(m.bounds(), 5, 77);
        let pts12 = start_points(m.bounds(), 12, 77);
        assert_eq!(pts5[..], pts12[..5]);
        let mut last = f64::INFINITY;
        for starts in 1..=12 {
            let opts = FitOptions { starts, ..Default::default() };
            let fit = min_jsd_fit(&m, &p, &opts, 77).unwrap();
            assert!(fit.objective <= last);
            last = fit.objective;
        }
    }

    #[test]
    fn newton_refinement_does_not_worsen() {
        let m = example_model(1).unwrap();
        let p = Categorical::new(vec![0.2, 0.5, 0.3]).unwrap();
        let base = min_jsd_fit(&m, &p, &FitOptions::default(), 5).unwrap();
        let refined = min_jsd_fit(&m, &p, &FitOptions { newton_refine: true, ..Default::default() }, 5).unwrap();
        assert!(refined.objective <= base.objective);
        assert!(jsd_gradient(&p, &m, &refined.theta_hat).unwrap().amax() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = example_model(2).unwrap();
        let p = Categorical::new(vec![0.6, 0.1, 0.3]).unwrap();
        let a = min_jsd_fit(&m, &p, &FitOptions::default(), 8).unwrap();
        let b = min_jsd_fit(&m, &p, &FitOptions::default(), 8).unwrap();
        assert_eq!(a, b);
    }
}
