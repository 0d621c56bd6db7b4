//! Batch property checks over the theory: divergence bounds, model
//! calculus, volume, razor inequalities and the evidence oracles.

use rand::Rng as _;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::categorical::{sample_multinomial, Categorical, CountVector};
use crate::divergence::{jsd, jsd_sqrt, kl, LN_2};
use crate::error::Result;
use crate::estimate::{min_jsd_fit, mle_fit, FitOptions};
use crate::evidence::{acceptance_rate_limit, model_evidence, razor_bound_check, PriorSpec, CHAIN_TOLERANCE};
use crate::model::{
    example_model, fisher_info, jsd_gradient, jsd_hessian, loglinear_default, LoglinearVariant, ParametricModel,
};
use crate::optim::ParamBox;
use crate::razor::{sic, sic_jsd, volume, QuadratureSettings};
use crate::rng::{rng_from_seed, split, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub violations: usize,
    /// Smallest slack observed (negative when violated), or largest error
    /// for agreement checks, as described in `detail`.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {} instances, {} violations, margin {:.3e} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.instances,
                    c.violations,
                    c.margin,
                    c.detail
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateOptions {
    pub seed: u64,
    pub divergence_pairs: usize,
    pub calculus_points: usize,
    pub razor_instances: usize,
    pub evidence_instances: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { seed: 1, divergence_pairs: 10_000, calculus_points: 100, razor_instances: 1000, evidence_instances: 100 }
    }
}

pub fn random_simplex(rng: &mut Rng, k: usize) -> Categorical {
    let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    Categorical::from_weights(w).expect("positive weights")
}

struct Tally {
    instances: usize,
    violations: usize,
    margin: f64,
}

impl Tally {
    fn new() -> Self {
        Self { instances: 0, violations: 0, margin: f64::INFINITY }
    }

    fn slack(&mut self, s: f64) {
        self.instances += 1;
        if !(s >= 0.0) {
            self.violations += 1;
        }
        self.margin = self.margin.min(s);
    }

    fn finish(self, name: &str, detail: &str) -> CheckResult {
        CheckResult {
            name: name.into(),
            passed: self.violations == 0,
            instances: self.instances,
            violations: self.violations,
            margin: self.margin,
            detail: detail.into(),
        }
    }
}

/// JSD range, JSD ≤ KL/2, √JSD triangle inequality and the √JSD ≥ (√2/4)‖P−Q‖₂ bound.
pub fn check_divergences(pairs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = rng_from_seed(seed);
    let (mut range, mut half_kl, mut tri, mut l2) = (Tally::new(), Tally::new(), Tally::new(), Tally::new());
    for _ in 0..pairs {
        let k = rng.random_range(2..=10);
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        let r = random_simplex(&mut rng, k);
        let j = jsd(&p, &q)?;
        range.slack(j.min(LN_2 - j));
        let klv = kl(&p, &q)?;
        if klv.is_finite() {
            half_kl.slack(0.5 * klv - j);
        }
        tri.slack(jsd_sqrt(&p, &r)? + jsd_sqrt(&r, &q)? - jsd_sqrt(&p, &q)? + 1e-12);
        let norm = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        l2.slack(j.sqrt() - std::f64::consts::SQRT_2 / 4.0 * norm);
    }
    Ok(vec![
        range.finish("jsd_range", "min of JSD and ln2 − JSD"),
        half_kl.finish("jsd_below_half_kl", "min of KL/2 − JSD"),
        tri.finish("sqrt_jsd_triangle", "min of d(p,r)+d(r,q)−d(p,q)+1e-12"),
        l2.finish("sqrt_jsd_l2_bound", "min of √JSD − (√2/4)‖p−q‖₂"),
    ])
}

fn fisher_closed_form(t: &[f64]) -> [f64; 3] {
    let (e1, e2) = (t[0].exp(), t[1].exp());
    let c = (1.0 + e1 + e2).powi(-3);
    [
        c * e1 * (e1 + (1.0 + e2).powi(2) + e1 * e2),
        -c * e1 * e2 * (1.0 + e1 + e2),
        c * e2 * (e2 + (1.0 + e1).powi(2) + e1 * e2),
    ]
}

fn fd_gradient(p_hat: &Categorical, m: &ParametricModel, t: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(t.len());
    for s in 0..t.len() {
        let (mut a, mut b) = (t.to_vec(), t.to_vec());
        a[s] += h;
        b[s] -= h;
        g.push((jsd(p_hat, &m.probs(&a)?)? - jsd(p_hat, &m.probs(&b)?)?) / (2.0 * h));
    }
    Ok(g)
}

/// Fisher information closed forms and JSD derivative agreement.
pub fn check_calculus(points: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = rng_from_seed(seed);
    let m1 = example_model(1)?;
    let m2 = example_model(2)?;
    let mut fisher = Tally::new();
    let i0 = fisher_info(&m1, &[0.0])?[(0, 0)];
    fisher.slack(1e-12 - (i0 - 2.0 / 9.0).abs());
    let (mut grad, mut hess, mut at_model) = (Tally::new(), Tally::new(), Tally::new());
    for _ in 0..points {
        let t = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
        let i = fisher_info(&m2, &t)?;
        let [a, b, c] = fisher_closed_form(&t);
        let err = (i[(0, 0)] - a).abs().max((i[(0, 1)] - b).abs()).max((i[(1, 1)] - c).abs());
        fisher.slack(1e-8 - err);
        let x = rng.random_range(-2.5..2.5);
        let ex = f64::exp(x);
        fisher.slack(1e-8 - (fisher_info(&m1, &[x])?[(0, 0)] - 2.0 * ex / (2.0 + ex).powi(2)).abs());

        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let p_hat = Categorical::from_weights(w)?;
        let g = jsd_gradient(&p_hat, &m2, &t)?;
        let fd = fd_gradient(&p_hat, &m2, &t, 1e-6)?;
        grad.slack(1e-6 - (0..2).map(|s| (g[s] - fd[s]).abs()).fold(0.0, f64::max));
        let h = jsd_hessian(&p_hat, &m2, &t)?;
        let mut err = 0.0f64;
        for s in 0..2 {
            let (mut a, mut b) = (t.to_vec(), t.to_vec());
            a[s] += 1e-5;
            b[s] -= 1e-5;
            let ga = jsd_gradient(&p_hat, &m2, &a)?;
            let gb = jsd_gradient(&p_hat, &m2, &b)?;
            for r in 0..2 {
                err = err.max((h[(r, s)] - (ga[r] - gb[r]) / 2e-5).abs());
            }
        }
        hess.slack(1e-5 - err);
        let on = m2.probs(&t)?;
        let diff = jsd_hessian(&on, &m2, &t)? - i * 0.25;
        at_model.slack(1e-12 - diff.amax());
    }
    Ok(vec![
        fisher.finish("fisher_closed_form", "1e-8 minus max abs error; I(0) = 2/9 to 1e-12"),
        grad.finish("jsd_gradient_fd", "1e-6 minus max abs error vs central differences"),
        hess.finish("jsd_hessian_fd", "1e-5 minus max abs error vs differenced gradient"),
        at_model.finish("hessian_on_model", "1e-12 minus max |H − I/4|"),
    ])
}

/// V([−3,3]) against the arctan closed form, and 0 < V < 2π on random intervals.
pub fn check_volume(intervals: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let closed = |a: f64, b: f64| {
        let s = std::f64::consts::SQRT_2;
        2.0 * (((b / 2.0).exp() / s).atan() - ((a / 2.0).exp() / s).atan())
    };
    let q = QuadratureSettings::default();
    let mut exact = Tally::new();
    let v = volume(&example_model(1)?, &q)?.value;
    exact.slack(1e-8 - (v - closed(-3.0, 3.0)).abs());
    let mut bound = Tally::new();
    let mut rng = rng_from_seed(seed);
    for _ in 0..intervals {
        let a = rng.random_range(-6.0..5.0);
        let b = rng.random_range(a + 0.01..6.0);
        let m = crate::model::multilogit_model("M1", &crate::model::example_predictors(), 1, ParamBox::cube(1, a, b)?)?;
        let v = volume(&m, &q)?.value;
        bound.slack(v.min(2.0 * std::f64::consts::PI - v));
        exact.slack(1e-8 - (v - closed(a, b)).abs());
    }
    Ok(vec![
        exact.finish("volume_closed_form", "1e-8 minus |V − closed form|"),
        bound.finish("volume_bounds", "min of V and 2π − V"),
    ])
}

/// SIC-JSD below SIC on simulated data from both experiment families.
pub fn check_razor(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng_from_seed(seed);
    let nested: Vec<ParametricModel> = (0..=2).map(example_model).collect::<Result<_>>()?;
    let loglin = [loglinear_default(LoglinearVariant::TwoParam)?, loglinear_default(LoglinearVariant::Saturated)?];
    let opts = FitOptions::default();
    let mut t = Tally::new();
    for i in 0..instances {
        let n = if rng.random_bool(0.5) { 100 } else { 1000 };
        let (model, data) = if i % 2 == 0 {
            let truth = &nested[2];
            let th = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (&nested[rng.random_range(0..3)], sample_multinomial(&truth.probs(&th)?, n, split(seed, i as u64)))
        } else {
            let th = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)];
            (&loglin[rng.random_range(0..2)], sample_multinomial(&loglin[1].probs(&th)?, n, split(seed, i as u64)))
        };
        let jf = min_jsd_fit(model, &data.empirical()?, &opts, 1)?;
        let mf = mle_fit(model, &data, &opts, 1)?;
        t.slack(sic(model, &data, &mf)? - sic_jsd(model, &data, &jf)?);
    }
    Ok(t.finish("sic_jsd_below_sic", "min of SIC − SIC-JSD"))
}

/// Evidence ≤ KL razor ≤ JSD razor on random small instances, and the
/// acceptance-rate limit for k = 2, n = 4, D = (2, 2).
pub fn check_evidence(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = rng_from_seed(seed);
    let prior = PriorSpec::default();
    let mut chain = Tally::new();
    for i in 0..instances {
        let k = rng.random_range(2..=3);
        let d = rng.random_range(0..k.min(3));
        let pred = nalgebra::DMatrix::from_fn(k - 1, d, |_, _| rng.random_range(-1.5..1.5));
        let m = crate::model::multilogit_model("m", &pred, d, ParamBox::cube(d, -2.0, 2.0)?)?;
        let n = rng.random_range(5..=30);
        let w = random_simplex(&mut rng, k);
        let c = sample_multinomial(&w, n, split(seed, i as u64));
        let b = razor_bound_check(&m, &c, &prior)?;
        let s1 = b.kl_razor * (1.0 + CHAIN_TOLERANCE) + CHAIN_TOLERANCE - b.evidence_scaled;
        let s2 = b.jsd_razor * (1.0 + CHAIN_TOLERANCE) + CHAIN_TOLERANCE - b.kl_razor;
        chain.slack(s1.min(s2));
    }
    let mut limit = Tally::new();
    let logit = crate::model::multilogit_model(
        "logit",
        &nalgebra::DMatrix::from_element(1, 1, 1.0),
        1,
        ParamBox::cube(1, -2.0, 2.0)?,
    )?;
    let c = CountVector::new(vec![2, 2]);
    let table = acceptance_rate_limit(&logit, &c, &prior, None)?;
    let target = 6.0 * model_evidence(&logit, &c, &prior)?;
    let last = table.rows.last().expect("grid").integral;
    limit.slack(1e-10 - (last - target).abs());
    limit.slack(1e-12 - (table.rows[0].integral - 1.0).abs());
    Ok(vec![
        chain.finish("razor_chain", "min slack of evidence ≤ KL razor ≤ JSD razor"),
        limit.finish("acceptance_rate_limit", "1e-10 minus |limit − 6·evidence|; full acceptance at √ln2"),
    ])
}

/// Runs every check.
pub fn validate_theory(opts: &ValidateOptions) -> Result<ValidationReport> {
    let mut checks = check_divergences(opts.divergence_pairs, split(opts.seed, 1))?;
    checks.extend(check_calculus(opts.calculus_points, split(opts.seed, 2))?);
    checks.extend(check_volume(50, split(opts.seed, 3))?);
    checks.push(check_razor(opts.razor_instances, split(opts.seed, 4))?);
    checks.extend(check_evidence(opts.evidence_instances, split(opts.seed, 5))?);
    Ok(ValidationReport { checks })
}
