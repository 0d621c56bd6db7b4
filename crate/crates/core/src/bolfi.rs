//! Simulator-based minimum expected-JSD estimation with a GP surrogate
//! (BOLFI) and the SIC-BOLFI score.

use serde::{Deserialize, Serialize};

use crate::categorical::{Categorical, CountVector};
use crate::divergence::jsd_slices;
use crate::error::{check_dims, Error, Result};
use crate::estimate::FitResult;
use crate::gp::{GpOptions, GpSurrogate, Hyper};
use crate::optim::{halton_point, minimize_in_box_with, NelderMeadOptions, ParamBox};
use crate::razor::{jsd_penalty, MIN_SAMPLE_EXCLUSIVE};
use crate::rng::{split, split_path};

/// A stochastic program mapping θ to category counts.
///
/// Outputs may consist of several blocks of categories (for instance one
/// block per observation time); JSDs are then taken per block.
pub trait Simulator: Send + Sync {
    /// Total number of cells across blocks.
    fn k(&self) -> usize;
    fn dim(&self) -> usize;
    fn bounds(&self) -> &ParamBox;
    /// Must be deterministic in (θ, n, seed) and return counts summing to n.
    fn run(&self, theta: &[f64], n: u64, seed: u64) -> Result<CountVector>;
    fn block_sizes(&self) -> Vec<usize> {
        vec![self.k()]
    }
    /// Extra constraints beyond the box; infeasible θ are never proposed.
    fn feasible(&self, _theta: &[f64]) -> bool {
        true
    }
}

fn normalized_block(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
}

/// Block-averaged JSD between observed frequencies and simulated counts.
pub fn block_jsd(data: &[f64], sim: &CountVector, blocks: &[usize]) -> Result<f64> {
    check_dims(data.len(), sim.k())?;
    let mut start = 0;
    let mut acc = 0.0;
    for &len in blocks {
        let d = normalized_block(&data[start..start + len])
            .ok_or_else(|| Error::Domain(format!("observed block at cell {start} is empty")))?;
        let x: Vec<f64> = sim.counts()[start..start + len].iter().map(|&c| c as f64).collect();
        let x = normalized_block(&x)
            .ok_or_else(|| Error::SimulatorContract(format!("simulated block at cell {start} is empty")))?;
        acc += jsd_slices(&d, &x);
        start += len;
    }
    Ok(acc / blocks.len() as f64)
}

fn check_blocks(sim: &dyn Simulator) -> Result<Vec<usize>> {
    let blocks = sim.block_sizes();
    if blocks.is_empty() || blocks.iter().sum::<usize>() != sim.k() {
        return Err(Error::SimulatorContract(format!("block sizes {blocks:?} do not cover k = {}", sim.k())));
    }
    Ok(blocks)
}

/// Mean over `reps` runs of the block-averaged JSD between the observed
/// frequencies and the empirical distribution of simulated data.
pub fn discrepancy(sim: &dyn Simulator, theta: &[f64], p_hat: &Categorical, n: u64, reps: usize, seed: u64) -> Result<f64> {
    if reps == 0 || n == 0 {
        return Err(Error::Config("discrepancy needs reps >= 1 and n >= 1".into()));
    }
    check_dims(sim.k(), p_hat.k())?;
    check_dims(sim.dim(), theta.len())?;
    let blocks = check_blocks(sim)?;
    let mut acc = 0.0;
    for r in 0..reps {
        let x = sim
            .run(theta, n, split(seed, r as u64))
            .map_err(|e| match e {
                Error::Simulator { .. } | Error::SimulatorContract(_) => e,
                other => Error::Simulator { theta: theta.to_vec(), reason: other.to_string() },
            })?;
        if x.k() != sim.k() {
            return Err(Error::SimulatorContract(format!("simulator returned {} cells, expected {}", x.k(), sim.k())));
        }
        if x.total() != n {
            return Err(Error::SimulatorContract(format!("simulator returned {} draws, expected {n}", x.total())));
        }
        acc += block_jsd(p_hat.probs(), &x, &blocks)?;
    }
    Ok(acc / reps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AcquisitionRule {
    LowerConfidenceBound { beta: f64 },
    MaxVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Lcb,
    Maxvar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BolfiOptions {
    /// Total number of discrepancy evaluations, initialization included.
    pub budget: usize,
    pub init_points: usize,
    pub acquisition: AcquisitionKind,
    pub lcb_beta: f64,
    pub reps: usize,
    /// Simulated sample size per run; `None` means the observed size.
    pub n_per_sim: Option<u64>,
    pub candidates: usize,
    pub polish_starts: usize,
    pub polish_iter: usize,
    /// Hyperparameters are refit whenever the training set has grown by
    /// this factor since the previous fit, and once at the end.
    pub refit_growth: f64,
    /// Scale on which the surrogate models the discrepancy.
    pub transform: OutputTransform,
    pub gp: GpOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    #[default]
    Identity,
    /// GP on ln(discrepancy); the reported objective is exp of the posterior mean.
    Log,
}

const LOG_FLOOR: f64 = 1e-12;

impl OutputTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            OutputTransform::Identity => y,
            OutputTransform::Log => y.max(LOG_FLOOR).ln(),
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            OutputTransform::Identity => z,
            OutputTransform::Log => z.exp(),
        }
    }
}

impl Default for BolfiOptions {
    fn default() -> Self {
        Self {
            budget: 200,
            init_points: 10,
            acquisition: AcquisitionKind::Lcb,
            lcb_beta: 2.0,
            reps: 1,
            n_per_sim: None,
            candidates: 1024,
            polish_starts: 4,
            polish_iter: 30,
            refit_growth: 2.0,
            transform: OutputTransform::Identity,
            gp: GpOptions::default(),
        }
    }
}

impl BolfiOptions {
    pub fn rule(&self) -> AcquisitionRule {
        match self.acquisition {
            AcquisitionKind::Lcb => AcquisitionRule::LowerConfidenceBound { beta: self.lcb_beta },
            AcquisitionKind::Maxvar => AcquisitionRule::MaxVariance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_points < 2 {
            return Err(Error::Config("init_points must be at least 2".into()));
        }
        if self.budget < self.init_points {
            return Err(Error::Config(format!(
                "budget {} is smaller than the {} initialization points",
                self.budget, self.init_points
            )));
        }
        if self.reps == 0 || self.candidates == 0 || self.polish_starts == 0 {
            return Err(Error::Config("reps, candidates and polish_starts must be positive".into()));
        }
        if !(self.lcb_beta >= 0.0) {
            return Err(Error::Config("lcb_beta must be nonnegative".into()));
        }
        if !(self.refit_growth > 1.0) {
            return Err(Error::Config("refit_growth must exceed 1".into()));
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_SIM: u64 = 2;
const STREAM_GP: u64 = 3;
const STREAM_CANDIDATES: u64 = 4;

/// Fixed candidate design with cached cross-covariances to the training
/// inputs, so each new observation costs O(t · candidates).
struct CandidateCache {
    points: Vec<Vec<f64>>,
    kx: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    vsq: Vec<f64>,
}

impl CandidateCache {
    fn new(d: usize, count: usize, seed: u64, feasible: &dyn Fn(&[f64]) -> bool) -> Self {
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(count + (1 << d.min(5)));
        if d <= 5 {
            let unit = ParamBox::cube(d, 0.0, 1.0).expect("unit cube");
            points.extend(unit.corners());
        }
        points.extend((0..count as u64).map(|i| halton_point(i, d, seed)));
        points.retain(|u| feasible(u));
        let n = points.len();
        Self { points, kx: vec![], v: vec![], vsq: vec![0.0; n] }
    }

    fn rebuild(&mut self, gp: &GpSurrogate) {
        self.kx.clear();
        self.v.clear();
        self.vsq.iter_mut().for_each(|x| *x = 0.0);
        let inputs = gp.unit_inputs().to_vec();
        for (i, xi) in inputs.iter().enumerate() {
            self.push(gp, xi, i);
        }
    }

    // Add the row for training input `i` using row i of the factor.
    fn push(&mut self, gp: &GpSurrogate, xi: &[f64], i: usize) {
        let krow: Vec<f64> = self.points.iter().map(|c| gp.kernel_unit(xi, c)).collect();
        let lrow = gp.cholesky().row(i);
        let mut vrow = krow.clone();
        for (l, prev) in lrow[..i].iter().zip(&self.v) {
            for (a, b) in vrow.iter_mut().zip(prev) {
                *a -= l * b;
            }
        }
        let diag = lrow[i];
        for (a, s) in vrow.iter_mut().zip(self.vsq.iter_mut()) {
            *a /= diag;
            *s += *a * *a;
        }
        self.kx.push(krow);
        self.v.push(vrow);
    }

    fn append_last(&mut self, gp: &GpSurrogate) {
        let i = gp.len() - 1;
        let xi = gp.unit_inputs()[i].clone();
        self.push(gp, &xi, i);
    }

    // Posterior mean and sd (original scale) at every candidate.
    fn posterior(&self, gp: &GpSurrogate) -> Vec<(f64, f64)> {
        let (ym, ysd) = gp.scale();
        let alpha = gp.alpha();
        let mut mean = vec![0.0; self.points.len()];
        for (row, a) in self.kx.iter().zip(alpha) {
            for (m, k) in mean.iter_mut().zip(row) {
                *m += k * a;
            }
        }
        let sv = gp.hyper().signal_var;
        mean.iter()
            .zip(&self.vsq)
            .map(|(m, s)| (ym + ysd * m, ((sv - s).max(0.0)).sqrt() * ysd))
            .collect()
    }
}

fn acquisition_value(rule: AcquisitionRule, mean: f64, sd: f64) -> f64 {
    match rule {
        AcquisitionRule::LowerConfidenceBound { beta } => mean - beta * sd,
        AcquisitionRule::MaxVariance => -sd,
    }
}

fn best_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn polish<F: Fn(&[f64]) -> f64>(f: F, starts: &[Vec<f64>], iters: usize, d: usize, feasible: &dyn Fn(&[f64]) -> bool) -> (Vec<f64>, f64) {
    let unit = ParamBox::cube(d, 0.0, 1.0).expect("unit cube");
    let f = |u: &[f64]| if feasible(u) { f(u) } else { f64::INFINITY };
    let nm = NelderMeadOptions { max_iter: iters, f_tol: 1e-10, x_tol: 1e-6, initial_step: 0.02 };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let f0 = f(s);
        let r = minimize_in_box_with(&f, &unit, s, &nm, false);
        let (x, fx) = if r.f <= f0 { (r.x, r.f) } else { (s.clone(), f0) };
        if best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    best.expect("at least one start")
}

type Feasible<'a> = &'a dyn Fn(&[f64]) -> bool;

fn acquire_cached(gp: &GpSurrogate, cache: &CandidateCache, rule: AcquisitionRule, opts: &BolfiOptions, feasible: Feasible) -> Vec<f64> {
    let d = gp.bounds().dim();
    let post = cache.posterior(gp);
    let values: Vec<f64> = post.iter().map(|&(m, s)| acquisition_value(rule, m, s)).collect();
    let mut starts: Vec<Vec<f64>> = best_indices(&values, opts.polish_starts).into_iter().map(|i| cache.points[i].clone()).collect();
    if starts.is_empty() {
        starts = gp.unit_inputs().to_vec();
    }
    let f = |u: &[f64]| {
        let (m, v) = gp.predict_unit(u);
        acquisition_value(rule, m, v.sqrt())
    };
    let (u, _) = polish(f, &starts, opts.polish_iter, d, feasible);
    gp.bounds().clamp(&gp.bounds().from_unit(&u))
}

/// Next evaluation point under `rule`: the best of `candidates` quasi-random
/// points, polished by Nelder–Mead from the best few.
pub fn acquire(gp: &GpSurrogate, rule: AcquisitionRule, opts: &BolfiOptions, seed: u64) -> Vec<f64> {
    let all = |_: &[f64]| true;
    let mut cache = CandidateCache::new(gp.bounds().dim(), opts.candidates, seed, &all);
    cache.rebuild(gp);
    acquire_cached(gp, &cache, rule, opts, &all)
}

// Minimizer of the posterior mean, restricted to points whose posterior sd is
// no larger than the largest sd at a training input.
fn posterior_mean_minimizer(gp: &GpSurrogate, cache: &CandidateCache, opts: &BolfiOptions, feasible: Feasible) -> (Vec<f64>, f64) {
    let d = gp.bounds().dim();
    let sd_cap = gp.unit_inputs().iter().map(|u| gp.predict_unit(u).1.sqrt()).fold(0.0, f64::max);
    let post = cache.posterior(gp);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (u, &(m, s)) in cache.points.iter().zip(&post) {
        if s <= sd_cap {
            points.push(u.clone());
            values.push(m);
        }
    }
    for u in gp.unit_inputs() {
        if feasible(u) {
            values.push(gp.mean_unit(u));
            points.push(u.clone());
        }
    }
    if points.is_empty() {
        points = gp.unit_inputs().to_vec();
        values = points.iter().map(|u| gp.mean_unit(u)).collect();
    }
    let starts: Vec<Vec<f64>> = best_indices(&values, opts.polish_starts).into_iter().map(|i| points[i].clone()).collect();
    let inside = |u: &[f64]| feasible(u) && gp.predict_unit(u).1.sqrt() <= sd_cap;
    let (u, m) = polish(|u: &[f64]| gp.mean_unit(u), &starts, 200, d, &inside);
    (gp.bounds().clamp(&gp.bounds().from_unit(&u)), m)
}

/// Trace of one BOLFI run, for diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BolfiTrace {
    pub thetas: Vec<Vec<f64>>,
    pub discrepancies: Vec<f64>,
    pub refits: Vec<usize>,
    pub final_hyper: Option<Hyper>,
    pub final_lml: Option<f64>,
}

/// Minimize the expected discrepancy over the simulator's box.
pub fn bolfi_minimize(sim: &dyn Simulator, p_hat: &Categorical, n_o: u64, opts: &BolfiOptions, seed: u64) -> Result<FitResult> {
    bolfi_minimize_traced(sim, p_hat, n_o, opts, seed).map(|r| r.0)
}

pub fn bolfi_minimize_traced(
    sim: &dyn Simulator,
    p_hat: &Categorical,
    n_o: u64,
    opts: &BolfiOptions,
    seed: u64,
) -> Result<(FitResult, BolfiTrace)> {
    opts.validate()?;
    check_dims(sim.k(), p_hat.k())?;
    check_blocks(sim)?;
    let n = opts.n_per_sim.unwrap_or(n_o);
    let d = sim.dim();
    let bounds = sim.bounds().clone();
    let mut trace = BolfiTrace::default();
    let evaluate = |theta: &[f64], i: usize| discrepancy(sim, theta, p_hat, n, opts.reps, split_path(seed, &[STREAM_SIM, i as u64]));

    if d == 0 {
        let mut acc = 0.0;
        for i in 0..opts.budget {
            let y = evaluate(&[], i)?;
            trace.thetas.push(vec![]);
            trace.discrepancies.push(y);
            acc += y;
        }
        let objective = (acc / opts.budget as f64).clamp(0.0, std::f64::consts::LN_2);
        let fit = FitResult { theta_hat: vec![], objective, evaluations: opts.budget, converged: true, restarts_used: 0 };
        return Ok((fit, trace));
    }

    let feasible = |u: &[f64]| sim.feasible(&bounds.from_unit(u));
    let init_seed = split(seed, STREAM_INIT);
    let mut index = 0u64;
    for i in 0..opts.init_points {
        let theta = loop {
            if index >= 1000 * opts.init_points as u64 {
                return Err(Error::Constraint("no feasible initialization points found in the box".into()));
            }
            let u = halton_point(index, d, init_seed);
            index += 1;
            if feasible(&u) {
                break bounds.from_unit(&u);
            }
        };
        let y = evaluate(&theta, i)?;
        trace.thetas.push(theta);
        trace.discrepancies.push(y);
    }
    let tf = opts.transform;
    let mut targets: Vec<f64> = trace.discrepancies.iter().map(|&y| tf.forward(y)).collect();
    let gp_seed = |t: usize| split_path(seed, &[STREAM_GP, t as u64]);
    let mut gp = GpSurrogate::fit(&bounds, &trace.thetas, &targets, &opts.gp, None, gp_seed(opts.init_points))?;
    trace.refits.push(opts.init_points);
    let mut cache = CandidateCache::new(d, opts.candidates, split(seed, STREAM_CANDIDATES), &feasible);
    cache.rebuild(&gp);
    let rule = opts.rule();
    let mut last_refit = opts.init_points;

    for i in opts.init_points..opts.budget {
        let theta = acquire_cached(&gp, &cache, rule, opts, &feasible);
        let y = evaluate(&theta, i)?;
        trace.thetas.push(theta.clone());
        trace.discrepancies.push(y);
        targets.push(tf.forward(y));
        let t = trace.thetas.len();
        if t as f64 >= last_refit as f64 * opts.refit_growth {
            gp = GpSurrogate::fit(&bounds, &trace.thetas, &targets, &opts.gp, Some(gp.hyper()), gp_seed(t))?;
            trace.refits.push(t);
            last_refit = t;
            cache.rebuild(&gp);
        } else if gp.append(&theta, tf.forward(y))? {
            cache.rebuild(&gp);
        } else {
            cache.append_last(&gp);
        }
    }
    if last_refit != trace.thetas.len() {
        let t = trace.thetas.len();
        gp = GpSurrogate::fit(&bounds, &trace.thetas, &targets, &opts.gp, Some(gp.hyper()), gp_seed(t))?;
        trace.refits.push(t);
        cache.rebuild(&gp);
    }
    let (theta_hat, mean) = posterior_mean_minimizer(&gp, &cache, opts, &feasible);
    trace.final_hyper = Some(gp.hyper().clone());
    trace.final_lml = Some(gp.log_marginal_likelihood());
    let fit = FitResult {
        theta_hat,
        objective: tf.inverse(mean).clamp(0.0, std::f64::consts::LN_2),
        evaluations: opts.budget,
        converged: true,
        restarts_used: opts.polish_starts,
    };
    Ok((fit, trace))
}

/// 2 n_o · (minimum expected JSD) + d ln √(n_o / 8π).
pub fn sic_bolfi(fit: &FitResult, d: usize, n_o: u64) -> Result<f64> {
    if n_o <= MIN_SAMPLE_EXCLUSIVE {
        return Err(Error::SampleTooSmall(n_o));
    }
    Ok(2.0 * n_o as f64 * fit.objective + jsd_penalty(d, n_o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::sample_multinomial;
    use crate::estimate::{min_jsd_fit, FitOptions};
    use crate::gp::gp_fit;
    use crate::model::{example_model, ParametricModel};

    struct ModelSim(ParametricModel);

    impl Simulator for ModelSim {
        fn k(&self) -> usize {
            self.0.k()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn bounds(&self) -> &ParamBox {
            self.0.bounds()
        }
        fn run(&self, theta: &[f64], n: u64, seed: u64) -> Result<CountVector> {
            Ok(sample_multinomial(&self.0.probs(theta)?, n, seed))
        }
    }

    struct Exact(Vec<u64>);

    impl Simulator for Exact {
        fn k(&self) -> usize {
            self.0.len()
        }
        fn dim(&self) -> usize {
            0
        }
        fn bounds(&self) -> &ParamBox {
            static EMPTY: std::sync::OnceLock<ParamBox> = std::sync::OnceLock::new();
            EMPTY.get_or_init(ParamBox::empty)
        }
        fn run(&self, _: &[f64], n: u64, _: u64) -> Result<CountVector> {
            let total: u64 = self.0.iter().sum();
            Ok(CountVector::new(self.0.iter().map(|c| c * n / total).collect()))
        }
    }

    #[test]
    fn discrepancy_examples() {
        let sim = Exact(vec![5, 3, 2]);
        let p = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(discrepancy(&sim, &[], &p, 10, 3, 1).unwrap(), 0.0);
        let m = ModelSim(example_model(2).unwrap());
        let p = m.0.probs(&[0.7, 0.2]).unwrap();
        let v = discrepancy(&m, &[0.7, 0.2], &p, 100_000, 1, 4).unwrap();
        assert!(v < 0.001);
        let w = discrepancy(&m, &[-2.0, 2.0], &p, 50, 4, 4).unwrap();
        assert!((0.0..=std::f64::consts::LN_2).contains(&w));
        assert!(discrepancy(&m, &[0.0, 0.0], &p, 10, 0, 4).is_err());
    }

    #[test]
    fn contract_violations_are_reported() {
        struct Short;
        impl Simulator for Short {
            fn k(&self) -> usize {
                2
            }
            fn dim(&self) -> usize {
                0
            }
            fn bounds(&self) -> &ParamBox {
                static EMPTY: std::sync::OnceLock<ParamBox> = std::sync::OnceLock::new();
                EMPTY.get_or_init(ParamBox::empty)
            }
            fn run(&self, _: &[f64], _: u64, _: u64) -> Result<CountVector> {
                Ok(CountVector::new(vec![1, 1, 1]))
            }
        }
        let p = Categorical::uniform(2);
        assert!(matches!(discrepancy(&Short, &[], &p, 3, 1, 0), Err(Error::SimulatorContract(_))));
    }

    #[test]
    fn maxvar_picks_corner_with_single_central_point() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let gp = GpSurrogate::with_hyper(&b, &x, &[0.1, 0.2], crate::gp::Hyper::initial(2)).unwrap();
        let t = acquire(&gp, AcquisitionRule::MaxVariance, &BolfiOptions::default(), 1);
        assert!(t.iter().all(|v| (v.abs() - 1.0).abs() < 1e-9), "{t:?}");
    }

    #[test]
    fn lcb_without_exploration_is_mean_minimizer() {
        let b = ParamBox::cube(1, -2.0, 2.0).unwrap();
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![-2.0 + 4.0 * i as f64 / 14.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| (p[0] - 0.37).powi(2)).collect();
        let gp = gp_fit(&b, &x, &y, &GpOptions::default(), 1).unwrap();
        let opts = BolfiOptions::default();
        let t = acquire(&gp, AcquisitionRule::LowerConfidenceBound { beta: 0.0 }, &opts, 5);
        let all = |_: &[f64]| true;
        let mut cache = CandidateCache::new(1, opts.candidates, 5, &all);
        cache.rebuild(&gp);
        let (tm, _) = posterior_mean_minimizer(&gp, &cache, &opts, &all);
        assert!((t[0] - tm[0]).abs() < 1e-4, "{t:?} {tm:?}");
        assert!((t[0] - 0.37).abs() < 0.02);
        assert!(b.contains(&t));
    }

    #[test]
    fn cache_matches_direct_prediction() {
        let b = ParamBox::cube(2, -1.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..20).map(|i| b.from_unit(&halton_point(i, 2, 3))).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[0] + (2.0 * p[1]).sin()).collect();
        let mut gp = gp_fit(&b, &x[..12], &y[..12], &GpOptions::default(), 2).unwrap();
        let mut cache = CandidateCache::new(2, 64, 8, &|_: &[f64]| true);
        cache.rebuild(&gp);
        for i in 12..20 {
            if gp.append(&x[i], y[i]).unwrap() {
                cache.rebuild(&gp);
            } else {
                cache.append_last(&gp);
            }
        }
        for (c, (m, s)) in cache.points.iter().zip(cache.posterior(&gp)) {
            let (dm, dv) = gp.predict_unit(c);
            assert!((m - dm).abs() < 1e-9 && (s - dv.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn bolfi_recovers_exact_fit() {
        let model = example_model(1).unwrap();
        let sim = ModelSim(model.clone());
        let c = sample_multinomial(&model.probs(&[0.7]).unwrap(), 1000, 21);
        let p = c.empirical().unwrap();
        let exact = min_jsd_fit(&model, &p, &FitOptions::default(), 1).unwrap();
        let opts = BolfiOptions::default();
        let (fit, trace) = bolfi_minimize_traced(&sim, &p, 1000, &opts, 9).unwrap();
        assert!((fit.theta_hat[0] - exact.theta_hat[0]).abs() < 0.1, "{fit:?} vs {exact:?}");
        assert!((0.0..=std::f64::consts::LN_2).contains(&fit.objective));
        assert_eq!(fit.evaluations, 200);
        assert_eq!(trace.thetas.len(), 200);
        let again = bolfi_minimize(&sim, &p, 1000, &opts, 9).unwrap();
        assert_eq!(again, fit);
    }

    #[test]
    fn bolfi_with_initialization_only() {
        let model = example_model(2).unwrap();
        let sim = ModelSim(model.clone());
        let p = sample_multinomial(&model.probs(&[0.2, 0.7]).unwrap(), 500, 2).empirical().unwrap();
        let opts = BolfiOptions { budget: 10, ..Default::default() };
        let fit = bolfi_minimize(&sim, &p, 500, &opts, 3).unwrap();
        assert!(model.bounds().contains(&fit.theta_hat));
        assert_eq!(fit.evaluations, 10);
        assert!(bolfi_minimize(&sim, &p, 500, &BolfiOptions { budget: 9, ..Default::default() }, 3).is_err());
    }

    #[test]
    fn bolfi_zero_dimensional() {
        let sim = ModelSim(example_model(0).unwrap());
        let p = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        let fit = bolfi_minimize(&sim, &p, 100, &BolfiOptions { budget: 20, ..Default::default() }, 3).unwrap();
        assert!(fit.theta_hat.is_empty());
        assert!(fit.objective > 0.0);
    }

    #[test]
    fn sic_bolfi_arithmetic() {
        let fit = FitResult { theta_hat: vec![0.0], objective: 0.0, evaluations: 0, converged: true, restarts_used: 0 };
        assert!((sic_bolfi(&fit, 1, 100).unwrap() - 0.690499).abs() < 1e-6);
        assert!(sic_bolfi(&fit, 1, 25).is_err());
        let fit = FitResult { objective: 0.01, ..fit };
        assert!((sic_bolfi(&fit, 0, 1000).unwrap() - 20.0).abs() < 1e-12);
    }
}
