use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::bolfi::{bolfi_minimize, sic_bolfi, Simulator};
use crate::categorical::{format_g17, sample_multinomial, CountVector};
use crate::error::{Error, Result};
use crate::estimate::{min_jsd_fit, mle_fit};
use crate::model::{LoglinearVariant, ParametricModel};
use crate::razor::{argmin_with_tiebreak, sic, sic_jsd, sic_jsd_refined, volume, Criterion, Volume};
use crate::rng::{rng_from_seed, split_path};
use crate::simulators::nfds::{
    nfds_simulator, synthetic_massachusetts_with, NfdsConfig, NfdsParams, NfdsVariant, PopulationData,
};
use crate::simulators::ModelSimulator;

const STREAM_DATA: u64 = 0;
const STREAM_DRAWS: u64 = 1;
const STREAM_JSD_FIT: u64 = 1;
const STREAM_MLE_FIT: u64 = 2;
const STREAM_BOLFI: u64 = 3;

/// Seed of the data set for (condition, sample size, replicate). Adding
/// replicates or conditions leaves existing seeds unchanged.
pub fn data_seed(cfg: &ExperimentConfig, condition: usize, n_index: usize, replicate: usize) -> u64 {
    split_path(cfg.master_seed, &[cfg.experiment.index(), STREAM_DATA, condition as u64, n_index as u64, replicate as u64])
}

/// One row of selections.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub condition: usize,
    pub condition_label: String,
    pub true_model: String,
    pub true_params: Vec<f64>,
    pub n_obs: u64,
    pub replicate: usize,
    pub criterion: Criterion,
    pub selected: usize,
    pub scores: Vec<f64>,
    /// Attained divergence per model: JSD for sic_jsd/refined, mean negative
    /// log-likelihood per observation for sic, minimum expected JSD for sic_bolfi.
    pub objectives: Vec<f64>,
}

/// One row of rates.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub condition: usize,
    pub condition_label: String,
    pub true_model: String,
    pub n_obs: u64,
    pub criterion: Criterion,
    pub replicates: usize,
    pub rates: Vec<f64>,
    pub median_objectives: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub version: String,
    pub model_names: Vec<String>,
    pub rows: usize,
    pub wall_time_seconds: f64,
    /// Summed over replicates (CPU-side, not wall clock when run in parallel).
    pub criterion_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub model_names: Vec<String>,
    pub selections: Vec<Selection>,
    pub rates: Vec<RateRow>,
    pub report: Report,
}

enum Generator {
    Fixed { model: ParametricModel, theta: Vec<f64> },
    LoglinearDraw { saturated: ParametricModel, lambda_xy: f64 },
    Nfds { variant: NfdsVariant, theta: Vec<f64> },
    Observed { counts: CountVector },
}

struct Condition {
    label: String,
    true_model: String,
    true_params: Vec<f64>,
    generator: Generator,
}

enum Candidates {
    Models { models: Vec<ParametricModel>, sims: Vec<ModelSimulator>, volumes: Vec<Option<Volume>> },
    Nfds { sims: Vec<Box<dyn Simulator>> },
}

impl Candidates {
    fn dims(&self) -> Vec<usize> {
        match self {
            Candidates::Models { models, .. } => models.iter().map(|m| m.dim()).collect(),
            Candidates::Nfds { sims } => sims.iter().map(|s| s.dim()).collect(),
        }
    }
}

fn join_params(v: &[f64]) -> String {
    v.iter().map(|x| format_g17(*x)).collect::<Vec<_>>().join(";")
}

fn nfds_config(cfg: &ExperimentConfig) -> Result<(NfdsConfig, Option<PopulationData>)> {
    let s = &cfg.nfds;
    let (data, mut nc) = match &s.data_file {
        Some(path) => {
            let data = PopulationData::read_path(path)?;
            let nc = NfdsConfig::from_population_data(&data, s.n_loci, s.data_seed, s.pop_size)?;
            (data, nc)
        }
        None => synthetic_massachusetts_with(s.data_seed, s.n_loci, s.pop_size)?,
    };
    nc.generations_per_month = s.generations_per_month;
    Ok((nc, Some(data)))
}

fn conditions(cfg: &ExperimentConfig, nfds: Option<&(NfdsConfig, Option<PopulationData>)>) -> Result<Vec<Condition>> {
    let mut out = Vec::new();
    match cfg.experiment {
        ExperimentKind::NestedMultilogit => {
            for t in &cfg.true_params {
                let active = match &t.model {
                    Some(m) => m[1..].parse::<usize>().map_err(|_| Error::Config(format!("unknown model '{m}'")))?,
                    None => t.theta.iter().rposition(|x| *x != 0.0).map_or(0, |i| i + 1),
                };
                let model = crate::model::example_model(active)?;
                out.push(Condition {
                    label: format!("theta={}", join_params(&t.theta)),
                    true_model: model.name().to_string(),
                    true_params: t.theta.clone(),
                    generator: Generator::Fixed { model, theta: t.theta[..active].to_vec() },
                });
            }
        }
        ExperimentKind::Loglinear => {
            let saturated = crate::model::loglinear_default(LoglinearVariant::Saturated)?;
            for t in &cfg.true_params {
                let lambda_xy = *t.theta.last().expect("validated");
                let true_model = if lambda_xy == 0.0 { "two_param" } else { "saturated" }.to_string();
                let generator = if t.theta.len() == 1 {
                    Generator::LoglinearDraw { saturated: saturated.clone(), lambda_xy }
                } else {
                    Generator::Fixed { model: saturated.clone(), theta: t.theta.clone() }
                };
                out.push(Condition {
                    label: format!("lambda_xy={}", format_g17(lambda_xy)),
                    true_model,
                    true_params: t.theta.clone(),
                    generator,
                });
            }
        }
        ExperimentKind::Custom => {
            let models = cfg.candidate_models()?;
            for t in &cfg.true_params {
                let name = t.model.as_deref().expect("validated");
                let model = models.iter().find(|m| m.name() == name).expect("validated").clone();
                out.push(Condition {
                    label: format!("{name}:{}", join_params(&t.theta)),
                    true_model: name.to_string(),
                    true_params: t.theta.clone(),
                    generator: Generator::Fixed { model, theta: t.theta.clone() },
                });
            }
        }
        ExperimentKind::Nfds => {
            let (_, data) = nfds.expect("nfds config");
            if cfg.true_params.is_empty() {
                let data = data.as_ref().expect("population data");
                out.push(Condition {
                    label: "observed".into(),
                    true_model: String::new(),
                    true_params: vec![],
                    generator: Generator::Observed { counts: data.observed_counts() },
                });
            }
            for t in &cfg.true_params {
                let variant: NfdsVariant = t.model.as_deref().unwrap_or("").parse()?;
                let p = natural_params(variant, &t.theta);
                out.push(Condition {
                    label: format!("{}:{}", variant.name(), join_params(&t.theta)),
                    true_model: variant.name().to_string(),
                    true_params: t.theta.clone(),
                    generator: Generator::Nfds { variant, theta: p.to_theta(variant) },
                });
            }
        }
    }
    Ok(out)
}

fn natural_params(variant: NfdsVariant, v: &[f64]) -> NfdsParams {
    let mut p = NfdsParams { m: v[0], v: v[1], sigma_f: 0.0, sigma_w: 0.0, p_f: 1.0 };
    if variant != NfdsVariant::Neutral {
        p.sigma_f = v[2];
    }
    if variant == NfdsVariant::Heterogeneous {
        p.sigma_w = v[3];
        p.p_f = v[4];
    }
    p
}

fn candidates(cfg: &ExperimentConfig, nfds: Option<&(NfdsConfig, Option<PopulationData>)>) -> Result<Candidates> {
    if cfg.experiment == ExperimentKind::Nfds {
        let (nc, _) = nfds.expect("nfds config");
        let sims = NfdsVariant::ALL
            .iter()
            .map(|&v| nfds_simulator(nc.clone(), v).map(|s| Box::new(s) as Box<dyn Simulator>))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Candidates::Nfds { sims });
    }
    let models = cfg.candidate_models()?;
    let sims = models.iter().cloned().map(ModelSimulator::new).collect();
    let volumes = if cfg.criteria.contains(&Criterion::Refined) {
        models.iter().map(|m| volume(m, &cfg.quadrature).map(Some)).collect::<Result<Vec<_>>>()?
    } else {
        vec![None; models.len()]
    };
    Ok(Candidates::Models { models, sims, volumes })
}

struct Task {
    condition: usize,
    n_index: usize,
    replicate: usize,
}

struct TaskResult {
    rows: Vec<Selection>,
    times: Vec<(Criterion, Duration)>,
}

fn generate(cfg: &ExperimentConfig, cond: &Condition, n: u64, seed: u64, replicate: usize, nfds: Option<&NfdsConfig>) -> Result<(CountVector, Vec<f64>)> {
    Ok(match &cond.generator {
        Generator::Fixed { model, theta } => (sample_multinomial(&model.probs(theta)?, n, seed), cond.true_params.clone()),
        Generator::LoglinearDraw { saturated, lambda_xy } => {
            let [lo, hi] = cfg.loglinear.main_effect_range;
            let mut rng = rng_from_seed(split_path(cfg.master_seed, &[cfg.experiment.index(), STREAM_DRAWS, replicate as u64]));
            let theta = vec![rng.random_range(lo..hi), rng.random_range(lo..hi), *lambda_xy];
            (sample_multinomial(&saturated.probs(&theta)?, n, seed), theta)
        }
        Generator::Nfds { variant, theta } => {
            let mut nc = nfds.expect("nfds config").clone();
            nc.obs_weights = cfg.nfds.obs_weights.clone();
            let sim = nfds_simulator(nc, *variant)?;
            let counts = sim.run(theta, n, seed).map_err(|e| match e {
                e @ Error::Simulator { .. } => e,
                other => Error::Simulator { theta: theta.clone(), reason: other.to_string() },
            })?;
            (counts, cond.true_params.clone())
        }
        Generator::Observed { counts } => (counts.clone(), vec![]),
    })
}

fn run_task(
    cfg: &ExperimentConfig,
    conds: &[Condition],
    cands: &Candidates,
    nfds: Option<&NfdsConfig>,
    task: &Task,
) -> Result<TaskResult> {
    let cond = &conds[task.condition];
    let seed = data_seed(cfg, task.condition, task.n_index, task.replicate);
    let n_cfg = cfg.n_obs.get(task.n_index).copied().unwrap_or(0);
    let (counts, true_params) = generate(cfg, cond, n_cfg, seed, task.replicate, nfds)?;
    let n = counts.total();
    let p_hat = counts.empirical()?;
    let dims = cands.dims();
    let n_models = dims.len();
    let mut scores: BTreeMap<Criterion, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut times = Vec::new();
    let fit_seed = |stream: u64, i: usize| split_path(seed, &[stream, i as u64]);
    for &crit in &cfg.criteria {
        let start = Instant::now();
        let mut s = Vec::with_capacity(n_models);
        let mut o = Vec::with_capacity(n_models);
        match (crit, cands) {
            (Criterion::SicJsd | Criterion::Refined, Candidates::Models { models, volumes, .. }) => {
                for (i, m) in models.iter().enumerate() {
                    let fit = min_jsd_fit(m, &p_hat, &cfg.fit, fit_seed(STREAM_JSD_FIT, i))?;
                    s.push(match crit {
                        Criterion::Refined => sic_jsd_refined(m, &counts, &fit, volumes[i].as_ref().expect("volumes computed"))?,
                        _ => sic_jsd(m, &counts, &fit)?,
                    });
                    o.push(fit.objective);
                }
            }
            (Criterion::Sic, Candidates::Models { models, .. }) => {
                for (i, m) in models.iter().enumerate() {
                    let fit = mle_fit(m, &counts, &cfg.fit, fit_seed(STREAM_MLE_FIT, i))?;
                    s.push(sic(m, &counts, &fit)?);
                    o.push(fit.objective / n as f64);
                }
            }
            (Criterion::SicBolfi, _) => {
                let sims: Vec<&dyn Simulator> = match cands {
                    Candidates::Models { sims, .. } => sims.iter().map(|s| s as &dyn Simulator).collect(),
                    Candidates::Nfds { sims } => sims.iter().map(|s| s.as_ref()).collect(),
                };
                for (i, sim) in sims.into_iter().enumerate() {
                    let fit = bolfi_minimize(sim, &p_hat, n, &cfg.bolfi, fit_seed(STREAM_BOLFI, i))?;
                    s.push(sic_bolfi(&fit, sim.dim(), n)?);
                    o.push(fit.objective);
                }
            }
            (other, _) => return Err(Error::Config(format!("criterion '{}' is not available here", other.as_str()))),
        }
        times.push((crit, start.elapsed()));
        scores.insert(crit, (s, o));
    }
    let rows = cfg
        .criteria
        .iter()
        .map(|crit| {
            let (s, o) = scores.remove(crit).expect("scored");
            Ok(Selection {
                condition: task.condition,
                condition_label: cond.label.clone(),
                true_model: cond.true_model.clone(),
                true_params: true_params.clone(),
                n_obs: n,
                replicate: task.replicate,
                criterion: *crit,
                selected: argmin_with_tiebreak(&s, &dims)?,
                scores: s,
                objectives: o,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskResult { rows, times })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Selection rates per (condition, n_obs, criterion): the mean of the
/// selection indicators over replicates, in first-appearance order.
pub fn selection_rates(selections: &[Selection], n_models: usize) -> Vec<RateRow> {
    let mut order: Vec<(usize, u64, Criterion)> = Vec::new();
    let mut groups: BTreeMap<(usize, u64, Criterion), Vec<&Selection>> = BTreeMap::new();
    for s in selections {
        let key = (s.condition, s.n_obs, s.criterion);
        let g = groups.entry(key).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(s);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let count = g.len();
            let rates = (0..n_models)
                .map(|m| g.iter().map(|s| if s.selected == m { 1.0 } else { 0.0 }).sum::<f64>() / count as f64)
                .collect();
            let median_objectives = (0..n_models).map(|m| median(&mut g.iter().map(|s| s.objectives[m]).collect::<Vec<_>>())).collect();
            RateRow {
                condition: key.0,
                condition_label: g[0].condition_label.clone(),
                true_model: g[0].true_model.clone(),
                n_obs: key.1,
                criterion: key.2,
                replicates: count,
                rates,
                median_objectives,
            }
        })
        .collect()
}

/// Run every (condition, sample size, replicate) of the experiment on
/// `jobs` worker threads. Output order does not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let nfds = if cfg.experiment == ExperimentKind::Nfds { Some(nfds_config(cfg)?) } else { None };
    let conds = conditions(cfg, nfds.as_ref())?;
    let cands = candidates(cfg, nfds.as_ref())?;
    let model_names = cfg.candidate_names()?;
    let n_sizes = if cfg.n_obs.is_empty() { 1 } else { cfg.n_obs.len() };
    let mut tasks = Vec::new();
    for c in 0..conds.len() {
        for ni in 0..n_sizes {
            for r in 0..cfg.replicates {
                tasks.push(Task { condition: c, n_index: ni, replicate: r });
            }
        }
    }
    let nc = nfds.as_ref().map(|(c, _)| c);
    let exec = |t: &Task| run_task(cfg, &conds, &cands, nc, t);
    let results: Vec<TaskResult> = if jobs <= 1 {
        tasks.iter().map(exec).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(exec).collect::<Result<_>>())?
    };
    let mut criterion_seconds: BTreeMap<String, f64> = BTreeMap::new();
    let mut selections = Vec::new();
    for r in results {
        for (c, d) in r.times {
            *criterion_seconds.entry(c.as_str().to_string()).or_default() += d.as_secs_f64();
        }
        selections.extend(r.rows);
    }
    let rates = selection_rates(&selections, model_names.len());
    let report = Report {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        model_names: model_names.clone(),
        rows: selections.len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        criterion_seconds,
    };
    Ok(ExperimentOutput { model_names, selections, rates, report })
}

impl ExperimentOutput {
    pub fn write_selections<W: std::io::Write>(&self, w: W, experiment: ExperimentKind) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> =
            ["experiment", "condition", "true_model", "true_params", "n_obs", "replicate", "criterion", "selected_model"]
                .map(String::from)
                .to_vec();
        header.extend(self.model_names.iter().map(|m| format!("selected_{m}")));
        header.extend(self.model_names.iter().map(|m| format!("score_{m}")));
        header.extend(self.model_names.iter().map(|m| format!("objective_{m}")));
        out.write_record(&header)?;
        for s in &self.selections {
            let mut rec = vec![
                experiment.as_str().to_string(),
                s.condition_label.clone(),
                s.true_model.clone(),
                join_params(&s.true_params),
                s.n_obs.to_string(),
                s.replicate.to_string(),
                s.criterion.as_str().to_string(),
                self.model_names[s.selected].clone(),
            ];
            rec.extend((0..self.model_names.len()).map(|m| u8::from(s.selected == m).to_string()));
            rec.extend(s.scores.iter().map(|x| format_g17(*x)));
            rec.extend(s.objectives.iter().map(|x| format_g17(*x)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_rates<W: std::io::Write>(&self, w: W, experiment: ExperimentKind) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> =
            ["experiment", "condition", "true_model", "n_obs", "criterion", "replicates"].map(String::from).to_vec();
        header.extend(self.model_names.iter().map(|m| format!("rate_{m}")));
        header.extend(self.model_names.iter().map(|m| format!("median_objective_{m}")));
        out.write_record(&header)?;
        for r in &self.rates {
            let mut rec = vec![
                experiment.as_str().to_string(),
                r.condition_label.clone(),
                r.true_model.clone(),
                r.n_obs.to_string(),
                r.criterion.as_str().to_string(),
                r.replicates.to_string(),
            ];
            rec.extend(r.rates.iter().map(|x| format_g17(*x)));
            rec.extend(r.median_objectives.iter().map(|x| format_g17(*x)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes selections.csv, rates.csv and report.json into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let kind = self.report.config.experiment;
        self.write_selections(std::fs::File::create(dir.join("selections.csv"))?, kind)?;
        self.write_rates(std::fs::File::create(dir.join("rates.csv"))?, kind)?;
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}
