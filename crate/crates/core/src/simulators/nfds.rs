//! Toy pneumococcal population model with vaccine selection, migration and
//! negative frequency-dependent selection (NFDS) on accessory loci.
//!
//! Each generation the population of `pop_size` isolates is resampled with
//! replacement. Cluster i reproduces with probability proportional to
//! count_i · exp(fitness_i), where
//!
//!   fitness_i = −v·[i is vaccine type] + Σ_{l ∈ loci(i)} σ_l (e_l − f_l(t)),
//!
//! f_l(t) is the current frequency of locus l and e_l its equilibrium
//! frequency. Each offspring is, with probability m, a migrant drawn from
//! the initial cluster distribution instead.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bolfi::Simulator;
use crate::categorical::{sample_multinomial_with, CountVector};
use crate::error::{Error, Result};
use crate::optim::ParamBox;
use crate::rng::{hash_unit, rng_from_seed, split, split_path, Rng};

pub const LN_M_RANGE: (f64, f64) = (-7.0, -1.6);
pub const LN_V_RANGE: (f64, f64) = (-7.0, -0.7);
pub const LN_SIGMA_F_RANGE: (f64, f64) = (-7.0, -1.6);
pub const LN_SIGMA_W_RANGE: (f64, f64) = (-7.0, -1.9);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NfdsVariant {
    /// θ = (ln m, ln v)
    Neutral,
    /// θ = (ln m, ln v, ln σ_f)
    Homogeneous,
    /// θ = (ln m, ln v, ln σ_f, ln σ_w, p_f), σ_f > σ_w
    Heterogeneous,
}

impl NfdsVariant {
    pub const ALL: [NfdsVariant; 3] = [NfdsVariant::Neutral, NfdsVariant::Homogeneous, NfdsVariant::Heterogeneous];

    pub fn dim(self) -> usize {
        match self {
            NfdsVariant::Neutral => 2,
            NfdsVariant::Homogeneous => 3,
            NfdsVariant::Heterogeneous => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NfdsVariant::Neutral => "neutral",
            NfdsVariant::Homogeneous => "homogeneous",
            NfdsVariant::Heterogeneous => "heterogeneous",
        }
    }

    pub fn theta_box(self) -> ParamBox {
        let mut pairs = vec![LN_M_RANGE, LN_V_RANGE];
        if self != NfdsVariant::Neutral {
            pairs.push(LN_SIGMA_F_RANGE);
        }
        if self == NfdsVariant::Heterogeneous {
            pairs.push(LN_SIGMA_W_RANGE);
            pairs.push((0.0, 1.0));
        }
        ParamBox::from_pairs(&pairs).expect("valid NFDS box")
    }
}

impl std::str::FromStr for NfdsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown NFDS variant {s:?}")))
    }
}

/// Natural-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfdsParams {
    pub m: f64,
    pub v: f64,
    pub sigma_f: f64,
    pub sigma_w: f64,
    pub p_f: f64,
}

impl NfdsParams {
    pub fn from_theta(variant: NfdsVariant, theta: &[f64]) -> Result<Self> {
        if theta.len() != variant.dim() {
            return Err(Error::Dimension { expected: variant.dim(), got: theta.len() });
        }
        if !variant.theta_box().contains(theta) {
            return Err(Error::Domain(format!("θ = {theta:?} lies outside the {} box", variant.name())));
        }
        let mut p = NfdsParams { m: theta[0].exp(), v: theta[1].exp(), sigma_f: 0.0, sigma_w: 0.0, p_f: 1.0 };
        if variant != NfdsVariant::Neutral {
            p.sigma_f = theta[2].exp();
        }
        if variant == NfdsVariant::Heterogeneous {
            if theta[2] <= theta[3] {
                return Err(Error::Constraint(format!("σ_f = {} must exceed σ_w = {}", theta[2].exp(), theta[3].exp())));
            }
            p.sigma_w = theta[3].exp();
            p.p_f = theta[4];
        }
        Ok(p)
    }

    pub fn to_theta(&self, variant: NfdsVariant) -> Vec<f64> {
        let mut t = vec![self.m.ln(), self.v.ln()];
        if variant != NfdsVariant::Neutral {
            t.push(self.sigma_f.ln());
        }
        if variant == NfdsVariant::Heterogeneous {
            t.push(self.sigma_w.ln());
            t.push(self.p_f);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfdsConfig {
    pub vaccine_type: Vec<bool>,
    /// cluster × locus presence.
    pub loci: Vec<Vec<bool>>,
    /// Cluster distribution at t = 0; also the migrant source.
    pub initial_freqs: Vec<f64>,
    pub equilibrium_freqs: Vec<f64>,
    pub pop_size: u64,
    pub generations_per_month: u32,
    /// Observation times in months.
    pub obs_times: Vec<u32>,
    /// Relative sample sizes at the observation times.
    pub obs_weights: Vec<f64>,
    /// Seed of the fixed strong/weak locus assignment.
    pub locus_seed: u64,
}

impl NfdsConfig {
    pub fn n_clusters(&self) -> usize {
        self.vaccine_type.len()
    }

    pub fn n_loci(&self) -> usize {
        self.equilibrium_freqs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_clusters();
        if k < 2 {
            return Err(Error::Config("an NFDS model needs at least 2 clusters".into()));
        }
        if self.loci.len() != k || self.initial_freqs.len() != k {
            return Err(Error::Config("loci and initial_freqs must have one entry per cluster".into()));
        }
        if self.loci.iter().any(|r| r.len() != self.n_loci()) {
            return Err(Error::Config("every loci row must have one entry per locus".into()));
        }
        if self.initial_freqs.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (self.initial_freqs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config("initial_freqs must be a probability vector".into()));
        }
        if self.equilibrium_freqs.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("equilibrium_freqs must lie strictly inside (0, 1)".into()));
        }
        if self.pop_size == 0 || self.generations_per_month == 0 {
            return Err(Error::Config("pop_size and generations_per_month must be positive".into()));
        }
        if self.obs_times.is_empty() || self.obs_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("obs_times must be nonempty and strictly increasing".into()));
        }
        if self.obs_weights.len() != self.obs_times.len() || self.obs_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("obs_weights must be positive, one per observation time".into()));
        }
        Ok(())
    }

    /// Configuration initialized from observed cluster data. Loci are not
    /// part of the file format, so a presence matrix is generated from
    /// `locus_seed`; equilibrium frequencies are the t = 0 locus frequencies.
    pub fn from_population_data(data: &PopulationData, n_loci: usize, locus_seed: u64, pop_size: u64) -> Result<Self> {
        let t0: Vec<u64> = data.rows.iter().map(|r| r.count_t0).collect();
        let total: u64 = t0.iter().sum();
        if total == 0 {
            return Err(Error::EmptyData);
        }
        let initial_freqs: Vec<f64> = t0.iter().map(|&c| c as f64 / total as f64).collect();
        let vaccine_type: Vec<bool> = data.rows.iter().map(|r| r.vt_flag).collect();
        let loci = synthetic_loci(&vaccine_type, n_loci, locus_seed);
        let equilibrium_freqs = locus_freqs(&loci, &initial_freqs).into_iter().map(|f| f.clamp(0.01, 0.99)).collect();
        let w36: u64 = data.rows.iter().map(|r| r.count_t36).sum();
        let w72: u64 = data.rows.iter().map(|r| r.count_t72).sum();
        let cfg = Self {
            vaccine_type,
            loci,
            initial_freqs,
            equilibrium_freqs,
            pop_size,
            generations_per_month: 1,
            obs_times: vec![36, 72],
            obs_weights: vec![w36.max(1) as f64, w72.max(1) as f64],
            locus_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

const SYNTHETIC_LINEAGES: u64 = 8;
const LINEAGE_FIDELITY: f64 = 0.9;

// Clusters belong to one of a few lineages. Each lineage carries a locus with
// a locus-specific rate in [0.05, 0.95]; a cluster copies its lineage's
// profile at each locus with probability LINEAGE_FIDELITY and is otherwise
// redrawn at the same rate. Vaccine status is not used, so vaccine and
// non-vaccine clusters share lineages.
fn synthetic_loci(vt: &[bool], n_loci: usize, seed: u64) -> Vec<Vec<bool>> {
    let rate: Vec<f64> = (0..n_loci).map(|l| 0.05 + 0.9 * hash_unit(split(seed, 0), l as u64)).collect();
    let profile = |g: u64, l: usize| hash_unit(split_path(seed, &[1, g]), l as u64) < rate[l];
    (0..vt.len())
        .map(|i| {
            let g = (hash_unit(split(seed, 2), i as u64) * SYNTHETIC_LINEAGES as f64) as u64;
            let own = split_path(seed, &[3, i as u64]);
            (0..n_loci)
                .map(|l| {
                    if hash_unit(own, 2 * l as u64) < LINEAGE_FIDELITY {
                        profile(g, l)
                    } else {
                        hash_unit(own, 2 * l as u64 + 1) < rate[l]
                    }
                })
                .collect()
        })
        .collect()
}

fn locus_freqs(loci: &[Vec<bool>], freqs: &[f64]) -> Vec<f64> {
    let n_loci = loci.first().map_or(0, |r| r.len());
    let mut f = vec![0.0; n_loci];
    for (row, p) in loci.iter().zip(freqs) {
        for (fl, &has) in f.iter_mut().zip(row) {
            if has {
                *fl += p;
            }
        }
    }
    f
}

/// Split n over blocks in proportion to weights (largest remainder, ties to
/// the earlier block).
pub fn split_sample_size(n: u64, weights: &[f64]) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut rest = n - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

/// Draw `n` isolates without replacement from a population, one at a time.
fn sample_without_replacement(pop: &[u64], n: u64, rng: &mut Rng) -> Vec<u64> {
    let mut left = pop.to_vec();
    let mut remaining_pop: u64 = pop.iter().sum();
    let mut out = vec![0u64; pop.len()];
    for _ in 0..n.min(remaining_pop) {
        let mut r = rng.random_range(0..remaining_pop);
        let i = left
            .iter()
            .position(|&c| {
                if r < c {
                    true
                } else {
                    r -= c;
                    false
                }
            })
            .expect("index within population");
        left[i] -= 1;
        out[i] += 1;
        remaining_pop -= 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct NfdsSimulator {
    cfg: NfdsConfig,
    variant: NfdsVariant,
    bounds: ParamBox,
    cluster_loci: Vec<Vec<usize>>,
}

pub fn nfds_simulator(cfg: NfdsConfig, variant: NfdsVariant) -> Result<NfdsSimulator> {
    cfg.validate()?;
    let cluster_loci = cfg.loci.iter().map(|r| r.iter().enumerate().filter(|(_, &b)| b).map(|(l, _)| l).collect()).collect();
    Ok(NfdsSimulator { variant, bounds: variant.theta_box(), cluster_loci, cfg })
}

impl NfdsSimulator {
    pub fn config(&self) -> &NfdsConfig {
        &self.cfg
    }

    pub fn variant(&self) -> NfdsVariant {
        self.variant
    }

    // Locus l is under strong selection when its hash falls below p_f.
    fn locus_sigmas(&self, p: &NfdsParams) -> Vec<f64> {
        (0..self.cfg.n_loci())
            .map(|l| match self.variant {
                NfdsVariant::Neutral => 0.0,
                NfdsVariant::Homogeneous => p.sigma_f,
                NfdsVariant::Heterogeneous => {
                    if hash_unit(self.cfg.locus_seed, l as u64) < p.p_f {
                        p.sigma_f
                    } else {
                        p.sigma_w
                    }
                }
            })
            .collect()
    }

    /// Population counts at each observation time.
    pub fn trajectory(&self, p: &NfdsParams, seed: u64) -> Vec<Vec<u64>> {
        let mut rng = rng_from_seed(split(seed, 0));
        self.trajectory_with(p, &mut rng)
    }

    fn trajectory_with(&self, p: &NfdsParams, rng: &mut Rng) -> Vec<Vec<u64>> {
        let cfg = &self.cfg;
        let k = cfg.n_clusters();
        let n_pop = cfg.pop_size;
        let sigmas = self.locus_sigmas(p);
        let mut pop = sample_multinomial_with(&cfg.initial_freqs, n_pop, rng).counts().to_vec();
        let mut out = Vec::with_capacity(cfg.obs_times.len());
        let mut generation = 0u64;
        let mut f = vec![0.0; cfg.n_loci()];
        let mut q = vec![0.0; k];
        for &t in &cfg.obs_times {
            let target = t as u64 * cfg.generations_per_month as u64;
            while generation < target {
                f.iter_mut().for_each(|x| *x = 0.0);
                for (loci, &c) in self.cluster_loci.iter().zip(&pop) {
                    for &l in loci {
                        f[l] += c as f64;
                    }
                }
                f.iter_mut().for_each(|x| *x /= n_pop as f64);
                let mut total = 0.0;
                for i in 0..k {
                    if pop[i] == 0 {
                        q[i] = 0.0;
                        continue;
                    }
                    let mut fit = if cfg.vaccine_type[i] { -p.v } else { 0.0 };
                    for &l in &self.cluster_loci[i] {
                        fit += sigmas[l] * (cfg.equilibrium_freqs[l] - f[l]);
                    }
                    q[i] = pop[i] as f64 * fit.exp();
                    total += q[i];
                }
                for (qi, init) in q.iter_mut().zip(&cfg.initial_freqs) {
                    *qi = (1.0 - p.m) * *qi / total + p.m * init;
                }
                pop = sample_multinomial_with(&q, n_pop, rng).counts().to_vec();
                generation += 1;
            }
            out.push(pop.clone());
        }
        out
    }
}

impl Simulator for NfdsSimulator {
    fn k(&self) -> usize {
        self.cfg.n_clusters() * self.cfg.obs_times.len()
    }

    fn dim(&self) -> usize {
        self.variant.dim()
    }

    fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    fn block_sizes(&self) -> Vec<usize> {
        vec![self.cfg.n_clusters(); self.cfg.obs_times.len()]
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        self.variant != NfdsVariant::Heterogeneous || theta[2] > theta[3]
    }

    fn run(&self, theta: &[f64], n: u64, seed: u64) -> Result<CountVector> {
        let p = NfdsParams::from_theta(self.variant, theta)?;
        let sizes = split_sample_size(n, &self.cfg.obs_weights);
        if let Some(&s) = sizes.iter().find(|&&s| s > self.cfg.pop_size) {
            return Err(Error::Domain(format!("sample of {s} exceeds pop_size {}", self.cfg.pop_size)));
        }
        let mut rng = rng_from_seed(split(seed, 0));
        let traj = self.trajectory_with(&p, &mut rng);
        let mut counts = Vec::with_capacity(self.k());
        for (pop, &s) in traj.iter().zip(&sizes) {
            counts.extend(sample_without_replacement(pop, s, &mut rng));
        }
        Ok(CountVector::new(counts))
    }
}

/// One row of the cluster-frequency file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: u32,
    pub vt_flag: bool,
    pub count_t0: u64,
    pub count_t36: u64,
    pub count_t72: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PopulationData {
    pub rows: Vec<ClusterRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    cluster_id: u32,
    vt_flag: String,
    count_t0: u64,
    count_t36: u64,
    count_t72: u64,
}

fn parse_flag(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "vt" => Ok(true),
        "0" | "false" | "nvt" => Ok(false),
        other => Err(Error::Config(format!("vt_flag {other:?} is not one of 0/1/true/false/VT/NVT"))),
    }
}

impl PopulationData {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<RawRecord>().enumerate() {
            let r = rec.map_err(|e| Error::Config(format!("cluster file row {}: {e}", i + 2)))?;
            rows.push(ClusterRecord {
                cluster_id: r.cluster_id,
                vt_flag: parse_flag(&r.vt_flag)?,
                count_t0: r.count_t0,
                count_t36: r.count_t36,
                count_t72: r.count_t72,
            });
        }
        if rows.len() < 2 {
            return Err(Error::Config("cluster file needs at least 2 clusters".into()));
        }
        Ok(Self { rows })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["cluster_id", "vt_flag", "count_t0", "count_t36", "count_t72"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.cluster_id.to_string(),
                u8::from(r.vt_flag).to_string(),
                r.count_t0.to_string(),
                r.count_t36.to_string(),
                r.count_t72.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Counts at t = 36 followed by counts at t = 72.
    pub fn observed_counts(&self) -> CountVector {
        let mut c: Vec<u64> = self.rows.iter().map(|r| r.count_t36).collect();
        c.extend(self.rows.iter().map(|r| r.count_t72));
        CountVector::new(c)
    }
}

pub const DEFAULT_POP_SIZE: u64 = 10_000;
pub const SYNTHETIC_CLUSTERS: usize = 41;
pub const SYNTHETIC_SAMPLE_SIZES: [u64; 3] = [133, 203, 280];
pub const SYNTHETIC_LOCI: usize = 300;

/// Parameters used to generate the synthetic stand-in data set.
pub fn synthetic_truth() -> NfdsParams {
    NfdsParams { m: 0.005, v: 0.088, sigma_f: 0.114, sigma_w: 0.002, p_f: 0.372 }
}

/// A synthetic data set in the cluster-file format: 41 clusters, a t = 0
/// sample of 133 isolates and samples of 203 and 280 isolates at 36 and 72
/// months generated by the heterogeneous model.
pub fn synthetic_massachusetts(seed: u64) -> Result<(PopulationData, NfdsConfig)> {
    synthetic_massachusetts_with(seed, SYNTHETIC_LOCI, DEFAULT_POP_SIZE)
}

/// As [`synthetic_massachusetts`] with a chosen locus count and population size.
pub fn synthetic_massachusetts_with(seed: u64, n_loci: usize, pop_size: u64) -> Result<(PopulationData, NfdsConfig)> {
    let k = SYNTHETIC_CLUSTERS;
    let mut rng = rng_from_seed(split(seed, 0));
    // Skewed cluster weights: an exponential transform of uniform hashes.
    let weights: Vec<f64> = (0..k).map(|i| (-(1.0 - hash_unit(split(seed, 1), i as u64)).ln()).powf(1.5)).collect();
    let total: f64 = weights.iter().sum();
    let truth: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let t0 = sample_multinomial_with(&truth, SYNTHETIC_SAMPLE_SIZES[0], &mut rng);
    let vt: Vec<bool> = (0..k).map(|i| hash_unit(split(seed, 2), i as u64) < 0.25).collect();
    let mut data = PopulationData {
        rows: (0..k)
            .map(|i| ClusterRecord { cluster_id: i as u32 + 1, vt_flag: vt[i], count_t0: t0.counts()[i], count_t36: 0, count_t72: 0 })
            .collect(),
    };
    let mut cfg = NfdsConfig::from_population_data(&data, n_loci, split(seed, 3), pop_size)?;
    cfg.obs_weights = vec![SYNTHETIC_SAMPLE_SIZES[1] as f64, SYNTHETIC_SAMPLE_SIZES[2] as f64];
    let sim = nfds_simulator(cfg.clone(), NfdsVariant::Heterogeneous)?;
    let n = SYNTHETIC_SAMPLE_SIZES[1] + SYNTHETIC_SAMPLE_SIZES[2];
    let obs = sim.run(&synthetic_truth().to_theta(NfdsVariant::Heterogeneous), n, split(seed, 4))?;
    for (i, r) in data.rows.iter_mut().enumerate() {
        r.count_t36 = obs.counts()[i];
        r.count_t72 = obs.counts()[k + i];
    }
    Ok((data, cfg))
}
