//! Small-instance exact oracles: model evidence, the razor upper bound and
//! the small-tolerance limit of the ABC acceptance rate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::categorical::{format_g17, log_type_class_size, CountVector};
use crate::divergence::{jsd_slices, kl_slices};
use crate::error::{check_dims, Error, Result};
use crate::model::{det, fisher_info, ParametricModel};
use crate::quadrature::{tensor_nodes, KahanSum};

pub const MAX_EVIDENCE_DIM: usize = 2;
pub const MAX_ENUMERATION: f64 = 1e5;
pub const CHAIN_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_GRID_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    UniformOnBox,
    Jeffreys,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// Gauss–Legendre nodes per dimension.
    pub nodes: usize,
}

impl PriorSpec {
    pub fn uniform_on_box(nodes: usize) -> Self {
        Self { kind: PriorKind::UniformOnBox, nodes }
    }

    pub fn jeffreys(nodes: usize) -> Self {
        Self { kind: PriorKind::Jeffreys, nodes }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::Config(format!("prior quadrature needs at least 8 nodes, got {}", self.nodes)));
        }
        Ok(())
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::uniform_on_box(64)
    }
}

/// Quadrature nodes carrying prior mass (weights sum to one). For d = 0 the
/// prior is a point mass at the empty parameter.
fn prior_nodes(m: &ParametricModel, prior: &PriorSpec) -> Result<Vec<(Vec<f64>, f64)>> {
    prior.validate()?;
    let d = m.dim();
    if d > MAX_EVIDENCE_DIM {
        return Err(Error::UnsupportedDimension { dim: d, max: MAX_EVIDENCE_DIM });
    }
    if d == 0 {
        return Ok(vec![(vec![], 1.0)]);
    }
    let mut nodes = tensor_nodes(m.bounds(), prior.nodes);
    if prior.kind == PriorKind::Jeffreys {
        for (x, w) in nodes.iter_mut() {
            *w *= det(&fisher_info(m, x)?).max(0.0).sqrt();
        }
    }
    let mut total = KahanSum::default();
    nodes.iter().for_each(|(_, w)| total.add(*w));
    let total = total.value();
    if !(total > 0.0) {
        return Err(Error::Domain("prior has zero mass on the box".into()));
    }
    nodes.iter_mut().for_each(|(_, w)| *w /= total);
    Ok(nodes)
}

// ln P_θ(D) for one particular sequence with counts c.
fn log_sequence_prob(p: &[f64], c: &[u64]) -> f64 {
    c.iter().zip(p).filter(|(&n, _)| n > 0).map(|(&n, &q)| n as f64 * q.ln()).sum()
}

fn check_counts(m: &ParametricModel, c: &CountVector) -> Result<()> {
    check_dims(m.k(), c.k())?;
    if c.total() == 0 {
        return Err(Error::EmptyData);
    }
    Ok(())
}

/// ∫ P_θ(D) p(θ) dθ, with P_θ(D) the probability of the observed sequence.
pub fn model_evidence(m: &ParametricModel, c: &CountVector, prior: &PriorSpec) -> Result<f64> {
    check_counts(m, c)?;
    let mut acc = KahanSum::default();
    for (x, w) in prior_nodes(m, prior)? {
        acc.add(w * log_sequence_prob(&m.probs_vec(&x), c.counts()).exp());
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RazorBounds {
    /// Type-class-scaled evidence ∫ P_θ(type of D) p dθ.
    pub evidence_scaled: f64,
    /// ∫ exp(−n KL(p̂_D, P_θ)) p dθ.
    pub kl_razor: f64,
    /// ∫ exp(−2n JSD(p̂_D, P_θ)) p dθ.
    pub jsd_razor: f64,
}

impl RazorBounds {
    pub fn chain_holds(&self, tol: f64) -> bool {
        self.evidence_scaled <= self.kl_razor * (1.0 + tol) + tol && self.kl_razor <= self.jsd_razor * (1.0 + tol) + tol
    }
}

/// The three integrals of the evidence/razor chain. Fails with a
/// constraint error if the chain is violated beyond `CHAIN_TOLERANCE`.
pub fn razor_bound_check(m: &ParametricModel, c: &CountVector, prior: &PriorSpec) -> Result<RazorBounds> {
    check_counts(m, c)?;
    let p_hat = c.empirical()?;
    let n = c.total() as f64;
    let log_coef = log_type_class_size(c)?;
    let mut ev = KahanSum::default();
    let mut klr = KahanSum::default();
    let mut jsr = KahanSum::default();
    for (x, w) in prior_nodes(m, prior)? {
        let p = m.probs_vec(&x);
        ev.add(w * (log_coef + log_sequence_prob(&p, c.counts())).exp());
        klr.add(w * (-n * kl_slices(p_hat.probs(), &p)).exp());
        jsr.add(w * (-2.0 * n * jsd_slices(p_hat.probs(), &p)).exp());
    }
    let b = RazorBounds { evidence_scaled: ev.value(), kl_razor: klr.value(), jsd_razor: jsr.value() };
    if !b.chain_holds(CHAIN_TOLERANCE) {
        return Err(Error::Constraint(format!("razor chain violated: {b:?}")));
    }
    Ok(b)
}

/// Every count vector of length k summing to n, each with the number of
/// sequences in A^n that have it as their type, found by enumerating all
/// k^n sequences.
pub fn enumerate_types(k: usize, n: u64) -> Result<BTreeMap<Vec<u64>, u64>> {
    if k < 2 {
        return Err(Error::Config("enumeration needs k >= 2".into()));
    }
    let size = (k as f64).powf(n as f64);
    if size > MAX_ENUMERATION {
        return Err(Error::UnsupportedScale(format!("k^n = {size} exceeds {MAX_ENUMERATION}")));
    }
    let mut out = BTreeMap::new();
    let mut seq = vec![0usize; n as usize];
    loop {
        let mut c = vec![0u64; k];
        seq.iter().for_each(|&s| c[s] += 1);
        *out.entry(c).or_insert(0) += 1;
        let mut i = 0;
        loop {
            if i == seq.len() {
                return Ok(out);
            }
            seq[i] += 1;
            if seq[i] < k {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub epsilon: f64,
    /// ∫ P_θ^{(n)}(A_ε) p(θ) dθ
    pub integral: f64,
    /// n_o!/Π n_j! · evidence
    pub limit_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTable {
    pub rows: Vec<AcceptanceRow>,
    /// Smallest positive √JSD between two distinct types.
    pub min_gap: f64,
}

impl AcceptanceTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["epsilon", "integral", "limit_target"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([format_g17(r.epsilon), format_g17(r.integral), format_g17(r.limit_target)]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// `size` log-spaced values from √ln2 down to half the smallest gap.
pub fn default_epsilon_grid(min_gap: f64, size: usize) -> Vec<f64> {
    let hi = std::f64::consts::LN_2.sqrt();
    let lo = 0.5 * min_gap;
    if size < 2 {
        return vec![hi];
    }
    (0..size).map(|i| hi * (lo / hi).powf(i as f64 / (size - 1) as f64)).collect()
}

fn empirical(c: &[u64], n: u64) -> Vec<f64> {
    c.iter().map(|&x| x as f64 / n as f64).collect()
}

/// ABC acceptance rate ∫ P_θ^{(n)}(A_ε) p dθ at n = n_o for each ε, where
/// A_ε holds the sequences whose type lies within √JSD ≤ ε of p̂_D.
pub fn acceptance_rate_limit(
    m: &ParametricModel,
    c: &CountVector,
    prior: &PriorSpec,
    epsilon_grid: Option<&[f64]>,
) -> Result<AcceptanceTable> {
    check_counts(m, c)?;
    let n = c.total();
    let types = enumerate_types(m.k(), n)?;
    let nodes = prior_nodes(m, prior)?;
    let p_hat = empirical(c.counts(), n);
    let keys: Vec<&Vec<u64>> = types.keys().collect();
    let freqs: Vec<Vec<f64>> = keys.iter().map(|t| empirical(t, n)).collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            let g = jsd_slices(&freqs[i], &freqs[j]).sqrt();
            if g > 0.0 {
                min_gap = min_gap.min(g);
            }
        }
    }
    // Prior-integrated probability of each whole type class.
    let mut mass = Vec::with_capacity(keys.len());
    for (t, &mult) in types.iter() {
        let mut acc = KahanSum::default();
        for (x, w) in &nodes {
            acc.add(w * log_sequence_prob(&m.probs_vec(x), t).exp());
        }
        mass.push(mult as f64 * acc.value());
    }
    let dist: Vec<f64> = freqs.iter().map(|f| jsd_slices(&p_hat, f).sqrt()).collect();
    let limit_target = log_type_class_size(c)?.exp() * model_evidence(m, c, prior)?;
    let grid = match epsilon_grid {
        Some(g) => g.to_vec(),
        None => default_epsilon_grid(min_gap, DEFAULT_GRID_SIZE),
    };
    let rows = grid
        .into_iter()
        .map(|eps| {
            let mut acc = KahanSum::default();
            dist.iter().zip(&mass).filter(|(d, _)| **d <= eps).for_each(|(_, m)| acc.add(*m));
            AcceptanceRow { epsilon: eps, integral: acc.value(), limit_target }
        })
        .collect();
    Ok(AcceptanceTable { rows, min_gap })
}

/// P_θ^{(n)}(A_ε) at a single θ, by the same enumeration.
pub fn acceptance_probability(m: &ParametricModel, theta: &[f64], c: &CountVector, epsilon: f64) -> Result<f64> {
    check_counts(m, c)?;
    let n = c.total();
    let p = m.probs_vec(theta);
    let p_hat = empirical(c.counts(), n);
    let mut acc = KahanSum::default();
    for (t, mult) in enumerate_types(m.k(), n)? {
        if jsd_slices(&p_hat, &empirical(&t, n)).sqrt() <= epsilon {
            acc.add(mult as f64 * log_sequence_prob(&p, &t).exp());
        }
    }
    Ok(acc.value())
}
