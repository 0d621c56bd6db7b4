//! Categorical distributions on the probability simplex, count vectors and
//! the combinatorics of types.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Sums within this distance of one are renormalized; anything further is
/// rejected.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point on the simplex. Zero entries are allowed; the interior
/// requirement belongs to parametric models, not to distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Domain(format!(
                "a categorical distribution needs k >= 2 categories, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::Domain(format!("probability {p} at category {i} is not a finite nonnegative number")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self::normalized(probs, sum))
    }

    /// Normalize an arbitrary nonnegative weight vector with positive mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Domain("a categorical distribution needs k >= 2 categories".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Domain("weights have zero total mass".into()));
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut probs: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Self { probs }
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2, "uniform distribution needs k >= 2");
        Self { probs: vec![1.0 / k as f64; k] }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// True when every entry is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Shannon entropy in nats, with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn to_csv_row(&self) -> String {
        self.probs.iter().map(|&p| format_g17(p)).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let probs = row
            .trim()
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad probability '{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs
    }
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Integer category counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<u64>", into = "Vec<u64>")]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(vec![0; k])
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn empirical(&self) -> Result<Categorical> {
        empirical_from_counts(self)
    }

    /// Sub-vector of categories `start..start + len`.
    pub fn block(&self, start: usize, len: usize) -> CountVector {
        CountVector::new(self.counts[start..start + len].to_vec())
    }

    pub fn to_csv_row(&self) -> String {
        self.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let counts = row
            .trim()
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|e| Error::Config(format!("bad count '{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(counts))
    }
}

impl From<Vec<u64>> for CountVector {
    fn from(v: Vec<u64>) -> Self {
        Self::new(v)
    }
}

impl From<CountVector> for Vec<u64> {
    fn from(c: CountVector) -> Self {
        c.counts
    }
}

/// Relative frequencies of the categories.
pub fn empirical_from_counts(c: &CountVector) -> Result<Categorical> {
    if c.total == 0 {
        return Err(Error::EmptyData);
    }
    if c.k() < 2 {
        return Err(Error::Domain("count vector needs k >= 2 categories".into()));
    }
    let n = c.total as f64;
    Ok(Categorical { probs: c.counts.iter().map(|&x| x as f64 / n).collect() })
}

/// Draw Multinomial(n, p) counts with the ChaCha8 stream seeded by `seed`.
///
/// Sequential conditional binomials: category i receives
/// Binomial(remaining, p_i / remaining mass).
pub fn sample_multinomial(p: &Categorical, n: u64, seed: u64) -> CountVector {
    let mut rng = rng_from_seed(seed);
    sample_multinomial_with(p.probs(), n, &mut rng)
}

pub(crate) fn sample_multinomial_with<R: rand::Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> CountVector {
    let k = probs.len();
    let mut counts = vec![0u64; k];
    let mut remaining = n;
    let mut mass = 1.0f64;
    for i in 0..k {
        if remaining == 0 {
            break;
        }
        if i == k - 1 {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (probs[i] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
        mass -= probs[i];
    }
    CountVector::new(counts)
}

/// ln(n!) exactly for small n, via ln Γ otherwise.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 20 {
        ((1..=n).product::<u64>() as f64).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// ln of the multinomial coefficient n_o! / prod n_j!, i.e. the log size
/// of the type class of `c`.
pub fn log_type_class_size(c: &CountVector) -> Result<f64> {
    if c.total == 0 {
        return Err(Error::EmptyData);
    }
    Ok(ln_factorial(c.total) - c.counts.iter().map(|&x| ln_factorial(x)).sum::<f64>())
}

/// `%.17g` formatting: 17 significant digits, trailing zeros trimmed,
/// positional notation for exponents in [-5, 17).
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
