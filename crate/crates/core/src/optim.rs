//! Derivative-free minimization on a box and space-filling designs.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash_unit, Rng};

/// Axis-aligned compact parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Config(format!("box coordinate {i}: need finite lower < upper, got [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    /// The same interval on every coordinate.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn empty() -> Self {
        Self { lower: vec![], upper: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &v)| v > self.lower[i] && v < self.upper[i])
    }

    /// Distance (in the max norm) from `x` to the nearest face.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.lower[i]).min(self.upper[i] - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &v)| v.clamp(self.lower[i], self.upper[i])).collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &v)| (v - self.lower[i]) / self.width(i)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &v)| self.lower[i] + v * self.width(i)).collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Convergence when the simplex function spread falls below this.
    pub f_tol: f64,
    /// ... and every vertex lies within this distance of the best one.
    pub x_tol: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 2000, f_tol: 1e-10, x_tol: 1e-8, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Penalty weight on the squared distance between a trial point and its
/// projection onto the box.
pub const BOX_PENALTY: f64 = 1e3;

/// Nelder–Mead with adaptive coefficients (Gao & Han 2012). The objective
/// is evaluated at the clamped point plus [`BOX_PENALTY`] times the squared
/// clamp distance; the returned point is always inside the box.
///
/// After the first convergence the simplex is rebuilt around the best point
/// and the search resumes once, which guards against collapsed simplices.
pub fn minimize_in_box<F>(f: F, bounds: &ParamBox, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_in_box_with(f, bounds, x0, opts, true)
}

/// As [`minimize_in_box`]; `restart = false` skips the second pass.
pub fn minimize_in_box_with<F>(mut f: F, bounds: &ParamBox, x0: &[f64], opts: &NelderMeadOptions, restart: bool) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let d = bounds.dim();
    assert_eq!(x0.len(), d);
    if d == 0 {
        return Minimum { x: vec![], f: f(&[]), evaluations: 1, converged: true };
    }
    let mut evals = 0usize;
    let mut penalized = |x: &[f64]| {
        evals += 1;
        let c = bounds.clamp(x);
        let dist2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = f(&c);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v + BOX_PENALTY * dist2
        }
    };
    let steps: Vec<f64> = (0..d).map(|i| opts.initial_step * bounds.width(i)).collect();
    let first = nelder_mead(&mut penalized, &bounds.clamp(x0), &steps, opts);
    if !restart {
        let x = bounds.clamp(&first.x);
        return Minimum { f: first.f.min(f64::MAX), x, evaluations: evals, converged: first.converged };
    }
    let small: Vec<f64> = steps.iter().map(|s| s * 1e-2).collect();
    let second = nelder_mead(&mut penalized, &first.x, &small, opts);
    let (x, fx, converged) = if second.f <= first.f {
        (second.x, second.f, first.converged && second.converged)
    } else {
        (first.x, first.f, first.converged && second.converged)
    };
    let x = bounds.clamp(&x);
    Minimum { f: fx.min(f64::MAX), x, evaluations: evals, converged }
}

struct RawMin {
    x: Vec<f64>,
    f: f64,
    converged: bool,
}

fn nelder_mead<F>(f: &mut F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> RawMin
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.abs() <= opts.f_tol && size <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-alpha);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-alpha * beta);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-alpha * gamma);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(gamma);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = simplex[0][j] + delta * (simplex[i][j] - simplex[0][j]);
            }
            values[i] = f(&simplex[i]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty simplex");
    RawMin { x: simplex[best].clone(), f: values[best], converged }
}

/// Latin hypercube design of `n` points in the box: every coordinate has
/// exactly one point in each of its `n` equal-width strata.
pub fn latin_hypercube(n: usize, bounds: &ParamBox, rng: &mut Rng) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let columns: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            perm
        })
        .collect();
    (0..n)
        .map(|r| {
            (0..d)
                .map(|j| {
                    let stratum = columns[j][r] as f64;
                    let u: f64 = rng.random();
                    bounds.lower()[j] + (stratum + u) / n as f64 * bounds.width(j)
                })
                .collect()
        })
        .collect()
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `[0,1)^dim`, rotated by a
/// seed-dependent Cranley–Patterson shift. Prefixes are nested, so a longer
/// design always extends a shorter one.
pub fn halton_point(index: u64, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton design supports up to {} dimensions", PRIMES.len());
    (0..dim)
        .map(|j| {
            let shift = hash_unit(seed, j as u64);
            (radical_inverse(index + 1, PRIMES[j]) + shift).fract()
        })
        .collect()
}
