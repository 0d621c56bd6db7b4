//! Kullback–Leibler and Jensen–Shannon divergences, total variation and the
//! JSD generator function. All values are in nats.

use crate::categorical::{entropy, Categorical};
use crate::error::{check_dims, Error, Result};

pub const LN_2: f64 = std::f64::consts::LN_2;

/// D_KL(P, Q) = sum p_i ln(p_i / q_i) with 0 ln 0 = 0. Returns `+inf` when
/// P puts mass where Q has none.
pub fn kl(p: &Categorical, q: &Categorical) -> Result<f64> {
    check_dims(p.k(), q.k())?;
    Ok(kl_slices(p.probs(), q.probs()))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / qi).ln();
        }
    }
    acc.max(0.0)
}

/// Symmetric Jensen–Shannon divergence, computed as
/// H(M) - H(P)/2 - H(Q)/2 with M the equal mixture. Always in [0, ln 2].
pub fn jsd(p: &Categorical, q: &Categorical) -> Result<f64> {
    check_dims(p.k(), q.k())?;
    Ok(jsd_slices(p.probs(), q.probs()))
}

pub(crate) fn jsd_slices(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut h_m = 0.0;
    let mut h_p = 0.0;
    let mut h_q = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = 0.5 * pi + 0.5 * qi;
        if mi > 0.0 {
            h_m -= mi * mi.ln();
        }
        if pi > 0.0 {
            h_p -= pi * pi.ln();
        }
        if qi > 0.0 {
            h_q -= qi * qi.ln();
        }
    }
    (h_m - (0.5 * h_p + 0.5 * h_q)).clamp(0.0, LN_2)
}

/// Square root of the JSD, a metric on the simplex.
pub fn jsd_sqrt(p: &Categorical, q: &Categorical) -> Result<f64> {
    Ok(jsd(p, q)?.sqrt())
}

/// Variation distance sum |p_i - q_i|, in [0, 2].
pub fn total_variation(p: &Categorical, q: &Categorical) -> Result<f64> {
    check_dims(p.k(), q.k())?;
    Ok(p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum())
}

/// Shannon entropy of `p` in nats.
pub fn shannon_entropy(p: &Categorical) -> f64 {
    entropy(p.probs())
}

/// The JSD generator and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValues {
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_double_prime: f64,
}

/// phi(u) = u ln(u)/2 - (u+1) ln((u+1)/2)/2, the function generating the JSD
/// as a phi-divergence, with phi'(u) = ln(2u / (u+1))/2 and
/// phi''(u) = 1 / (2u(u+1)).
pub fn phi_family(u: f64) -> Result<PhiValues> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::Domain(format!("phi is defined for finite u > 0, got {u}")));
    }
    let half_sum = 0.5 * u + 0.5;
    Ok(PhiValues {
        phi: 0.5 * u * u.ln() - 0.5 * (u + 1.0) * half_sum.ln(),
        phi_prime: 0.5 * (u / half_sum).ln(),
        phi_double_prime: 1.0 / (2.0 * u * (u + 1.0)),
    })
}

/// phi'(p_model / p_data) written as ln(2 p_model / (p_data + p_model)) / 2,
/// the weight each category contributes to the JSD gradient.
#[inline]
pub(crate) fn phi_prime_ratio(p_data: f64, p_model: f64) -> f64 {
    0.5 * (2.0 * p_model / (p_data + p_model)).ln()
}
