//! Gauss–Legendre rules and tensor-product integration over a box.

use crate::optim::ParamBox;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(n, z).1;
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

// P_n(z) and P_n'(z) by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Tensor-product rule on the box: every node with its product weight
/// (Jacobian of the affine map included).
pub fn tensor_nodes(bounds: &ParamBox, n: usize) -> Vec<(Vec<f64>, f64)> {
    let d = bounds.dim();
    let (x, w) = gauss_legendre(n);
    let total = n.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut point = Vec::with_capacity(d);
        let mut weight = 1.0;
        for s in 0..d {
            let half = 0.5 * bounds.width(s);
            point.push(bounds.lower()[s] + half * (x[idx[s]] + 1.0));
            weight *= half * w[idx[s]];
        }
        out.push((point, weight));
        for s in 0..d {
            idx[s] += 1;
            if idx[s] < n {
                break;
            }
            idx[s] = 0;
        }
    }
    out
}

/// ∫_box f with an n-point Gauss–Legendre rule per coordinate.
pub fn integrate<F: FnMut(&[f64]) -> f64>(bounds: &ParamBox, n: usize, mut f: F) -> f64 {
    let mut acc = KahanSum::default();
    for (x, w) in tensor_nodes(bounds, n) {
        acc.add(w * f(&x));
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_polynomials() {
        for n in [5, 16, 32, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            assert!((v - 2.0 / deg as f64).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn box_integrals() {
        let b = ParamBox::from_pairs(&[(0.0, 1.0), (-1.0, 2.0)]).unwrap();
        let v = integrate(&b, 8, |x| x[0] * x[1] * x[1]);
        assert!((v - 0.5 * 3.0).abs() < 1e-13);
        let g = integrate(&ParamBox::cube(1, -3.0, 3.0).unwrap(), 64, |x| (-x[0] * x[0]).exp());
        let exact = std::f64::consts::PI.sqrt() * statrs::function::erf::erf(3.0);
        assert!((g - exact).abs() < 1e-13);
        assert_eq!(integrate(&ParamBox::empty(), 10, |_| 2.5), 2.5);
    }

    #[test]
    fn compensated_sum() {
        let mut s = KahanSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }
}
