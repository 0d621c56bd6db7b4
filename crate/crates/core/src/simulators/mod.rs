//! Built-in simulators: multinomial sampling from explicit models, and the
//! NFDS population model.

pub mod nfds;

use crate::bolfi::Simulator;
use crate::categorical::{sample_multinomial, CountVector};
use crate::error::{Error, Result};
use crate::model::{loglinear_default, Family, LoglinearVariant, ParametricModel};
use crate::optim::ParamBox;

pub use nfds::{nfds_simulator, NfdsConfig, NfdsSimulator, NfdsVariant};

/// Multinomial sampling from a parametric model's probabilities.
#[derive(Clone)]
pub struct ModelSimulator {
    model: ParametricModel,
}

impl ModelSimulator {
    pub fn new(model: ParametricModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &ParametricModel {
        &self.model
    }
}

impl Simulator for ModelSimulator {
    fn k(&self) -> usize {
        self.model.k()
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn bounds(&self) -> &ParamBox {
        self.model.bounds()
    }

    fn run(&self, theta: &[f64], n: u64, seed: u64) -> Result<CountVector> {
        Ok(sample_multinomial(&self.model.probs(theta)?, n, seed))
    }
}

pub fn multilogit_simulator(model: ParametricModel) -> Result<ModelSimulator> {
    match model.family() {
        Family::Multilogit { .. } => Ok(ModelSimulator::new(model)),
        other => Err(Error::Config(format!("expected a multilogit model, got {other:?}"))),
    }
}

/// Log-linear 2×2 simulator on the default box.
pub fn loglinear_simulator(variant: LoglinearVariant) -> Result<ModelSimulator> {
    Ok(ModelSimulator::new(loglinear_default(variant)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_model;

    #[test]
    fn multilogit_law_of_large_numbers() {
        let s = multilogit_simulator(example_model(2).unwrap()).unwrap();
        let c = s.run(&[0.0, 0.0], 3_000_000, 7).unwrap();
        assert_eq!(c.total(), 3_000_000);
        for &x in c.counts() {
            assert!((x as f64 / 3e6 - 1.0 / 3.0).abs() < 0.002);
        }
        assert_eq!(s.run(&[0.0, 0.0], 0, 7).unwrap().counts(), &[0, 0, 0]);
        assert_eq!(s.run(&[0.4, -1.0], 50, 3).unwrap(), s.run(&[0.4, -1.0], 50, 3).unwrap());
    }

    #[test]
    fn loglinear_cells() {
        let s = loglinear_simulator(LoglinearVariant::Saturated).unwrap();
        let n = 2_000_000;
        let c = s.run(&[0.0, 0.0, 0.0], n, 1).unwrap();
        assert!(c.counts().iter().all(|&x| (x as f64 / n as f64 - 0.25).abs() < 0.002));
        let c = s.run(&[0.0, 0.0, 0.5], n, 2).unwrap();
        let e = 0.5f64.exp() / (2.0 * 0.5f64.exp() + 2.0 * (-0.5f64).exp());
        let f: Vec<f64> = c.counts().iter().map(|&x| x as f64 / n as f64).collect();
        assert!((f[0] - e).abs() < 0.002 && (f[3] - e).abs() < 0.002);
        assert!((f[1] - (0.5 - e)).abs() < 0.002);
        assert_eq!(c.total(), n);
    }

    #[test]
    fn wrong_family_rejected() {
        let m = loglinear_default(LoglinearVariant::TwoParam).unwrap();
        assert!(multilogit_simulator(m).is_err());
    }
}
