pub mod bolfi;
pub mod categorical;
pub mod divergence;
pub mod error;
pub mod estimate;
pub mod evidence;
pub mod experiment;
pub mod gp;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod razor;
pub mod rng;
pub mod simulators;
pub mod validate;

pub use error::{Error, Result};
