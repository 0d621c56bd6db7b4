//! Declarative model-choice experiments: simulate data sets, score every
//! candidate model with each criterion, and tabulate selection rates.

mod config;
mod run;

pub use config::{
    lambda_xy_grid, ExperimentConfig, ExperimentKind, LoglinearSettings, ModelFamily, ModelSpec, NfdsSettings, TrueParam,
};
pub use run::{data_seed, run_experiment, selection_rates, ExperimentOutput, RateRow, Report, Selection};
