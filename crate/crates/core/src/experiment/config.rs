use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bolfi::{BolfiOptions, OutputTransform};
use crate::error::{Error, Result};
use crate::estimate::FitOptions;
use crate::model::{example_model, loglinear_default, multilogit_model, LoglinearVariant, ParametricModel};
use crate::optim::ParamBox;
use crate::razor::{Criterion, QuadratureSettings, MAX_QUADRATURE_DIM};
use crate::simulators::nfds::{NfdsVariant, DEFAULT_POP_SIZE, SYNTHETIC_LOCI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NestedMultilogit,
    Loglinear,
    Nfds,
    Custom,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::NestedMultilogit => "nested_multilogit",
            ExperimentKind::Loglinear => "loglinear",
            ExperimentKind::Nfds => "nfds",
            ExperimentKind::Custom => "custom",
        }
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            ExperimentKind::NestedMultilogit => 1,
            ExperimentKind::Loglinear => 2,
            ExperimentKind::Nfds => 3,
            ExperimentKind::Custom => 4,
        }
    }

    pub const ALL: [ExperimentKind; 4] =
        [ExperimentKind::NestedMultilogit, ExperimentKind::Loglinear, ExperimentKind::Nfds, ExperimentKind::Custom];
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// One data-generating setting.
///
/// * nested_multilogit: `theta` has two entries; the true model is the
///   smallest nested model containing it unless `model` names one.
/// * loglinear: `theta = [λXY]` draws (λX, λY) uniformly per replicate;
///   `theta = [λX, λY, λXY]` is used as given.
/// * nfds: `model` is required and `theta` is on the natural scale
///   (m, v[, σ_f[, σ_w, p_f]]).
/// * custom: `model` names one of `models`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueParam {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoglinearSettings {
    /// Range of the uniformly drawn main effects λX, λY.
    pub main_effect_range: [f64; 2],
}

impl Default for LoglinearSettings {
    fn default() -> Self {
        Self { main_effect_range: [-1.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfdsSettings {
    pub pop_size: u64,
    pub n_loci: usize,
    pub generations_per_month: u32,
    /// Seed of the synthetic cluster data set (ignored with `data_file`).
    pub data_seed: u64,
    /// Cluster file (cluster_id, vt_flag, count_t0, count_t36, count_t72).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    /// Relative sample sizes at the observation times for simulated data.
    pub obs_weights: Vec<f64>,
}

impl Default for NfdsSettings {
    fn default() -> Self {
        Self {
            pop_size: DEFAULT_POP_SIZE,
            n_loci: SYNTHETIC_LOCI,
            generations_per_month: 1,
            data_seed: 1,
            data_file: None,
            obs_weights: vec![1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Multilogit,
    Loglinear,
}

/// A candidate model for the custom experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub family: ModelFamily,
    /// Multilogit: the k−1 non-base predictor rows.
    #[serde(default)]
    pub predictors: Vec<Vec<f64>>,
    #[serde(default)]
    pub active_dims: usize,
    /// Loglinear: two_param or saturated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<LoglinearVariant>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ParametricModel> {
        let bounds = ParamBox::new(self.lower.clone(), self.upper.clone())?;
        let m = match self.family {
            ModelFamily::Multilogit => {
                let rows = self.predictors.len();
                let cols = self.predictors.first().map_or(0, |r| r.len());
                if rows == 0 || self.predictors.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config(format!("model '{}': predictors must be a non-empty rectangular matrix", self.name)));
                }
                let flat: Vec<f64> = self.predictors.iter().flatten().copied().collect();
                multilogit_model(self.name.clone(), &DMatrix::from_row_slice(rows, cols, &flat), self.active_dims, bounds)?
            }
            ModelFamily::Loglinear => {
                let variant = self
                    .variant
                    .ok_or_else(|| Error::Config(format!("model '{}': loglinear models need a variant", self.name)))?;
                let m = crate::model::loglinear_model(variant, bounds)?;
                m.renamed(self.name.clone())
            }
        };
        if m.dim() != self.lower.len() {
            return Err(Error::Config(format!(
                "model '{}': box has {} dimensions but the model has {}",
                self.name,
                self.lower.len(),
                m.dim()
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub true_params: Vec<TrueParam>,
    #[serde(default)]
    pub n_obs: Vec<u64>,
    pub replicates: usize,
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bolfi: BolfiOptions,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
    #[serde(default)]
    pub loglinear: LoglinearSettings,
    #[serde(default)]
    pub nfds: NfdsSettings,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// λXY grid of the log-linear experiment: −0.5, −0.4, …, 0.5.
pub fn lambda_xy_grid() -> Vec<f64> {
    (-5..=5).map(|i| i as f64 / 10.0).collect()
}

impl ExperimentConfig {
    /// Built-in configurations. Desk scale uses 20 replicates and BOLFI
    /// budget 200; full scale uses 100 replicates and budgets of 1000
    /// (nested multilogit) or 2000.
    pub fn preset(kind: ExperimentKind, paper_scale: bool) -> Result<Self> {
        let replicates = if paper_scale { 100 } else { 20 };
        let mut bolfi = BolfiOptions::default();
        if paper_scale {
            bolfi.budget = if kind == ExperimentKind::NestedMultilogit { 1000 } else { 2000 };
        }
        let base = |experiment, true_params, n_obs, criteria, bolfi| ExperimentConfig {
            experiment,
            true_params,
            n_obs,
            replicates,
            criteria,
            master_seed: 20_190_601,
            output_dir: PathBuf::from("out").join(experiment.as_str()),
            bolfi,
            fit: FitOptions::default(),
            quadrature: QuadratureSettings::default(),
            loglinear: LoglinearSettings::default(),
            nfds: NfdsSettings::default(),
            models: vec![],
        };
        let tp = |model: Option<&str>, theta: &[f64]| TrueParam { model: model.map(str::to_string), theta: theta.to_vec() };
        Ok(match kind {
            ExperimentKind::NestedMultilogit => base(
                kind,
                vec![
                    tp(None, &[0.0, 0.0]),
                    tp(None, &[0.2, 0.0]),
                    tp(None, &[0.7, 0.0]),
                    tp(None, &[0.2, 0.2]),
                    tp(None, &[0.7, 0.2]),
                    tp(None, &[0.2, 0.7]),
                    tp(None, &[0.7, 0.7]),
                ],
                vec![100, 1000],
                vec![Criterion::Sic, Criterion::SicJsd, Criterion::SicBolfi],
                bolfi,
            ),
            ExperimentKind::Loglinear => base(
                kind,
                lambda_xy_grid().into_iter().map(|l| tp(None, &[l])).collect(),
                vec![100, 1000],
                vec![Criterion::Sic, Criterion::SicJsd, Criterion::SicBolfi],
                bolfi,
            ),
            ExperimentKind::Nfds => {
                bolfi.transform = OutputTransform::Log;
                let mut c = base(
                    kind,
                    vec![
                        tp(Some("neutral"), &[0.007, 0.05]),
                        tp(Some("homogeneous"), &[0.007, 0.05, 0.007]),
                        tp(Some("heterogeneous"), &[0.005, 0.088, 0.114, 0.002, 0.372]),
                    ],
                    vec![500],
                    vec![Criterion::SicBolfi],
                    bolfi,
                );
                c.nfds.pop_size = 100_000;
                c
            }
            ExperimentKind::Custom => {
                return Err(Error::Config("the custom experiment has no preset; supply a config file".into()))
            }
        })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)
            .map_err(|e| Error::Config(format!("{e} (line {}, column {})", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let r = if is_json { Self::from_json_str(&text) } else { Self::from_toml_str(&text) };
        r.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Switch a config to full scale: 100 replicates and the larger budget.
    pub fn paper_scale(&mut self) {
        self.replicates = 100;
        self.bolfi.budget = if self.experiment == ExperimentKind::NestedMultilogit { 1000 } else { 2000 };
    }

    /// Candidate models (empty for nfds, whose candidates are simulators).
    pub fn candidate_models(&self) -> Result<Vec<ParametricModel>> {
        match self.experiment {
            ExperimentKind::NestedMultilogit => (0..=2).map(example_model).collect(),
            ExperimentKind::Loglinear => {
                Ok(vec![loglinear_default(LoglinearVariant::TwoParam)?, loglinear_default(LoglinearVariant::Saturated)?])
            }
            ExperimentKind::Nfds => Ok(vec![]),
            ExperimentKind::Custom => self.models.iter().map(ModelSpec::build).collect(),
        }
    }

    pub fn candidate_names(&self) -> Result<Vec<String>> {
        if self.experiment == ExperimentKind::Nfds {
            return Ok(NfdsVariant::ALL.iter().map(|v| v.name().to_string()).collect());
        }
        Ok(self.candidate_models()?.iter().map(|m| m.name().to_string()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field '{field}': {msg}")));
        if self.replicates == 0 {
            return bad("replicates", "must be at least 1".into());
        }
        if self.criteria.is_empty() {
            return bad("criteria", "at least one criterion is required".into());
        }
        for (i, c) in self.criteria.iter().enumerate() {
            if self.criteria[..i].contains(c) {
                return bad("criteria", format!("'{}' is listed twice", c.as_str()));
            }
        }
        let nfds_fit_data = self.experiment == ExperimentKind::Nfds && self.true_params.is_empty();
        if self.n_obs.is_empty() && !nfds_fit_data {
            return bad("n_obs", "at least one sample size is required".into());
        }
        for &n in &self.n_obs {
            if n <= 25 {
                return bad("n_obs", format!("{n} is too small; every criterion needs n_obs > 25"));
            }
        }
        if let Err(e) = self.bolfi.validate() {
            return bad("bolfi", e.to_string());
        }
        if self.true_params.is_empty() && !nfds_fit_data {
            return bad("true_params", "at least one data-generating setting is required".into());
        }
        match self.experiment {
            ExperimentKind::Nfds => {
                if let Some(c) = self.criteria.iter().find(|c| **c != Criterion::SicBolfi) {
                    return bad("criteria", format!("'{}' needs explicit probabilities; nfds supports sic_bolfi only", c.as_str()));
                }
                let s = &self.nfds;
                if s.pop_size == 0 || s.n_loci == 0 || s.generations_per_month == 0 {
                    return bad("nfds", "pop_size, n_loci and generations_per_month must be positive".into());
                }
                if s.obs_weights.len() != 2 || s.obs_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return bad("nfds.obs_weights", "two positive weights (t = 36, 72) are required".into());
                }
                for (i, t) in self.true_params.iter().enumerate() {
                    let name = t.model.as_deref().unwrap_or("");
                    let v: NfdsVariant = name
                        .parse()
                        .map_err(|_| Error::Config(format!("field 'true_params[{i}].model': unknown nfds model '{name}'")))?;
                    if t.theta.len() != v.dim() {
                        return bad(&format!("true_params[{i}].theta"), format!("{} needs {} values", v.name(), v.dim()));
                    }
                }
            }
            ExperimentKind::NestedMultilogit => {
                for (i, t) in self.true_params.iter().enumerate() {
                    if t.theta.len() != 2 {
                        return bad(&format!("true_params[{i}].theta"), "two values are required".into());
                    }
                    if let Some(m) = &t.model {
                        if !["M0", "M1", "M2"].contains(&m.as_str()) {
                            return bad(&format!("true_params[{i}].model"), format!("unknown model '{m}'"));
                        }
                    }
                }
            }
            ExperimentKind::Loglinear => {
                let r = self.loglinear.main_effect_range;
                if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                    return bad("loglinear.main_effect_range", "must be an increasing pair".into());
                }
                for (i, t) in self.true_params.iter().enumerate() {
                    if t.theta.len() != 1 && t.theta.len() != 3 {
                        return bad(&format!("true_params[{i}].theta"), "one (λXY) or three (λX, λY, λXY) values".into());
                    }
                }
            }
            ExperimentKind::Custom => {
                if self.models.is_empty() {
                    return bad("models", "custom experiments need candidate models".into());
                }
                let models = self.candidate_models()?;
                let k = models[0].k();
                if models.iter().any(|m| m.k() != k) {
                    return bad("models", "all candidate models must have the same number of categories".into());
                }
                for (i, t) in self.true_params.iter().enumerate() {
                    let Some(name) = &t.model else {
                        return bad(&format!("true_params[{i}].model"), "required for custom experiments".into());
                    };
                    let Some(m) = models.iter().find(|m| m.name() == name) else {
                        return bad(&format!("true_params[{i}].model"), format!("no candidate model named '{name}'"));
                    };
                    if t.theta.len() != m.dim() {
                        return bad(&format!("true_params[{i}].theta"), format!("'{name}' needs {} values", m.dim()));
                    }
                }
            }
        }
        if matches!(self.experiment, ExperimentKind::NestedMultilogit | ExperimentKind::Loglinear | ExperimentKind::Custom)
            && self.criteria.contains(&Criterion::Refined)
        {
            if let Some(m) = self.candidate_models()?.iter().find(|m| m.dim() > MAX_QUADRATURE_DIM) {
                return bad("criteria", format!("refined needs d ≤ {MAX_QUADRATURE_DIM}; '{}' has d = {}", m.name(), m.dim()));
            }
        }
        if self.criteria.contains(&Criterion::Laplace) {
            return bad("criteria", "laplace is available through `score`, not in experiments".into());
        }
        Ok(())
    }
}
