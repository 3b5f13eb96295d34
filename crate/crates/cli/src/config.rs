//! TOML run configurations.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use shockvol::estimation::{Demean, FitConfig, VarianceInit};
use shockvol::garch::{CovariateModel, GarchParams, ShockSpec};
use shockvol::montecarlo::{CellParams, Design, GridConfig, GridParameter};
use shockvol::multiverse::LossKind;

use crate::error::{CliError, CliResult};

/// Seed used when neither the command line nor the configuration sets one.
pub const DEFAULT_SEED: u64 = 20240101;

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsToml {
    pub omega: f64,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl ParamsToml {
    pub fn to_params(&self) -> CliResult<GarchParams> {
        Ok(GarchParams::new(self.omega, self.alpha.clone(), self.beta.clone(), self.gamma.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    pub length: usize,
    pub params: ParamsToml,
    pub shock: Option<ShockSpec>,
    pub covariates: Option<CovariateModel>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelToml {
    pub orders: Option<(usize, usize)>,
    pub horizon: Option<usize>,
    pub adjustment_length: Option<usize>,
    pub standardize: Option<bool>,
    /// "sample-mean", "zero" or a fixed mean.
    pub demean: Option<DemeanToml>,
    pub variance_init: Option<VarianceInit>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    /// Row-major p × p weighting matrix; identity when absent.
    pub seminorm: Option<Vec<Vec<f64>>>,
    /// Pre-shock observations used for estimation; all when absent.
    pub estimation_window: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DemeanToml {
    Named(String),
    Value(f64),
}

impl DemeanToml {
    pub fn to_demean(&self) -> CliResult<Demean> {
        match self {
            DemeanToml::Named(s) if s == "sample-mean" => Ok(Demean::SampleMean),
            DemeanToml::Named(s) if s == "zero" => Ok(Demean::Zero),
            DemeanToml::Named(s) => Err(CliError::validation(format!("demean {s:?}: expected \"sample-mean\", \"zero\" or a number"))),
            DemeanToml::Value(v) => Ok(Demean::Supplied(*v)),
        }
    }
}

impl ModelToml {
    pub fn fit_config(&self) -> CliResult<FitConfig> {
        let d = FitConfig::default();
        Ok(FitConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            demean: self.demean.as_ref().map(DemeanToml::to_demean).transpose()?.unwrap_or(d.demean),
            variance_init: self.variance_init.unwrap_or(d.variance_init),
            standard_errors: false,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesToml {
    pub name: String,
    /// Path to the returns CSV, relative to the bundle file.
    pub returns: PathBuf,
    pub shock_date: Option<String>,
    pub t_star: Option<usize>,
    /// Shock-window length; donors only.
    pub len_vol: Option<usize>,
    /// Inline shock-time covariates, instead of a row of the profiles file.
    pub covariates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntradayToml {
    pub path: PathBuf,
    /// Days averaged, starting at the first day in the file.
    #[serde(default = "one")]
    pub days: usize,
    #[serde(default = "seventy_seven")]
    pub m: usize,
    #[serde(default = "yes")]
    pub drop_first_block: bool,
    /// Multiplies the realized variance, e.g. 1e4 for percent returns.
    #[serde(default = "unit")]
    pub scale: f64,
}

fn one() -> usize {
    1
}
fn seventy_seven() -> usize {
    77
}
fn yes() -> bool {
    true
}
fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MultiverseToml {
    pub loss: Option<LossKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleToml {
    pub covariates: Vec<String>,
    pub profiles: Option<PathBuf>,
    pub ground_truth: Option<f64>,
    #[serde(default)]
    pub model: ModelToml,
    pub intraday: Option<IntradayToml>,
    pub target: SeriesToml,
    pub donors: Vec<SeriesToml>,
    #[serde(default)]
    pub multiverse: MultiverseToml,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisToml {
    pub parameter: GridParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DesignToml {
    pub n_donors: Option<usize>,
    pub p: Option<usize>,
    pub t_min: Option<usize>,
    pub t_max: Option<usize>,
    pub len_vol: Option<usize>,
    pub shock_region: Option<(f64, f64)>,
    pub params: Option<ParamsToml>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridToml {
    pub seed: Option<u64>,
    pub replications: usize,
    #[serde(default)]
    pub fixed: CellParams,
    pub axis1: AxisToml,
    pub axis2: AxisToml,
    #[serde(default)]
    pub design: DesignToml,
}

impl GridToml {
    pub fn to_config(&self, seed_override: Option<u64>) -> CliResult<GridConfig> {
        let d = Design::default();
        let dt = &self.design;
        let design = Design {
            n_donors: dt.n_donors.unwrap_or(d.n_donors),
            p: dt.p.unwrap_or(d.p),
            t_range: (dt.t_min.unwrap_or(d.t_range.0), dt.t_max.unwrap_or(d.t_range.1)),
            base_params: match &dt.params {
                Some(p) => p.to_params()?,
                None => d.base_params.clone(),
            },
            len_vol: dt.len_vol.unwrap_or(d.len_vol),
            shock_region: dt.shock_region.unwrap_or(d.shock_region),
            fit: d.fit,
        };
        let config = GridConfig {
            fixed: self.fixed,
            axis1: (self.axis1.parameter, self.axis1.values.clone()),
            axis2: (self.axis2.parameter, self.axis2.values.clone()),
            replications: self.replications,
            design,
            seed: seed_override.or(self.seed).unwrap_or(DEFAULT_SEED),
        };
        config.validate()?;
        Ok(config)
    }
}
