//! End-to-end shock-adjusted forecasting: fit the target before its shock,
//! fit each donor with a shock fixed effect, weight the donors by profile
//! similarity and shift the target's forecast by the weighted effect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_garch, fit_shock_fixed_effect, FitConfig, FitResult};
use crate::evaluation::LossTriple;
use crate::garch::{forecast, Adjustment, GarchParams, History, VarianceForecast, DEFAULT_VARIANCE_FLOOR};
use crate::similarity::{
    mean_aggregate, ols_contrast, solve_weights, standardize, weighted_sum, OlsContrast, SemiNorm, VolatilityProfile,
    WeightSolution,
};

/// The series whose post-shock volatility is forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    pub name: String,
    /// Returns through at least `t_star`; only the first `t_star` are used.
    pub returns: Vec<f64>,
    /// Observations before the shock; the forecast origin.
    pub t_star: usize,
    /// Shock-time covariates.
    pub profile: Vec<f64>,
    /// GARCH-X regressors aligned with `returns`, if the model uses any.
    pub regressors: Option<Vec<Vec<f64>>>,
    /// Regressor values for the forecast steps.
    pub next_regressors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonorSeries {
    pub name: String,
    pub returns: Vec<f64>,
    pub t_star: usize,
    pub len_vol: usize,
    pub profile: Vec<f64>,
    pub regressors: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub orders: (usize, usize),
    pub fit: FitConfig,
    pub horizon: usize,
    pub adjustment_length: usize,
    pub seminorm: SemiNorm,
    pub standardize: bool,
    pub variance_floor: f64,
    pub covariate_names: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            orders: (1, 1),
            fit: FitConfig::default(),
            horizon: 1,
            adjustment_length: 1,
            seminorm: SemiNorm::Identity,
            standardize: true,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            covariate_names: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonorFit {
    pub name: String,
    pub fit: FitResult,
}

impl DonorFit {
    pub fn omega_star_hat(&self) -> f64 {
        self.fit.omega_star_hat.unwrap_or(0.0)
    }
}

/// Fitted inputs shared by every forecast variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub target_fit: FitResult,
    pub next_regressors: Vec<f64>,
    pub donor_fits: Vec<DonorFit>,
    /// The unstandardized profile over all donors and covariates.
    pub profile: VolatilityProfile,
    pub config: PipelineConfig,
}

impl Prepared {
    pub fn donor_effects(&self) -> Vec<f64> {
        self.donor_fits.iter().map(DonorFit::omega_star_hat).collect()
    }

    pub fn unadjusted(&self) -> Result<VarianceForecast> {
        self.forecast_with(0.0, 0)
    }

    /// The target's forecast shifted by `omega_star` over the configured
    /// adjustment length.
    pub fn adjusted(&self, omega_star: f64) -> Result<VarianceForecast> {
        self.forecast_with(omega_star, self.config.adjustment_length)
    }

    fn forecast_with(&self, value: f64, length: usize) -> Result<VarianceForecast> {
        let history = History {
            residuals: &self.target_fit.residuals,
            sigma2: &self.target_fit.sigma2,
            next_covariates: &self.next_regressors,
        };
        let adjustment = Adjustment::new(value, length).with_floor(self.config.variance_floor);
        forecast(&self.target_fit.params, &history, self.config.horizon, &adjustment)
    }

    /// Weights and aggregated effect for a (possibly reduced) raw profile
    /// whose donors carry the given effects.
    pub fn weigh(&self, profile: &VolatilityProfile, effects: &[f64]) -> Result<(VolatilityProfile, WeightSolution, f64)> {
        let used = if self.config.standardize { standardize(profile) } else { profile.clone() };
        let solution = solve_weights(&used, &self.config.seminorm)?;
        let omega_star = weighted_sum(&solution.weights, effects)?;
        Ok((used, solution, omega_star))
    }
}

pub fn fit_target(target: &TargetSeries, config: &PipelineConfig) -> Result<FitResult> {
    if target.t_star == 0 || target.t_star > target.returns.len() {
        return Err(Error::InvalidShockWindow { start: target.t_star, end: target.t_star, len: target.returns.len() });
    }
    let regressors = target.regressors.as_ref().map(|r| &r[..target.t_star]);
    if let Some(r) = &target.regressors {
        if r.len() < target.t_star {
            return Err(Error::DimensionMismatch(format!(
                "{} regressor rows for t_star = {}",
                r.len(),
                target.t_star
            )));
        }
    }
    fit_garch(&target.returns[..target.t_star], regressors, config.orders, &config.fit)
}

pub fn fit_donors(donors: &[DonorSeries], config: &PipelineConfig) -> Result<Vec<DonorFit>> {
    donors
        .iter()
        .map(|d| {
            fit_shock_fixed_effect(&d.returns, d.regressors.as_deref(), d.t_star, d.len_vol, config.orders, &config.fit)
                .map(|fit| DonorFit { name: d.name.clone(), fit })
                .map_err(|e| Error::DonorFailed { donor: d.name.clone(), source: Box::new(e) })
        })
        .collect()
}

pub fn build_profile(target: &TargetSeries, donors: &[DonorSeries], config: &PipelineConfig) -> Result<VolatilityProfile> {
    let p = target.profile.len();
    let names = if config.covariate_names.is_empty() {
        (0..p).map(|i| format!("x{}", i + 1)).collect()
    } else {
        config.covariate_names.clone()
    };
    VolatilityProfile::new(
        target.profile.clone(),
        donors.iter().map(|d| d.profile.clone()).collect(),
        names,
        donors.iter().map(|d| d.name.clone()).collect(),
    )
}

pub fn prepare(target: &TargetSeries, donors: &[DonorSeries], config: &PipelineConfig) -> Result<Prepared> {
    if config.horizon == 0 || config.adjustment_length > config.horizon {
        return Err(Error::InvalidParams(format!(
            "need 1 <= horizon and adjustment_length <= horizon (got {} and {})",
            config.horizon, config.adjustment_length
        )));
    }
    let profile = build_profile(target, donors, config)?;
    let target_fit = fit_target(target, config)?;
    let donor_fits = fit_donors(donors, config)?;
    Ok(Prepared {
        target_fit,
        next_regressors: target.next_regressors.clone(),
        donor_fits,
        profile,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastLosses {
    pub ground_truth: f64,
    pub unadjusted: LossTriple,
    pub adjusted: LossTriple,
    pub mean_adjusted: LossTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub target_params: GarchParams,
    pub target_loglik: f64,
    pub target_converged: bool,
    pub donor_names: Vec<String>,
    pub donor_effects: Vec<f64>,
    pub donor_converged: Vec<bool>,
    pub weights: WeightSolution,
    pub omega_star_hat: f64,
    pub omega_star_mean: f64,
    pub unadjusted: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub mean_adjusted: Vec<f64>,
    /// Set when an adjusted forecast was floored at a non-positive value.
    pub adjusted_clamped: bool,
    pub mean_adjusted_clamped: bool,
    pub singular_value_shares: Vec<f64>,
    pub ols: Option<OlsContrast>,
    /// Losses of the first forecast step against the supplied ground truth.
    pub losses: Option<ForecastLosses>,
}

pub fn report(prepared: &Prepared, ground_truth: Option<f64>) -> Result<ForecastReport> {
    let effects = prepared.donor_effects();
    let (used, weights, omega_star_hat) = prepared.weigh(&prepared.profile, &effects)?;
    let omega_star_mean = mean_aggregate(&effects)?;
    let unadjusted = prepared.unadjusted()?;
    let adjusted = prepared.adjusted(omega_star_hat)?;
    let mean_adjusted = prepared.adjusted(omega_star_mean)?;
    let losses = match ground_truth {
        Some(gt) => Some(ForecastLosses {
            ground_truth: gt,
            unadjusted: LossTriple::compute(unadjusted.path[0], gt)?,
            adjusted: LossTriple::compute(adjusted.path[0], gt)?,
            mean_adjusted: LossTriple::compute(mean_adjusted.path[0], gt)?,
        }),
        None => None,
    };
    Ok(ForecastReport {
        target_params: prepared.target_fit.params.clone(),
        target_loglik: prepared.target_fit.loglik,
        target_converged: prepared.target_fit.converged,
        donor_names: prepared.donor_fits.iter().map(|d| d.name.clone()).collect(),
        donor_effects: effects.clone(),
        donor_converged: prepared.donor_fits.iter().map(|d| d.fit.converged).collect(),
        weights,
        omega_star_hat,
        omega_star_mean,
        unadjusted: unadjusted.path,
        adjusted: adjusted.path,
        mean_adjusted: mean_adjusted.path,
        adjusted_clamped: adjusted.clamped,
        mean_adjusted_clamped: mean_adjusted.clamped,
        singular_value_shares: used.singular_value_shares(),
        ols: ols_contrast(&used, &effects).ok(),
        losses,
    })
}

/// [`prepare`] followed by [`report`].
pub fn run_forecast(
    target: &TargetSeries,
    donors: &[DonorSeries],
    ground_truth: Option<f64>,
    config: &PipelineConfig,
) -> Result<ForecastReport> {
    report(&prepare(target, donors, config)?, ground_truth)
}
