//! GARCH-X(m, s) variance recursion, simulation with news shocks, and
//! conditional-expectation forecasting.
//!
//! Time is stored 0-based. A shock "after `t_star`" means `t_star`
//! observations precede the news, so the shock window occupies array
//! indices `t_star..t_star + len`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// Lower bound used in place of a non-positive adjusted forecast.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

/// Parameters of one GARCH-X(m, s) variance equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl GarchParams {
    pub fn new(omega: f64, alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let params = Self { omega, alpha, beta, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn garch11(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(omega, vec![alpha], vec![beta], Vec::new())
    }

    /// Checks positivity of the intercept and nonnegativity of the feedback
    /// coefficients. Stationarity is checked separately.
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega must be positive, got {}", self.omega)));
        }
        for (name, coefs) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if let Some(c) = coefs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(Error::InvalidParams(format!("{name} coefficients must be nonnegative, got {c}")));
            }
        }
        if let Some(g) = self.gamma.iter().find(|g| !g.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be finite, got {g}")));
        }
        Ok(())
    }

    pub fn arch_order(&self) -> usize {
        self.alpha.len()
    }

    pub fn garch_order(&self) -> usize {
        self.beta.len()
    }

    pub fn max_lag(&self) -> usize {
        self.alpha.len().max(self.beta.len())
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        self.persistence() < 1.0
    }

    fn covariate_term(&self, v: &[f64]) -> f64 {
        self.gamma.iter().zip(v).map(|(g, x)| g * x).sum()
    }
}

/// `omega / (1 - sum(alpha) - sum(beta))`.
pub fn unconditional_variance(params: &GarchParams) -> Result<f64> {
    params.validate()?;
    let persistence = params.persistence();
    if persistence >= 1.0 {
        return Err(Error::NonstationaryParams { persistence });
    }
    Ok(params.omega / (1.0 - persistence))
}

/// One step of the shocked variance equation. Lags are most-recent-first.
pub fn variance_step(
    params: &GarchParams,
    lagged_a2: &[f64],
    lagged_sigma2: &[f64],
    v_t: &[f64],
    omega_star_t: f64,
) -> Result<f64> {
    if lagged_a2.len() < params.arch_order() || lagged_sigma2.len() < params.garch_order() {
        return Err(Error::DimensionMismatch(format!(
            "need {} squared-residual and {} variance lags, got {} and {}",
            params.arch_order(),
            params.garch_order(),
            lagged_a2.len(),
            lagged_sigma2.len()
        )));
    }
    if v_t.len() != params.gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "covariate vector has length {}, gamma has length {}",
            v_t.len(),
            params.gamma.len()
        )));
    }
    if let Some(s) = lagged_sigma2.iter().take(params.garch_order()).find(|s| **s <= 0.0) {
        return Err(Error::InvalidParams(format!("lagged variance must be positive, got {s}")));
    }
    let arch: f64 = params.alpha.iter().zip(lagged_a2).map(|(a, x)| a * x).sum();
    let garch: f64 = params.beta.iter().zip(lagged_sigma2).map(|(b, s)| b * s).sum();
    let value = params.omega + omega_star_t + arch + garch + params.covariate_term(v_t);
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonpositiveVariance { t: 0, value })
    }
}

/// A contiguous block of indices carrying a shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockWindow {
    pub start: usize,
    pub len: usize,
}

impl ShockWindow {
    /// The window that follows `t_star` pre-shock observations.
    pub fn after(t_star: usize, len: usize) -> Self {
        Self { start: t_star, len }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end()
    }

    pub fn check_fits(&self, series_len: usize) -> Result<()> {
        if self.end() > series_len {
            Err(Error::InvalidShockWindow { start: self.start, end: self.end(), len: series_len })
        } else {
            Ok(())
        }
    }
}

/// Timing and shock-equation parameters for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    /// Number of observations before the news arrives.
    pub t_star: usize,
    pub len_vol: usize,
    #[serde(default)]
    pub len_return: usize,
    pub mu_omega_star: f64,
    /// Loadings of the shock on the covariates; empty means all zero.
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub sigma_u: f64,
    #[serde(default)]
    pub mu_eps_star: f64,
    #[serde(default)]
    pub sigma_eps_star: f64,
}

impl ShockSpec {
    /// A deterministic volatility shock of size `mu_omega_star`.
    pub fn volatility_only(t_star: usize, len_vol: usize, mu_omega_star: f64) -> Self {
        Self {
            t_star,
            len_vol,
            len_return: 0,
            mu_omega_star,
            delta: Vec::new(),
            sigma_u: 0.0,
            mu_eps_star: 0.0,
            sigma_eps_star: 0.0,
        }
    }

    pub fn vol_window(&self) -> ShockWindow {
        ShockWindow::after(self.t_star, self.len_vol)
    }

    pub fn return_window(&self) -> ShockWindow {
        ShockWindow::after(self.t_star, self.len_return)
    }

    fn validate(&self, series_len: usize, p: usize) -> Result<()> {
        if self.t_star == 0 || self.t_star >= series_len {
            return Err(Error::InvalidShockWindow {
                start: self.t_star,
                end: self.t_star + self.len_vol.max(self.len_return),
                len: series_len,
            });
        }
        self.vol_window().check_fits(series_len)?;
        self.return_window().check_fits(series_len)?;
        if !self.delta.is_empty() && self.delta.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "delta has length {}, covariate model has p = {p}",
                self.delta.len()
            )));
        }
        if self.sigma_u < 0.0 || self.sigma_eps_star < 0.0 {
            return Err(Error::InvalidParams("shock standard deviations must be nonnegative".into()));
        }
        Ok(())
    }
}

/// i.i.d. normal covariates with a common mean and a common standard
/// deviation (independent components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub p: usize,
    pub mean: f64,
    pub sd: f64,
}

impl CovariateModel {
    pub fn none() -> Self {
        Self { p: 0, mean: 0.0, sd: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub returns: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// One row per time index.
    pub covariates: Vec<Vec<f64>>,
    pub omega_star_path: Vec<f64>,
}

impl SimulatedPath {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

// Independent ChaCha streams keep the draw layout fixed regardless of which
// shock components are switched on.
const STREAM_COVARIATES: u64 = 0;
const STREAM_INNOVATIONS: u64 = 1;
const STREAM_SHOCK_NOISE: u64 = 2;
const STREAM_LEVEL_SHOCK: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates a path of the shocked GARCH-X model with standard normal
/// innovations. Pre-sample lags are set to the unconditional variance.
pub fn simulate_path(
    params: &GarchParams,
    shock: Option<&ShockSpec>,
    len: usize,
    covariate_model: &CovariateModel,
    seed: u64,
) -> Result<SimulatedPath> {
    params.validate()?;
    let sigma2_0 = unconditional_variance(params)?;
    if len < params.max_lag() + 1 {
        return Err(Error::InsufficientHistory { needed: params.max_lag() + 1, got: len });
    }
    let p = covariate_model.p;
    if !params.gamma.is_empty() && params.gamma.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "gamma has length {}, covariate model has p = {p}",
            params.gamma.len()
        )));
    }
    if !(covariate_model.sd >= 0.0) {
        return Err(Error::InvalidParams("covariate sd must be nonnegative".into()));
    }
    if let Some(s) = shock {
        s.validate(len, p)?;
    }

    let mut cov_rng = stream(seed, STREAM_COVARIATES);
    let covariates: Vec<Vec<f64>> = (0..len)
        .map(|_| {
            (0..p)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut cov_rng);
                    covariate_model.mean + covariate_model.sd * z
                })
                .collect()
        })
        .collect();

    let mut omega_star_path = vec![0.0; len];
    let mut level_shock = 0.0;
    let mut return_window = ShockWindow::after(0, 0);
    if let Some(s) = shock {
        let mut u_rng = stream(seed, STREAM_SHOCK_NOISE);
        for t in s.vol_window().range() {
            let u: f64 = StandardNormal.sample(&mut u_rng);
            let loading: f64 = s.delta.iter().zip(&covariates[t]).map(|(d, v)| d * v).sum();
            omega_star_path[t] = s.mu_omega_star + loading + s.sigma_u * u;
        }
        let z: f64 = StandardNormal.sample(&mut stream(seed, STREAM_LEVEL_SHOCK));
        level_shock = s.mu_eps_star + s.sigma_eps_star * z;
        return_window = s.return_window();
    }

    let mut eps_rng = stream(seed, STREAM_INNOVATIONS);
    let m = params.arch_order();
    let s_order = params.garch_order();
    let mut a2_lags = vec![sigma2_0; m];
    let mut sigma2_lags = vec![sigma2_0; s_order];
    let mut returns = Vec::with_capacity(len);
    let mut sigma2 = Vec::with_capacity(len);
    for t in 0..len {
        let v_t: &[f64] = if params.gamma.is_empty() { &[] } else { &covariates[t] };
        let s2 = variance_step(params, &a2_lags, &sigma2_lags, v_t, omega_star_path[t])
            .map_err(|e| with_time(e, t))?;
        let eps: f64 = StandardNormal.sample(&mut eps_rng);
        let innovation = if return_window.contains(t) { level_shock } else { eps };
        let a = s2.sqrt() * innovation;
        push_lag(&mut a2_lags, a * a);
        push_lag(&mut sigma2_lags, s2);
        returns.push(a);
        sigma2.push(s2);
    }

    Ok(SimulatedPath { returns, sigma2, covariates, omega_star_path })
}

fn push_lag(lags: &mut [f64], value: f64) {
    if lags.is_empty() {
        return;
    }
    lags.rotate_right(1);
    lags[0] = value;
}

fn with_time(err: Error, t: usize) -> Error {
    match err {
        Error::NonpositiveVariance { value, .. } => Error::NonpositiveVariance { t, value },
        other => other,
    }
}

/// Runs the variance recursion over observed residuals. `shock` adds a
/// constant intercept shift on its window; `sigma2_init` seeds every
/// pre-sample lag.
pub fn filter_variance(
    params: &GarchParams,
    residuals: &[f64],
    covariates: Option<&[Vec<f64>]>,
    shock: Option<(ShockWindow, f64)>,
    sigma2_init: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(residuals.len());
    filter_variance_into(params, residuals, covariates, shock, sigma2_init, &mut out)?;
    Ok(out)
}

pub(crate) fn filter_variance_into(
    params: &GarchParams,
    residuals: &[f64],
    covariates: Option<&[Vec<f64>]>,
    shock: Option<(ShockWindow, f64)>,
    sigma2_init: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    if !params.gamma.is_empty() {
        match covariates {
            Some(rows) if rows.len() == residuals.len() => {}
            Some(rows) => {
                return Err(Error::DimensionMismatch(format!(
                    "{} covariate rows for {} residuals",
                    rows.len(),
                    residuals.len()
                )))
            }
            None => return Err(Error::DimensionMismatch("gamma set but no covariates supplied".into())),
        }
    }
    if !(sigma2_init > 0.0) {
        return Err(Error::NonpositiveVariance { t: 0, value: sigma2_init });
    }

    // Fast path for the common GARCH(1,1) case.
    if params.alpha.len() == 1 && params.beta.len() == 1 && params.gamma.is_empty() {
        let (omega, alpha, beta) = (params.omega, params.alpha[0], params.beta[0]);
        let mut a2_prev = sigma2_init;
        let mut s2_prev = sigma2_init;
        for (t, a) in residuals.iter().enumerate() {
            let mut s2 = omega + alpha * a2_prev + beta * s2_prev;
            if let Some((w, value)) = shock {
                if w.contains(t) {
                    s2 += value;
                }
            }
            if !(s2 > 0.0) {
                return Err(Error::NonpositiveVariance { t, value: s2 });
            }
            out.push(s2);
            a2_prev = a * a;
            s2_prev = s2;
        }
        return Ok(());
    }

    let mut a2_lags = vec![sigma2_init; params.arch_order()];
    let mut sigma2_lags = vec![sigma2_init; params.garch_order()];
    for (t, a) in residuals.iter().enumerate() {
        let v_t: &[f64] = match covariates {
            Some(rows) if !params.gamma.is_empty() => &rows[t],
            _ => &[],
        };
        let omega_star = match shock {
            Some((w, value)) if w.contains(t) => value,
            _ => 0.0,
        };
        let s2 = variance_step(params, &a2_lags, &sigma2_lags, v_t, omega_star).map_err(|e| with_time(e, t))?;
        out.push(s2);
        push_lag(&mut a2_lags, a * a);
        push_lag(&mut sigma2_lags, s2);
    }
    Ok(())
}

/// Observed information at the forecast origin.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    /// Demeaned returns through the origin.
    pub residuals: &'a [f64],
    /// Filtered conditional variances aligned with `residuals`.
    pub sigma2: &'a [f64],
    /// Covariates for the first forecast step; held fixed over the horizon.
    pub next_covariates: &'a [f64],
}

/// Additive intercept correction applied to the first `length` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub value: f64,
    pub length: usize,
    pub floor: f64,
}

impl Adjustment {
    pub fn none() -> Self {
        Self { value: 0.0, length: 0, floor: DEFAULT_VARIANCE_FLOOR }
    }

    pub fn one_step(value: f64) -> Self {
        Self { value, length: 1, floor: DEFAULT_VARIANCE_FLOOR }
    }

    pub fn new(value: f64, length: usize) -> Self {
        Self { value, length, floor: DEFAULT_VARIANCE_FLOOR }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceForecast {
    /// Conditional variance expectations for steps 1..=h.
    pub path: Vec<f64>,
    /// Set when an adjusted step fell to or below zero and was floored.
    pub clamped: bool,
}

/// Recursive h-step conditional expectations of the variance. With a zero
/// adjustment this is the plain GARCH forecast.
pub fn forecast(
    params: &GarchParams,
    history: &History<'_>,
    horizon: usize,
    adjustment: &Adjustment,
) -> Result<VarianceForecast> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidParams("forecast horizon must be positive".into()));
    }
    if adjustment.length > horizon {
        return Err(Error::InvalidParams(format!(
            "adjustment length {} exceeds horizon {horizon}",
            adjustment.length
        )));
    }
    let needed = params.max_lag().max(1);
    if history.residuals.len() < needed || history.sigma2.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            got: history.residuals.len().min(history.sigma2.len()),
        });
    }
    if history.residuals.len() != history.sigma2.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals but {} variances",
            history.residuals.len(),
            history.sigma2.len()
        )));
    }
    if history.next_covariates.len() != params.gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "next covariates have length {}, gamma has length {}",
            history.next_covariates.len(),
            params.gamma.len()
        )));
    }

    let n = history.residuals.len();
    // Most-recent-first lag buffers; future squared residuals are replaced
    // by their conditional expectation.
    let mut a2_lags: Vec<f64> = (0..params.arch_order()).map(|k| history.residuals[n - 1 - k].powi(2)).collect();
    let mut sigma2_lags: Vec<f64> = (0..params.garch_order()).map(|k| history.sigma2[n - 1 - k]).collect();
    let exog = params.covariate_term(history.next_covariates);

    let mut path = Vec::with_capacity(horizon);
    let mut clamped = false;
    for k in 0..horizon {
        let arch: f64 = params.alpha.iter().zip(&a2_lags).map(|(a, x)| a * x).sum();
        let garch: f64 = params.beta.iter().zip(&sigma2_lags).map(|(b, s)| b * s).sum();
        let shift = if k < adjustment.length { adjustment.value } else { 0.0 };
        let mut value = params.omega + shift + arch + garch + exog;
        if !(value > 0.0) {
            if shift != 0.0 {
                value = adjustment.floor;
                clamped = true;
            } else {
                return Err(Error::NonpositiveVariance { t: n + k, value });
            }
        }
        path.push(value);
        push_lag(&mut a2_lags, value);
        push_lag(&mut sigma2_lags, value);
    }
    Ok(VarianceForecast { path, clamped })
}
