//! Gaussian quasi-maximum-likelihood fitting of GARCH-X(m, s) models, with
//! an optional shock-window dummy whose coefficient is the volatility-shock
//! fixed effect.
//!
//! The optimizer works on an unconstrained vector:
//!
//! ```text
//! [ ln ω | logit(Σα + Σβ) | share logits (m + s - 1) | γ (p) | ω* ]
//! ```
//!
//! so every evaluated point satisfies ω > 0, α, β ≥ 0 and Σα + Σβ < 1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::{filter_variance, GarchParams, ShockWindow};
use crate::optim::{bfgs_with_gradient, nelder_mead, newton_polish, BfgsOptions, NelderMeadOptions};

const MAX_PERSISTENCE: f64 = 1.0 - 1e-10;
const LOG_OMEGA_BOUND: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Demean {
    SampleMean,
    Zero,
    Supplied(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceInit {
    Unconditional,
    SampleVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub demean: Demean,
    pub variance_init: VarianceInit,
    /// Compute the inverse-Hessian standard-error proxy after fitting.
    pub standard_errors: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-8,
            demean: Demean::SampleMean,
            variance_init: VarianceInit::Unconditional,
            standard_errors: true,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParams("fit config needs max_iterations > 0 and tolerance > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GarchParams,
    /// Estimated shock fixed effect, present iff a shock window was fitted.
    pub omega_star_hat: Option<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Square roots of the inverse observed-information diagonal, in the
    /// order ω, α.., β.., γ.., ω*.
    pub stderr_proxy: Option<Vec<f64>>,
    /// Value subtracted from the returns.
    pub mean: f64,
    pub residuals: Vec<f64>,
    /// Filtered variances at the estimate (shock dummy included).
    pub sigma2: Vec<f64>,
    pub sigma2_init: f64,
    pub shock_window: Option<ShockWindow>,
}

/// `-1/2 Σ [ln σ²_t + a²_t / σ²_t]` with the shock dummy active on
/// `shock_window`. Pre-sample lags start at the unconditional variance when
/// the parameters are stationary, otherwise at the sample variance.
pub fn gaussian_qml_loglik(
    params: &GarchParams,
    omega_star: f64,
    shock_window: Option<ShockWindow>,
    residuals: &[f64],
    covariates: Option<&[Vec<f64>]>,
) -> Result<f64> {
    let init = if params.is_stationary() {
        params.omega / (1.0 - params.persistence())
    } else {
        mean_square(residuals)
    };
    gaussian_qml_loglik_with_init(params, omega_star, shock_window, residuals, covariates, init)
}

pub fn gaussian_qml_loglik_with_init(
    params: &GarchParams,
    omega_star: f64,
    shock_window: Option<ShockWindow>,
    residuals: &[f64],
    covariates: Option<&[Vec<f64>]>,
    sigma2_init: f64,
) -> Result<f64> {
    params.validate()?;
    if let Some(w) = shock_window {
        w.check_fits(residuals.len())?;
    }
    // GARCH(1,1) without covariates is the hot path in fitting and in the
    // Monte Carlo; stream it without allocating.
    if params.alpha.len() == 1 && params.beta.len() == 1 && params.gamma.is_empty() {
        return loglik_garch11(params, omega_star, shock_window, residuals, sigma2_init);
    }
    let sigma2 = filter_variance(params, residuals, covariates, shock_window.map(|w| (w, omega_star)), sigma2_init)?;
    Ok(sigma2.iter().zip(residuals).map(|(s, a)| -0.5 * (s.ln() + a * a / s)).sum())
}

fn loglik_garch11(
    params: &GarchParams,
    omega_star: f64,
    window: Option<ShockWindow>,
    residuals: &[f64],
    sigma2_init: f64,
) -> Result<f64> {
    if !(sigma2_init > 0.0) {
        return Err(Error::NonpositiveVariance { t: 0, value: sigma2_init });
    }
    let (omega, alpha, beta) = (params.omega, params.alpha[0], params.beta[0]);
    let (w_start, w_end) = window.map_or((0, 0), |w| (w.start, w.end()));
    let mut a2_prev = sigma2_init;
    let mut s2_prev = sigma2_init;
    let mut total = 0.0;
    for (t, a) in residuals.iter().enumerate() {
        let mut s2 = omega + alpha * a2_prev + beta * s2_prev;
        if t >= w_start && t < w_end {
            s2 += omega_star;
        }
        if !(s2 > 0.0) {
            return Err(Error::NonpositiveVariance { t, value: s2 });
        }
        let a2 = a * a;
        total += s2.ln() + a2 / s2;
        a2_prev = a2;
        s2_prev = s2;
    }
    Ok(-0.5 * total)
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps between the constrained parameters and the optimizer's space.
#[derive(Debug, Clone, Copy)]
struct Reparam {
    m: usize,
    s: usize,
    p: usize,
    shock: bool,
}

impl Reparam {
    fn dim(&self) -> usize {
        2 + (self.m + self.s - 1) + self.p + usize::from(self.shock)
    }

    fn unpack(&self, theta: &[f64]) -> (GarchParams, f64) {
        let omega = theta[0].clamp(-LOG_OMEGA_BOUND, LOG_OMEGA_BOUND).exp();
        let persistence = logistic(theta[1]).min(MAX_PERSISTENCE);
        let k = self.m + self.s;
        let logits = &theta[2..2 + k - 1];
        let max_logit = logits.iter().fold(0.0_f64, |a, &b| a.max(b));
        let mut weights = Vec::with_capacity(k);
        weights.push((-max_logit).exp());
        weights.extend(logits.iter().map(|l| (l - max_logit).exp()));
        let total: f64 = weights.iter().sum();
        let coefs: Vec<f64> = weights.iter().map(|w| persistence * w / total).collect();
        let gamma_start = 2 + k - 1;
        let gamma = theta[gamma_start..gamma_start + self.p].to_vec();
        let omega_star = if self.shock { theta[gamma_start + self.p] } else { 0.0 };
        let params = GarchParams {
            omega,
            alpha: coefs[..self.m].to_vec(),
            beta: coefs[self.m..].to_vec(),
            gamma,
        };
        (params, omega_star)
    }

    fn pack(&self, params: &GarchParams, omega_star: f64) -> Vec<f64> {
        let persistence = params.persistence().clamp(1e-8, MAX_PERSISTENCE);
        let mut theta = vec![params.omega.ln(), (persistence / (1.0 - persistence)).ln()];
        let coefs: Vec<f64> = params.alpha.iter().chain(&params.beta).map(|c| c.max(1e-12)).collect();
        theta.extend(coefs[1..].iter().map(|c| (c / coefs[0]).ln()));
        theta.extend_from_slice(&params.gamma);
        if self.shock {
            theta.push(omega_star);
        }
        theta
    }
}

struct QmlProblem<'a> {
    residuals: &'a [f64],
    covariates: Option<&'a [Vec<f64>]>,
    window: Option<ShockWindow>,
    init: VarianceInit,
    sample_variance: f64,
    reparam: Reparam,
}

impl QmlProblem<'_> {
    fn sigma2_init(&self, params: &GarchParams) -> f64 {
        match self.init {
            VarianceInit::Unconditional => params.omega / (1.0 - params.persistence()),
            VarianceInit::SampleVariance => self.sample_variance,
        }
    }

    fn loglik(&self, params: &GarchParams, omega_star: f64) -> Result<f64> {
        gaussian_qml_loglik_with_init(
            params,
            omega_star,
            self.window,
            self.residuals,
            self.covariates,
            self.sigma2_init(params),
        )
    }

    /// Negative average log-likelihood; infinite where the variance
    /// recursion breaks down.
    fn objective(&self, theta: &[f64]) -> f64 {
        let (params, omega_star) = self.reparam.unpack(theta);
        match self.loglik(&params, omega_star) {
            Ok(l) if l.is_finite() => -l / self.residuals.len() as f64,
            _ => f64::INFINITY,
        }
    }
}

impl QmlProblem<'_> {
    /// Log-likelihood and its gradient in natural coordinates
    /// `[ω, α.., β.., γ.., ω*]`, differentiating through the recursion and
    /// through the parameter-dependent pre-sample value.
    fn loglik_gradient(&self, params: &GarchParams, omega_star: f64) -> Option<(f64, Vec<f64>)> {
        let (m, s, p) = (params.alpha.len(), params.beta.len(), params.gamma.len());
        let shock = self.window.is_some();
        let k = 1 + m + s + p + usize::from(shock);
        let init = self.sigma2_init(params);
        if !(init > 0.0) || !init.is_finite() {
            return None;
        }
        let mut d_init = vec![0.0; k];
        if self.init == VarianceInit::Unconditional {
            let gap = 1.0 - params.persistence();
            d_init[0] = 1.0 / gap;
            for d in d_init.iter_mut().skip(1).take(m + s) {
                *d = params.omega / (gap * gap);
            }
        }
        let (w_start, w_end) = self.window.map_or((0, 0), |w| (w.start, w.end()));
        // Ring buffers of lagged values and their derivatives, newest first.
        let mut a2_lags = vec![init; m];
        let mut da2_lags = vec![d_init.clone(); m];
        let mut s2_lags = vec![init; s];
        let mut ds2_lags = vec![d_init.clone(); s];
        let mut total = 0.0;
        let mut grad = vec![0.0; k];
        let mut ds = vec![0.0; k];
        for (t, a) in self.residuals.iter().enumerate() {
            let mut s2 = params.omega;
            for d in ds.iter_mut() {
                *d = 0.0;
            }
            ds[0] = 1.0;
            for i in 0..m {
                s2 += params.alpha[i] * a2_lags[i];
                ds[1 + i] += a2_lags[i];
                for (d, l) in ds.iter_mut().zip(&da2_lags[i]) {
                    *d += params.alpha[i] * l;
                }
            }
            for j in 0..s {
                s2 += params.beta[j] * s2_lags[j];
                ds[1 + m + j] += s2_lags[j];
                for (d, l) in ds.iter_mut().zip(&ds2_lags[j]) {
                    *d += params.beta[j] * l;
                }
            }
            if p > 0 {
                let v = &self.covariates?[t];
                for l in 0..p {
                    s2 += params.gamma[l] * v[l];
                    ds[1 + m + s + l] += v[l];
                }
            }
            if t >= w_start && t < w_end {
                s2 += omega_star;
                ds[k - 1] += 1.0;
            }
            if !(s2 > 0.0) || !s2.is_finite() {
                return None;
            }
            let a2 = a * a;
            total += s2.ln() + a2 / s2;
            let weight = -0.5 * (1.0 / s2 - a2 / (s2 * s2));
            for (g, d) in grad.iter_mut().zip(&ds) {
                *g += weight * d;
            }
            if m > 0 {
                a2_lags.rotate_right(1);
                da2_lags.rotate_right(1);
                a2_lags[0] = a2;
                for d in da2_lags[0].iter_mut() {
                    *d = 0.0;
                }
            }
            if s > 0 {
                s2_lags.rotate_right(1);
                ds2_lags.rotate_right(1);
                s2_lags[0] = s2;
                ds2_lags[0].copy_from_slice(&ds);
            }
        }
        Some((-0.5 * total, grad))
    }

    /// Gradient of [`QmlProblem::objective`] in the optimizer's coordinates.
    fn objective_gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (params, omega_star) = self.reparam.unpack(theta);
        let (_, g) = self.loglik_gradient(&params, omega_star)?;
        let n = self.residuals.len() as f64;
        let r = self.reparam;
        let kk = r.m + r.s;
        let persistence = params.persistence();
        let shares: Vec<f64> = params.alpha.iter().chain(&params.beta).map(|c| c / persistence).collect();
        let g_coef = &g[1..1 + kk];
        let mut out = vec![0.0; r.dim()];
        let clamped_omega = theta[0].abs() >= LOG_OMEGA_BOUND;
        out[0] = if clamped_omega { 0.0 } else { g[0] * params.omega };
        let raw = logistic(theta[1]);
        let dp = if raw >= MAX_PERSISTENCE { 0.0 } else { raw * (1.0 - raw) };
        let mixed: f64 = g_coef.iter().zip(&shares).map(|(a, b)| a * b).sum();
        out[1] = mixed * dp;
        for l in 1..kk {
            out[1 + l] = persistence * shares[l] * (g_coef[l] - mixed);
        }
        let tail = 2 + kk - 1;
        out[tail..].copy_from_slice(&g[1 + kk..]);
        Some(out.into_iter().map(|v| -v / n).collect())
    }
}

/// Quasi-maximum-likelihood GARCH-X(m, s) fit without a shock dummy.
pub fn fit_garch(
    returns: &[f64],
    covariates: Option<&[Vec<f64>]>,
    orders: (usize, usize),
    config: &FitConfig,
) -> Result<FitResult> {
    fit_inner(returns, covariates, orders, None, config)
}

/// Joint fit of the GARCH-X parameters and a scalar fixed effect on the
/// indicator of `t_star..t_star + len_vol`.
pub fn fit_shock_fixed_effect(
    returns: &[f64],
    covariates: Option<&[Vec<f64>]>,
    t_star: usize,
    len_vol: usize,
    orders: (usize, usize),
    config: &FitConfig,
) -> Result<FitResult> {
    let window = ShockWindow::after(t_star, len_vol);
    window.check_fits(returns.len())?;
    if len_vol == 0 {
        return Err(Error::InvalidParams("shock window must have positive length".into()));
    }
    if t_star == 0 {
        return Err(Error::InvalidShockWindow { start: 0, end: window.end(), len: returns.len() });
    }
    if window.start == 0 && window.end() == returns.len() {
        return Err(Error::Unidentified("the shock window spans the whole series".into()));
    }
    fit_inner(returns, covariates, orders, Some(window), config)
}

fn fit_inner(
    returns: &[f64],
    covariates: Option<&[Vec<f64>]>,
    orders: (usize, usize),
    window: Option<ShockWindow>,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let (m, s) = orders;
    if m == 0 && s == 0 {
        return Err(Error::InvalidParams("at least one of the ARCH/GARCH orders must be positive".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParams("ARCH order must be positive".into()));
    }
    let p = match covariates {
        Some(rows) => {
            if rows.len() != returns.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} covariate rows for {} returns",
                    rows.len(),
                    returns.len()
                )));
            }
            let p = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != p) {
                return Err(Error::DimensionMismatch("ragged covariate rows".into()));
            }
            p
        }
        None => 0,
    };
    let min_len = 10 * (m + s + 1);
    if returns.len() <= min_len {
        return Err(Error::InsufficientHistory { needed: min_len + 1, got: returns.len() });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::DegenerateData("returns contain non-finite values".into()));
    }

    let mean = match config.demean {
        Demean::SampleMean => returns.iter().sum::<f64>() / returns.len() as f64,
        Demean::Zero => 0.0,
        Demean::Supplied(mu) => mu,
    };
    let residuals: Vec<f64> = returns.iter().map(|r| r - mean).collect();
    let sample_variance = mean_square(&residuals);
    let scale = returns.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    let constant = returns.iter().all(|r| *r == returns[0]);
    if constant || sample_variance <= (1e-10 * scale).powi(2) || sample_variance == 0.0 {
        return Err(Error::DegenerateData("returns have zero variance".into()));
    }

    let reparam = Reparam { m, s, p, shock: window.is_some() };
    let problem = QmlProblem {
        residuals: &residuals,
        covariates,
        window,
        init: config.variance_init,
        sample_variance,
        reparam,
    };

    // Warm start: α = .05, β = .85 split evenly across lags, ω matching the
    // sample variance, γ = 0, ω* = 0.
    let alpha0 = 0.05;
    let beta0 = if s > 0 { 0.85 } else { 0.0 };
    let start_params = GarchParams {
        omega: sample_variance * (1.0 - alpha0 - beta0),
        alpha: vec![alpha0 / m as f64; m],
        beta: vec![if s > 0 { beta0 / s as f64 } else { 0.0 }; s],
        gamma: vec![0.0; p],
    };
    let theta0 = reparam.pack(&start_params, 0.0);
    let f0 = problem.objective(&theta0);

    let mut steps = vec![0.5; reparam.dim()];
    steps[1] = 1.0;
    for step in steps.iter_mut().skip(2 + m + s - 1).take(p) {
        *step = 0.1 * sample_variance.sqrt();
    }
    if window.is_some() {
        let last = steps.len() - 1;
        steps[last] = sample_variance;
    }

    let nm_opts = NelderMeadOptions { max_iterations: config.max_iterations, f_tol: 1e-12, x_tol: 1e-7 };
    let nm = nelder_mead(|th| problem.objective(th), &theta0, &steps, &nm_opts);
    let bf_opts = BfgsOptions { max_iterations: config.max_iterations.min(500), g_tol: config.tolerance };
    let objective = |th: &[f64]| problem.objective(th);
    let gradient = |th: &[f64]| problem.objective_gradient(th);
    let refined = bfgs_with_gradient(objective, gradient, &nm.x, &bf_opts);
    let (start, f_start) = if refined.f <= nm.f { (refined.x, refined.f) } else { (nm.x, nm.f) };
    let (mut theta, mut f_best) = newton_polish(objective, gradient, &start, 20);
    // The polish may trade rounding-level objective noise for a smaller gradient.
    if !(f_best <= f_start + 8.0 * f64::EPSILON * (1.0 + f_start.abs())) {
        (theta, f_best) = (start, f_start);
    }
    if !(f_best.is_finite() && f_best <= f0) {
        (theta, f_best) = (theta0, f0);
    }
    if !f_best.is_finite() {
        return Err(Error::DegenerateData("log-likelihood is not finite at any evaluated point".into()));
    }
    let g_final = problem.objective_gradient(&theta);
    let converged = g_final.is_some_and(|g| {
        let norm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        norm <= config.tolerance.sqrt() * (1.0 + f_best.abs()) && (refined.converged || norm <= config.tolerance * (1.0 + f_best.abs()))
    });

    let (params, omega_star) = reparam.unpack(&theta);
    let sigma2_init = problem.sigma2_init(&params);
    let loglik = problem.loglik(&params, omega_star)?;
    let sigma2 = filter_variance(&params, &residuals, covariates, window.map(|w| (w, omega_star)), sigma2_init)?;
    let stderr_proxy = if config.standard_errors {
        standard_error_proxy(&problem, &params, omega_star)
    } else {
        None
    };

    Ok(FitResult {
        params,
        omega_star_hat: window.map(|_| omega_star),
        loglik,
        converged,
        iterations: nm.iterations + refined.iterations,
        stderr_proxy,
        mean,
        residuals,
        sigma2,
        sigma2_init,
        shock_window: window,
    })
}

impl FitResult {
    /// `Err(NotConverged)` when the optimizer did not report convergence.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations })
        }
    }
}

fn natural_vector(params: &GarchParams, omega_star: f64, shock: bool) -> Vec<f64> {
    let mut v = vec![params.omega];
    v.extend(&params.alpha);
    v.extend(&params.beta);
    v.extend(&params.gamma);
    if shock {
        v.push(omega_star);
    }
    v
}

fn from_natural(v: &[f64], template: &GarchParams, shock: bool) -> (GarchParams, f64) {
    let m = template.alpha.len();
    let s = template.beta.len();
    let p = template.gamma.len();
    let params = GarchParams {
        omega: v[0],
        alpha: v[1..1 + m].to_vec(),
        beta: v[1 + m..1 + m + s].to_vec(),
        gamma: v[1 + m + s..1 + m + s + p].to_vec(),
    };
    let omega_star = if shock { v[1 + m + s + p] } else { 0.0 };
    (params, omega_star)
}

/// Inverse of the finite-difference Hessian of the negative log-likelihood
/// in natural coordinates. `None` when a probe leaves the admissible region
/// or the Hessian is not positive definite.
fn standard_error_proxy(problem: &QmlProblem<'_>, params: &GarchParams, omega_star: f64) -> Option<Vec<f64>> {
    let shock = problem.window.is_some();
    let x = natural_vector(params, omega_star, shock);
    let k = x.len();
    let nll = |v: &[f64]| -> Option<f64> {
        let (p, w) = from_natural(v, params, shock);
        if p.validate().is_err() || !p.is_stationary() {
            return None;
        }
        problem.loglik(&p, w).ok().map(|l| -l)
    };
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-3)).collect();
    let f0 = nll(&x)?;
    let mut hess = DMatrix::<f64>::zeros(k, k);
    let mut probe = x.clone();
    for i in 0..k {
        probe[i] = x[i] + h[i];
        let fp = nll(&probe)?;
        probe[i] = x[i] - h[i];
        let fm = nll(&probe)?;
        probe[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Option<f64> {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = nll(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let value = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = value;
            hess[(j, i)] = value;
        }
    }
    let chol = hess.cholesky()?;
    let inv = chol.inverse();
    (0..k).map(|i| inv[(i, i)]).map(|v| if v > 0.0 { Some(v.sqrt()) } else { None }).collect()
}
