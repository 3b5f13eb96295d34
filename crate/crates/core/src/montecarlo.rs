//! Simulation study: win fractions of the adjusted forecast over grids of
//! shock-equation parameters.
//!
//! Every replication draws a fresh target and donor pool, fits the donors'
//! fixed effects, weights them by profile similarity and compares the
//! adjusted and unadjusted one-step forecasts of the target against its
//! true conditional variance at the shock.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_garch, fit_shock_fixed_effect, FitConfig};
use crate::evaluation::ql_loss;
use crate::garch::{forecast, simulate_path, Adjustment, CovariateModel, GarchParams, History, ShockSpec};
use crate::similarity::{solve_weights, standardize, weighted_sum, SemiNorm, VolatilityProfile};

/// `(1, …, p)` scaled by `2 μ_δ / (p (p + 1))`. The entries sum to `μ_δ`.
pub fn build_delta(p: usize, mu_delta: f64) -> Vec<f64> {
    let scale = 2.0 * mu_delta / (p * (p + 1)) as f64;
    (1..=p).map(|j| j as f64 * scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridParameter {
    #[serde(rename = "mu_V")]
    MuV,
    #[serde(rename = "sigma_V")]
    SigmaV,
    #[serde(rename = "mu_delta")]
    MuDelta,
    #[serde(rename = "mu_omega_star")]
    MuOmegaStar,
    #[serde(rename = "sigma_u")]
    SigmaU,
}

impl GridParameter {
    pub const ALL: [GridParameter; 5] =
        [GridParameter::MuV, GridParameter::SigmaV, GridParameter::MuDelta, GridParameter::MuOmegaStar, GridParameter::SigmaU];

    pub fn name(self) -> &'static str {
        match self {
            GridParameter::MuV => "mu_V",
            GridParameter::SigmaV => "sigma_V",
            GridParameter::MuDelta => "mu_delta",
            GridParameter::MuOmegaStar => "mu_omega_star",
            GridParameter::SigmaU => "sigma_u",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidParams(format!("unknown grid parameter {name:?}")))
    }
}

/// The five shock-equation parameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    #[serde(rename = "mu_V")]
    pub mu_v: f64,
    #[serde(rename = "sigma_V")]
    pub sigma_v: f64,
    pub mu_delta: f64,
    pub mu_omega_star: f64,
    pub sigma_u: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self { mu_v: 1.0, sigma_v: 0.125, mu_delta: 0.125, mu_omega_star: 0.125, sigma_u: 0.125 }
    }
}

impl CellParams {
    pub fn get(&self, which: GridParameter) -> f64 {
        match which {
            GridParameter::MuV => self.mu_v,
            GridParameter::SigmaV => self.sigma_v,
            GridParameter::MuDelta => self.mu_delta,
            GridParameter::MuOmegaStar => self.mu_omega_star,
            GridParameter::SigmaU => self.sigma_u,
        }
    }

    pub fn with(mut self, which: GridParameter, value: f64) -> Self {
        match which {
            GridParameter::MuV => self.mu_v = value,
            GridParameter::SigmaV => self.sigma_v = value,
            GridParameter::MuDelta => self.mu_delta = value,
            GridParameter::MuOmegaStar => self.mu_omega_star = value,
            GridParameter::SigmaU => self.sigma_u = value,
        }
        self
    }
}

/// Everything about a replication except the five swept parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub n_donors: usize,
    pub p: usize,
    /// Inclusive range of series lengths.
    pub t_range: (usize, usize),
    pub base_params: GarchParams,
    pub len_vol: usize,
    /// Shock arrival is uniform on this central fraction of each series.
    pub shock_region: (f64, f64),
    pub fit: FitConfig,
}

impl Default for Design {
    fn default() -> Self {
        Self {
            n_donors: 3,
            p: 9,
            t_range: (756, 2520),
            base_params: GarchParams { omega: 0.2, alpha: vec![0.1], beta: vec![0.82], gamma: vec![] },
            len_vol: 10,
            shock_region: (0.1, 0.9),
            fit: FitConfig { standard_errors: false, ..FitConfig::default() },
        }
    }
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        if self.n_donors == 0 || self.p == 0 || self.len_vol == 0 {
            return Err(Error::InvalidParams("n_donors, p and len_vol must be positive".into()));
        }
        let (lo, hi) = self.t_range;
        if lo > hi || lo < 100 {
            return Err(Error::InvalidParams(format!("series length range {lo}..={hi} is invalid (min 100)")));
        }
        let (a, b) = self.shock_region;
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(Error::InvalidParams(format!("shock region ({a}, {b}) must satisfy 0 < a < b < 1")));
        }
        self.base_params.validate()?;
        if !self.base_params.is_stationary() {
            return Err(Error::NonstationaryParams { persistence: self.base_params.persistence() });
        }
        if !self.base_params.gamma.is_empty() {
            return Err(Error::InvalidParams("the simulation base model has no GARCH-X terms".into()));
        }
        Ok(())
    }

    fn shock_index<R: Rng>(&self, len: usize, rng: &mut R) -> usize {
        let lo = ((self.shock_region.0 * len as f64).ceil() as usize).max(1);
        let hi = ((self.shock_region.1 * len as f64).floor() as usize).min(len - self.len_vol).max(lo);
        rng.random_range(lo..=hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub ql_adjusted: f64,
    pub ql_unadjusted: f64,
    pub omega_star_hat: f64,
    pub ground_truth: f64,
}

impl ReplicationOutcome {
    pub fn adjusted_wins(&self) -> bool {
        self.ql_adjusted <= self.ql_unadjusted
    }
}

/// One simulated target-plus-donors experiment.
pub fn run_replication(cell: &CellParams, design: &Design, rep_seed: u64) -> Result<ReplicationOutcome> {
    replicate(cell, design, rep_seed).map_err(|e| match e {
        Error::ReplicationFailed(_) => e,
        other => Error::ReplicationFailed(other.to_string()),
    })
}

fn replicate(cell: &CellParams, design: &Design, rep_seed: u64) -> Result<ReplicationOutcome> {
    design.validate()?;
    if !(cell.sigma_v >= 0.0 && cell.sigma_u >= 0.0) {
        return Err(Error::InvalidParams("standard deviations must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let delta = build_delta(design.p, cell.mu_delta);
    let covariates = CovariateModel { p: design.p, mean: cell.mu_v, sd: cell.sigma_v };

    let mut profiles = Vec::with_capacity(design.n_donors);
    let mut effects = Vec::with_capacity(design.n_donors);
    let mut target = None;
    // Series 0 is the target, the rest are donors.
    for i in 0..=design.n_donors {
        let len = rng.random_range(design.t_range.0..=design.t_range.1);
        let t_star = design.shock_index(len, &mut rng);
        let seed = rng.random::<u64>();
        let shock = ShockSpec {
            t_star,
            len_vol: design.len_vol,
            len_return: 0,
            mu_omega_star: cell.mu_omega_star,
            delta: delta.clone(),
            sigma_u: cell.sigma_u,
            mu_eps_star: 0.0,
            sigma_eps_star: 0.0,
        };
        let path = simulate_path(&design.base_params, Some(&shock), len, &covariates, seed)?;
        let profile = path.covariates[t_star].clone();
        if i == 0 {
            target = Some((path, t_star, profile));
        } else {
            let fit = fit_shock_fixed_effect(&path.returns, None, t_star, design.len_vol, (1, 1), &design.fit)?;
            effects.push(fit.omega_star_hat.unwrap_or(0.0));
            profiles.push(profile);
        }
    }
    let (path, t_star, target_profile) = target.expect("the target is simulated first");

    let profile = VolatilityProfile::from_columns(target_profile, profiles)?;
    let solution = solve_weights(&standardize(&profile), &SemiNorm::Identity)?;
    let omega_star_hat = weighted_sum(&solution.weights, &effects)?;

    let fit = fit_garch(&path.returns[..t_star], None, (1, 1), &design.fit)?;
    let history = History { residuals: &fit.residuals, sigma2: &fit.sigma2, next_covariates: &[] };
    let unadjusted = forecast(&fit.params, &history, 1, &Adjustment::none())?.path[0];
    let adjusted = forecast(&fit.params, &history, 1, &Adjustment::one_step(omega_star_hat))?.path[0];
    let ground_truth = path.sigma2[t_star];
    Ok(ReplicationOutcome {
        ql_adjusted: ql_loss(adjusted, ground_truth)?,
        ql_unadjusted: ql_loss(unadjusted, ground_truth)?,
        omega_star_hat,
        ground_truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub axis1_value: f64,
    pub axis2_value: f64,
    pub win_fraction: f64,
    pub mean_ql_adjusted: f64,
    pub mean_ql_unadjusted: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Values of the parameters that are not on an axis.
    pub fixed: CellParams,
    pub axis1: (GridParameter, Vec<f64>),
    pub axis2: (GridParameter, Vec<f64>),
    pub replications: usize,
    pub design: Design,
    pub seed: u64,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be positive".into()));
        }
        if self.axis1.0 == self.axis2.0 {
            return Err(Error::InvalidParams(format!("both axes sweep {}", self.axis1.0.name())));
        }
        if self.axis1.1.is_empty() || self.axis2.1.is_empty() {
            return Err(Error::InvalidParams("grid axes need at least one value".into()));
        }
        if self.axis1.1.iter().chain(&self.axis2.1).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("grid values must be finite".into()));
        }
        self.design.validate()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`. Cells share replication seeds, so every cell
/// sees the same random series layout (common random numbers).
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(splitmix64(master) ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Runs every replication of one cell.
pub fn run_cell(cell: &CellParams, design: &Design, replications: usize, seed: u64) -> Vec<Result<ReplicationOutcome>> {
    (0..replications)
        .into_par_iter()
        .map(|rep| run_replication(cell, design, replication_seed(seed, rep)))
        .collect()
}

pub fn summarize(axis1_value: f64, axis2_value: f64, outcomes: &[Result<ReplicationOutcome>]) -> CellResult {
    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let n = ok.len();
    let mean = |f: fn(&ReplicationOutcome) -> f64| if n == 0 { f64::NAN } else { ok.iter().map(|o| f(o)).sum::<f64>() / n as f64 };
    CellResult {
        axis1_value,
        axis2_value,
        win_fraction: if n == 0 { f64::NAN } else { ok.iter().filter(|o| o.adjusted_wins()).count() as f64 / n as f64 },
        mean_ql_adjusted: mean(|o| o.ql_adjusted),
        mean_ql_unadjusted: mean(|o| o.ql_unadjusted),
        replications: n,
        failures: outcomes.len() - n,
    }
}

/// Result matrix indexed `[axis1 index][axis2 index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub axis1: (GridParameter, Vec<f64>),
    pub axis2: (GridParameter, Vec<f64>),
    pub cells: Vec<Vec<CellResult>>,
}

pub fn run_grid(config: &GridConfig) -> Result<GridResult> {
    config.validate()?;
    let (p1, v1) = &config.axis1;
    let (p2, v2) = &config.axis2;
    let cells = v1
        .iter()
        .map(|&a| {
            v2.iter()
                .map(|&b| {
                    let cell = config.fixed.with(*p1, a).with(*p2, b);
                    let outcomes = run_cell(&cell, &config.design, config.replications, config.seed);
                    summarize(a, b, &outcomes)
                })
                .collect()
        })
        .collect();
    Ok(GridResult { axis1: config.axis1.clone(), axis2: config.axis2.clone(), cells })
}

impl GridResult {
    pub const HEADER: &'static str = "axis1,axis2,win_fraction,mean_ql_adj,mean_ql_unadj,reps,failures";

    /// One row per cell, axis1 outer, with shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for row in &self.cells {
            for c in row {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    c.axis1_value, c.axis2_value, c.win_fraction, c.mean_ql_adjusted, c.mean_ql_unadjusted, c.replications, c.failures
                );
            }
        }
        out
    }

    pub fn transposed(&self) -> GridResult {
        let rows = self.axis1.1.len();
        let cols = self.axis2.1.len();
        let cells = (0..cols)
            .map(|j| {
                (0..rows)
                    .map(|i| {
                        let c = self.cells[i][j];
                        CellResult { axis1_value: c.axis2_value, axis2_value: c.axis1_value, ..c }
                    })
                    .collect()
            })
            .collect();
        GridResult { axis1: self.axis2.clone(), axis2: self.axis1.clone(), cells }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_design() -> Design {
        Design { t_range: (600, 700), ..Design::default() }
    }

    #[test]
    fn delta_examples() {
        assert_eq!(build_delta(1, 3.5), vec![3.5]);
        // (1, 2, 3) * 4/12
        let d = build_delta(3, 2.0);
        assert_abs_diff_eq!(d[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 1.0, epsilon = 1e-15);
        for p in 1..30 {
            let d = build_delta(p, 0.7);
            assert_abs_diff_eq!(d.iter().sum::<f64>(), 0.7, epsilon = 1e-12);
            assert!(d.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in GridParameter::ALL {
            assert_eq!(GridParameter::parse(p.name()).unwrap(), p);
        }
        assert!(GridParameter::parse("mu_x").is_err());
    }

    #[test]
    fn replication_is_deterministic() {
        let cell = CellParams::default();
        let a = run_replication(&cell, &small_design(), 42).unwrap();
        let b = run_replication(&cell, &small_design(), 42).unwrap();
        assert_eq!(a.ql_adjusted.to_bits(), b.ql_adjusted.to_bits());
        assert_eq!(a.ql_unadjusted.to_bits(), b.ql_unadjusted.to_bits());
    }

    #[test]
    fn shock_placement_stays_central() {
        let design = Design::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let len = rng.random_range(756..=2520);
            let t = design.shock_index(len, &mut rng);
            assert!(t as f64 >= 0.1 * len as f64 && t as f64 <= 0.9 * len as f64 && t + design.len_vol <= len);
        }
    }

    #[test]
    fn one_by_one_grid() {
        let config = GridConfig {
            fixed: CellParams::default(),
            axis1: (GridParameter::MuDelta, vec![1.0]),
            axis2: (GridParameter::SigmaU, vec![0.125]),
            replications: 3,
            design: small_design(),
            seed: 9,
        };
        let grid = run_grid(&config).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.cells[0][0].replications + grid.cells[0][0].failures, 3);
        let csv = grid.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with(GridResult::HEADER));
    }

    #[test]
    fn swapping_axes_transposes() {
        let config = GridConfig {
            fixed: CellParams::default(),
            axis1: (GridParameter::MuDelta, vec![0.5, 2.0]),
            axis2: (GridParameter::SigmaU, vec![0.125, 1.0]),
            replications: 2,
            design: small_design(),
            seed: 5,
        };
        let swapped = GridConfig { axis1: config.axis2.clone(), axis2: config.axis1.clone(), ..config.clone() };
        let a = run_grid(&config).unwrap();
        let b = run_grid(&swapped).unwrap();
        assert_eq!(a.transposed().to_csv(), b.to_csv());
    }

    #[test]
    fn grid_validation() {
        let base = GridConfig {
            fixed: CellParams::default(),
            axis1: (GridParameter::MuDelta, vec![1.0]),
            axis2: (GridParameter::MuDelta, vec![1.0]),
            replications: 1,
            design: small_design(),
            seed: 0,
        };
        assert!(run_grid(&base).is_err());
        let zero = GridConfig { axis2: (GridParameter::SigmaU, vec![0.0]), replications: 0, ..base };
        assert!(run_grid(&zero).is_err());
    }
}
