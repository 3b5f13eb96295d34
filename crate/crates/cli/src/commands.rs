//! The five workflows. Each returns its machine-readable output as a string
//! plus a short human-readable summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use shockvol::estimation::{fit_garch, fit_shock_fixed_effect, FitConfig, FitResult};
use shockvol::evaluation::LossTriple;
use shockvol::garch::{simulate_path, CovariateModel};
use shockvol::montecarlo::{run_grid, CellResult, GridParameter};
use shockvol::multiverse::{run_multiverse, LossKind, RowKind};
use shockvol::pipeline::{prepare, report};

use crate::bundle::load_bundle;
use crate::config::{load, GridToml, SimulateConfig, DEFAULT_SEED};
use crate::error::{CliError, CliResult};
use crate::io::read_returns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub struct Output {
    pub machine: String,
    pub summary: String,
}

/// Six significant digits for tables meant to be read.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn csv_join(values: &[String]) -> String {
    values.join(",")
}

#[derive(Serialize)]
struct SimulateJson<'a> {
    seed: u64,
    #[serde(rename = "return")]
    returns: &'a [f64],
    sigma2: &'a [f64],
    omega_star: &'a [f64],
    covariates: &'a [Vec<f64>],
}

pub fn simulate(config_path: &Path, seed: Option<u64>, format: Format) -> CliResult<(Output, u64)> {
    let cfg: SimulateConfig = load(config_path)?;
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let params = cfg.params.to_params()?;
    let covariates = cfg.covariates.unwrap_or_else(CovariateModel::none);
    let path = simulate_path(&params, cfg.shock.as_ref(), cfg.length, &covariates, seed)?;
    let machine = match format {
        Format::Json => json(&SimulateJson {
            seed,
            returns: &path.returns,
            sigma2: &path.sigma2,
            omega_star: &path.omega_star_path,
            covariates: &path.covariates,
        }),
        Format::Csv => {
            let mut header = vec!["t".to_string(), "return".into(), "sigma2".into(), "omega_star".into()];
            header.extend((1..=covariates.p).map(|j| format!("v{j}")));
            let mut out = csv_join(&header);
            out.push('\n');
            for t in 0..path.len() {
                let mut row = vec![
                    t.to_string(),
                    path.returns[t].to_string(),
                    path.sigma2[t].to_string(),
                    path.omega_star_path[t].to_string(),
                ];
                if covariates.p > 0 {
                    row.extend(path.covariates[t].iter().map(f64::to_string));
                }
                out.push_str(&csv_join(&row));
                out.push('\n');
            }
            out
        }
    };
    let summary = format!("simulated {} observations with seed {seed}\n", path.len());
    Ok((Output { machine, summary }, seed))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub orders: (usize, usize),
    pub t_star: Option<usize>,
    pub len_vol: usize,
    pub fit: FitConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { orders: (1, 1), t_star: None, len_vol: 1, fit: FitConfig::default() }
    }
}

#[derive(Serialize)]
pub struct FitJson {
    pub observations: usize,
    pub mean: f64,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega_star_hat: Option<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stderr_proxy: Option<Vec<f64>>,
}

impl FitJson {
    fn new(n: usize, fit: &FitResult) -> Self {
        Self {
            observations: n,
            mean: fit.mean,
            omega: fit.params.omega,
            alpha: fit.params.alpha.clone(),
            beta: fit.params.beta.clone(),
            omega_star_hat: fit.omega_star_hat,
            loglik: fit.loglik,
            converged: fit.converged,
            iterations: fit.iterations,
            stderr_proxy: fit.stderr_proxy.clone(),
        }
    }

    fn fields(&self) -> Vec<(String, String)> {
        let mut f = vec![("observations".to_string(), self.observations.to_string()), ("mean".into(), self.mean.to_string())];
        f.push(("omega".into(), self.omega.to_string()));
        f.extend(self.alpha.iter().enumerate().map(|(i, v)| (format!("alpha{}", i + 1), v.to_string())));
        f.extend(self.beta.iter().enumerate().map(|(i, v)| (format!("beta{}", i + 1), v.to_string())));
        if let Some(w) = self.omega_star_hat {
            f.push(("omega_star_hat".into(), w.to_string()));
        }
        f.push(("loglik".into(), self.loglik.to_string()));
        f.push(("converged".into(), self.converged.to_string()));
        f.push(("iterations".into(), self.iterations.to_string()));
        f
    }
}

fn key_value_csv(fields: &[(String, String)]) -> String {
    let mut out = String::from("field,value\n");
    for (k, v) in fields {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

pub fn fit(input: &Path, options: &FitOptions, format: Format) -> CliResult<Output> {
    let series = read_returns(input)?;
    let n = series.returns.len();
    let result = match options.t_star {
        Some(t) => {
            if t == 0 || t + options.len_vol > n {
                return Err(CliError::validation(format!(
                    "--t-star {t} with --len-vol {} does not fit {n} returns",
                    options.len_vol
                )));
            }
            fit_shock_fixed_effect(&series.returns, None, t, options.len_vol, options.orders, &options.fit)?
        }
        None => fit_garch(&series.returns, None, options.orders, &options.fit)?,
    };
    let out = FitJson::new(n, &result);
    let machine = match format {
        Format::Json => json(&out),
        Format::Csv => key_value_csv(&out.fields()),
    };
    let mut summary = String::new();
    for (k, v) in out.fields() {
        let shown = v.parse::<f64>().map(sig6).unwrap_or(v);
        let _ = writeln!(summary, "{k:>16}  {shown}");
    }
    Ok(Output { machine, summary })
}

#[derive(Serialize)]
struct DonorJson {
    name: String,
    omega_star_hat: f64,
    weight: f64,
    converged: bool,
}

#[derive(Serialize)]
struct LossesJson {
    ground_truth: f64,
    unadjusted: LossTriple,
    adjusted: LossTriple,
    mean_adjusted: LossTriple,
}

#[derive(Serialize)]
struct ForecastJson {
    target: String,
    t_star: usize,
    omega: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    loglik: f64,
    converged: bool,
    donors: Vec<DonorJson>,
    weight_objective: f64,
    weights_unique: bool,
    omega_star_hat: f64,
    omega_star_mean: f64,
    unadjusted: Vec<f64>,
    adjusted: Vec<f64>,
    mean_adjusted: Vec<f64>,
    adjusted_clamped: bool,
    mean_adjusted_clamped: bool,
    singular_value_shares: Vec<f64>,
    ols_implied_effect: Option<f64>,
    losses: Option<LossesJson>,
}

pub fn forecast(bundle_path: &Path, format: Format) -> CliResult<Output> {
    let bundle = load_bundle(bundle_path)?;
    let prepared = prepare(&bundle.target, &bundle.donors, &bundle.config)?;
    let rep = report(&prepared, bundle.ground_truth)?;
    let out = ForecastJson {
        target: bundle.target.name.clone(),
        t_star: bundle.target.t_star,
        omega: rep.target_params.omega,
        alpha: rep.target_params.alpha.clone(),
        beta: rep.target_params.beta.clone(),
        loglik: rep.target_loglik,
        converged: rep.target_converged,
        donors: rep
            .donor_names
            .iter()
            .enumerate()
            .map(|(i, name)| DonorJson {
                name: name.clone(),
                omega_star_hat: rep.donor_effects[i],
                weight: rep.weights.weights[i],
                converged: rep.donor_converged[i],
            })
            .collect(),
        weight_objective: rep.weights.objective,
        weights_unique: rep.weights.unique_hint,
        omega_star_hat: rep.omega_star_hat,
        omega_star_mean: rep.omega_star_mean,
        unadjusted: rep.unadjusted.clone(),
        adjusted: rep.adjusted.clone(),
        mean_adjusted: rep.mean_adjusted.clone(),
        adjusted_clamped: rep.adjusted_clamped,
        mean_adjusted_clamped: rep.mean_adjusted_clamped,
        singular_value_shares: rep.singular_value_shares.clone(),
        ols_implied_effect: rep.ols.as_ref().map(|o| o.implied_target_effect),
        losses: rep.losses.map(|l| LossesJson {
            ground_truth: l.ground_truth,
            unadjusted: l.unadjusted,
            adjusted: l.adjusted,
            mean_adjusted: l.mean_adjusted,
        }),
    };

    let mut fields: Vec<(String, String)> = vec![
        ("target".into(), out.target.clone()),
        ("t_star".into(), out.t_star.to_string()),
        ("omega".into(), out.omega.to_string()),
    ];
    fields.extend(out.alpha.iter().enumerate().map(|(i, v)| (format!("alpha{}", i + 1), v.to_string())));
    fields.extend(out.beta.iter().enumerate().map(|(i, v)| (format!("beta{}", i + 1), v.to_string())));
    for d in &out.donors {
        fields.push((format!("donor.{}.omega_star_hat", d.name), d.omega_star_hat.to_string()));
        fields.push((format!("donor.{}.weight", d.name), d.weight.to_string()));
    }
    fields.push(("omega_star_hat".into(), out.omega_star_hat.to_string()));
    fields.push(("omega_star_mean".into(), out.omega_star_mean.to_string()));
    for (name, path) in [("unadjusted", &out.unadjusted), ("adjusted", &out.adjusted), ("mean_adjusted", &out.mean_adjusted)] {
        for (h, v) in path.iter().enumerate() {
            fields.push((format!("{name}.{}", h + 1), v.to_string()));
        }
    }
    for (i, s) in out.singular_value_shares.iter().enumerate() {
        fields.push((format!("sv_share.{}", i + 1), s.to_string()));
    }
    if let Some(l) = &out.losses {
        fields.push(("ground_truth".into(), l.ground_truth.to_string()));
        for (name, t) in [("unadjusted", l.unadjusted), ("adjusted", l.adjusted), ("mean_adjusted", l.mean_adjusted)] {
            fields.push((format!("loss.{name}.mse"), t.mse.to_string()));
            fields.push((format!("loss.{name}.ape"), t.ape.to_string()));
            fields.push((format!("loss.{name}.ql"), t.ql.to_string()));
        }
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "target {} (t* = {})", out.target, out.t_star);
    let _ = writeln!(summary, "{:<12} {:>14} {:>10}", "donor", "omega*_hat", "weight");
    for d in &out.donors {
        let _ = writeln!(summary, "{:<12} {:>14} {:>10}", d.name, sig6(d.omega_star_hat), sig6(d.weight));
    }
    let _ = writeln!(summary, "aggregated omega*: {} (mean {})", sig6(out.omega_star_hat), sig6(out.omega_star_mean));
    let _ = writeln!(
        summary,
        "one-step forecast: unadjusted {}, adjusted {}, mean-adjusted {}",
        sig6(out.unadjusted[0]),
        sig6(out.adjusted[0]),
        sig6(out.mean_adjusted[0])
    );
    let shares: Vec<String> = out.singular_value_shares.iter().map(|s| sig6(*s)).collect();
    let _ = writeln!(summary, "singular value shares: {}", shares.join(", "));
    if let Some(l) = &out.losses {
        let _ = writeln!(summary, "ground truth {}", sig6(l.ground_truth));
        let _ = writeln!(summary, "{:<14} {:>12} {:>12} {:>12}", "forecast", "MSE", "APE", "QL");
        for (name, t) in [("unadjusted", l.unadjusted), ("adjusted", l.adjusted), ("mean-adjusted", l.mean_adjusted)] {
            let _ = writeln!(summary, "{name:<14} {:>12} {:>12} {:>12}", sig6(t.mse), sig6(t.ape), sig6(t.ql));
        }
    }

    let machine = match format {
        Format::Json => json(&out),
        Format::Csv => key_value_csv(&fields),
    };
    Ok(Output { machine, summary })
}

#[derive(Serialize)]
struct AxisJson {
    parameter: GridParameter,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct GridJson {
    seed: u64,
    replications: usize,
    axis1: AxisJson,
    axis2: AxisJson,
    cells: Vec<CellResult>,
}

pub fn mc_grid(config_path: &Path, seed: Option<u64>, format: Format) -> CliResult<(Output, u64)> {
    let raw: GridToml = load(config_path)?;
    let config = raw.to_config(seed)?;
    let result = run_grid(&config)?;
    let machine = match format {
        Format::Csv => result.to_csv(),
        Format::Json => json(&GridJson {
            seed: config.seed,
            replications: config.replications,
            axis1: AxisJson { parameter: result.axis1.0, values: result.axis1.1.clone() },
            axis2: AxisJson { parameter: result.axis2.0, values: result.axis2.1.clone() },
            cells: result.cells.iter().flatten().copied().collect(),
        }),
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "{} x {} win fractions (seed {})", result.axis1.0.name(), result.axis2.0.name(), config.seed);
    for row in &result.cells {
        let cells: Vec<String> = row.iter().map(|c| sig6(c.win_fraction)).collect();
        let _ = writeln!(summary, "{:>10}  {}", sig6(row[0].axis1_value), cells.join("  "));
    }
    Ok((Output { machine, summary }, config.seed))
}

#[derive(Serialize)]
struct MultiverseRowJson {
    kind: RowKind,
    omitted_covariate: Option<String>,
    omitted_donor: Option<String>,
    forecast: f64,
    loss: f64,
    omega_star_hat: Option<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct MultiverseJson {
    loss: LossKind,
    ground_truth: f64,
    rows: Vec<MultiverseRowJson>,
    infeasible: Vec<(Option<String>, Option<String>, String)>,
}

pub fn multiverse(bundle_path: &Path, loss: Option<LossKind>, format: Format) -> CliResult<Output> {
    let bundle = load_bundle(bundle_path)?;
    let loss = loss.or(bundle.raw.multiverse.loss).unwrap_or_default();
    let ground_truth = bundle
        .ground_truth
        .ok_or_else(|| CliError::validation("multiverse needs ground_truth or an [intraday] section"))?;
    let prepared = prepare(&bundle.target, &bundle.donors, &bundle.config)?;
    let result = run_multiverse(&prepared, ground_truth, loss)?;
    let machine = match format {
        Format::Csv => result.to_csv(),
        Format::Json => json(&MultiverseJson {
            loss,
            ground_truth,
            rows: result
                .rows
                .iter()
                .map(|r| MultiverseRowJson {
                    kind: r.kind,
                    omitted_covariate: r.omitted_covariate.clone(),
                    omitted_donor: r.omitted_donor.clone(),
                    forecast: r.adjusted_forecast,
                    loss: r.loss,
                    omega_star_hat: (!r.omega_star_hat.is_nan()).then_some(r.omega_star_hat),
                    weights: r.weights.clone(),
                })
                .collect(),
            infeasible: result
                .infeasible
                .iter()
                .map(|i| (i.omitted_covariate.clone(), i.omitted_donor.clone(), i.reason.clone()))
                .collect(),
        }),
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "{:>12}  {:<16} {:<16} {:>12}", "loss", "covariate", "donor", "forecast");
    for r in &result.rows {
        let label = |v: &Option<String>| match (v, r.kind) {
            (Some(s), _) => s.clone(),
            (None, RowKind::Configuration) => "None".into(),
            (None, k) => k.name().to_string(),
        };
        let _ = writeln!(
            summary,
            "{:>12}  {:<16} {:<16} {:>12}",
            sig6(r.loss),
            label(&r.omitted_covariate),
            label(&r.omitted_donor),
            sig6(r.adjusted_forecast)
        );
    }
    for i in &result.infeasible {
        let _ = writeln!(summary, "infeasible: {:?} / {:?}: {}", i.omitted_covariate, i.omitted_donor, i.reason);
    }
    Ok(Output { machine, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.23456789), "1.23457");
        assert_eq!(sig6(123456.789), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-2.5), "-2.50000");
    }
}
