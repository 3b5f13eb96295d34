//! A study bundle: target, donors, shock-time profiles and ground truth.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use shockvol::evaluation::{realized_volatility_from_ticks, IntradayGrid, RVConfig};
use shockvol::pipeline::{DonorSeries, PipelineConfig, TargetSeries};
use shockvol::similarity::SemiNorm;

use crate::config::{load, BundleToml, SeriesToml};
use crate::error::{CliError, CliResult};
use crate::io::{parse_date, read_intraday, read_profiles, read_returns};

#[derive(Debug, Clone)]
pub struct StudyBundle {
    pub target: TargetSeries,
    pub donors: Vec<DonorSeries>,
    pub config: PipelineConfig,
    pub ground_truth: Option<f64>,
    pub raw: BundleToml,
}

fn shock_index(series: &SeriesToml, returns: &crate::io::DailySeries) -> CliResult<usize> {
    match (&series.t_star, &series.shock_date) {
        (Some(t), None) => Ok(*t),
        (None, Some(d)) => returns.index_of(parse_date(d)?),
        _ => Err(CliError::validation(format!("series {:?}: set exactly one of t_star and shock_date", series.name))),
    }
}

fn profile_of(
    series: &SeriesToml,
    profiles: &Option<HashMap<String, Vec<f64>>>,
    p: usize,
) -> CliResult<Vec<f64>> {
    let row = match (&series.covariates, profiles) {
        (Some(inline), _) => inline.clone(),
        (None, Some(table)) => table
            .get(&series.name)
            .cloned()
            .ok_or_else(|| CliError::validation(format!("profiles file has no row for series {:?}", series.name)))?,
        (None, None) => {
            return Err(CliError::validation(format!("series {:?} has no covariates and no profiles file", series.name)))
        }
    };
    if row.len() != p {
        return Err(CliError::validation(format!(
            "series {:?} has {} covariates, {p} are declared",
            series.name,
            row.len()
        )));
    }
    Ok(row)
}

pub fn load_bundle(path: &Path) -> CliResult<StudyBundle> {
    let raw: BundleToml = load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    let p = raw.covariates.len();
    if p == 0 {
        return Err(CliError::validation("the bundle declares no covariates"));
    }
    if raw.donors.is_empty() {
        return Err(CliError::validation("the bundle has no donors"));
    }
    let profiles = raw.profiles.as_ref().map(|f| read_profiles(&resolve(f), &raw.covariates)).transpose()?;
    let window = raw.model.estimation_window;

    let t = &raw.target;
    let series = read_returns(&resolve(&t.returns))?;
    let t_star = shock_index(t, &series)?;
    if t_star == 0 || t_star > series.returns.len() {
        return Err(CliError::validation(format!(
            "target {:?}: shock index {t_star} outside 1..={}",
            t.name,
            series.returns.len()
        )));
    }
    let start = window.map_or(0, |w| t_star.saturating_sub(w));
    let target = TargetSeries {
        name: t.name.clone(),
        returns: series.returns[start..t_star].to_vec(),
        t_star: t_star - start,
        profile: profile_of(t, &profiles, p)?,
        regressors: None,
        next_regressors: vec![],
    };

    let mut donors = Vec::with_capacity(raw.donors.len());
    for d in &raw.donors {
        let series = read_returns(&resolve(&d.returns))?;
        let t_star = shock_index(d, &series)?;
        let len_vol = d.len_vol.unwrap_or(1);
        if t_star == 0 || t_star + len_vol > series.returns.len() {
            return Err(CliError::validation(format!(
                "donor {:?}: shock window {t_star}..{} does not fit {} returns",
                d.name,
                t_star + len_vol,
                series.returns.len()
            )));
        }
        if let Some(w) = window {
            if t_star < w {
                return Err(CliError::validation(format!(
                    "donor {:?}: {t_star} pre-shock returns, estimation window is {w}",
                    d.name
                )));
            }
        }
        let start = window.map_or(0, |w| t_star - w);
        donors.push(DonorSeries {
            name: d.name.clone(),
            returns: series.returns[start..].to_vec(),
            t_star: t_star - start,
            len_vol,
            profile: profile_of(d, &profiles, p)?,
            regressors: None,
        });
    }

    let defaults = PipelineConfig::default();
    let m = &raw.model;
    let seminorm = match &m.seminorm {
        None => SemiNorm::Identity,
        Some(rows) => SemiNorm::from_rows(rows)?,
    };
    let config = PipelineConfig {
        orders: m.orders.unwrap_or(defaults.orders),
        fit: m.fit_config()?,
        horizon: m.horizon.unwrap_or(defaults.horizon),
        adjustment_length: m.adjustment_length.unwrap_or(defaults.adjustment_length),
        seminorm,
        standardize: m.standardize.unwrap_or(defaults.standardize),
        variance_floor: defaults.variance_floor,
        covariate_names: raw.covariates.clone(),
    };

    let ground_truth = match (&raw.ground_truth, &raw.intraday) {
        (Some(_), Some(_)) => return Err(CliError::validation("set either ground_truth or [intraday], not both")),
        (Some(v), None) => Some(*v),
        (None, Some(intra)) => {
            let days = read_intraday(&resolve(&intra.path))?;
            if days.len() < intra.days {
                return Err(CliError::validation(format!(
                    "intraday file has {} days, {} requested",
                    days.len(),
                    intra.days
                )));
            }
            let ticks: Vec<Vec<(u32, f64)>> = days.into_iter().take(intra.days).map(|(_, t)| t).collect();
            let cfg = RVConfig { k: intra.days, m: intra.m, drop_first_block: intra.drop_first_block };
            Some(intra.scale * realized_volatility_from_ticks(&ticks, &IntradayGrid::default(), &cfg)?)
        }
        (None, None) => None,
    };
    if let Some(gt) = ground_truth {
        if !(gt > 0.0) {
            return Err(CliError::validation(format!("ground truth {gt} must be positive")));
        }
    }
    Ok(StudyBundle { target, donors, config, ground_truth, raw })
}
