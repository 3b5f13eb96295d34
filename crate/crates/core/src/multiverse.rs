//! Leave-one-out sensitivity over donors and covariates.
//!
//! Every combination of "omit one covariate or none" with "omit one donor
//! or none" re-weights the donors and re-forecasts. Donor fixed effects are
//! fitted once and reused; only the profile (and its standardization)
//! changes between configurations.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ape_loss, mse_loss, ql_loss};
use crate::pipeline::Prepared;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Ql,
    Mse,
    Ape,
}

impl LossKind {
    pub fn evaluate(self, prediction: f64, ground_truth: f64) -> Result<f64> {
        if !(ground_truth > 0.0) {
            return Err(Error::NonpositiveGroundTruth(ground_truth));
        }
        match self {
            LossKind::Ql => ql_loss(prediction, ground_truth),
            LossKind::Mse => Ok(mse_loss(prediction, ground_truth)),
            LossKind::Ape => ape_loss(prediction, ground_truth),
        }
    }
}

/// Indices into the covariate and donor lists; `None` keeps everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Omission {
    pub covariate: Option<usize>,
    pub donor: Option<usize>,
}

/// `(n_covariates + 1)(n_donors + 1)` omissions: covariates outer, donors
/// inner, `None` first in each.
pub fn enumerate_configs(n_donors: usize, n_covariates: usize) -> Vec<Omission> {
    let covariates = std::iter::once(None).chain((0..n_covariates).map(Some));
    covariates
        .flat_map(|c| std::iter::once(None).chain((0..n_donors).map(Some)).map(move |d| Omission { covariate: c, donor: d }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Configuration,
    Mean,
    Median,
    Unadjusted,
}

impl RowKind {
    pub fn name(self) -> &'static str {
        match self {
            RowKind::Configuration => "configuration",
            RowKind::Mean => "mean",
            RowKind::Median => "median",
            RowKind::Unadjusted => "unadjusted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiverseRow {
    pub kind: RowKind,
    pub omitted_covariate: Option<String>,
    pub omitted_donor: Option<String>,
    pub adjusted_forecast: f64,
    pub loss: f64,
    /// Weights over the donors kept in this configuration.
    pub weights: Vec<f64>,
    pub omega_star_hat: f64,
    /// Position in enumeration order; breaks ties in the ranking.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleConfiguration {
    pub omitted_covariate: Option<String>,
    pub omitted_donor: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiverseResult {
    /// Ascending by loss, ties in enumeration order.
    pub rows: Vec<MultiverseRow>,
    pub infeasible: Vec<InfeasibleConfiguration>,
    pub ground_truth: f64,
    pub loss: LossKind,
}

fn evaluate_one(prepared: &Prepared, omission: Omission) -> Result<(Vec<f64>, f64, f64)> {
    let mut profile = prepared.profile.clone();
    let mut effects = prepared.donor_effects();
    if let Some(c) = omission.covariate {
        profile = profile
            .without_covariate(c)
            .map_err(|e| Error::ConfigurationInfeasible(e.to_string()))?;
    }
    if let Some(d) = omission.donor {
        profile = profile.without_donor(d).map_err(|e| Error::ConfigurationInfeasible(e.to_string()))?;
        effects.remove(d);
    }
    let (_, solution, omega_star) = prepared.weigh(&profile, &effects)?;
    let forecast = prepared.adjusted(omega_star)?;
    Ok((solution.weights, omega_star, forecast.path[0]))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run_multiverse(prepared: &Prepared, ground_truth: f64, loss: LossKind) -> Result<MultiverseResult> {
    if !(ground_truth > 0.0) {
        return Err(Error::NonpositiveGroundTruth(ground_truth));
    }
    let profile = &prepared.profile;
    if profile.n() < 2 || profile.p() < 2 {
        return Err(Error::InvalidParams(format!(
            "leave-one-out needs at least 2 donors and 2 covariates (got {} and {})",
            profile.n(),
            profile.p()
        )));
    }
    let configs = enumerate_configs(profile.n(), profile.p());
    let outcomes: Vec<Result<(Vec<f64>, f64, f64)>> =
        configs.par_iter().map(|o| evaluate_one(prepared, *o)).collect();

    let mut rows = Vec::with_capacity(configs.len() + 3);
    let mut infeasible = Vec::new();
    for (order, (omission, outcome)) in configs.iter().zip(outcomes).enumerate() {
        let omitted_covariate = omission.covariate.map(|c| profile.covariate_names[c].clone());
        let omitted_donor = omission.donor.map(|d| profile.donor_names[d].clone());
        match outcome.and_then(|(w, o, f)| Ok((w, o, f, loss.evaluate(f, ground_truth)?))) {
            Ok((weights, omega_star_hat, adjusted_forecast, value)) => rows.push(MultiverseRow {
                kind: RowKind::Configuration,
                omitted_covariate,
                omitted_donor,
                adjusted_forecast,
                loss: value,
                weights,
                omega_star_hat,
                order,
            }),
            Err(e) => infeasible.push(InfeasibleConfiguration { omitted_covariate, omitted_donor, reason: e.to_string() }),
        }
    }
    if rows.is_empty() {
        return Err(Error::ConfigurationInfeasible("no configuration produced a forecast".into()));
    }

    let forecasts: Vec<f64> = rows.iter().map(|r| r.adjusted_forecast).collect();
    let mean = forecasts.iter().sum::<f64>() / forecasts.len() as f64;
    let med = median(&forecasts);
    let unadjusted = prepared.unadjusted()?.path[0];
    let base = configs.len();
    for (i, (kind, value)) in [(RowKind::Mean, mean), (RowKind::Median, med), (RowKind::Unadjusted, unadjusted)]
        .into_iter()
        .enumerate()
    {
        let all = (kind == RowKind::Unadjusted).then(|| "All".to_string());
        rows.push(MultiverseRow {
            kind,
            omitted_covariate: all.clone(),
            omitted_donor: all,
            adjusted_forecast: value,
            loss: loss.evaluate(value, ground_truth)?,
            weights: Vec::new(),
            omega_star_hat: if kind == RowKind::Unadjusted { 0.0 } else { f64::NAN },
            order: base + i,
        });
    }
    rows.sort_by(|a, b| a.loss.partial_cmp(&b.loss).unwrap_or(Ordering::Equal).then(a.order.cmp(&b.order)));
    Ok(MultiverseResult { rows, infeasible, ground_truth, loss })
}

impl MultiverseResult {
    pub const HEADER: &'static str = "loss,omitted_covariate,omitted_donor,forecast,omega_star_hat,kind";

    /// The baseline row with nothing omitted.
    pub fn baseline(&self) -> Option<&MultiverseRow> {
        self.rows.iter().find(|r| r.kind == RowKind::Configuration && r.order == 0)
    }

    pub fn row(&self, kind: RowKind) -> Option<&MultiverseRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Ranked table with shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let name = |v: &Option<String>, kind: RowKind| match (v, kind) {
            (Some(s), _) => s.clone(),
            (None, RowKind::Configuration) => "None".to_string(),
            (None, _) => String::new(),
        };
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.loss,
                csv_field(&name(&r.omitted_covariate, r.kind)),
                csv_field(&name(&r.omitted_donor, r.kind)),
                r.adjusted_forecast,
                if r.omega_star_hat.is_nan() { String::new() } else { r.omega_star_hat.to_string() },
                r.kind.name()
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_configs(4, 9).len(), 50);
        let small = enumerate_configs(1, 1);
        assert_eq!(
            small,
            vec![
                Omission { covariate: None, donor: None },
                Omission { covariate: None, donor: Some(0) },
                Omission { covariate: Some(0), donor: None },
                Omission { covariate: Some(0), donor: Some(0) },
            ]
        );
        let all = enumerate_configs(3, 2);
        assert_eq!(all.iter().filter(|o| o.covariate.is_none() && o.donor.is_none()).count(), 1);
        assert_eq!(all[0], Omission { covariate: None, donor: None });
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn loss_kinds() {
        assert_eq!(LossKind::Mse.evaluate(3.0, 1.0).unwrap(), 4.0);
        assert_eq!(LossKind::Ape.evaluate(3.0, 1.0).unwrap(), 2.0);
        assert!(LossKind::Ql.evaluate(1.0, 1.0).unwrap() == 0.0);
        assert!(LossKind::Ql.evaluate(1.0, 0.0).is_err());
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
