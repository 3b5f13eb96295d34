use shockvol::estimation::FitConfig;
use shockvol::garch::{simulate_path, CovariateModel, GarchParams, ShockSpec};
use shockvol::multiverse::{run_multiverse, LossKind, RowKind};
use shockvol::pipeline::{prepare, report, DonorSeries, PipelineConfig, Prepared, TargetSeries};
use shockvol::similarity::{solve_weights, standardize, SemiNorm};

fn returns(seed: u64, shock: Option<f64>) -> Vec<f64> {
    let params = GarchParams::garch11(0.2, 0.1, 0.82).unwrap();
    let spec = shock.map(|w| ShockSpec::volatility_only(600, 3, w));
    simulate_path(&params, spec.as_ref(), 700, &CovariateModel::none(), seed).unwrap().returns
}

fn config(names: &[&str]) -> PipelineConfig {
    PipelineConfig {
        fit: FitConfig { standard_errors: false, ..FitConfig::default() },
        covariate_names: names.iter().map(|s| s.to_string()).collect(),
        ..PipelineConfig::default()
    }
}

fn build(target_profile: Vec<f64>, donors: &[(&str, f64, Vec<f64>)], names: &[&str]) -> Prepared {
    let target = TargetSeries {
        name: "target".into(),
        returns: returns(100, None),
        t_star: 600,
        profile: target_profile,
        regressors: None,
        next_regressors: vec![],
    };
    let donors: Vec<DonorSeries> = donors
        .iter()
        .enumerate()
        .map(|(i, (name, shock, profile))| DonorSeries {
            name: name.to_string(),
            returns: returns(200 + i as u64, Some(*shock)),
            t_star: 600,
            len_vol: 3,
            profile: profile.clone(),
            regressors: None,
        })
        .collect();
    prepare(&target, &donors, &config(names)).unwrap()
}

#[test]
fn inactive_donor_and_constant_covariate_leave_forecast_unchanged() {
    // The target coincides with donor "a", so "a" takes all the weight in
    // every configuration that keeps it; "flat" has no dispersion.
    let prepared = build(
        vec![1.0, 5.0, 2.0],
        &[("a", 3.0, vec![1.0, 5.0, 2.0]), ("b", 1.0, vec![3.0, 5.0, -1.0]), ("c", 6.0, vec![-2.0, 5.0, 4.0])],
        &["x", "flat", "z"],
    );
    let result = run_multiverse(&prepared, 1.5, LossKind::Ql).unwrap();
    let base = result.baseline().unwrap().adjusted_forecast;
    let find = |cov: Option<&str>, donor: Option<&str>| {
        result
            .rows
            .iter()
            .find(|r| {
                r.kind == RowKind::Configuration
                    && r.omitted_covariate.as_deref() == cov
                    && r.omitted_donor.as_deref() == donor
            })
            .unwrap()
            .adjusted_forecast
    };
    assert!((find(None, Some("c")) - base).abs() < 1e-9);
    assert!((find(None, Some("b")) - base).abs() < 1e-9);
    assert!((find(Some("flat"), None) - base).abs() < 1e-9);
    assert!((find(Some("flat"), Some("c")) - base).abs() < 1e-9);
    assert!((find(None, Some("a")) - base).abs() > 1e-6);
}

#[test]
fn outlier_donor_shifts_remaining_weights() {
    let names = ["x1", "x2"];
    let prepared = build(
        vec![1.5, 0.8],
        &[
            ("a", 2.0, vec![0.0, 0.0]),
            ("b", 4.0, vec![1.0, 0.0]),
            ("c", 1.0, vec![0.0, 1.0]),
            ("outlier", 8.0, vec![100.0, -80.0]),
        ],
        &names,
    );
    let result = run_multiverse(&prepared, 1.5, LossKind::Ql).unwrap();
    let full = result.baseline().unwrap().weights.clone();
    let dropped = result
        .rows
        .iter()
        .find(|r| r.omitted_covariate.is_none() && r.omitted_donor.as_deref() == Some("outlier"))
        .unwrap();
    let reduced = prepared.profile.without_donor(3).unwrap();
    let oracle = solve_weights(&standardize(&reduced), &SemiNorm::Identity).unwrap();
    for (w, o) in dropped.weights.iter().zip(&oracle.weights) {
        assert!((w - o).abs() < 1e-12);
    }
    let shift: f64 = full[..3].iter().zip(&dropped.weights).map(|(a, b)| (a - b).abs()).sum();
    assert!(shift > 1e-3, "{full:?} vs {:?}", dropped.weights);
}

#[test]
fn fifty_rows_baseline_bits_and_losses() {
    let names = ["v1", "v2", "v3", "v4", "v5", "v6", "v7", "v8", "v9"];
    let donors: Vec<(&str, f64, Vec<f64>)> = ["d1", "d2", "d3", "d4"]
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, 1.0 + i as f64, (0..9).map(|j| ((i * 9 + j) as f64 * 0.7).sin()).collect()))
        .collect();
    let prepared = build((0..9).map(|j| (j as f64 * 0.3).cos()).collect(), &donors, &names);
    let gt = 1.7;
    let result = run_multiverse(&prepared, gt, LossKind::Ql).unwrap();
    let configs = result.rows.iter().filter(|r| r.kind == RowKind::Configuration).count();
    assert_eq!(configs + result.infeasible.len(), 50);
    assert!(result.infeasible.is_empty());
    assert_eq!(result.rows.len(), 53);
    for kind in [RowKind::Mean, RowKind::Median, RowKind::Unadjusted] {
        assert!(result.row(kind).is_some());
    }

    let standalone = report(&prepared, Some(gt)).unwrap();
    assert_eq!(result.baseline().unwrap().adjusted_forecast.to_bits(), standalone.adjusted[0].to_bits());
    assert_eq!(result.row(RowKind::Unadjusted).unwrap().adjusted_forecast.to_bits(), standalone.unadjusted[0].to_bits());

    for r in &result.rows {
        let x = gt / r.adjusted_forecast;
        assert!((r.loss - (x - x.ln() - 1.0)).abs() <= 1e-12);
    }
    assert!(result.rows.windows(2).all(|w| w[0].loss <= w[1].loss));

    let forecasts: Vec<f64> =
        result.rows.iter().filter(|r| r.kind == RowKind::Configuration).map(|r| r.adjusted_forecast).collect();
    let mean = forecasts.iter().sum::<f64>() / forecasts.len() as f64;
    assert!((result.row(RowKind::Mean).unwrap().adjusted_forecast - mean).abs() < 1e-12);

    let csv = result.to_csv();
    assert_eq!(csv.lines().count(), 54);
    assert!(csv.starts_with("loss,omitted_covariate,omitted_donor,forecast,omega_star_hat,kind\n"));
}

#[test]
fn ties_keep_enumeration_order() {
    // Identical donors make many configurations tie exactly.
    let prepared = build(
        vec![0.0, 0.0],
        &[("a", 2.0, vec![1.0, 1.0]), ("b", 2.0, vec![1.0, 1.0]), ("c", 2.0, vec![1.0, 1.0])],
        &["x1", "x2"],
    );
    let result = run_multiverse(&prepared, 1.0, LossKind::Mse).unwrap();
    for w in result.rows.windows(2) {
        if w[0].loss == w[1].loss {
            assert!(w[0].order < w[1].order);
        }
    }
}

#[test]
fn too_few_donors_or_covariates_is_rejected() {
    let prepared = build(vec![0.0], &[("a", 2.0, vec![1.0]), ("b", 2.0, vec![2.0])], &["x"]);
    assert!(run_multiverse(&prepared, 1.0, LossKind::Ql).is_err());
}
