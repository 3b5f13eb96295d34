use shockvol::montecarlo::{run_cell, run_grid, summarize, CellParams, Design, GridConfig, GridParameter};

fn cell(mu_delta: f64, mu_omega_star: f64, sigma_u: f64) -> CellParams {
    CellParams { mu_v: 1.0, sigma_v: 0.125, mu_delta, mu_omega_star, sigma_u }
}

#[test]
fn null_cell_is_a_coin_flip_and_strong_signal_wins() {
    let design = Design::default();
    let null = summarize(0.0, 0.0, &run_cell(&cell(0.0, 0.0, 0.0), &design, 100, 31));
    let strong = summarize(0.0, 0.0, &run_cell(&cell(2.0, 0.125, 0.125), &design, 100, 31));
    assert_eq!(null.failures + strong.failures, 0);
    assert!((0.25..=0.75).contains(&null.win_fraction), "{null:?}");
    assert!(strong.win_fraction >= 0.7, "{strong:?}");
}

#[test]
fn grid_export_is_reproducible() {
    let config = GridConfig {
        fixed: CellParams::default(),
        axis1: (GridParameter::MuDelta, vec![0.125, 2.0]),
        axis2: (GridParameter::SigmaU, vec![0.125]),
        replications: 8,
        design: Design { t_range: (756, 900), ..Design::default() },
        seed: 4,
    };
    let a = run_grid(&config).unwrap().to_csv();
    let b = run_grid(&config).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
}
