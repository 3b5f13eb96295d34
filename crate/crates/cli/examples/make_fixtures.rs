//! Regenerates the synthetic study bundle under `tests/fixtures`.
//!
//! ```text
//! cargo run -p shockvol-cli --example make_fixtures -- crates/cli/tests/fixtures
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use shockvol::garch::{simulate_path, CovariateModel, GarchParams, ShockSpec};

const T_STAR: usize = 1000;
const LEN_VOL: usize = 10;

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/tests/fixtures".into()));
    let bundle = dir.join("bundle");
    std::fs::create_dir_all(&bundle).unwrap();
    let base = GarchParams::garch11(0.2, 0.1, 0.82).unwrap();

    // Shock size rises with the first covariates; the target sits nearest
    // the two large-shock donors.
    let names = ["vix", "spread", "term", "oil", "fx", "gold", "momentum", "volume", "skew"];
    let donors: [(&str, f64, [f64; 9], &str); 4] = [
        ("alpha", 7.0, [30.0, 2.1, 0.4, -3.0, 1.2, 0.8, -0.5, 2.0, 0.1], "2008-03-03"),
        ("bravo", 6.0, [28.0, 1.9, 0.6, -2.0, 1.0, 0.6, -0.7, 1.8, 0.2], "2010-06-01"),
        ("charlie", 1.0, [14.0, 0.9, 1.5, 1.0, -0.4, -0.2, 0.9, 0.7, -0.3], "2012-09-03"),
        ("delta", 0.5, [12.0, 0.8, 1.7, 2.0, -0.6, -0.1, 1.1, 0.5, -0.2], "2014-01-01"),
    ];
    let target_profile = [29.0, 2.0, 0.5, -2.5, 1.1, 0.7, -0.6, 1.9, 0.15];
    let target_shock = 6.5;

    let mut profiles = String::from("series");
    for n in names {
        let _ = write!(profiles, ",{n}");
    }
    profiles.push('\n');
    let row = |name: &str, v: &[f64; 9]| {
        let cells: Vec<String> = v.iter().map(f64::to_string).collect();
        format!("{name},{}\n", cells.join(","))
    };
    profiles.push_str(&row("target", &target_profile));

    let mut toml = String::new();
    let quoted: Vec<String> = names.iter().map(|n| format!("{n:?}")).collect();
    let _ = writeln!(toml, "covariates = [{}]", quoted.join(", "));
    let _ = writeln!(toml, "profiles = \"profiles.csv\"\n");
    let _ = writeln!(toml, "[model]\norders = [1, 1]\nhorizon = 1\n");
    let _ = writeln!(toml, "# realized variance of log prices, rescaled to squared percent");
    let _ = writeln!(toml, "[intraday]\npath = \"intraday.csv\"\ndays = 1\nscale = 10000.0\n");

    // Target: percent returns through the shock window.
    let spec = ShockSpec::volatility_only(T_STAR, LEN_VOL, target_shock);
    let path = simulate_path(&base, Some(&spec), T_STAR + LEN_VOL, &CovariateModel::none(), 101).unwrap();
    let dates = business_days(NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(), T_STAR + LEN_VOL);
    let mut csv = String::from("date,return\n");
    for (d, r) in dates.iter().zip(&path.returns) {
        let _ = writeln!(csv, "{d},{r}");
    }
    std::fs::write(bundle.join("target.csv"), csv).unwrap();
    let shock_date = dates[T_STAR];
    let _ = writeln!(
        toml,
        "[target]\nname = \"target\"\nreturns = \"target.csv\"\nshock_date = \"{shock_date}\"\n"
    );

    // Intraday ticks on the shock day: 5-minute log returns (in percent
    // units) with variance sigma2 / 77 after the first block.
    let sigma2 = path.sigma2[T_STAR];
    let noise = GarchParams::garch11(sigma2 / 77.0, 0.0, 0.0).unwrap();
    let blocks = simulate_path(&noise, None, 78, &CovariateModel::none(), 102).unwrap().returns;
    let mut ticks = String::from("timestamp,price\n");
    let mut log_price = 4.6_f64;
    let open = 9 * 3600 + 30 * 60;
    let _ = writeln!(ticks, "{}T09:30:00,{}", shock_date, log_price.exp());
    for (i, r) in blocks.iter().enumerate() {
        log_price += r / 100.0;
        let s = open + 300 * (i as u32 + 1);
        let _ = writeln!(ticks, "{}T{:02}:{:02}:00,{}", shock_date, s / 3600, s / 60 % 60, log_price.exp());
    }
    std::fs::write(bundle.join("intraday.csv"), ticks).unwrap();

    for (i, (name, shock, profile, start)) in donors.iter().enumerate() {
        let spec = ShockSpec::volatility_only(T_STAR, LEN_VOL, *shock);
        let path = simulate_path(&base, Some(&spec), 1200, &CovariateModel::none(), 200 + i as u64).unwrap();
        let dates = business_days(NaiveDate::parse_from_str(start, "%Y-%m-%d").unwrap(), 1200);
        let mut csv = String::from("date,return\n");
        for (d, r) in dates.iter().zip(&path.returns) {
            let _ = writeln!(csv, "{d},{r}");
        }
        std::fs::write(bundle.join(format!("{name}.csv")), csv).unwrap();
        profiles.push_str(&row(name, profile));
        let _ = writeln!(
            toml,
            "[[donors]]\nname = \"{name}\"\nreturns = \"{name}.csv\"\nshock_date = \"{}\"\nlen_vol = {LEN_VOL}\n",
            dates[T_STAR]
        );
    }
    std::fs::write(bundle.join("profiles.csv"), profiles).unwrap();
    std::fs::write(bundle.join("bundle.toml"), toml).unwrap();

    // A plain GARCH(1,1) path for the fit command.
    let fit_path = simulate_path(&base, None, 4000, &CovariateModel::none(), 7).unwrap();
    let mut csv = String::from("return\n");
    for r in &fit_path.returns {
        let _ = writeln!(csv, "{r}");
    }
    std::fs::write(dir.join("garch11.csv"), csv).unwrap();
}
