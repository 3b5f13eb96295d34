//! Realized-volatility ground truth and forecast losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RVConfig {
    /// Days averaged.
    pub k: usize,
    /// Block returns per day that enter the sum.
    pub m: usize,
    /// Inputs carry one extra leading block per day that is discarded.
    pub drop_first_block: bool,
}

impl Default for RVConfig {
    /// One day of 5-minute blocks, 9:35 to 16:00.
    fn default() -> Self {
        Self { k: 1, m: 77, drop_first_block: true }
    }
}

impl RVConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::InvalidParams("RV needs k >= 1 and m >= 1".into()));
        }
        Ok(())
    }

    fn blocks_supplied(&self) -> usize {
        self.m + usize::from(self.drop_first_block)
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// `(1/K) Σ_days Σ_blocks r²` from per-day block log returns.
pub fn realized_volatility(days: &[Vec<f64>], config: &RVConfig) -> Result<f64> {
    config.validate()?;
    if days.len() != config.k {
        return Err(Error::DimensionMismatch(format!("{} days supplied for K = {}", days.len(), config.k)));
    }
    let expected = config.blocks_supplied();
    let skip = usize::from(config.drop_first_block);
    for (day, blocks) in days.iter().enumerate() {
        if blocks.len() != expected {
            return Err(Error::BlockCountMismatch { day, expected, found: blocks.len() });
        }
        if blocks.iter().any(|r| !r.is_finite()) {
            return Err(Error::DomainError(format!("day {day}: non-finite block return")));
        }
    }
    let total = compensated_sum(days.iter().flat_map(|b| b[skip..].iter().map(|r| r * r)));
    Ok(total / config.k as f64)
}

/// Same as [`realized_volatility`] from per-day log prices at the block
/// boundaries (one more price than blocks).
pub fn realized_volatility_from_log_prices(days: &[Vec<f64>], config: &RVConfig) -> Result<f64> {
    config.validate()?;
    let expected = config.blocks_supplied() + 1;
    let mut returns = Vec::with_capacity(days.len());
    for (day, prices) in days.iter().enumerate() {
        if prices.len() != expected {
            return Err(Error::BlockCountMismatch { day, expected: expected - 1, found: prices.len().saturating_sub(1) });
        }
        returns.push(prices.windows(2).map(|w| w[1] - w[0]).collect());
    }
    realized_volatility(&returns, config)
}

/// The 5-minute sampling grid of a trading day, in seconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntradayGrid {
    pub open: u32,
    pub close: u32,
    pub block_seconds: u32,
}

impl Default for IntradayGrid {
    /// 9:30 to 16:00 in 5-minute blocks.
    fn default() -> Self {
        Self { open: 9 * 3600 + 30 * 60, close: 16 * 3600, block_seconds: 300 }
    }
}

impl IntradayGrid {
    /// Block boundaries from the open through the close.
    pub fn boundaries(&self) -> Result<Vec<u32>> {
        if self.block_seconds == 0 || self.close <= self.open || !(self.close - self.open).is_multiple_of(self.block_seconds) {
            return Err(Error::InvalidParams(format!(
                "grid {}..{} does not divide into {}-second blocks",
                self.open, self.close, self.block_seconds
            )));
        }
        Ok((self.open..=self.close).step_by(self.block_seconds as usize).collect())
    }

    pub fn block_count(&self) -> Result<usize> {
        Ok(self.boundaries()?.len() - 1)
    }
}

/// Block log returns of one day from `(seconds after midnight, price)`
/// ticks sorted by time. Each boundary is sampled at the last tick at or
/// before it. The opening boundary may use any earlier tick of the day;
/// every later boundary needs a tick inside its own block.
pub fn block_returns_from_ticks(ticks: &[(u32, f64)], grid: &IntradayGrid) -> Result<Vec<f64>> {
    let boundaries = grid.boundaries()?;
    if ticks.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::DomainError("ticks are not sorted by time".into()));
    }
    if let Some((t, p)) = ticks.iter().find(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::DomainError(format!("non-positive price {p} at second {t}")));
    }
    let mut sampled = Vec::with_capacity(boundaries.len());
    let mut cursor = 0;
    let mut last: Option<f64> = None;
    for (i, &b) in boundaries.iter().enumerate() {
        let mut inside = false;
        while cursor < ticks.len() && ticks[cursor].0 <= b {
            last = Some(ticks[cursor].1);
            inside = true;
            cursor += 1;
        }
        if i > 0 && !inside {
            return Err(Error::MissingBlock(format!(
                "no tick in ({}, {}]",
                clock(boundaries[i - 1]),
                clock(b)
            )));
        }
        match last {
            Some(price) => sampled.push(price.ln()),
            None => return Err(Error::MissingBlock(format!("no tick at or before {}", clock(b)))),
        }
    }
    Ok(sampled.windows(2).map(|w| w[1] - w[0]).collect())
}

fn clock(seconds: u32) -> String {
    format!("{:02}:{:02}:{:02}", seconds / 3600, seconds / 60 % 60, seconds % 60)
}

/// Realized volatility from raw ticks, one slice per day. With
/// `drop_first_block` the grid's first block is discarded, so the opening
/// boundary moves one block later.
pub fn realized_volatility_from_ticks(days: &[Vec<(u32, f64)>], grid: &IntradayGrid, config: &RVConfig) -> Result<f64> {
    config.validate()?;
    let total_blocks = grid.block_count()?;
    let effective = if config.drop_first_block {
        IntradayGrid { open: grid.open + grid.block_seconds, ..*grid }
    } else {
        *grid
    };
    if config.m != effective.block_count().unwrap_or(0) {
        return Err(Error::BlockCountMismatch { day: 0, expected: config.m, found: total_blocks - usize::from(config.drop_first_block) });
    }
    let mut returns = Vec::with_capacity(days.len());
    for (day, ticks) in days.iter().enumerate() {
        let blocks = block_returns_from_ticks(ticks, &effective)
            .map_err(|e| match e {
                Error::MissingBlock(msg) => Error::MissingBlock(format!("day {day}: {msg}")),
                other => other,
            })?;
        returns.push(blocks);
    }
    let flat = RVConfig { drop_first_block: false, ..*config };
    realized_volatility(&returns, &flat)
}

fn require_positive(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveInput(v))
    }
}

/// `x − ln x − 1` with `x = ground_truth / prediction`.
pub fn ql_loss(prediction: f64, ground_truth: f64) -> Result<f64> {
    require_positive(prediction)?;
    require_positive(ground_truth)?;
    let x = ground_truth / prediction;
    Ok((x - x.ln() - 1.0).max(0.0))
}

pub fn mse_loss(prediction: f64, ground_truth: f64) -> f64 {
    (prediction - ground_truth).powi(2)
}

pub fn ape_loss(prediction: f64, ground_truth: f64) -> Result<f64> {
    if !(ground_truth > 0.0) {
        return Err(Error::NonpositiveGroundTruth(ground_truth));
    }
    Ok((prediction - ground_truth).abs() / ground_truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTriple {
    pub mse: f64,
    pub ape: f64,
    pub ql: f64,
}

impl LossTriple {
    pub fn compute(prediction: f64, ground_truth: f64) -> Result<Self> {
        if !(ground_truth > 0.0) {
            return Err(Error::NonpositiveGroundTruth(ground_truth));
        }
        Ok(Self {
            mse: mse_loss(prediction, ground_truth),
            ape: ape_loss(prediction, ground_truth)?,
            ql: ql_loss(prediction, ground_truth)?,
        })
    }
}

/// Limit of `QL(unadjusted) − QL(adjusted)` when the adjustment recovers a
/// shock `x` to a variance level `sigma2`:
/// `x/(σ² − x) + ln((σ² − x)/σ²)`.
pub fn ql_advantage(omega_star: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonpositiveInput(sigma2));
    }
    if !(omega_star < sigma2) {
        return Err(Error::DomainError(format!("omega_star = {omega_star} must be below sigma2 = {sigma2}")));
    }
    let gap = sigma2 - omega_star;
    Ok(omega_star / gap + (gap / sigma2).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_blocks() {
        let c = 0.01;
        let cfg = RVConfig { k: 1, m: 77, drop_first_block: false };
        let rv = realized_volatility(&[vec![c; 77]], &cfg).unwrap();
        assert_abs_diff_eq!(rv, 77.0 * c * c, epsilon = 1e-15);
    }

    #[test]
    fn compensated_sum_is_correctly_rounded_here() {
        let c = 0.01_f64;
        let sq = c * c;
        let sum = compensated_sum(std::iter::repeat_n(sq, 77));
        assert_eq!(sum, 77.0 * sq);
        assert_eq!(compensated_sum([1e16, 1.0, -1e16].into_iter()), 1.0);
    }

    #[test]
    fn two_day_average() {
        let cfg = RVConfig { k: 2, m: 2, drop_first_block: false };
        let rv = realized_volatility(&[vec![1.0, 2.0], vec![0.0, 3.0]], &cfg).unwrap();
        assert_abs_diff_eq!(rv, (5.0 + 9.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn first_block_is_dropped() {
        let cfg = RVConfig { k: 1, m: 2, drop_first_block: true };
        assert_eq!(realized_volatility(&[vec![10.0, 1.0, 1.0]], &cfg).unwrap(), 2.0);
        assert!(matches!(
            realized_volatility(&[vec![1.0, 1.0]], &cfg),
            Err(Error::BlockCountMismatch { day: 0, expected: 3, found: 2 })
        ));
    }

    #[test]
    fn prices_and_returns_agree() {
        let cfg = RVConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.001).unwrap();
        let mut prices = vec![4.6];
        for _ in 0..78 {
            let last = *prices.last().unwrap();
            prices.push(last + normal.sample(&mut rng));
        }
        let returns: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
        let a = realized_volatility(&[returns], &cfg).unwrap();
        let b = realized_volatility_from_log_prices(&[prices], &cfg).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn rv_mean_matches_drift_plus_variance() {
        // Block returns with drift mu/m and variance delta²/m.
        let (mu, delta, m) = (0.5_f64, 0.02_f64, 77usize);
        let cfg = RVConfig { k: 1, m, drop_first_block: false };
        let normal = Normal::new(mu / m as f64, delta / (m as f64).sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let days = 10_000;
        let draws: Vec<f64> = (0..days)
            .map(|_| {
                let blocks: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
                realized_volatility(&[blocks], &cfg).unwrap()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / days as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (days - 1) as f64).sqrt();
        let expected = mu * mu / m as f64 + delta * delta;
        assert!((mean - expected).abs() < 2.0 * sd / (days as f64).sqrt(), "{mean} vs {expected}");
    }

    fn full_day(price_of: impl Fn(u32) -> f64) -> Vec<(u32, f64)> {
        // A tick every minute from 9:00 to 16:00.
        (9 * 60..=16 * 60).map(|minute| (minute * 60, price_of(minute))).collect()
    }

    #[test]
    fn tick_sampling_uses_last_tick_before_each_boundary() {
        let grid = IntradayGrid::default();
        let ticks = full_day(|minute| (minute as f64 / 1000.0).exp());
        let cfg = RVConfig::default();
        let rv = realized_volatility_from_ticks(&[ticks], &grid, &cfg).unwrap();
        // Log price rises 0.005 per block.
        assert_abs_diff_eq!(rv, 77.0 * 0.005_f64.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn ticks_off_the_boundary_are_carried_forward() {
        let grid = IntradayGrid { open: 0, close: 600, block_seconds: 300 };
        let ticks = vec![(0, 1.0), (100, 2.0), (299, 4.0), (301, 8.0), (550, 16.0)];
        let r = block_returns_from_ticks(&ticks, &grid).unwrap();
        assert_abs_diff_eq!(r[0], 4.0_f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 4.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn missing_block_is_an_error() {
        let grid = IntradayGrid::default();
        let ticks: Vec<(u32, f64)> =
            full_day(|_| 100.0).into_iter().filter(|(s, _)| !(*s > 12 * 3600 && *s <= 12 * 3600 + 300)).collect();
        let err = realized_volatility_from_ticks(&[ticks], &grid, &RVConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingBlock(ref msg) if msg.contains("12:05")), "{err}");
    }

    #[test]
    fn grid_block_count() {
        assert_eq!(IntradayGrid::default().block_count().unwrap(), 78);
        let wrong = RVConfig { k: 1, m: 78, drop_first_block: true };
        assert!(matches!(
            realized_volatility_from_ticks(&[full_day(|_| 1.0)], &IntradayGrid::default(), &wrong),
            Err(Error::BlockCountMismatch { .. })
        ));
    }

    #[test]
    fn ql_examples() {
        assert_eq!(ql_loss(3.7, 3.7).unwrap(), 0.0);
        assert_abs_diff_eq!(ql_loss(2.0, 1.0).unwrap(), 0.193147, epsilon = 1e-6);
        assert_abs_diff_eq!(ql_loss(1.0, 2.0).unwrap(), 0.306853, epsilon = 1e-6);
        assert!(matches!(ql_loss(0.0, 1.0), Err(Error::NonpositiveInput(_))));
        assert!(matches!(ql_loss(1.0, -1.0), Err(Error::NonpositiveInput(_))));
    }

    #[test]
    fn mse_ape_examples() {
        assert_eq!(mse_loss(3.0, 1.0), 4.0);
        assert_eq!(ape_loss(3.0, 1.0).unwrap(), 2.0);
        assert_eq!(mse_loss(1.0, 1.0), 0.0);
        assert_eq!(ape_loss(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(mse_loss(0.5, 2.0), 2.25);
        assert_eq!(ape_loss(0.5, 2.0).unwrap(), 0.75);
        assert!(matches!(ape_loss(1.0, 0.0), Err(Error::NonpositiveGroundTruth(_))));
        let t = LossTriple::compute(2.0, 1.0).unwrap();
        assert_eq!((t.mse, t.ape), (1.0, 1.0));
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(ql_advantage(0.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(ql_advantage(1.0, 2.0).unwrap(), 0.306853, epsilon = 1e-6);
        assert_abs_diff_eq!(ql_advantage(-1.0, 1.0).unwrap(), 0.193147, epsilon = 1e-6);
        assert!(matches!(ql_advantage(2.0, 2.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn advantage_is_convex_above_minus_sigma2() {
        // g''(x) = (σ² + x)/(σ² − x)³, so convexity holds on (−σ², σ²) only.
        let sigma2 = 1.5;
        let h = 0.01;
        let xs: Vec<f64> = (-150..149).map(|i| i as f64 * h).collect();
        let g: Vec<f64> = xs.iter().map(|x| ql_advantage(*x, sigma2).unwrap()).collect();
        assert!(g.iter().all(|v| *v >= 0.0));
        for w in g.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        let far: Vec<f64> = [-4.0, -3.9, -3.8].iter().map(|x| ql_advantage(*x, sigma2).unwrap()).collect();
        assert!(far[0] - 2.0 * far[1] + far[2] < 0.0);
    }

    proptest! {
        #[test]
        fn ql_is_nonnegative(p in 1e-4f64..1e3, g in 1e-4f64..1e3) {
            let l = ql_loss(p, g).unwrap();
            prop_assert!(l >= 0.0);
            if (p - g).abs() > 1e-6 * g {
                prop_assert!(l > 0.0);
            }
        }

        #[test]
        fn loss_difference_identity(adj in 1e-3f64..1e2, unadj in 1e-3f64..1e2, gt in 1e-3f64..1e2) {
            let lhs = ql_loss(unadj, gt).unwrap() - ql_loss(adj, gt).unwrap();
            let rhs = gt * (adj - unadj) / (adj * unadj) + (unadj / adj).ln();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(gt / adj).max(gt / unadj)));
        }

        #[test]
        fn advantage_is_nonnegative(x in -50.0f64..0.999, sigma2 in 1.0f64..10.0) {
            prop_assert!(ql_advantage(x, sigma2).unwrap() >= -1e-15);
        }
    }
}
