//! Deterministic synthetic market data from a one-factor model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use walkfolio_core::date::Date;
use walkfolio_core::panel::ReturnsPanel;
use walkfolio_core::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub tickers: usize,
    pub start_year: i32,
    pub years: usize,
    pub seed: u64,
    /// Tickers that only start trading in the second year.
    pub late_listings: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tickers: 30,
            start_year: 2001,
            years: 4,
            seed: 7,
            late_listings: 2,
        }
    }
}

/// Returns panel, daily risk-free rate and benchmark returns.
pub struct SynthData {
    pub panel: ReturnsPanel,
    pub risk_free: Vec<f64>,
    pub benchmark: Vec<f64>,
}

/// Weekdays of the requested calendar years.
pub fn business_days(start_year: i32, years: usize) -> Vec<Date> {
    let first = Date::from_ymd(start_year, 1, 1).expect("valid year");
    let end = Date::from_ymd(start_year + years as i32, 1, 1).expect("valid year");
    (0..end.days_since_epoch() - first.days_since_epoch())
        .map(|k| first.add_days(k))
        .filter(|d| d.weekday() < 5)
        .collect()
}

/// `r_it = a_i + b_i f_t + e_it` with a common market factor `f`.
pub fn generate(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dates = business_days(cfg.start_year, cfg.years);
    let n = cfg.tickers;
    let tickers: Vec<String> = (1..=n).map(|i| format!("S{i:03}")).collect();
    let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..1.6)).collect();
    let idio: Vec<f64> = (0..n).map(|_| rng.random_range(0.008..0.025)).collect();
    let drift = Normal::new(0.0, 0.0002).expect("finite");
    let alpha: Vec<f64> = (0..n).map(|_| drift.sample(&mut rng)).collect();
    let factor = Normal::new(0.0003, 0.01).expect("finite");
    let unit = Normal::new(0.0, 1.0).expect("finite");
    let first_year_end = dates
        .iter()
        .position(|d| d.year() > cfg.start_year)
        .unwrap_or(dates.len());
    let mut values = DMatrix::zeros(dates.len(), n);
    let mut benchmark = Vec::with_capacity(dates.len());
    let mut risk_free = Vec::with_capacity(dates.len());
    for (t, d) in dates.iter().enumerate() {
        let f = factor.sample(&mut rng);
        for i in 0..n {
            values[(t, i)] = alpha[i] + beta[i] * f + idio[i] * unit.sample(&mut rng);
            if i < cfg.late_listings && t < first_year_end {
                values[(t, i)] = f64::NAN;
            }
        }
        benchmark.push(f + 0.001 * unit.sample(&mut rng));
        let annual = 0.01 + 0.005 * (d.year() - cfg.start_year).rem_euclid(5) as f64;
        risk_free.push(annual / 252.0);
    }
    let panel = ReturnsPanel::new(dates, tickers, values).expect("well-formed synthetic panel");
    SynthData {
        panel,
        risk_free,
        benchmark,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            tickers: 5,
            years: 2,
            ..SynthConfig::default()
        };
        let bits = |d: &SynthData| {
            d.panel
                .values()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.benchmark, b.benchmark);
        let c = generate(&SynthConfig { seed: 8, ..cfg });
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn weekdays_only() {
        let d = business_days(2001, 1);
        assert_eq!(d.len(), 261);
        assert!(d.iter().all(|d| d.weekday() < 5 && d.year() == 2001));
    }

    #[test]
    fn late_listings_are_missing_in_year_one() {
        let data = generate(&SynthConfig {
            tickers: 4,
            years: 2,
            late_listings: 1,
            ..SynthConfig::default()
        });
        let v = data.panel.values();
        assert!(v[(0, 0)].is_nan() && v[(260, 0)].is_nan() && !v[(261, 0)].is_nan());
        assert!(!v[(0, 1)].is_nan());
    }
}
