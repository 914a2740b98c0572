//! Seeded synthetic imbalance series.
//!
//! `value(t) = block(t) + diurnal + weekly + noise(t)`, where `block` is
//! constant over each clock hour and follows an AR(1) chain from hour to
//! hour, and `noise` is an AR(1) process on the 5-minute grid. Diurnal and
//! weekly terms are sines of local wall-clock time.

use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{is_aligned, ImbalanceSeries, STEP_SECONDS};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub area: String,
    pub seed: u64,
    /// Innovation sigma of the hourly block chain, MW.
    pub hourly_step_sigma: f64,
    /// AR(1) coefficient between consecutive hourly blocks.
    pub step_persistence: f64,
    pub noise_sigma: f64,
    pub noise_phi: f64,
    pub diurnal_amp: f64,
    pub weekly_amp: f64,
    pub n_steps: usize,
    pub start: DateTime<Utc>,
    /// Zone of the wall clock driving the diurnal and weekly terms.
    pub timezone: Tz,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            area: "NO1".into(),
            seed: 0,
            hourly_step_sigma: 40.0,
            step_persistence: 0.8,
            noise_sigma: 8.0,
            noise_phi: 0.6,
            diurnal_amp: 30.0,
            weekly_amp: 15.0,
            n_steps: 4 * 7 * 288,
            // Local midnight, 1 January 2015, Oslo.
            start: Utc.with_ymd_and_hms(2014, 12, 31, 23, 0, 0).unwrap(),
            timezone: chrono_tz::Europe::Oslo,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        let finite = [
            self.hourly_step_sigma,
            self.step_persistence,
            self.noise_sigma,
            self.noise_phi,
            self.diurnal_amp,
            self.weekly_amp,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.hourly_step_sigma < 0.0 || self.noise_sigma < 0.0 {
            return bad("sigmas must be non-negative");
        }
        if !(0.0..1.0).contains(&self.step_persistence) || !(0.0..1.0).contains(&self.noise_phi) {
            return bad("AR coefficients must lie in [0, 1)");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if !is_aligned(self.start) {
            return bad("start must lie on the 5-minute grid");
        }
        if self.area.trim().is_empty() {
            return bad("area id must be non-empty");
        }
        Ok(())
    }
}

/// Stationary AR(1) chain driven by standard normal draws.
struct Ar1 {
    phi: f64,
    sigma: f64,
    state: f64,
}

impl Ar1 {
    fn new(phi: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self {
            phi,
            sigma,
            state: sigma / (1.0 - phi * phi).sqrt() * z,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.state = self.phi * self.state + self.sigma * z;
        self.state
    }
}

/// Clock hour containing the interval that ends at `t`.
fn hour_key(t: DateTime<Utc>) -> i64 {
    (t.timestamp() - STEP_SECONDS).div_euclid(3600)
}

pub fn generate(config: &SynthConfig) -> Result<ImbalanceSeries, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut block = Ar1::new(config.step_persistence, config.hourly_step_sigma, &mut rng);
    let mut noise = Ar1::new(config.noise_phi, config.noise_sigma, &mut rng);
    let mut current_hour = hour_key(config.start);
    let mut values = Vec::with_capacity(config.n_steps);
    for i in 0..config.n_steps {
        let t = config.start + Duration::seconds(i as i64 * STEP_SECONDS);
        let key = hour_key(t);
        if key != current_hour {
            current_hour = key;
            block.step(&mut rng);
        }
        let e = if i == 0 { noise.state } else { noise.step(&mut rng) };
        let local = t.with_timezone(&config.timezone);
        let hour_frac = local.hour() as f64 + local.minute() as f64 / 60.0;
        let weekday_frac = local.weekday().num_days_from_monday() as f64 + hour_frac / 24.0;
        let v = block.state
            + config.diurnal_amp * (TAU * hour_frac / 24.0).sin()
            + config.weekly_amp * (TAU * weekday_frac / 7.0).sin()
            + e;
        // Adding +0.0 turns a negative zero into a positive one.
        values.push(Some(v + 0.0));
    }
    Ok(ImbalanceSeries::new(config.area.clone(), config.start, values).expect("generated values are finite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::gap_report;

    fn quiet() -> SynthConfig {
        SynthConfig {
            hourly_step_sigma: 0.0,
            noise_sigma: 0.0,
            diurnal_amp: 0.0,
            weekly_amp: 0.0,
            n_steps: 1000,
            ..Default::default()
        }
    }

    #[test]
    fn silent_config_is_zero() {
        let s = generate(&quiet()).unwrap();
        assert!(s.values().iter().all(|v| v.unwrap().to_bits() == 0));
    }

    #[test]
    fn deterministic_and_grid_valid() {
        let c = SynthConfig { seed: 42, n_steps: 5000, ..Default::default() };
        let a = generate(&c).unwrap();
        assert_eq!(a, generate(&c).unwrap());
        assert_eq!(a.len(), 5000);
        assert_eq!(gap_report(&a).missing_count(), 0);
        assert!(is_aligned(a.start()));
        let b = generate(&SynthConfig { seed: 43, ..c }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        for c in [
            SynthConfig { step_persistence: 1.0, ..Default::default() },
            SynthConfig { noise_phi: -0.1, ..Default::default() },
            SynthConfig { noise_sigma: -1.0, ..Default::default() },
            SynthConfig { n_steps: 0, ..Default::default() },
            SynthConfig { start: Utc.with_ymd_and_hms(2016, 1, 1, 0, 1, 0).unwrap(), ..Default::default() },
        ] {
            assert!(generate(&c).is_err());
        }
    }

    #[test]
    fn hour_boundaries_dominate_first_differences() {
        let c = SynthConfig {
            seed: 5,
            hourly_step_sigma: 50.0,
            noise_sigma: 2.0,
            noise_phi: 0.5,
            n_steps: 10_000,
            start: Utc.with_ymd_and_hms(2016, 1, 4, 0, 0, 0).unwrap(),
            ..Default::default()
        };
        let s = generate(&c).unwrap();
        let (mut at, mut within) = (Vec::new(), Vec::new());
        for i in 1..s.len() {
            let d = (s.get(i).unwrap() - s.get(i - 1).unwrap()).abs();
            if hour_key(s.timestamp_at(i)) != hour_key(s.timestamp_at(i - 1)) {
                at.push(d);
            } else {
                within.push(d);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ratio = mean(&at) / mean(&within);
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn stationary_mean() {
        // Long-run sigma: blocks repeat over 12 steps and both chains are
        // autocorrelated, so the variance of the sample mean is that of
        // the long-run process rather than the marginal one.
        for seed in 0..10 {
            let c = SynthConfig {
                seed,
                diurnal_amp: 0.0,
                weekly_amp: 0.0,
                n_steps: 60_000,
                ..Default::default()
            };
            let s = generate(&c).unwrap();
            let n = s.len() as f64;
            let mean = s.values().iter().map(|v| v.unwrap()).sum::<f64>() / n;
            let block_lr = 12.0 * (c.hourly_step_sigma / (1.0 - c.step_persistence)).powi(2);
            let noise_lr = (c.noise_sigma / (1.0 - c.noise_phi)).powi(2);
            let sigma = (block_lr + noise_lr).sqrt();
            assert!(mean.abs() <= 3.0 * sigma / n.sqrt(), "seed {seed}: mean {mean}");
        }
    }

    #[test]
    fn weekly_term_repeats_exactly() {
        let c = SynthConfig {
            weekly_amp: 25.0,
            diurnal_amp: 10.0,
            n_steps: 3 * 2016,
            start: Utc.with_ymd_and_hms(2016, 4, 4, 0, 0, 0).unwrap(),
            ..quiet()
        };
        let s = generate(&c).unwrap();
        for i in 2016..s.len() {
            assert_eq!(s.get(i).unwrap() - s.get(i - 2016).unwrap(), 0.0);
        }
        assert!(s.values().iter().any(|v| v.unwrap().abs() > 1.0));
    }
}
