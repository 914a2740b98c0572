//! Low-precision solar position, following the NOAA solar calculator.
//!
//! Geometric mean longitude and anomaly of the sun in Julian centuries
//! give the apparent longitude, hence the declination and the equation of
//! time; elevation follows from the hour angle. No atmospheric refraction.
//! Accuracy is well under 0.1 degree for dates near the present.

use chrono::{DateTime, Utc};

/// Solar elevation in degrees above the horizon, in `[-90, 90]`.
pub fn solar_elevation(t: DateTime<Utc>, latitude: f64, longitude: f64) -> f64 {
    let unix = t.timestamp() as f64 + t.timestamp_subsec_nanos() as f64 * 1e-9;
    let julian_day = unix / 86_400.0 + 2_440_587.5;
    let jc = (julian_day - 2_451_545.0) / 36_525.0;

    let mean_long = (280.46646 + jc * (36_000.76983 + jc * 0.0003032)).rem_euclid(360.0);
    let mean_anom = 357.52911 + jc * (35_999.05029 - 0.0001537 * jc);
    let ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
    let m = mean_anom.to_radians();
    let center = m.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * m).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * m).sin() * 0.000289;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let apparent_long = (mean_long + center - 0.00569 - 0.00478 * omega.sin()).to_radians();
    let mean_obliq = 23.0
        + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();

    let declination = (obliq.sin() * apparent_long.sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0 = mean_long.to_radians();
    let eq_time_min = 4.0
        * (y * (2.0 * l0).sin() - 2.0 * ecc * m.sin()
            + 4.0 * ecc * y * m.sin() * (2.0 * l0).cos()
            - 0.5 * y * y * (4.0 * l0).sin()
            - 1.25 * ecc * ecc * (2.0 * m).sin())
        .to_degrees();

    let minutes_utc = unix.rem_euclid(86_400.0) / 60.0;
    let true_solar_min = (minutes_utc + eq_time_min + 4.0 * longitude).rem_euclid(1440.0);
    let hour_angle = (true_solar_min / 4.0 - 180.0).to_radians();

    let lat = latitude.to_radians();
    let cos_zenith = (lat.sin() * declination.sin()
        + lat.cos() * declination.cos() * hour_angle.cos())
    .clamp(-1.0, 1.0);
    90.0 - cos_zenith.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent reference: Astronomical Almanac low-precision ephemeris
    /// (mean longitude / anomaly, ecliptic longitude, right ascension, GMST).
    fn almanac_elevation(t: DateTime<Utc>, lat: f64, lon: f64) -> f64 {
        let j2000 = Utc.with_ymd_and_hms(2000, 1, 1, 12, 0, 0).unwrap();
        let n = (t - j2000).num_seconds() as f64 / 86_400.0;
        let l = (280.460 + 0.9856474 * n).rem_euclid(360.0);
        let g = (357.528 + 0.9856003 * n).rem_euclid(360.0).to_radians();
        let lambda = (l + 1.915 * g.sin() + 0.020 * (2.0 * g).sin()).to_radians();
        let eps = (23.439 - 0.0000004 * n).to_radians();
        let ra = (eps.cos() * lambda.sin()).atan2(lambda.cos());
        let dec = (eps.sin() * lambda.sin()).asin();
        let gmst_h = (18.697374558 + 24.06570982441908 * n).rem_euclid(24.0);
        let ha = (gmst_h * 15.0 + lon).to_radians() - ra;
        let phi = lat.to_radians();
        (phi.sin() * dec.sin() + phi.cos() * dec.cos() * ha.cos())
            .asin()
            .to_degrees()
    }

    fn max_over_day(y: i32, m: u32, d: u32, lat: f64, lon: f64) -> f64 {
        let day = Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap();
        (0..1440)
            .map(|min| solar_elevation(day + chrono::Duration::minutes(min), lat, lon))
            .fold(f64::MIN, f64::max)
    }

    fn min_over_day(y: i32, m: u32, d: u32, lat: f64, lon: f64) -> f64 {
        let day = Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap();
        (0..1440)
            .map(|min| solar_elevation(day + chrono::Duration::minutes(min), lat, lon))
            .fold(f64::MAX, f64::min)
    }

    #[test]
    fn equinox_noon_at_sixty_north() {
        let peak = max_over_day(2016, 3, 20, 60.0, 10.0);
        assert!((peak - 30.0).abs() < 0.5, "peak {peak}");
    }

    #[test]
    fn solstice_midnight_at_sixty_north() {
        let low = min_over_day(2016, 6, 20, 60.0, 10.0);
        assert!((low - (-6.56)).abs() < 1.0, "low {low}");
    }

    #[test]
    fn equator_equinox_noon_is_overhead() {
        let peak = max_over_day(2016, 3, 20, 0.0, 0.0);
        assert!((peak - 90.0).abs() < 0.5, "peak {peak}");
    }

    #[test]
    fn agrees_with_almanac_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap().timestamp();
        for _ in 0..100 {
            let secs = rng.random_range(0..4 * 365 * 86_400i64);
            let t = Utc.timestamp_opt(base + secs - secs % 300, 0).unwrap();
            let lat = rng.random_range(-89.0..89.0);
            let lon = rng.random_range(-180.0..180.0);
            let ours = solar_elevation(t, lat, lon);
            let reference = almanac_elevation(t, lat, lon);
            assert!(
                (ours - reference).abs() < 0.1,
                "{t} lat {lat} lon {lon}: {ours} vs {reference}"
            );
            assert!((-90.0..=90.0).contains(&ours));
        }
    }
}
