use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;

use super::FeatureError;

/// Identifier of the bundled Norwegian public-holiday calendar (2015-2017).
pub const BUILTIN_NORWEGIAN_CALENDAR: &str = "builtin:no";

const NORWEGIAN_HOLIDAYS: &str = include_str!("../../data/holidays_no_2015_2017.txt");

/// Parses one ISO date per line; `#` starts a comment, blank lines are ignored.
pub fn parse_holiday_calendar(text: &str) -> Result<BTreeSet<NaiveDate>, FeatureError> {
    let mut dates = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| {
            FeatureError::InvalidCalendar(format!("line {}: `{}` is not a date", i + 1, line))
        })?;
        dates.insert(date);
    }
    Ok(dates)
}

/// Resolves a calendar id: the builtin id, or a file path (relative paths
/// are taken relative to `base_dir` when given).
pub fn load_holiday_calendar(
    id: &str,
    base_dir: Option<&Path>,
) -> Result<BTreeSet<NaiveDate>, FeatureError> {
    if id == BUILTIN_NORWEGIAN_CALENDAR {
        return parse_holiday_calendar(NORWEGIAN_HOLIDAYS);
    }
    let path = Path::new(id);
    let path = match base_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| FeatureError::InvalidCalendar(format!("{}: {e}", path.display())))?;
    parse_holiday_calendar(&text)
}

pub fn norwegian_holidays() -> BTreeSet<NaiveDate> {
    parse_holiday_calendar(NORWEGIAN_HOLIDAYS).expect("bundled calendar parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    // Anonymous Gregorian computus.
    fn easter(year: i32) -> NaiveDate {
        let a = year % 19;
        let b = year / 100;
        let c = year % 100;
        let d = b / 4;
        let e = b % 4;
        let f = (b + 8) / 25;
        let g = (b - f + 1) / 3;
        let h = (19 * a + b - d - g + 15) % 30;
        let i = c / 4;
        let k = c % 4;
        let l = (32 + 2 * e + 2 * i - h - k) % 7;
        let m = (a + 11 * h + 22 * l) / 451;
        let month = (h + l - 7 * m + 114) / 31;
        let day = (h + l - 7 * m + 114) % 31 + 1;
        NaiveDate::from_ymd_opt(year, month as u32, day as u32).unwrap()
    }

    #[test]
    fn bundled_calendar_matches_computed_holidays() {
        let mut expected = BTreeSet::new();
        for year in 2015..=2017 {
            let e = easter(year);
            for offset in [-3, -2, 0, 1, 39, 49, 50] {
                expected.insert(e + Duration::days(offset));
            }
            for (m, d) in [(1, 1), (5, 1), (5, 17), (12, 25), (12, 26)] {
                expected.insert(NaiveDate::from_ymd_opt(year, m, d).unwrap());
            }
        }
        assert_eq!(norwegian_holidays(), expected);
    }

    #[test]
    fn parse_comments_and_errors() {
        let dates = parse_holiday_calendar("# header\n2016-05-17 # constitution day\n\n").unwrap();
        assert_eq!(dates.len(), 1);
        assert!(parse_holiday_calendar("2016-02-30\n").is_err());
    }
}
