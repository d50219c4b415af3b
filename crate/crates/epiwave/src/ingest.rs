//! Daily-count ingestion: parsing delimited daily data, weekly averaging with
//! standard errors, error inflation, and the per-region day-index axis.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cases,
    Deaths,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Cases => write!(f, "cases"),
            Metric::Deaths => write!(f, "deaths"),
        }
    }
}

/// How to treat negative daily counts (source-data corrections).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePolicy {
    #[default]
    Reject,
    ClampToZero,
}

/// Raw daily counts for one (region, metric), strictly increasing in date.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDailySeries {
    pub region: String,
    pub metric: Metric,
    pub entries: Vec<(NaiveDate, f64)>,
}

impl RawDailySeries {
    pub fn new(
        region: impl Into<String>,
        metric: Metric,
        mut entries: Vec<(NaiveDate, f64)>,
        policy: NegativePolicy,
    ) -> Result<Self> {
        let region = region.into();
        entries.sort_by_key(|(d, _)| *d);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Data(format!(
                    "{region} {metric}: duplicate date {}",
                    pair[0].0
                )));
            }
        }
        for (date, count) in entries.iter_mut() {
            if !count.is_finite() {
                return Err(Error::Data(format!(
                    "{region} {metric}: non-finite count on {date}"
                )));
            }
            if *count < 0.0 {
                match policy {
                    NegativePolicy::Reject => {
                        return Err(Error::Data(format!(
                            "{region} {metric}: negative count {count} on {date}"
                        )))
                    }
                    NegativePolicy::ClampToZero => *count = 0.0,
                }
            }
        }
        Ok(Self {
            region,
            metric,
            entries,
        })
    }
}

/// One weekly point: mean day index `t`, weekly-averaged daily count `y`,
/// standard error `sigma`, and the number of days averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPoint {
    pub t: f64,
    pub y: f64,
    pub sigma: f64,
    pub n_days: usize,
}

/// Weekly-averaged daily counts on a day-index axis anchored at `origin_date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub region: String,
    pub metric: Metric,
    pub origin_date: NaiveDate,
    pub points: Vec<WeeklyPoint>,
}

impl WeeklySeries {
    /// Re-expresses the day-index axis relative to `origin`; used to put a
    /// region's deaths series on the same clock as its cases series.
    pub fn with_origin(mut self, origin: NaiveDate) -> Self {
        let shift = (self.origin_date - origin).num_days() as f64;
        for p in &mut self.points {
            p.t += shift;
        }
        self.origin_date = origin;
        self
    }

    /// Canonical structured-text serialization for audit: one `t,y,sigma,n_days`
    /// row per week.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,y,sigma,n_days\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.10e},{:.10e},{}\n", p.t, p.y, p.sigma, p.n_days));
        }
        out
    }
}

/// Aggregates daily counts into weekly-averaged daily values over
/// `[start, cutoff]` (cutoff inclusive), dropping a trailing partial week.
///
/// Week `k` covers days `7k ..= 7k+6` from `start` and is reported at mean
/// day `t = 7k + 3`; `sigma` is the sample standard deviation over the 7
/// daily values divided by sqrt(7). Weeks with zero variance get
/// `sigma = max(1, 0.01 * y)` so the weight matrix stays invertible.
pub fn aggregate_weekly(
    raw: &RawDailySeries,
    start: NaiveDate,
    cutoff: NaiveDate,
) -> Result<WeeklySeries> {
    let span = (cutoff - start).num_days() + 1;
    if span < 7 {
        return Err(Error::Data(format!(
            "{} {}: window {start}..={cutoff} is shorter than one week",
            raw.region, raw.metric
        )));
    }
    let by_date: BTreeMap<NaiveDate, f64> = raw.entries.iter().copied().collect();
    let n_weeks = (span / 7) as usize;
    let mut points = Vec::with_capacity(n_weeks);
    for k in 0..n_weeks {
        let week_start = start + Days::new(7 * k as u64);
        let mut values = [0.0f64; 7];
        let mut missing = 0usize;
        for (i, slot) in values.iter_mut().enumerate() {
            let date = week_start + Days::new(i as u64);
            match by_date.get(&date) {
                Some(v) => *slot = *v,
                None => missing += 1,
            }
        }
        if missing > 0 {
            return Err(Error::MissingDays {
                week_start: week_start.to_string(),
                missing,
            });
        }
        let mean = values.iter().sum::<f64>() / 7.0;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        let sigma = if var > 0.0 {
            (var / 7.0).sqrt()
        } else {
            (0.01 * mean).max(1.0)
        };
        points.push(WeeklyPoint {
            t: (7 * k + 3) as f64,
            y: mean,
            sigma,
            n_days: 7,
        });
    }
    Ok(WeeklySeries {
        region: raw.region.clone(),
        metric: raw.metric,
        origin_date: start,
        points,
    })
}

/// Adds `fraction * peak_height` in quadrature to every standard error.
/// Applied once, from the stage-1 peak-height estimates.
pub fn inflate_errors(series: &WeeklySeries, fraction: f64, peak_height: f64) -> Result<WeeklySeries> {
    if fraction < 0.0 {
        return Err(Error::Config(format!("inflation fraction {fraction} < 0")));
    }
    if fraction > 0.0 && peak_height <= 0.0 {
        return Err(Error::Config(format!("peak height {peak_height} must be > 0")));
    }
    let extra2 = (fraction * peak_height).powi(2);
    let mut out = series.clone();
    for p in &mut out.points {
        p.sigma = (p.sigma * p.sigma + extra2).sqrt();
    }
    Ok(out)
}

/// First epidemiological week for deaths starts 14 days after the cases week.
pub fn deaths_window(cases_start: NaiveDate) -> NaiveDate {
    cases_start + Days::new(14)
}

/// Column mapping for delimited daily data, so WHO-style exports load
/// without editing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub date: String,
    pub region: String,
    pub cases: String,
    pub deaths: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            date: "Date_reported".into(),
            region: "Country_code".into(),
            cases: "New_cases".into(),
            deaths: "New_deaths".into(),
        }
    }
}

/// Loads daily data for the requested regions, returning per-region cases
/// and deaths series. Unparseable rows are reported with their line number.
pub fn load_daily(
    path: &Path,
    mapping: &ColumnMapping,
    regions: &[String],
    policy: NegativePolicy,
) -> Result<BTreeMap<String, (RawDailySeries, RawDailySeries)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let (c_date, c_region, c_cases, c_deaths) = (
        col(&mapping.date)?,
        col(&mapping.region)?,
        col(&mapping.cases)?,
        col(&mapping.deaths)?,
    );

    type DatedValues = Vec<(NaiveDate, f64)>;
    let mut per_region: BTreeMap<String, (DatedValues, DatedValues)> =
        regions.iter().map(|r| (r.clone(), Default::default())).collect();

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        let region = record.get(c_region).unwrap_or_default();
        let Some((cases, deaths)) = per_region.get_mut(region) else {
            continue;
        };
        let date: NaiveDate = record
            .get(c_date)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::Data(format!("line {line}: bad date: {e}")))?;
        let parse_count = |i: usize, what: &str| -> Result<f64> {
            let field = record.get(i).unwrap_or_default().trim();
            if field.is_empty() {
                return Ok(0.0);
            }
            field
                .parse()
                .map_err(|e| Error::Data(format!("line {line}: bad {what}: {e}")))
        };
        cases.push((date, parse_count(c_cases, "case count")?));
        deaths.push((date, parse_count(c_deaths, "death count")?));
    }

    let mut out = BTreeMap::new();
    for (region, (cases, deaths)) in per_region {
        if cases.is_empty() {
            return Err(Error::Data(format!("region {region} not present in data")));
        }
        let cases = RawDailySeries::new(region.clone(), Metric::Cases, cases, policy)?;
        let deaths = RawDailySeries::new(region.clone(), Metric::Deaths, deaths, policy)?;
        out.insert(region, (cases, deaths));
    }
    Ok(out)
}
