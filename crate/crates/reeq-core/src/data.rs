//! Raw price/dividend ingestion, CPI deflation, de-trending,
//! normalization, growth-rate estimation, and the cointegrating OLS
//! diagnostic with heteroskedasticity-robust standard errors.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::series::{ObservationSeries, SeriesMeta};

/// Raw observations with dates in decimal years.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub dates: Vec<f64>,
    pub price: Vec<f64>,
    pub dividend: Vec<f64>,
    pub cpi: Option<Vec<f64>>,
    pub source: String,
    pub source_hash: Option<String>,
}

/// Input column names; `cpi` is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub date: String,
    pub price: String,
    pub dividend: String,
    pub cpi: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            date: "date".into(),
            price: "price".into(),
            dividend: "dividend".into(),
            cpi: Some("cpi".into()),
        }
    }
}

/// Which observation's CPI defines the base (real = nominal * base / cpi_t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeflateBase {
    LastObservation,
    /// Closest observation to the given decimal year.
    AtDate(f64),
}

/// Growth-rate estimator flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthMethod {
    /// Mean log growth; exact for an exponential trend.
    Log,
    /// Mean arithmetic growth.
    Arithmetic,
}

/// Parses "YYYY-MM-DD" or a decimal year.
fn parse_date(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() != 3 {
        return None;
    }
    let year: i32 = parts[0].parse().ok()?;
    let month: u32 = parts[1].parse().ok()?;
    let day: u32 = parts[2].parse().ok()?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = [
        31,
        if leap { 29 } else { 28 },
        31,
        30,
        31,
        30,
        31,
        31,
        30,
        31,
        30,
        31,
    ];
    let mut doy = 0u32;
    for m in 0..(month - 1) as usize {
        doy += days[m];
    }
    doy += day - 1;
    let year_len: f64 = if leap { 366.0 } else { 365.0 };
    Some(year as f64 + doy as f64 / year_len)
}

/// Loads and validates a raw CSV file.
pub fn load_csv<P: AsRef<Path>>(path: P, columns: &ColumnMap) -> Result<RawSeries> {
    let path_str = path.as_ref().display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let hash = hex_digest(&bytes);
    let raw = parse_csv(bytes.as_slice(), columns, &path_str)?;
    Ok(RawSeries {
        source_hash: Some(hash),
        ..raw
    })
}

/// Parses raw CSV content from any reader; `source` labels error messages.
pub fn parse_csv<R: Read>(reader: R, columns: &ColumnMap, source: &str) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let date_i = find(&columns.date)?;
    let price_i = find(&columns.price)?;
    let div_i = find(&columns.dividend)?;
    let cpi_i = match &columns.cpi {
        Some(name) => headers.iter().position(|h| h.eq_ignore_ascii_case(name)),
        None => None,
    };

    let mut dates = Vec::new();
    let mut price = Vec::new();
    let mut dividend = Vec::new();
    let mut cpi: Vec<f64> = Vec::new();

    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, counting the header
        let rec = rec?;
        let bad = |msg: &str| Error::MalformedRow {
            path: source.into(),
            line,
            msg: msg.into(),
        };
        let date = rec
            .get(date_i)
            .and_then(parse_date)
            .ok_or_else(|| bad("unparseable date"))?;
        let p: f64 = rec
            .get(price_i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("unparseable price"))?;
        let d: f64 = rec
            .get(div_i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("unparseable dividend"))?;
        if !(p > 0.0) {
            return Err(bad(&format!("nonpositive price {p}")));
        }
        if !(d > 0.0) {
            return Err(bad(&format!("nonpositive dividend {d}")));
        }
        if let Some(ci) = cpi_i {
            let c: f64 = rec
                .get(ci)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("unparseable cpi"))?;
            if !(c > 0.0) {
                return Err(bad(&format!("nonpositive cpi {c}")));
            }
            cpi.push(c);
        }
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(bad(&format!(
                    "dates not strictly increasing ({prev} then {date})"
                )));
            }
        }
        dates.push(date);
        price.push(p);
        dividend.push(d);
    }
    if dates.is_empty() {
        return Err(Error::InvalidParameter(format!("{source}: no data rows")));
    }
    Ok(RawSeries {
        dates,
        price,
        dividend,
        cpi: (!cpi.is_empty()).then_some(cpi),
        source: source.into(),
        source_hash: None,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

impl RawSeries {
    /// Converts nominal series to real terms: `real = nominal * cpi_base / cpi_t`.
    pub fn deflated(&self, base: DeflateBase) -> Result<RawSeries> {
        let cpi = self
            .cpi
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("cpi".into()))?;
        let base_idx = match base {
            DeflateBase::LastObservation => cpi.len() - 1,
            DeflateBase::AtDate(year) => self
                .dates
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1 - year)
                        .abs()
                        .partial_cmp(&(b.1 - year).abs())
                        .unwrap()
                })
                .map(|(i, _)| i)
                .unwrap(),
        };
        let base_cpi = cpi[base_idx];
        let price = self
            .price
            .iter()
            .zip(cpi)
            .map(|(p, c)| p * base_cpi / c)
            .collect();
        let dividend = self
            .dividend
            .iter()
            .zip(cpi)
            .map(|(d, c)| d * base_cpi / c)
            .collect();
        Ok(RawSeries {
            dates: self.dates.clone(),
            price,
            dividend,
            cpi: None,
            source: self.source.clone(),
            source_hash: self.source_hash.clone(),
        })
    }

    /// Keeps only January observations (annual sampling of monthly data).
    pub fn january_only(&self) -> RawSeries {
        let keep: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                let frac = *d - d.floor();
                frac < 1.0 / 12.0
            })
            .map(|(i, _)| i)
            .collect();
        RawSeries {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            price: keep.iter().map(|&i| self.price[i]).collect(),
            dividend: keep.iter().map(|&i| self.dividend[i]).collect(),
            cpi: self
                .cpi
                .as_ref()
                .map(|c| keep.iter().map(|&i| c[i]).collect()),
            source: self.source.clone(),
            source_hash: self.source_hash.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Annualized mean log dividend growth.
pub fn estimate_growth_rate(series: &RawSeries) -> Result<f64> {
    estimate_growth_rate_with(series, GrowthMethod::Log)
}

/// Annualized mean dividend growth under the chosen flavor.
pub fn estimate_growth_rate_with(series: &RawSeries, method: GrowthMethod) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidParameter(
            "growth rate requires at least 2 periods".into(),
        ));
    }
    if series.dividend.iter().any(|d| *d <= 0.0) {
        return Err(Error::InvalidParameter(
            "growth rate requires positive dividends".into(),
        ));
    }
    let n = series.len();
    let years = series.dates[n - 1] - series.dates[0];
    if years <= 0.0 {
        return Err(Error::InvalidParameter("zero sample span".into()));
    }
    let per_period: f64 = match method {
        GrowthMethod::Log => series
            .dividend
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .sum::<f64>(),
        GrowthMethod::Arithmetic => series
            .dividend
            .windows(2)
            .map(|w| w[1] / w[0] - 1.0)
            .sum::<f64>(),
    };
    Ok(per_period / years)
}

/// Removes the exponential trend and normalizes both series by the mean
/// de-trended price. Time is measured from the first observation.
pub fn detrend_and_normalize(series: &RawSeries, xi: f64) -> Result<ObservationSeries> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty raw series".into()));
    }
    let t0 = series.dates[0];
    let times: Vec<f64> = series.dates.iter().map(|d| d - t0).collect();
    let mut price: Vec<f64> = series
        .price
        .iter()
        .zip(&times)
        .map(|(p, t)| p * (-xi * t).exp())
        .collect();
    let mut dividend: Vec<f64> = series
        .dividend
        .iter()
        .zip(&times)
        .map(|(d, t)| d * (-xi * t).exp())
        .collect();
    let norm = price.iter().sum::<f64>() / price.len() as f64;
    if !(norm > 0.0) {
        return Err(Error::Numerical("nonpositive mean de-trended price".into()));
    }
    for v in price.iter_mut() {
        *v /= norm;
    }
    for v in dividend.iter_mut() {
        *v /= norm;
    }
    ObservationSeries::new(
        times,
        price,
        dividend,
        SeriesMeta {
            source: series.source.clone(),
            xi,
            normalization: norm,
            source_hash: series.source_hash.clone(),
        },
    )
}

/// Which variable is regressed on which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Dividend on price: the slope estimates `r - xi` directly.
    DividendOnPrice,
    /// Price on dividend: `r - xi` is the reciprocal slope.
    PriceOnDividend,
}

/// OLS result with HC1 (degrees-of-freedom adjusted sandwich) errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub slope: f64,
    pub intercept: f64,
    pub robust_se_slope: f64,
    pub robust_se_intercept: f64,
    pub t_slope: f64,
    pub t_intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    /// `slope + xi` (dividend-on-price) or `1/slope + xi` (price-on-dividend).
    pub implied_rate: f64,
}

/// Cointegrating regression between the de-trended series.
pub fn cointegrating_ols(
    series: &ObservationSeries,
    xi: f64,
    direction: Direction,
    with_intercept: bool,
) -> Result<RegressionReport> {
    let n = series.len();
    if n < 3 {
        return Err(Error::InvalidParameter(
            "regression requires at least 3 observations".into(),
        ));
    }
    let (y, x): (&[f64], &[f64]) = match direction {
        Direction::DividendOnPrice => (&series.dividend, &series.price),
        Direction::PriceOnDividend => (&series.price, &series.dividend),
    };
    let xm = x.iter().sum::<f64>() / n as f64;
    let var_x = x.iter().map(|v| (v - xm) * (v - xm)).sum::<f64>();
    if var_x < 1e-14 {
        return Err(Error::Numerical("degenerate regressor (zero variance)".into()));
    }

    let k = if with_intercept { 2 } else { 1 };
    let design = DMatrix::<f64>::from_fn(n, k, |i, j| {
        if with_intercept {
            if j == 0 {
                1.0
            } else {
                x[i]
            }
        } else {
            x[i]
        }
    });
    let yv = DVector::<f64>::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xtx_inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular design matrix".into()))?;
    let beta = &xtx_inv * design.transpose() * &yv;
    let fitted = &design * &beta;
    let resid = &yv - fitted;

    // HC1 sandwich: (X'X)^-1 (sum e_i^2 x_i x_i') (X'X)^-1 * n/(n-k).
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let xi_row = design.row(i).transpose();
        meat += &xi_row * xi_row.transpose() * (resid[i] * resid[i]);
    }
    let adjust = n as f64 / (n - k) as f64;
    let cov = &xtx_inv * meat * &xtx_inv * adjust;

    let (intercept, slope, se_int, se_slope) = if with_intercept {
        (
            beta[0],
            beta[1],
            cov[(0, 0)].max(0.0).sqrt(),
            cov[(1, 1)].max(0.0).sqrt(),
        )
    } else {
        (0.0, beta[0], 0.0, cov[(0, 0)].max(0.0).sqrt())
    };

    let ym = y.iter().sum::<f64>() / n as f64;
    let tss = y.iter().map(|v| (v - ym) * (v - ym)).sum::<f64>();
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let implied_rate = match direction {
        Direction::DividendOnPrice => slope + xi,
        Direction::PriceOnDividend => {
            if slope.abs() < 1e-14 {
                return Err(Error::Numerical("zero slope; implied rate undefined".into()));
            }
            1.0 / slope + xi
        }
    };

    Ok(RegressionReport {
        slope,
        intercept,
        robust_se_slope: se_slope,
        robust_se_intercept: se_int,
        t_slope: if se_slope > 0.0 { slope / se_slope } else { f64::NAN },
        t_intercept: if se_int > 0.0 {
            intercept / se_int
        } else {
            f64::NAN
        },
        r_squared,
        n,
        implied_rate,
    })
}
