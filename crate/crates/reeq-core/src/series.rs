//! Observation series shared between the data pipeline, the filter, and
//! the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on spacing uniformity.
const SPACING_RTOL: f64 = 1e-6;

/// Provenance carried alongside a prepared series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    /// Source file, URL, or generator tag.
    pub source: String,
    /// Growth trend removed during de-trending (per year).
    pub xi: f64,
    /// Divisor applied to both series (the mean de-trended price).
    pub normalization: f64,
    /// Hex digest of the raw input, when ingested from a file.
    pub source_hash: Option<String>,
}

/// Equally spaced de-trended, normalized price/dividend observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    /// Observation times in years from the sample start.
    pub times: Vec<f64>,
    pub price: Vec<f64>,
    pub dividend: Vec<f64>,
    pub meta: SeriesMeta,
}

impl ObservationSeries {
    /// Validates lengths, monotonicity, uniform spacing, and finiteness.
    pub fn new(
        times: Vec<f64>,
        price: Vec<f64>,
        dividend: Vec<f64>,
        meta: SeriesMeta,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("empty series".into()));
        }
        if times.len() != price.len() || times.len() != dividend.len() {
            return Err(Error::InvalidParameter(format!(
                "length mismatch: {} times, {} prices, {} dividends",
                times.len(),
                price.len(),
                dividend.len()
            )));
        }
        if times
            .iter()
            .chain(price.iter())
            .chain(dividend.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "series contains non-finite values".into(),
            ));
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if dt <= 0.0 {
                return Err(Error::InvalidParameter(
                    "times must be strictly increasing".into(),
                ));
            }
            for w in times.windows(2) {
                let step = w[1] - w[0];
                if step <= 0.0 || (step - dt).abs() > SPACING_RTOL * dt.max(1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "irregular spacing: expected {dt}, found {step}"
                    )));
                }
            }
        }
        Ok(ObservationSeries {
            times,
            price,
            dividend,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sampling interval in years; 1.0 for a single observation.
    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        }
    }

    /// Writes `time,price,dividend` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time", "price", "dividend"])?;
        for i in 0..self.len() {
            wtr.write_record(&[
                format!("{}", self.times[i]),
                format!("{}", self.price[i]),
                format!("{}", self.dividend[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a series previously written by [`Self::write_csv`].
    pub fn read_csv<R: std::io::Read>(r: R, meta: SeriesMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.into()))
        };
        let (ti, pi, di) = (col("time")?, col("price")?, col("dividend")?);
        let mut times = Vec::new();
        let mut price = Vec::new();
        let mut dividend = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::MalformedRow {
                        path: meta.source.clone(),
                        line: idx + 2,
                        msg: "unparseable numeric field".into(),
                    })
            };
            times.push(parse(ti)?);
            price.push(parse(pi)?);
            dividend.push(parse(di)?);
        }
        ObservationSeries::new(times, price, dividend, meta)
    }
}
