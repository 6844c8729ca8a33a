//! Exponential trend of numeric-mapping counts over coinjoin size.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::TrendRow;

/// How rows are turned into regression points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    /// One point per row: log2 of its count.
    Rows,
    /// One point per size: log2 of the mean count at that size.
    #[default]
    SizeMean,
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(Aggregate::Rows),
            "size-mean" => Ok(Aggregate::SizeMean),
            _ => Err(Error::Parse(format!("unknown aggregation {s:?}"))),
        }
    }
}

/// Least-squares line through `(size, log2 count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl TrendFit {
    /// Predicted log2 count at `size`.
    pub fn extrapolate(&self, size: f64) -> f64 {
        self.intercept + self.slope * size
    }

    /// Prediction after shrinking `size` by the fraction `loss` of coins
    /// attributed to consolidating users.
    pub fn predict(&self, size: f64, loss: f64) -> Result<Prediction> {
        if !(0.0..1.0).contains(&loss) {
            return Err(Error::Parse(format!("loss {loss} must lie in [0, 1)")));
        }
        let effective_size = size * (1.0 - loss);
        Ok(Prediction {
            size,
            loss,
            effective_size,
            log2_count: self.extrapolate(effective_size),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub size: f64,
    pub loss: f64,
    pub effective_size: f64,
    pub log2_count: f64,
}

/// Ordinary least squares of y on x.
pub fn ols(points: &[(f64, f64)]) -> Result<TrendFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::DegenerateData(format!("{} distinct sizes, need 3", xs.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(TrendFit {
        slope,
        intercept,
        r_squared,
        points: points.len(),
    })
}

pub fn fit_trend(rows: &[TrendRow], aggregate: Aggregate) -> Result<TrendFit> {
    if let Some(r) = rows.iter().find(|r| r.count == 0) {
        return Err(Error::DegenerateData(format!("zero count at size {}", r.size)));
    }
    let points: Vec<(f64, f64)> = match aggregate {
        Aggregate::Rows => rows.iter().map(|r| (r.size as f64, (r.count as f64).log2())).collect(),
        Aggregate::SizeMean => {
            let mut by_size: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
            for r in rows {
                let e = by_size.entry(r.size).or_default();
                e.0 += r.count as f64;
                e.1 += 1.0;
            }
            by_size
                .into_iter()
                .map(|(s, (sum, n))| (s as f64, (sum / n).log2()))
                .collect()
        }
    };
    ols(&points)
}

pub fn read_trend_csv<R: Read>(reader: R) -> Result<Vec<TrendRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn write_trend_csv<W: Write>(writer: W, rows: &[TrendRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
