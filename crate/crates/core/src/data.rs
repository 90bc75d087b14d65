//! CSV ingestion, lag construction and sample dumps.
//!
//! Dialect: comma separated, one header row, decimal point. Row and column
//! numbers in error messages count data rows and fields from 1, so "row 7"
//! is the seventh line after the header.

use std::path::Path;

use crate::dgp::Generated;
use crate::error::{Error, Result};
use crate::montecarlo::fmt_f64;

#[derive(Clone, Debug, PartialEq)]
pub struct DataFrame {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DataFrame {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| {
                Error::Data(format!(
                    "column '{name}' not found (available: {})",
                    self.names.join(", ")
                ))
            })
    }
}

pub fn parse_csv(text: &str) -> Result<DataFrame> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data("empty header row".into()));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, found {}",
                names.len(),
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "row {row}, column {}: cannot parse '{cell}' as a number",
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {row}, column {}: non-finite value '{cell}'", j + 1)));
            }
            columns[j].push(v);
        }
    }
    Ok(DataFrame { names, columns })
}

pub fn read_csv(path: &Path) -> Result<DataFrame> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text)
}

/// Numbers at 17 significant digits so that [`parse_csv`] reads back the
/// identical values.
pub fn write_csv(frame: &DataFrame) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(&frame.names)?;
    for t in 0..frame.rows() {
        w.write_record(frame.columns.iter().map(|c| fmt_f64(c[t])))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `Z` columns `z1..zk` followed by `X` columns `x1..xq`.
pub fn sample_frame(g: &Generated) -> DataFrame {
    let s = &g.sample;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for j in 0..s.k() {
        names.push(format!("z{}", j + 1));
        columns.push(s.z_column(j));
    }
    for j in 0..s.q() {
        names.push(format!("x{}", j + 1));
        columns.push(s.x_column(j));
    }
    DataFrame { names, columns }
}

/// `100 (log P_t - log P_{t-1})`; one observation shorter than `prices`.
pub fn log_returns_pct(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::Data(format!(
            "row {}: log returns need positive prices, got {}",
            i + 1,
            prices[i]
        )));
    }
    Ok(prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

/// Rows `t = drop..T-1` of `(Y_t, Y_{t-1}, ..., Y_{t-lags})` for a
/// `dim`-variate series given column by column. `drop >= lags` lets several
/// designs built from the same series share their first row.
pub fn lag_matrix(series: &[&[f64]], lags: usize, drop: usize) -> Result<Vec<f64>> {
    let total = series.first().map_or(0, |s| s.len());
    if drop < lags {
        return Err(Error::Shape(format!("cannot drop {drop} rows when {lags} lags are needed")));
    }
    if total <= drop {
        return Err(Error::Data(format!(
            "{total} observations leave no rows after dropping {drop} for lags"
        )));
    }
    let mut out = Vec::with_capacity((total - drop) * series.len() * (lags + 1));
    for t in drop..total {
        for lag in 0..=lags {
            for s in series {
                out.push(s[t - lag]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_cell_is_located() {
        let text = "a,b\n1,2\n3,x\n";
        let err = parse_csv(text).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
    }

    #[test]
    fn ragged_row_is_located() {
        let err = parse_csv("a,b\n1,2\n3\n").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn lags_by_hand() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let m = lag_matrix(&[&y], 2, 2).unwrap();
        assert_eq!(m, vec![3.0, 2.0, 1.0, 4.0, 3.0, 2.0]);
        let m = lag_matrix(&[&y], 1, 2).unwrap();
        assert_eq!(m, vec![3.0, 2.0, 4.0, 3.0]);
    }

    #[test]
    fn log_returns() {
        let r = log_returns_pct(&[100.0, 110.0]).unwrap();
        assert!((r[0] - 100.0 * 1.1f64.ln()).abs() < 1e-12);
        assert!(log_returns_pct(&[1.0, 0.0]).is_err());
    }
}
