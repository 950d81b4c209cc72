//! JSON and CSV output. Every float is written with 17 significant digits
//! so values round-trip exactly and independent writers agree byte for
//! byte.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{HeweError, Result};
use crate::estimator::{EstimateResult, SweepEntry, WhatIf};
use crate::simulator::ExperimentReport;

/// `printf("%.17g")`: fixed notation for exponents in `[-4, 17)`, otherwise
/// scientific, trailing zeros dropped.
pub fn fmt_g17(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// serde_json formatter writing floats through [`fmt_g17`]. Non-finite
/// values never reach it (serde_json writes them as `null`).
#[derive(Debug, Clone, Copy, Default)]
pub struct G17Formatter;

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter);
    value.serialize(&mut ser).map_err(|e| HeweError::ParseError(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub endpoint: usize,
    /// Endpoint in the ranks of the sample before removal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aligned_endpoint: Option<usize>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub estimate: Option<EstimateResult>,
}

impl SweepRow {
    pub fn from_entry(entry: &SweepEntry, shift: Option<usize>) -> Self {
        let (status, message, estimate) = match &entry.result {
            Ok(r) => ("ok".to_string(), None, Some(r.clone())),
            Err(e) => (e.code().to_string(), Some(e.to_string()), None),
        };
        Self { endpoint: entry.endpoint, aligned_endpoint: shift.map(|m| entry.endpoint + m), status, message, estimate }
    }
}

pub fn sweep_rows(entries: &[SweepEntry], shift: Option<usize>) -> Vec<SweepRow> {
    entries.iter().map(|e| SweepRow::from_entry(e, shift)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfReport {
    pub remove_top: usize,
    pub k: usize,
    pub before: Vec<SweepRow>,
    pub after: Vec<SweepRow>,
}

impl From<&WhatIf> for WhatIfReport {
    fn from(w: &WhatIf) -> Self {
        Self {
            remove_top: w.remove_top,
            k: w.k,
            before: sweep_rows(&w.before, None),
            after: sweep_rows(&w.after, Some(w.remove_top)),
        }
    }
}

const SWEEP_COLUMNS: [&str; 9] =
    ["endpoint", "alpha_hat", "gamma_hat", "delta_hat", "missing_hat", "rho_hat", "lambda_hat", "loglik", "status"];

fn estimate_cells(r: Option<&EstimateResult>) -> Vec<String> {
    match r {
        Some(r) => [r.alpha_hat, r.gamma_hat, r.delta_hat, r.missing_hat, r.rho_hat, r.lambda_hat, r.loglik]
            .iter()
            .map(|&v| fmt_g17(v))
            .collect(),
        None => vec![String::new(); 7],
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| HeweError::ParseError(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}

fn csv_err(e: csv::Error) -> HeweError {
    HeweError::ParseError(e.to_string())
}

pub fn estimate_csv(r: &EstimateResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    let mut row = vec![r.endpoint.to_string()];
    row.extend(estimate_cells(Some(r)));
    row.push("ok".into());
    w.write_record(&row).map_err(csv_err)?;
    finish(w)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![r.endpoint.to_string()];
        row.extend(estimate_cells(r.estimate.as_ref()));
        row.push(r.status.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Both tables stacked, with a `table` column and the aligned endpoint.
pub fn what_if_csv(report: &WhatIfReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["table", "aligned_endpoint"];
    header.extend(SWEEP_COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for (name, rows) in [("before", &report.before), ("after", &report.after)] {
        for r in rows {
            let aligned = r.aligned_endpoint.unwrap_or(r.endpoint);
            let mut row = vec![name.to_string(), aligned.to_string(), r.endpoint.to_string()];
            row.extend(estimate_cells(r.estimate.as_ref()));
            row.push(r.status.clone());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// One row per endpoint with the aggregate statistics.
pub fn experiment_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "endpoint",
        "succeeded",
        "failed",
        "missing_mean",
        "missing_rmse",
        "alpha_mean",
        "alpha_rmse",
        "gamma_mean",
        "gamma_rmse",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(fmt_g17).unwrap_or_default();
    for s in &report.summaries {
        w.write_record([
            s.endpoint.to_string(),
            s.succeeded.to_string(),
            s.failed.to_string(),
            fmt_g17(s.missing.mean),
            opt(s.missing.rmse),
            fmt_g17(s.alpha.mean),
            opt(s.alpha.rmse),
            fmt_g17(s.gamma.mean),
            opt(s.gamma.rmse),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Two-column `(x, value)` table.
pub fn pairs_csv(x_name: &str, y_name: &str, rows: &[(f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([x_name, y_name]).map_err(csv_err)?;
    for &(x, y) in rows {
        w.write_record([fmt_g17(x), fmt_g17(y)]).map_err(csv_err)?;
    }
    finish(w)
}
