//! Ingestion of positive observations and their descending order statistics.

use std::io::Read;
use std::sync::{Arc, OnceLock};

use crate::error::{HeweError, Result};

/// Positive observations held as descending order statistics.
///
/// `removed_top` counts the largest values dropped since load, so
/// `len() + removed_top() == n_original()` always holds. Natural logs of the
/// values are computed on first use and shared between clones.
#[derive(Debug, Clone)]
pub struct OrderedSample {
    values: Arc<[f64]>,
    offset: usize,
    n_original: usize,
    removed_top: usize,
    logs: Arc<OnceLock<Vec<f64>>>,
}

impl PartialEq for OrderedSample {
    fn eq(&self, other: &Self) -> bool {
        self.values() == other.values()
            && self.n_original == other.n_original
            && self.removed_top == other.removed_top
    }
}

impl OrderedSample {
    /// Builds a sample from raw values in any order. Rows are reported 1-based
    /// in input order.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(HeweError::EmptyData);
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(HeweError::ParseError(format!("non-finite value at row {}", i + 1)));
            }
            if v <= 0.0 {
                return Err(HeweError::NonPositiveValue { value: v, row: i + 1 });
            }
        }
        // stable: equal values keep input order
        values.sort_by(|a, b| b.total_cmp(a));
        let n = values.len();
        Ok(Self {
            values: values.into(),
            offset: 0,
            n_original: n,
            removed_top: 0,
            logs: Arc::new(OnceLock::new()),
        })
    }

    /// Descending values still available.
    pub fn values(&self) -> &[f64] {
        &self.values[self.offset..]
    }

    pub fn len(&self) -> usize {
        self.values.len() - self.offset
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_original(&self) -> usize {
        self.n_original
    }

    pub fn removed_top(&self) -> usize {
        self.removed_top
    }

    /// Natural logs of [`values`](Self::values), same order.
    pub fn logs(&self) -> &[f64] {
        let all = self.logs.get_or_init(|| self.values.iter().map(|v| v.ln()).collect());
        &all[self.offset..]
    }

    /// Drops the `m` largest values. Exactly `m` positions of the sorted
    /// array are removed, even when the `m`-th and `(m+1)`-th values tie.
    pub fn remove_top(&self, m: usize) -> Result<Self> {
        if m >= self.len() {
            return Err(HeweError::RemovalExhaustsSample { m, len: self.len() });
        }
        Ok(Self {
            values: Arc::clone(&self.values),
            offset: self.offset + m,
            n_original: self.n_original,
            removed_top: self.removed_top + m,
            logs: Arc::clone(&self.logs),
        })
    }

    /// The `rank`-th largest available value (1-based).
    pub fn order_statistic(&self, rank: usize) -> Result<f64> {
        if rank == 0 || rank > self.len() {
            return Err(HeweError::RankOutOfRange { rank, len: self.len() });
        }
        Ok(self.values()[rank - 1])
    }

    pub fn min(&self) -> f64 {
        *self.values().last().expect("sample is never empty")
    }

    pub fn max(&self) -> f64 {
        self.values()[0]
    }
}

/// Which column of a delimited file holds the observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    /// Zero-based column position.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl std::str::FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.trim().to_string()),
        })
    }
}

impl Default for ColumnSelector {
    fn default() -> Self {
        ColumnSelector::Index(0)
    }
}

/// Result of [`load_sample`]: the sample and the rows that were skipped.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub sample: OrderedSample,
    /// 1-based line numbers whose selected field was not a finite number.
    pub non_numeric_rows: Vec<usize>,
    pub header: Option<Vec<String>>,
}

/// Reads comma- or whitespace-delimited text with an optional header row.
///
/// A file whose first non-blank line contains a comma is read as CSV (quoted
/// fields allowed); otherwise fields are split on whitespace. The first line
/// is a header when none of its fields parse as numbers.
pub fn load_sample<R: Read>(mut source: R, column: &ColumnSelector) -> Result<Ingested> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| HeweError::ParseError(e.to_string()))?;
    let rows = split_rows(&text)?;
    let mut rows = rows.into_iter().peekable();

    let mut header = None;
    if let Some((_, first)) = rows.peek() {
        let looks_like_header = !first.is_empty() && first.iter().all(|f| parse_number(f).is_none());
        if looks_like_header {
            header = rows.next().map(|(_, fields)| fields);
        }
    }

    let index = match column {
        ColumnSelector::Index(i) => *i,
        ColumnSelector::Name(name) => {
            let header = header
                .as_ref()
                .ok_or_else(|| HeweError::ParseError(format!("column '{name}' requested but file has no header")))?;
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| HeweError::ParseError(format!("no column named '{name}'")))?
        }
    };
    if let Some(h) = &header {
        if index >= h.len() {
            return Err(HeweError::ParseError(format!("column {index} does not exist")));
        }
    }

    let mut values = Vec::new();
    let mut value_rows = Vec::new();
    let mut non_numeric_rows = Vec::new();
    let mut any_row_has_column = header.is_some();
    for (line, fields) in rows {
        match fields.get(index) {
            Some(field) => {
                any_row_has_column = true;
                match parse_number(field) {
                    Some(v) => {
                        values.push(v);
                        value_rows.push(line);
                    }
                    None => non_numeric_rows.push(line),
                }
            }
            None => non_numeric_rows.push(line),
        }
    }
    if !any_row_has_column && !non_numeric_rows.is_empty() {
        return Err(HeweError::ParseError(format!("column {index} does not exist")));
    }
    if values.is_empty() {
        return Err(HeweError::EmptyData);
    }
    if let Some(pos) = values.iter().position(|&v| v <= 0.0) {
        return Err(HeweError::NonPositiveValue { value: values[pos], row: value_rows[pos] });
    }
    Ok(Ingested { sample: OrderedSample::from_values(values)?, non_numeric_rows, header })
}

fn parse_number(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Splits text into (1-based line number, fields), skipping blank lines.
fn split_rows(text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let comma = text.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.contains(','));
    if !comma {
        return Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_string).collect()))
            .collect());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HeweError::ParseError(e.to_string()))?;
        let line = record.position().map_or(out.len() + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(out)
}
