//! Observation series, gap segmentation, and CSV input/output.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Tokens treated as missing when no explicit set is configured.
pub const DEFAULT_NA_MARKERS: [&str; 4] = ["", "NA", "NaN", "+"];

/// Raw text of the parsed file, kept so observed cells are echoed verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub delimiter: u8,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Positions of the value columns within `header`.
    pub value_columns: Vec<usize>,
}

/// Ordered observations at positions `1..=len`, each either a `dim`-vector or missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    dim: usize,
    values: Vec<Option<Vector>>,
    columns: Vec<String>,
    na_markers: Vec<String>,
    source: Option<SourceTable>,
}

impl Series {
    pub fn new(dim: usize, values: Vec<Option<Vector>>) -> Result<Self> {
        let columns = (1..=dim).map(|i| format!("x{i}")).collect();
        Series::with_columns(columns, values)
    }

    pub fn with_columns(columns: Vec<String>, values: Vec<Option<Vector>>) -> Result<Self> {
        let dim = columns.len();
        if dim == 0 {
            return Err(Error::InvalidInput("zero selected columns".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "observation {} has {} components, expected {dim}",
                        i + 1,
                        v.len()
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("observation {}", i + 1)));
                }
            }
        }
        if values.iter().all(Option::is_none) {
            return Err(Error::NoObservations);
        }
        Ok(Series {
            dim,
            values,
            columns,
            na_markers: DEFAULT_NA_MARKERS.iter().map(|s| s.to_string()).collect(),
            source: None,
        })
    }

    /// Scalar series from `Option<f64>` values.
    pub fn scalar(values: &[Option<f64>]) -> Result<Self> {
        Series::new(1, values.iter().map(|v| v.map(Vector::scalar)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn na_markers(&self) -> &[String] {
        &self.na_markers
    }

    pub fn source(&self) -> Option<&SourceTable> {
        self.source.as_ref()
    }

    /// Value at 1-based `index`; `None` when missing or out of range.
    pub fn get(&self, index: usize) -> Option<&Vector> {
        index.checked_sub(1).and_then(|i| self.values.get(i)).and_then(Option::as_ref)
    }

    pub fn is_missing(&self, index: usize) -> bool {
        self.get(index).is_none()
    }

    pub fn values(&self) -> &[Option<Vector>] {
        &self.values
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.is_missing(i)).collect()
    }

    /// Single component of every observation, for scalar fitting.
    pub fn component(&self, c: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|v| v.as_ref().map(|v| v[c])).collect()
    }

    /// Same positions, every value multiplied by `s` and offset by `c`.
    pub fn affine(&self, s: f64, c: f64) -> Series {
        let values = self.values.iter().map(|v| v.as_ref().map(|v| v.iter().map(|x| s * x + c).collect())).collect();
        Series { values, source: None, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub na_markers: Vec<String>,
    /// Value columns by header name; `None` selects every column not excluded.
    pub columns: Option<Vec<String>>,
    /// Columns never selected by default (covariates, an index column).
    pub exclude: Vec<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: b',',
            na_markers: DEFAULT_NA_MARKERS.iter().map(|s| s.to_string()).collect(),
            columns: None,
            exclude: vec!["index".into()],
        }
    }
}

/// Fields of one line, honoring quotes. Records may not span lines.
fn split_line(line: &str, delimiter: u8) -> Result<Vec<String>> {
    if line.is_empty() {
        return Ok(vec![String::new()]);
    }
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(false).from_reader(line.as_bytes());
    let mut record = csv::StringRecord::new();
    reader.read_record(&mut record).map_err(|e| Error::Csv(e.to_string()))?;
    Ok(record.iter().map(str::to_string).collect())
}

/// Parse delimited text with a header row into a [`Series`].
///
/// A row whose selected cells are all missing markers is a missing
/// observation; a row with only some selected cells missing is rejected.
pub fn parse_csv(text: &str, opts: &ParseOptions) -> Result<Series> {
    let mut lines = text.lines();
    let header: Vec<String> =
        split_line(lines.next().unwrap_or(""), opts.delimiter)?.into_iter().map(|h| h.trim().to_string()).collect();

    let value_columns: Vec<usize> = match &opts.columns {
        Some(names) => names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::InvalidInput(format!("column '{name}' not found in header")))
            })
            .collect::<Result<_>>()?,
        None => header
            .iter()
            .enumerate()
            .filter(|(_, h)| !opts.exclude.iter().any(|x| x.eq_ignore_ascii_case(h)))
            .map(|(i, _)| i)
            .collect(),
    };
    if value_columns.is_empty() {
        return Err(Error::InvalidInput("zero selected columns".into()));
    }

    // Line by line, so a blank line in a one-column file is an empty cell.
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells = split_line(line, opts.delimiter)?;
        if cells.len() != header.len() {
            return Err(Error::Csv(format!("line {} has {} fields, expected {}", i + 2, cells.len(), header.len())));
        }
        raw_rows.push(cells);
    }

    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (r, cells) in raw_rows.into_iter().enumerate() {
        let row_no = r + 1;
        let mut obs = Vec::with_capacity(value_columns.len());
        let mut n_missing = 0;
        for &c in &value_columns {
            let cell = cells[c].trim();
            if opts.na_markers.iter().any(|m| m == cell) {
                n_missing += 1;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::BadCell {
                row: row_no,
                column: header[c].clone(),
                cell: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::BadCell { row: row_no, column: header[c].clone(), cell: cell.to_string() });
            }
            obs.push(v);
        }
        if n_missing == 0 {
            values.push(Some(Vector::new(obs)));
        } else if n_missing == value_columns.len() {
            values.push(None);
        } else {
            return Err(Error::InvalidInput(format!(
                "row {row_no} is only partly missing; every selected column must be observed or missing together"
            )));
        }
        rows.push(cells);
    }

    let columns = value_columns.iter().map(|&c| header[c].clone()).collect();
    let mut series = Series::with_columns(columns, values)?;
    series.na_markers = opts.na_markers.clone();
    series.source = Some(SourceTable { delimiter: opts.delimiter, header, rows, value_columns });
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anchor {
    pub index: usize,
    pub value: Vector,
}

/// One maximal run of missing indices, its seed window, and its terminal anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSegment {
    pub gap_start: usize,
    pub gap_end: usize,
    /// `None` only for a gap that runs to the end of the series (open-gap mode).
    pub anchor: Option<Anchor>,
    /// The `p` indices immediately before `gap_start`, oldest first.
    pub seed_indices: Vec<usize>,
    /// At least one seed lies inside an earlier gap and will be an imputed value.
    pub imputed_seeds: bool,
}

impl GapSegment {
    pub fn len(&self) -> usize {
        self.gap_end - self.gap_start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.gap_start..=self.gap_end
    }

    pub fn anchor_index(&self) -> Option<usize> {
        self.anchor.as_ref().map(|a| a.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapLayout {
    /// Length of the leading fully observed run.
    pub prefix_len: usize,
    pub segments: Vec<GapSegment>,
}

/// Split a series into gap segments in increasing order of `gap_start`.
pub fn detect_gaps(series: &Series, order: usize, allow_open: bool) -> Result<GapLayout> {
    if order == 0 {
        return Err(Error::InvalidInput("order must be at least 1".into()));
    }
    let n = series.len();
    let prefix_len = (1..=n).take_while(|&i| !series.is_missing(i)).count();
    let mut segments: Vec<GapSegment> = Vec::new();
    let mut i = 1;
    while i <= n {
        if !series.is_missing(i) {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i <= n && series.is_missing(i) {
            i += 1;
        }
        let gap_end = i - 1;
        if gap_start <= order {
            return Err(Error::NoSeedWindow { gap_start, order });
        }
        let seed_indices: Vec<usize> = (gap_start - order..gap_start).collect();
        let imputed_seeds = seed_indices.iter().any(|&s| series.is_missing(s));
        let anchor = if gap_end < n {
            Some(Anchor {
                index: gap_end + 1,
                value: series.get(gap_end + 1).expect("run ended at observed value").clone(),
            })
        } else if allow_open {
            None
        } else {
            return Err(Error::OpenGap { gap_start, gap_end });
        };
        segments.push(GapSegment { gap_start, gap_end, anchor, seed_indices, imputed_seeds });
    }
    Ok(GapLayout { prefix_len, segments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Observed,
    Imputed,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Observed => "observed",
            Origin::Imputed => "imputed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    /// Significant digits for imputed values.
    pub precision: usize,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions { precision: 6 }
    }
}

/// Format with `digits` significant digits, `%g`-style choice between fixed
/// and exponent notation but without stripping trailing zeros.
pub fn format_significant(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("exponent digits");
    if exp < -4 || exp >= digits as i32 {
        sci
    } else {
        format!("{:.*}", (digits as i32 - 1 - exp) as usize, v)
    }
}

/// Per-index origin flags for a series.
pub fn origins(series: &Series) -> Vec<Origin> {
    series.values().iter().map(|v| if v.is_some() { Origin::Observed } else { Origin::Imputed }).collect()
}

/// Render the series with gaps filled and an `origin` column appended.
///
/// `imputed` must hold exactly the missing indices. Observed cells are echoed
/// verbatim from the parsed source when there is one.
pub fn write_csv(series: &Series, imputed: &BTreeMap<usize, Vector>, opts: &WriteOptions) -> Result<String> {
    for idx in series.missing_indices() {
        if !imputed.contains_key(&idx) {
            return Err(Error::MissingImputation(idx));
        }
    }
    if let Some(&idx) = imputed.keys().find(|&&i| !series.is_missing(i)) {
        return Err(Error::InvalidInput(format!("imputed value supplied for observed index {idx}")));
    }
    for v in imputed.values() {
        if v.len() != series.dim() {
            return Err(Error::DimensionMismatch("imputed value width".into()));
        }
    }

    let delimiter = series.source.as_ref().map_or(b',', |s| s.delimiter);
    let mut writer =
        csv::WriterBuilder::new().delimiter(delimiter).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let flags = origins(series);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());

    match &series.source {
        Some(src) => {
            let mut header = src.header.clone();
            header.push("origin".into());
            writer.write_record(&header).map_err(csv_err)?;
            for (r, raw) in src.rows.iter().enumerate() {
                let mut cells = raw.clone();
                if let Some(v) = imputed.get(&(r + 1)) {
                    for (k, &c) in src.value_columns.iter().enumerate() {
                        cells[c] = format_significant(v[k], opts.precision);
                    }
                }
                cells.push(flags[r].as_str().into());
                writer.write_record(&cells).map_err(csv_err)?;
            }
        }
        None => {
            let mut header = series.columns.clone();
            header.push("origin".into());
            writer.write_record(&header).map_err(csv_err)?;
            for (r, v) in series.values.iter().enumerate() {
                let mut cells: Vec<String> = match v {
                    Some(v) => v.iter().map(|x| x.to_string()).collect(),
                    None => imputed[&(r + 1)].iter().map(|&x| format_significant(x, opts.precision)).collect(),
                };
                cells.push(flags[r].as_str().into());
                writer.write_record(&cells).map_err(csv_err)?;
            }
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
