//! Reading a single series out of a CSV file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use l1trend::Signal;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A CSV column, by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty column selector".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(n) => f.write_str(n),
        }
    }
}

/// How the file was actually read, after auto-detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub header: bool,
    pub delimiter: char,
    pub value_column: usize,
    pub time_column: Option<usize>,
}

pub struct InputRequest<'a> {
    pub delimiter: char,
    pub header: Option<bool>,
    pub value: Option<&'a ColumnSelector>,
    pub time: Option<&'a ColumnSelector>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || ["nan", "na", "null"].iter().any(|m| field.eq_ignore_ascii_case(m))
}

fn resolve(path: &Path, selector: &ColumnSelector, header: Option<&csv::StringRecord>, width: usize) -> Result<usize> {
    let idx = match selector {
        ColumnSelector::Index(i) => *i,
        ColumnSelector::Name(name) => {
            let Some(header) = header else {
                return Err(CliError::Usage(format!(
                    "column `{name}` selected by name but {} has no header row",
                    path.display()
                )));
            };
            header.iter().position(|h| h == name).ok_or_else(|| {
                let names: Vec<&str> = header.iter().collect();
                CliError::Usage(format!("no column `{name}` in {}; found {names:?}", path.display()))
            })?
        }
    };
    if idx >= width {
        return Err(CliError::Usage(format!(
            "column {idx} out of range: {} has {width} column(s)",
            path.display()
        )));
    }
    Ok(idx)
}

pub fn read_series(path: &Path, request: &InputRequest) -> Result<(Signal, InputLayout)> {
    if !request.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter `{}` must be ASCII",
            request.delimiter
        )));
    }
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(request.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(source) => CliError::Read {
                    path: path.to_path_buf(),
                    source,
                },
                kind => parse_err(line, format!("{kind:?}")),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record));
    }
    let Some((_, first)) = rows.first() else {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            message: "file contains no rows".into(),
        });
    };
    let width = first.len();

    let header = match request.header {
        Some(h) => h,
        None => match request.value {
            Some(ColumnSelector::Name(_)) => true,
            _ => {
                let probe = match request.value {
                    Some(ColumnSelector::Index(i)) => *i,
                    _ => width - 1,
                };
                first
                    .get(probe)
                    .is_some_and(|f| !is_missing(f) && f.parse::<f64>().is_err())
            }
        },
    };
    let header_row = header.then(|| first.clone());
    let time_column = request
        .time
        .map(|s| resolve(path, s, header_row.as_ref(), width))
        .transpose()?;
    let value_column = match request.value {
        Some(s) => resolve(path, s, header_row.as_ref(), width)?,
        None => (0..width)
            .rev()
            .find(|&i| Some(i) != time_column)
            .ok_or_else(|| CliError::Usage("no column left for values".into()))?,
    };
    if Some(value_column) == time_column {
        return Err(CliError::Usage("value and time columns must differ".into()));
    }

    let body = if header { &rows[1..] } else { &rows[..] };
    let mut values = Vec::with_capacity(body.len());
    let mut first_missing = None;
    for (line, record) in body {
        let field = record.get(value_column).unwrap_or("");
        if is_missing(field) {
            first_missing.get_or_insert(*line);
            values.push(f64::NAN);
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| parse_err(*line, format!("cannot parse `{field}` as a number")))?;
        if !v.is_finite() {
            return Err(parse_err(*line, format!("value `{field}` is not finite")));
        }
        values.push(v);
    }
    if let Some(line) = first_missing {
        let message = if values.iter().all(|v| v.is_nan()) {
            format!("value column {value_column} contains no numbers")
        } else {
            format!("missing value at line {line}; fill or drop gaps before fitting")
        };
        return Err(CliError::Data {
            path: path.to_path_buf(),
            message,
        });
    }

    let mut signal = Signal::new(values)?;
    if let Some(tc) = time_column {
        let stamps = body.iter().map(|(_, r)| r.get(tc).unwrap_or("").to_string()).collect();
        signal = signal.with_timestamps(stamps)?;
    }
    Ok((
        signal,
        InputLayout {
            header,
            delimiter: request.delimiter,
            value_column,
            time_column,
        },
    ))
}
