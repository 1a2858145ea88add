//! Result tables. Floats are written in shortest round-trip form so that
//! identical runs give identical bytes.

use std::path::Path;

use l1trend::{Decomposition, DictionarySpec, Event, EventLocation, FitResult, SelectionReport, Signal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Selected grid point, as read back by `check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFit {
    pub lambda: f64,
    pub gamma: f64,
    pub ebic: f64,
    pub rss: f64,
    pub n_active: usize,
    pub converged: bool,
    pub cycles_used: usize,
    pub baseline: f64,
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(write_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write_text(path, &text)
}

pub fn decomposition_rows<'a>(signal: &'a Signal, d: &'a Decomposition) -> impl Iterator<Item = Vec<String>> + 'a {
    signal.values().iter().enumerate().map(move |(t, y)| {
        let mut row = vec![
            t.to_string(),
            y.to_string(),
            d.fitted[t].to_string(),
            d.x[t].to_string(),
            d.w[t].to_string(),
            d.u[t].to_string(),
            d.s[t].to_string(),
            d.baseline.to_string(),
        ];
        if let Some(stamps) = signal.timestamps() {
            row.push(stamps[t].clone());
        }
        row
    })
}

pub const DECOMPOSITION_HEADER: [&str; 8] = ["t", "y", "fitted", "x", "w", "u", "s", "baseline"];
pub const EVENTS_HEADER: [&str; 3] = ["kind", "location", "magnitude"];

pub fn event_row(e: &Event) -> Vec<String> {
    let location = match e.location {
        EventLocation::Sample(t) => t.to_string(),
        EventLocation::Frequency(w) => w.to_string(),
    };
    vec![e.kind.name().to_string(), location, e.magnitude.to_string()]
}

pub fn write_fit_outputs(
    dir: &Path,
    spec: &DictionarySpec,
    signal: &Signal,
    selection: &SelectionReport,
    decomposition: &Decomposition,
) -> Result<()> {
    let mut header = DECOMPOSITION_HEADER.to_vec();
    if signal.timestamps().is_some() {
        header.push("time");
    }
    write_table(
        &dir.join("decomposition.csv"),
        &header,
        decomposition_rows(signal, decomposition),
    )?;
    write_table(
        &dir.join("events.csv"),
        &EVENTS_HEADER,
        decomposition.events.iter().map(event_row),
    )?;
    let best = selection.best;
    write_table(
        &dir.join("selection.csv"),
        &["lambda", "gamma", "rss", "n_active", "converged", "ebic", "selected"],
        selection.scores.iter().map(|s| {
            vec![
                s.lambda.to_string(),
                s.gamma.to_string(),
                s.rss.to_string(),
                s.n_active.to_string(),
                s.converged.to_string(),
                s.ebic.map(|e| e.to_string()).unwrap_or_default(),
                ((s.lambda, s.gamma) == best).to_string(),
            ]
        }),
    )?;
    write_coefficients(&dir.join("coefficients.csv"), spec, &selection.best_fit)?;
    let fit = &selection.best_fit;
    let ebic = selection
        .scores
        .iter()
        .find(|s| (s.lambda, s.gamma) == best)
        .and_then(|s| s.ebic)
        .expect("selected fit has a score");
    write_json(
        &dir.join("selected.json"),
        &SelectedFit {
            lambda: fit.lambda,
            gamma: fit.gamma,
            ebic,
            rss: fit.rss,
            n_active: fit.n_active,
            converged: fit.converged,
            cycles_used: fit.cycles_used,
            baseline: fit.baseline,
        },
    )
}

fn write_coefficients(path: &Path, spec: &DictionarySpec, fit: &FitResult) -> Result<()> {
    let mut entries = fit.coefficients.entries().to_vec();
    entries.sort_by_key(|(c, _)| spec.position(*c));
    write_table(
        path,
        &["block", "index", "value"],
        entries
            .iter()
            .map(|(c, v)| vec![c.kind.name().to_string(), c.index.to_string(), v.to_string()]),
    )
}

/// Reads a `block,index,value` table back into coefficient entries.
pub fn read_coefficients(path: &Path, spec: &DictionarySpec) -> Result<l1trend::SparseCoefficients> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let (Some(kind), Some(index), Some(value)) = (record.get(0), record.get(1), record.get(2)) else {
            return Err(bad("expected block,index,value".into()));
        };
        let kind = kind.parse().map_err(|e: l1trend::Error| bad(e.to_string()))?;
        let index: usize = index.parse().map_err(|_| bad(format!("bad index `{index}`")))?;
        let value: f64 = value.parse().map_err(|_| bad(format!("bad value `{value}`")))?;
        let column = spec.column(kind, index).map_err(|e| bad(e.to_string()))?;
        entries.push((column, value));
    }
    Ok(l1trend::SparseCoefficients::from_entries(spec, &entries)?)
}
