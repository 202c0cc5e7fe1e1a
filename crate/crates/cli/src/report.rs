//! Per-solver summaries of a report CSV.

use std::fmt::Write as _;
use std::io::Read;

use crate::experiment::{RowStatus, CSV_HEADER, CSV_SCHEMA};
use crate::{Error, Result};

/// A parsed CSV row; numeric fields are `None` when empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub instance_id: String,
    pub solver: String,
    pub seed: u64,
    pub status: RowStatus,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub registered_psnr_db: Option<f64>,
    pub registered_ssim: Option<f64>,
    pub raw_psnr_db: Option<f64>,
    pub wall_time_ms: f64,
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    line: u64,
) -> Result<Option<T>> {
    let raw = record.get(i).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| {
        Error::Config(format!(
            "report line {line}: bad {} value {raw:?}",
            CSV_HEADER[i]
        ))
    })
}

pub fn read_report<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "unexpected report header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.get(0) != Some(CSV_SCHEMA) {
            return Err(Error::Config(format!(
                "report line {line}: unknown schema {:?}",
                record.get(0)
            )));
        }
        let text = |i: usize| record.get(i).unwrap_or("").to_string();
        let status = RowStatus::parse(record.get(4).unwrap_or(""))
            .ok_or_else(|| Error::Config(format!("report line {line}: unknown status")))?;
        rows.push(CsvRow {
            instance_id: text(1),
            solver: text(2),
            seed: parse_field(&record, 3, line)?.unwrap_or(0),
            status,
            iterations: parse_field(&record, 5, line)?,
            final_residual: parse_field(&record, 6, line)?,
            registered_psnr_db: parse_field(&record, 7, line)?,
            registered_ssim: parse_field(&record, 8, line)?,
            raw_psnr_db: parse_field(&record, 9, line)?,
            wall_time_ms: parse_field(&record, 10, line)?.unwrap_or(0.0),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub solver: String,
    pub rows: usize,
    pub ok: usize,
    pub median_psnr_db: Option<f64>,
    pub mean_ssim: Option<f64>,
    /// Rows with registered PSNR of at least 30 dB.
    pub at_least_30_db: usize,
    pub median_wall_time_ms: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// One summary per solver, in order of first appearance.
pub fn summarize(rows: &[CsvRow]) -> Vec<SolverSummary> {
    let mut solvers: Vec<&str> = Vec::new();
    for r in rows {
        if !solvers.contains(&r.solver.as_str()) {
            solvers.push(&r.solver);
        }
    }
    solvers
        .into_iter()
        .map(|name| {
            let mine: Vec<&CsvRow> = rows.iter().filter(|r| r.solver == name).collect();
            let mut psnr: Vec<f64> = mine.iter().filter_map(|r| r.registered_psnr_db).collect();
            let ssim: Vec<f64> = mine.iter().filter_map(|r| r.registered_ssim).collect();
            let mut wall: Vec<f64> = mine.iter().map(|r| r.wall_time_ms).collect();
            SolverSummary {
                solver: name.to_string(),
                rows: mine.len(),
                ok: mine.iter().filter(|r| r.status == RowStatus::Ok).count(),
                at_least_30_db: psnr.iter().filter(|&&p| p >= 30.0).count(),
                median_psnr_db: median(&mut psnr),
                mean_ssim: (!ssim.is_empty()).then(|| ssim.iter().sum::<f64>() / ssim.len() as f64),
                median_wall_time_ms: median(&mut wall),
            }
        })
        .collect()
}

pub fn render(summaries: &[SolverSummary]) -> String {
    let opt =
        |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |v| format!("{v:.digits$}"));
    let mut out = format!(
        "{:<16} {:>5} {:>5} {:>11} {:>9} {:>7} {:>12}\n",
        "solver", "rows", "ok", "median_psnr", "mean_ssim", ">=30dB", "median_ms"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<16} {:>5} {:>5} {:>11} {:>9} {:>7} {:>12}",
            s.solver,
            s.rows,
            s.ok,
            opt(s.median_psnr_db, 2),
            opt(s.mean_ssim, 4),
            s.at_least_30_db,
            opt(s.median_wall_time_ms, 1),
        );
    }
    out
}
