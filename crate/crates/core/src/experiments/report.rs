//! CSV and JSON emission of experiment rows.
//!
//! CSV files always start with the header of the row type, so an empty
//! result set produces a header-only file. JSON files hold an array of row
//! objects with the same field names.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fl::RoundRecord;
use super::nmse::NmseRow;
use crate::bitconv::ConversionMode;
use crate::error::{Error, Result};
use crate::mpc::{cost_report, Approach, CostModel};

/// A serializable row with a fixed column list.
pub trait ReportRow: Serialize {
    const HEADER: &'static [&'static str];
}

impl ReportRow for NmseRow {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "scales",
        "mode",
        "d",
        "n",
        "trials",
        "nmse_mean",
        "nmse_stderr",
    ];
}

impl ReportRow for RoundRecord {
    const HEADER: &'static [&'static str] = &[
        "arm",
        "round",
        "accuracy",
        "loss",
        "selected_attackers",
        "excluded_attackers",
        "diverged",
    ];
}

/// Cost of one (approach, n) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub approach: Approach,
    pub mode: ConversionMode,
    pub n: u64,
    /// Transmitted bits per client update.
    pub m: u64,
    pub q: usize,
    pub ot_count: u64,
    pub offline_mib: f64,
    pub online_mib: f64,
    pub protocol_online_mib: f64,
}

impl ReportRow for CostRow {
    const HEADER: &'static [&'static str] = &[
        "approach",
        "mode",
        "n",
        "m",
        "q",
        "ot_count",
        "offline_mib",
        "online_mib",
        "protocol_online_mib",
    ];
}

/// Cost rows for every approach and client count, sorted by (approach, n).
pub fn cost_table(
    approaches: &[Approach],
    clients: &[u64],
    m: u64,
    q: usize,
    mode: ConversionMode,
    model: &CostModel,
) -> Result<Vec<CostRow>> {
    let mut rows = Vec::new();
    for &a in approaches {
        for &n in clients {
            let r = cost_report(a, n, m, q, mode, model)?;
            rows.push(CostRow {
                approach: a,
                mode,
                n,
                m,
                q,
                ot_count: r.ot_count,
                offline_mib: r.offline_mib,
                online_mib: r.online_mib,
                protocol_online_mib: r.protocol_online_mib,
            });
        }
    }
    rows.sort_by_key(|r| (r.approach, r.n));
    rows.dedup();
    Ok(rows)
}

/// Output format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parameter(format!("unknown report format {other}"))),
        }
    }
}

/// Writes `rows` to `out`.
pub fn write_report<T: ReportRow, W: Write>(
    rows: &[T],
    format: ReportFormat,
    out: W,
) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            w.write_record(T::HEADER)
                .map_err(|e| Error::Io(e.to_string()))?;
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Writes `rows` to the file at `path`.
pub fn emit_report<T: ReportRow>(rows: &[T], format: ReportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_report(rows, format, BufWriter::new(file))
}
