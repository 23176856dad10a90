//! Plot-ready aggregation of exported run metrics.
//!
//! Reads the CSVs written by [`crate::sim::export_metrics`] and emits one
//! tidy `height,series,value` CSV per figure plus `summary.txt`, a table of
//! simulated operation counts. Every on-chain operation is confirmed in the
//! block that includes it, so its simulated time is one blocktime.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::amount::Amount;
use crate::contract::EventKind;
use crate::sim::metrics::{ACCURACY_CSV, AGENTS_CSV, BALANCES_CSV, EVENTS_CSV, GROWTH_CSV, TRANSACTIONS_CSV};

pub const FIG_BALANCES: &str = "fig_agent_balances.csv";
pub const FIG_GROWTH: &str = "fig_dataset_growth.csv";
pub const FIG_ACCURACY: &str = "fig_accuracy.csv";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("malformed {file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error("report I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(dir: &Path, name: &str, required: bool) -> Result<Option<Table>, ReportError> {
    let path = dir.join(name);
    if !path.is_file() {
        return if required { Err(ReportError::MissingInput(path)) } else { Ok(None) };
    }
    let malformed = |reason: String| ReportError::Malformed { file: name.to_string(), reason };
    let mut reader = csv::Reader::from_path(&path).map_err(|e| malformed(e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| malformed(e.to_string()))?;
    Ok(Some((header, rows)))
}

fn micros(file: &str, text: &str) -> Result<Amount, ReportError> {
    text.parse::<u64>()
        .map(Amount::from_micros)
        .map_err(|_| ReportError::Malformed { file: file.to_string(), reason: format!("bad amount `{text}`") })
}

/// Table-1 style rows: operation, how it is counted, count.
fn operation_rows(
    events: &[Vec<String>],
    transactions: Option<&[Vec<String>]>,
    blocks: u64,
) -> Vec<(&'static str, Option<u64>)> {
    let mut by_event: HashMap<EventKind, u64> = HashMap::new();
    for row in events {
        if let Some(kind) = row.get(2).and_then(|k| EventKind::parse(k)) {
            *by_event.entry(kind).or_default() += 1;
        }
    }
    let ev = |k: EventKind| by_event.get(&k).copied().unwrap_or(0);
    let applied = |kind: &str| {
        transactions.map(|rows| {
            rows.iter().filter(|r| r.get(2).map(String::as_str) == Some(kind) && r.get(5).map(String::as_str) == Some("Applied")).count()
                as u64
        })
    };
    vec![
        ("IPFS Node Creation", None),
        ("Smart Contract Creation", Some(ev(EventKind::Deploy))),
        ("IPFS Hash Upload", Some(applied("AddDatasetHash").unwrap_or(0))),
        ("Consensus & Ledger Update", Some(blocks)),
        ("Data Adding", Some(ev(EventKind::Add))),
        ("Deposit Payment & Update", Some(ev(EventKind::Add) + ev(EventKind::Challenge))),
        ("Model Training With Single Input", Some(applied("AddData").unwrap_or_else(|| ev(EventKind::Add)))),
        ("Model Training With Multiple Input", Some(ev(EventKind::Accept))),
        ("Smart Contract Update", Some(ev(EventKind::Update))),
        ("Reward Payment", Some(ev(EventKind::Accept))),
        ("Refund Payment", Some(ev(EventKind::Refund))),
        ("Model Download", None),
        ("Dataset Download", None),
    ]
}

/// Builds the report from `metrics_dir` into `out_dir`; returns the files written.
pub fn build_report(metrics_dir: &Path, out_dir: &Path, blocktime: u64) -> Result<Vec<PathBuf>, ReportError> {
    let (bal_header, bal_rows) = read_table(metrics_dir, BALANCES_CSV, true)?.expect("required");
    let (_, growth_rows) = read_table(metrics_dir, GROWTH_CSV, true)?.expect("required");
    let (_, acc_rows) = read_table(metrics_dir, ACCURACY_CSV, true)?.expect("required");
    let (_, event_rows) = read_table(metrics_dir, EVENTS_CSV, true)?.expect("required");
    let tx_rows = read_table(metrics_dir, TRANSACTIONS_CSV, false)?.map(|(_, r)| r);
    let names: HashMap<String, (String, String)> = read_table(metrics_dir, AGENTS_CSV, false)?
        .map(|(_, rows)| {
            rows.into_iter()
                .filter(|r| r.len() == 3)
                .map(|r| (r[0].clone(), (r[1].clone(), r[2].clone())))
                .collect()
        })
        .unwrap_or_default();

    fs::create_dir_all(out_dir)?;

    let mut balances = String::from("height,series,value\n");
    for row in &bal_rows {
        for (col, value) in bal_header.iter().zip(row).skip(1) {
            let series = names.get(col).map_or(col.as_str(), |(name, _)| name.as_str());
            let _ = writeln!(balances, "{},{},{}", row[0], series, micros(BALANCES_CSV, value)?);
        }
    }
    let mut growth = String::from("height,series,value\n");
    for row in &growth_rows {
        let _ = writeln!(growth, "{},dataset_size,{}", row[0], row.get(1).map_or("", String::as_str));
    }
    let mut accuracy = String::from("height,series,value\n");
    for row in &acc_rows {
        let _ = writeln!(accuracy, "{},accuracy,{}", row[0], row.get(1).map_or("", String::as_str));
    }

    let blocks = growth_rows.len() as u64;
    let mut summary = String::from("operation                            simulated_count  simulated_time_s\n");
    for (op, count) in operation_rows(&event_rows, tx_rows.as_deref(), blocks) {
        match count {
            Some(n) => {
                let _ = writeln!(summary, "{op:<36} {n:>15}  {:>16}", n * blocktime);
            }
            None => {
                let _ = writeln!(summary, "{op:<36} {:>15}  {:>16}", "-", "off-chain");
            }
        }
    }
    let first = |rows: &[Vec<String>]| rows.first().and_then(|r| r.get(1)).cloned().unwrap_or_default();
    let last = |rows: &[Vec<String>]| rows.last().and_then(|r| r.get(1)).cloned().unwrap_or_default();
    let _ = writeln!(summary, "\nblocks: {blocks} (blocktime {blocktime} s)");
    let _ = writeln!(summary, "dataset size: {} -> {}", first(&growth_rows), last(&growth_rows));
    let _ = writeln!(summary, "accuracy: {} -> {}", first(&acc_rows), last(&acc_rows));
    if let (Some(first_row), Some(last_row)) = (bal_rows.first(), bal_rows.last()) {
        for (i, col) in bal_header.iter().enumerate().skip(1) {
            if let Some((name, role)) = names.get(col) {
                let _ = writeln!(
                    summary,
                    "balance {name} ({role}): {} -> {}",
                    micros(BALANCES_CSV, &first_row[i])?,
                    micros(BALANCES_CSV, &last_row[i])?
                );
            }
        }
    }

    let outputs = [(FIG_BALANCES, balances), (FIG_GROWTH, growth), (FIG_ACCURACY, accuracy), (SUMMARY, summary)];
    let mut written = Vec::new();
    for (name, body) in outputs {
        let path = out_dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
