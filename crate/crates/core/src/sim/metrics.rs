use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::amount::Amount;
use crate::contract::{ContractEvent, StatusCounts, EVENT_HEADER};
use crate::ledger::{Address, TxReceipt, TX_LOG_HEADER};

use super::config::Role;

pub const BALANCES_CSV: &str = "balances.csv";
pub const GROWTH_CSV: &str = "dataset_growth.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const TRANSACTIONS_CSV: &str = "transactions.csv";
pub const AGENTS_CSV: &str = "agents.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct AgentColumn {
    pub name: String,
    pub address: Address,
    pub role: Role,
}

/// State observed right after a block was sealed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub height: u64,
    /// One entry per agent, in [`MetricsSeries::agents`] order.
    pub balances: Vec<Amount>,
    pub escrow: Amount,
    pub reward_pool: Amount,
    pub dataset_size: u64,
    pub accuracy: f64,
    pub counts: StatusCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries {
    pub agents: Vec<AgentColumn>,
    pub rows: Vec<MetricsRow>,
    pub total_supply: Amount,
    pub events: Vec<ContractEvent>,
    pub receipts: Vec<TxReceipt>,
}

impl MetricsSeries {
    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    /// Balance trajectory of one agent.
    pub fn balance_series(&self, agent: usize) -> Vec<Amount> {
        self.rows.iter().map(|r| r.balances[agent]).collect()
    }

    pub fn first(&self) -> &MetricsRow {
        self.rows.first().expect("a run seals at least one block")
    }

    pub fn last(&self) -> &MetricsRow {
        self.rows.last().expect("a run seals at least one block")
    }

    pub fn balances_csv(&self) -> String {
        let mut out = String::from("height");
        for a in &self.agents {
            let _ = write!(out, ",{}", a.address);
        }
        out.push_str(",escrow,reward_pool\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.height);
            for b in &r.balances {
                let _ = write!(out, ",{}", b.micros());
            }
            let _ = writeln!(out, ",{},{}", r.escrow.micros(), r.reward_pool.micros());
        }
        out
    }

    pub fn growth_csv(&self) -> String {
        let mut out = String::from("height,size\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{}", r.height, r.dataset_size);
        }
        out
    }

    pub fn accuracy_csv(&self) -> String {
        let mut out = String::from("height,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{}", r.height, r.accuracy);
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = format!("{EVENT_HEADER}\n");
        for e in &self.events {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn transactions_csv(&self) -> String {
        let mut out = format!("{TX_LOG_HEADER}\n");
        for r in &self.receipts {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn agents_csv(&self) -> String {
        let mut out = String::from("address,name,role\n");
        for a in &self.agents {
            let _ = writeln!(out, "{},{},{}", a.address, a.name, a.role.name());
        }
        out
    }
}

/// Writes the metric CSVs into `dir` (created if missing) and returns the
/// paths written.
///
/// Balances and amounts are integer micro-units; `balances.csv` ends with the
/// contract `escrow` and `reward_pool` columns so each row sums to the total
/// supply.
pub fn export_metrics(series: &MetricsSeries, dir: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = [
        (BALANCES_CSV, series.balances_csv()),
        (GROWTH_CSV, series.growth_csv()),
        (ACCURACY_CSV, series.accuracy_csv()),
        (EVENTS_CSV, series.events_csv()),
        (TRANSACTIONS_CSV, series.transactions_csv()),
        (AGENTS_CSV, series.agents_csv()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
