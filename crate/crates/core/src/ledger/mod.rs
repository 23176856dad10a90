//! Deterministic single-writer ledger: accounts, ordered transactions,
//! sealed blocks, and replay.
//!
//! Transactions are queued with [`Ledger::submit`] and executed in
//! submission order by [`Ledger::seal_block`]. There are no fees and no
//! minting, so balances plus contract escrow plus reward pools always equal
//! the genesis supply. Writers must be serialized (wrap the ledger in a
//! `Mutex` to share it); sealed state can be read concurrently.

mod state;
mod types;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::cas::{BlobStore, ContentHash};
use crate::contract::{ContractEvent, ModelContract};
use crate::dataset;

pub use state::{Accounts, Rejection, WorldState};
pub use types::{
    Account, Address, Block, DeploySpec, Transaction, TxKind, TxPayload, TxReceipt, TxStatus, TX_LOG_HEADER,
};

/// Default simulated seconds per block.
pub const DEFAULT_BLOCKTIME: u64 = 15;

/// Initial accounts and chain constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genesis {
    pub accounts: Vec<(Address, Amount)>,
    pub blocktime: u64,
}

impl Genesis {
    pub fn new(accounts: Vec<(Address, Amount)>) -> Self {
        Genesis { accounts, blocktime: DEFAULT_BLOCKTIME }
    }

    pub fn with_blocktime(mut self, blocktime: u64) -> Self {
        self.blocktime = blocktime;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("duplicate genesis address {0}")]
    DuplicateAddress(Address),
    #[error("genesis supply overflows")]
    SupplyOverflow,
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("bad nonce: expected {expected}, found {found}")]
    BadNonce { expected: u64, found: u64 },
    #[error("unknown address {0}")]
    UnknownAddress(Address),
    #[error("unknown contract {0}")]
    UnknownContract(Address),
    #[error("declared count {declared} does not match the {actual} samples in blob {hash}")]
    DeclaredCountMismatch { hash: ContentHash, declared: u64, actual: u64 },
    #[error("chain gap: expected height {expected}, found {found}")]
    ChainGap { expected: u64, found: u64 },
    #[error("block {height}: {what} mismatch")]
    Corrupted { height: u64, what: &'static str },
}

#[derive(Clone, Debug)]
pub struct Ledger {
    genesis: Genesis,
    state: WorldState,
    total_supply: Amount,
    blocks: Vec<Block>,
    queue: Vec<Transaction>,
    receipts: Vec<TxReceipt>,
    events: Vec<ContractEvent>,
    store: Option<Arc<dyn BlobStore>>,
}

impl Ledger {
    pub fn genesis(genesis: Genesis) -> Result<Self, LedgerError> {
        let mut accounts = Accounts::default();
        let mut seen = HashSet::new();
        let mut supply = Amount::ZERO;
        for (addr, balance) in &genesis.accounts {
            if !seen.insert(*addr) {
                return Err(LedgerError::DuplicateAddress(*addr));
            }
            supply = supply.checked_add(*balance).ok_or(LedgerError::SupplyOverflow)?;
            accounts.insert(*addr, *balance);
        }
        let state = WorldState { accounts, ..WorldState::default() };
        let block0 = Block {
            height: 0,
            timestamp: 0,
            parent_digest: ContentHash::ZERO,
            state_digest: state.digest(),
            transactions: Vec::new(),
            statuses: Vec::new(),
        };
        Ok(Ledger {
            genesis,
            state,
            total_supply: supply,
            blocks: vec![block0],
            queue: Vec::new(),
            receipts: Vec::new(),
            events: Vec::new(),
            store: None,
        })
    }

    /// Attaches a blob store used at intake to check dataset-hash counts.
    pub fn with_store(mut self, store: Arc<dyn BlobStore>) -> Self {
        self.store = Some(store);
        self
    }

    pub fn genesis_config(&self) -> &Genesis {
        &self.genesis
    }

    pub fn blocktime(&self) -> u64 {
        self.genesis.blocktime
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis block always present")
    }

    /// All blocks, genesis first.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn state_digest(&self) -> ContentHash {
        self.tip().state_digest
    }

    pub fn total_supply(&self) -> Amount {
        self.total_supply
    }

    pub fn receipts(&self) -> &[TxReceipt] {
        &self.receipts
    }

    pub fn events(&self) -> &[ContractEvent] {
        &self.events
    }

    pub fn balance_of(&self, addr: &Address) -> Result<Amount, LedgerError> {
        self.state.accounts.get(addr).map(|a| a.balance).ok_or(LedgerError::UnknownAddress(*addr))
    }

    pub fn account(&self, addr: &Address) -> Result<&Account, LedgerError> {
        self.state.accounts.get(addr).ok_or(LedgerError::UnknownAddress(*addr))
    }

    pub fn contract(&self, addr: &Address) -> Result<&ModelContract, LedgerError> {
        self.state.contract(addr).ok_or(LedgerError::UnknownContract(*addr))
    }

    /// Ancestors of `addr`, nearest predecessor first.
    pub fn lineage(&self, addr: &Address) -> Result<Vec<Address>, LedgerError> {
        let mut out = Vec::new();
        let mut cur = self.contract(addr)?;
        while let Some(prev) = cur.predecessor {
            out.push(prev);
            cur = self.contract(&prev)?;
        }
        Ok(out)
    }

    /// Nonce the next queued transaction from `addr` must carry.
    pub fn next_nonce(&self, addr: &Address) -> Result<u64, LedgerError> {
        let base = self.account(addr)?.nonce;
        Ok(base + self.queue.iter().filter(|t| t.sender == *addr).count() as u64)
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.queue
    }

    /// Queues `tx` for the next block. Returns its index within that block.
    ///
    /// Unknown senders and out-of-sequence nonces are refused here; balance
    /// and contract checks happen at execution and surface as a `Rejected`
    /// receipt status.
    pub fn submit(&mut self, mut tx: Transaction) -> Result<usize, LedgerError> {
        if !self.state.accounts.contains(&tx.sender) {
            return Err(LedgerError::UnknownSender(tx.sender));
        }
        let expected = self.next_nonce(&tx.sender)?;
        if tx.nonce != expected {
            return Err(LedgerError::BadNonce { expected, found: tx.nonce });
        }
        if let TxPayload::AddDatasetHash { hash, declared_count, count_verified, .. } = &mut tx.payload {
            *count_verified = false;
            if let Some(payload) = self.store.as_ref().and_then(|s| s.get(hash).ok()) {
                let actual = dataset::decode::<f64>(&payload, None).map(|d| d.len() as u64).unwrap_or(0);
                if actual != *declared_count {
                    return Err(LedgerError::DeclaredCountMismatch { hash: *hash, declared: *declared_count, actual });
                }
                *count_verified = true;
            }
        }
        self.queue.push(tx);
        Ok(self.queue.len() - 1)
    }

    /// Executes queued transactions in order and appends a block.
    pub fn seal_block(&mut self) -> &Block {
        let height = self.height() + 1;
        let txs = std::mem::take(&mut self.queue);
        let mut statuses = Vec::with_capacity(txs.len());
        for (index, tx) in txs.iter().enumerate() {
            let status = match self.state.execute(tx, height) {
                Ok(events) => {
                    self.events.extend(events);
                    TxStatus::Applied
                }
                Err(rejection) => TxStatus::Rejected(rejection.name().to_string()),
            };
            debug_assert_eq!(self.state.accounted_supply(), self.total_supply);
            self.receipts.push(TxReceipt {
                height,
                tx_index: index,
                kind: tx.kind(),
                sender: tx.sender,
                value: tx.value,
                status: status.clone(),
            });
            statuses.push(status);
        }
        let block = Block {
            height,
            timestamp: height * self.genesis.blocktime,
            parent_digest: self.tip().digest(),
            state_digest: self.state.digest(),
            transactions: txs,
            statuses,
        };
        self.blocks.push(block);
        self.tip()
    }

    /// Submits `tx`, seals a block, and returns the transaction's receipt.
    pub fn execute(&mut self, tx: Transaction) -> Result<TxReceipt, LedgerError> {
        let index = self.submit(tx)?;
        let height = self.seal_block().height;
        Ok(self
            .receipts
            .iter()
            .rev()
            .find(|r| r.height == height && r.tx_index == index)
            .cloned()
            .expect("receipt recorded for every sealed transaction"))
    }

    /// Rebuilds a ledger from genesis by re-executing `blocks`, checking
    /// heights, parent links, statuses and state digests along the way. A
    /// leading height-0 block is compared against the rebuilt genesis block.
    pub fn replay(genesis: Genesis, blocks: &[Block]) -> Result<Ledger, LedgerError> {
        let mut ledger = Ledger::genesis(genesis)?;
        let mut rest = blocks;
        if let Some(first) = blocks.first().filter(|b| b.height == 0) {
            if first != ledger.tip() {
                return Err(LedgerError::Corrupted { height: 0, what: "genesis block" });
            }
            rest = &blocks[1..];
        }
        for block in rest {
            ledger.apply_block(block)?;
        }
        Ok(ledger)
    }

    /// Re-executes one recorded block on top of the current tip.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), LedgerError> {
        let expected = self.height() + 1;
        if block.height != expected {
            return Err(LedgerError::ChainGap { expected, found: block.height });
        }
        if block.parent_digest != self.tip().digest() {
            return Err(LedgerError::Corrupted { height: block.height, what: "parent digest" });
        }
        if block.timestamp != block.height * self.genesis.blocktime {
            return Err(LedgerError::Corrupted { height: block.height, what: "timestamp" });
        }
        if !self.queue.is_empty() {
            return Err(LedgerError::Corrupted { height: block.height, what: "pending queue" });
        }
        self.queue = block.transactions.clone();
        let sealed = self.seal_block().clone();
        if sealed.statuses != block.statuses {
            return Err(LedgerError::Corrupted { height: block.height, what: "transaction status" });
        }
        if sealed.state_digest != block.state_digest {
            return Err(LedgerError::Corrupted { height: block.height, what: "state digest" });
        }
        Ok(())
    }

    /// Line-delimited `height,tx_index,kind,sender,value,status` export.
    pub fn export_tx_log(&self) -> String {
        let mut out = String::from(TX_LOG_HEADER);
        out.push('\n');
        for r in &self.receipts {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}
