//! On-disk workspace for step-by-step contract operation.
//!
//! Layout:
//!
//! ```text
//! <root>/ledger.log       JSON lines: genesis record, then one sealed block per line
//! <root>/blobs/           content-addressed blob store (one file per hex digest)
//! <root>/contracts/       canonical contract encodings, refreshed after every command
//! <root>/workspace.lock   held while a process has the workspace open
//! ```
//!
//! Opening a workspace replays `ledger.log` from genesis, so a reload
//! reproduces the saved state digest or fails with a corruption error.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::cas::{BlobStore, CasError, DirStore};
use crate::contract::ContractEvent;
use crate::ledger::{Address, Block, Genesis, Ledger, LedgerError, Transaction, TxPayload, TxReceipt, TxStatus};

pub const LEDGER_LOG: &str = "ledger.log";
pub const BLOBS_DIR: &str = "blobs";
pub const CONTRACTS_DIR: &str = "contracts";
pub const LOCK_FILE: &str = "workspace.lock";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Cas(#[from] CasError),
    #[error("no workspace at {0} (create one with `contract deploy --init`)")]
    Missing(PathBuf),
    #[error("workspace already exists at {0}")]
    Exists(PathBuf),
    #[error("workspace {0} is locked by another process")]
    Locked(PathBuf),
    #[error("corrupt ledger log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("{name}")]
    Rejected { name: String },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LogRecord {
    Genesis(Genesis),
    Block(Block),
}

#[derive(Debug)]
struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self, WorkspaceError> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(WorkspaceError::Locked(root.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// A successfully applied command: its receipt and the contract events it emitted.
#[derive(Clone, Debug)]
pub struct Applied {
    pub receipt: TxReceipt,
    pub events: Vec<ContractEvent>,
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    ledger: Ledger,
    store: Arc<DirStore>,
    _lock: LockGuard,
}

impl Workspace {
    pub fn init(root: impl AsRef<Path>, genesis: Genesis) -> Result<Self, WorkspaceError> {
        let root = root.as_ref().to_path_buf();
        if root.join(LEDGER_LOG).exists() {
            return Err(WorkspaceError::Exists(root));
        }
        fs::create_dir_all(&root)?;
        let lock = LockGuard::acquire(&root)?;
        let store = Arc::new(DirStore::open(root.join(BLOBS_DIR))?);
        let ledger = Ledger::genesis(genesis)?.with_store(store.clone() as Arc<dyn BlobStore>);
        let ws = Workspace { root, ledger, store, _lock: lock };
        ws.save()?;
        Ok(ws)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, WorkspaceError> {
        let root = root.as_ref().to_path_buf();
        let log_path = root.join(LEDGER_LOG);
        if !log_path.is_file() {
            return Err(WorkspaceError::Missing(root));
        }
        let lock = LockGuard::acquire(&root)?;
        let reader = BufReader::new(fs::File::open(&log_path)?);
        let mut genesis = None;
        let mut blocks = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let corrupt = |reason: String| WorkspaceError::Corrupt { line: idx + 1, reason };
            match serde_json::from_str::<LogRecord>(&line).map_err(|e| corrupt(e.to_string()))? {
                LogRecord::Genesis(g) if idx == 0 => genesis = Some(g),
                LogRecord::Genesis(_) => return Err(corrupt("genesis record after line 1".into())),
                LogRecord::Block(_) if genesis.is_none() => return Err(corrupt("block before genesis".into())),
                LogRecord::Block(b) => blocks.push(b),
            }
        }
        let genesis = genesis.ok_or(WorkspaceError::Corrupt { line: 1, reason: "missing genesis".into() })?;
        let store = Arc::new(DirStore::open(root.join(BLOBS_DIR))?);
        let mut ledger = Ledger::genesis(genesis)?.with_store(store.clone() as Arc<dyn BlobStore>);
        for block in blocks.iter().skip_while(|b| b.height == 0) {
            ledger.apply_block(block)?;
        }
        Ok(Workspace { root, ledger, store, _lock: lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn store(&self) -> &DirStore {
        &self.store
    }

    /// Executes one transaction from `sender` in a fresh block. A rejected
    /// transaction leaves the workspace untouched and returns its reason.
    pub fn transact(&mut self, sender: Address, value: Amount, payload: TxPayload) -> Result<Applied, WorkspaceError> {
        let mut trial = self.ledger.clone();
        let nonce = trial.next_nonce(&sender)?;
        let events_before = trial.events().len();
        let receipt = trial.execute(Transaction { sender, nonce, value, payload })?;
        if let TxStatus::Rejected(name) = &receipt.status {
            return Err(WorkspaceError::Rejected { name: name.clone() });
        }
        let events = trial.events()[events_before..].to_vec();
        self.ledger = trial;
        self.save()?;
        Ok(Applied { receipt, events })
    }

    /// Seals `blocks` empty blocks, letting simulated time pass.
    pub fn advance(&mut self, blocks: u64) -> Result<u64, WorkspaceError> {
        for _ in 0..blocks {
            self.ledger.seal_block();
        }
        self.save()?;
        Ok(self.ledger.height())
    }

    fn save(&self) -> Result<(), WorkspaceError> {
        let mut body = serde_json::to_string(&LogRecord::Genesis(self.ledger.genesis_config().clone()))
            .expect("genesis serializes");
        body.push('\n');
        for block in self.ledger.blocks() {
            body.push_str(&serde_json::to_string(&LogRecord::Block(block.clone())).expect("blocks serialize"));
            body.push('\n');
        }
        write_atomic(&self.root.join(LEDGER_LOG), body.as_bytes())?;

        let contracts_dir = self.root.join(CONTRACTS_DIR);
        fs::create_dir_all(&contracts_dir)?;
        for c in self.ledger.state().contracts() {
            let mut text = c.encode();
            text.push_str("model_state\n");
            text.push_str(&String::from_utf8_lossy(&c.model_bytes()));
            write_atomic(&contracts_dir.join(format!("{}.txt", c.address)), text.as_bytes())?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
