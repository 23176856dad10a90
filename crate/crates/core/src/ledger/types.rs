use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::amount::Amount;
use crate::cas::{digest, ContentHash};
use crate::contract::{DataRef, IncentiveParams};
use crate::dataset::ClassId;

/// Opaque 20-byte account identifier, rendered as 40 lowercase hex chars.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Deterministic address for a human-readable label (agent names, CLI users).
    pub fn from_label(label: &str) -> Self {
        let mut bytes = b"account:".to_vec();
        bytes.extend_from_slice(label.as_bytes());
        Self::truncate(digest(&bytes))
    }

    /// Address of the contract created by `sender`'s transaction with `nonce`.
    pub fn for_contract(sender: &Address, nonce: u64) -> Self {
        let mut bytes = b"contract:".to_vec();
        bytes.extend_from_slice(&sender.0);
        bytes.extend_from_slice(&nonce.to_be_bytes());
        Self::truncate(digest(&bytes))
    }

    fn truncate(hash: ContentHash) -> Self {
        let mut out = [0u8; 20];
        out.copy_from_slice(&hash.0[..20]);
        Address(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 20];
        if s.len() != 40 {
            return Err(format!("invalid address `{s}`: expected 40 hex characters"));
        }
        hex::decode_to_slice(s, &mut out).map_err(|_| format!("invalid address `{s}`"))?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Account {
    pub address: Address,
    pub balance: Amount,
    pub nonce: u64,
}

/// Everything needed to instantiate a marketplace contract. The pool funding
/// is the enclosing transaction's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploySpec {
    /// Canonical model encoding (see `models`).
    pub model: String,
    pub feature_dim: usize,
    pub class_set: Vec<ClassId>,
    pub initial_data_hash: ContentHash,
    pub initial_count: u64,
    pub test_digest: ContentHash,
    pub params: IncentiveParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Transfer,
    DeployContract,
    AddData,
    AddDatasetHash,
    Verify,
    Adjudicate,
    ClaimRefund,
    UpdateModel,
}

impl TxKind {
    pub fn name(self) -> &'static str {
        match self {
            TxKind::Transfer => "Transfer",
            TxKind::DeployContract => "DeployContract",
            TxKind::AddData => "AddData",
            TxKind::AddDatasetHash => "AddDatasetHash",
            TxKind::Verify => "Verify",
            TxKind::Adjudicate => "Adjudicate",
            TxKind::ClaimRefund => "ClaimRefund",
            TxKind::UpdateModel => "UpdateModel",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TxPayload {
    Transfer {
        to: Address,
    },
    DeployContract(DeploySpec),
    AddData {
        contract: Address,
        features: Vec<f64>,
        label: ClassId,
    },
    AddDatasetHash {
        contract: Address,
        hash: ContentHash,
        declared_count: u64,
        /// Set by the ledger at intake: true iff the blob was available
        /// locally and its decoded sample count matched `declared_count`.
        #[serde(default)]
        count_verified: bool,
    },
    Verify {
        contract: Address,
        contribution_id: u64,
        correction: DataRef,
    },
    Adjudicate {
        contract: Address,
        contribution_id: u64,
        accept: bool,
    },
    ClaimRefund {
        contract: Address,
        contribution_id: u64,
    },
    UpdateModel {
        predecessor: Address,
        spec: DeploySpec,
    },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::Transfer { .. } => TxKind::Transfer,
            TxPayload::DeployContract(_) => TxKind::DeployContract,
            TxPayload::AddData { .. } => TxKind::AddData,
            TxPayload::AddDatasetHash { .. } => TxKind::AddDatasetHash,
            TxPayload::Verify { .. } => TxKind::Verify,
            TxPayload::Adjudicate { .. } => TxKind::Adjudicate,
            TxPayload::ClaimRefund { .. } => TxKind::ClaimRefund,
            TxPayload::UpdateModel { .. } => TxKind::UpdateModel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    /// Currency attached: transfer amount, deposit, or pool funding.
    pub value: Amount,
    pub payload: TxPayload,
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    /// Canonical encoding: compact JSON with declaration-ordered fields.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("transactions always serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum TxStatus {
    Applied,
    Rejected(String),
}

impl TxStatus {
    pub fn is_applied(&self) -> bool {
        matches!(self, TxStatus::Applied)
    }

    pub fn render(&self) -> String {
        match self {
            TxStatus::Applied => "Applied".to_string(),
            TxStatus::Rejected(reason) => format!("Rejected:{reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    /// `height * blocktime`, in simulated seconds.
    pub timestamp: u64,
    pub parent_digest: ContentHash,
    pub state_digest: ContentHash,
    pub transactions: Vec<Transaction>,
    pub statuses: Vec<TxStatus>,
}

impl Block {
    /// Canonical block encoding, version 1. See `docs/encoding.md`.
    pub fn encode(&self) -> String {
        let mut out = format!(
            "datamarket-block v1\nheight {}\ntimestamp {}\nparent {}\nstate {}\n",
            self.height, self.timestamp, self.parent_digest, self.state_digest
        );
        for (tx, status) in self.transactions.iter().zip(&self.statuses) {
            out.push_str("tx ");
            out.push_str(&tx.encode());
            out.push_str("\nstatus ");
            out.push_str(&status.render());
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> ContentHash {
        digest(self.encode().as_bytes())
    }
}

/// Outcome of one executed transaction.
#[derive(Clone, Debug, PartialEq)]
pub struct TxReceipt {
    pub height: u64,
    pub tx_index: usize,
    pub kind: TxKind,
    pub sender: Address,
    pub value: Amount,
    pub status: TxStatus,
}

impl TxReceipt {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.height,
            self.tx_index,
            self.kind.name(),
            self.sender,
            self.value.micros(),
            self.status.render()
        )
    }
}

/// Header of the ledger event log export.
pub const TX_LOG_HEADER: &str = "height,tx_index,kind,sender,value,status";
