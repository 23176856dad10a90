//! Marketplace contract: a hosted model, an append-only contribution log
//! with deposit escrow, challenges with owner adjudication, timeout refunds,
//! hidden-test-set evaluation and successor lineage.
//!
//! Contribution status machine:
//!
//! ```text
//! Pending --verify--> Challenged --adjudicate(accept)--> Forfeited
//!    |                    |
//!    |                    +--adjudicate(reject)--> Pending (challenge closes as CorrectionRejected)
//!    +--claim_refund (height >= submitted_at + timeout)--> Refunded
//! ```
//!
//! `Refunded` and `Forfeited` are terminal. Every mutation validates fully
//! before touching balances, so a failed operation changes nothing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::cas::{digest, ContentHash};
use crate::dataset::{self, ClassId, Sample};
use crate::ledger::{Accounts, Address, DeploySpec};
use crate::models::{self, ModelError, OnlineModel, BINARY_CLASSES};
use crate::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncentiveParams {
    pub deposit: Amount,
    pub reward: Amount,
    /// Blocks a contribution stays open to challenges before its deposit can
    /// be reclaimed.
    pub timeout: u64,
}

impl IncentiveParams {
    pub fn validate(&self) -> Result<(), ContractError> {
        if self.deposit.is_zero() {
            return Err(ContractError::InvalidParams("deposit must be positive".into()));
        }
        if self.timeout == 0 {
            return Err(ContractError::InvalidParams("timeout must be at least one block".into()));
        }
        if self.reward > self.deposit {
            return Err(ContractError::InvalidParams("reward must not exceed deposit".into()));
        }
        Ok(())
    }
}

impl Default for IncentiveParams {
    fn default() -> Self {
        IncentiveParams { deposit: Amount::coins(1), reward: Amount::from_micros(500_000), timeout: 10 }
    }
}

/// Submitted data: a single training sample, or a reference to a dataset blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum DataRef {
    InlineSample { features: Vec<f64>, label: ClassId },
    DatasetHash { hash: ContentHash, declared_count: u64 },
}

impl DataRef {
    pub fn inline(sample: Sample<f64>) -> Self {
        DataRef::InlineSample { features: sample.features, label: sample.label }
    }

    pub fn as_sample(&self) -> Option<Sample<f64>> {
        match self {
            DataRef::InlineSample { features, label } => Some(Sample::new(features.clone(), *label)),
            DataRef::DatasetHash { .. } => None,
        }
    }

    /// Samples this reference adds to the effective dataset.
    pub fn count(&self) -> u64 {
        match self {
            DataRef::InlineSample { .. } => 1,
            DataRef::DatasetHash { declared_count, .. } => *declared_count,
        }
    }

    fn same_variant(&self, other: &DataRef) -> bool {
        matches!(
            (self, other),
            (DataRef::InlineSample { .. }, DataRef::InlineSample { .. })
                | (DataRef::DatasetHash { .. }, DataRef::DatasetHash { .. })
        )
    }

    /// Equality on bit patterns, so `0.0` and `-0.0` differ.
    fn bit_eq(&self, other: &DataRef) -> bool {
        match (self, other) {
            (
                DataRef::InlineSample { features: a, label: la },
                DataRef::InlineSample { features: b, label: lb },
            ) => la == lb && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (
                DataRef::DatasetHash { hash: a, declared_count: ca },
                DataRef::DatasetHash { hash: b, declared_count: cb },
            ) => a == b && ca == cb,
            _ => false,
        }
    }

    fn encode(&self) -> String {
        match self {
            DataRef::InlineSample { features, label } => {
                let mut line = String::new();
                Sample::new(features.clone(), *label).encode_line(&mut line);
                format!("inline {}", line.trim_end())
            }
            DataRef::DatasetHash { hash, declared_count } => format!("hash {hash} {declared_count}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContributionStatus {
    Pending,
    Challenged { challenge_id: u64, verifier: Address, correction: DataRef, verifier_deposit: Amount },
    Refunded,
    Forfeited { to: Address, correction: DataRef },
}

impl ContributionStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ContributionStatus::Refunded | ContributionStatus::Forfeited { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ContributionStatus::Pending => "Pending",
            ContributionStatus::Challenged { .. } => "Challenged",
            ContributionStatus::Refunded => "Refunded",
            ContributionStatus::Forfeited { .. } => "Forfeited",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContributionRecord {
    pub id: u64,
    pub contributor: Address,
    pub data: DataRef,
    pub deposit_held: Amount,
    pub status: ContributionStatus,
    pub submitted_at: u64,
    /// For dataset hashes: whether the declared count was checked against
    /// the decoded blob at intake. Always true for inline samples.
    pub count_verified: bool,
}

impl ContributionRecord {
    /// The data currently standing for this contribution in the training log.
    pub fn effective_data(&self) -> &DataRef {
        match &self.status {
            ContributionStatus::Forfeited { correction, .. } => correction,
            _ => &self.data,
        }
    }

    /// Escrowed currency attributable to this record.
    pub fn escrow(&self) -> Amount {
        match &self.status {
            ContributionStatus::Challenged { verifier_deposit, .. } => self.deposit_held + *verifier_deposit,
            _ => self.deposit_held,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChallengeOutcome {
    Open,
    Accepted,
    CorrectionRejected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Challenge {
    pub id: u64,
    pub contribution_id: u64,
    pub verifier: Address,
    pub correction: DataRef,
    pub deposit: Amount,
    pub opened_at: u64,
    pub outcome: ChallengeOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Deploy,
    Add,
    Challenge,
    Accept,
    Reject,
    Refund,
    Update,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Deploy => "DEPLOY",
            EventKind::Add => "ADD",
            EventKind::Challenge => "CHALLENGE",
            EventKind::Accept => "ACCEPT",
            EventKind::Reject => "REJECT",
            EventKind::Refund => "REFUND",
            EventKind::Update => "UPDATE",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "DEPLOY" => EventKind::Deploy,
            "ADD" => EventKind::Add,
            "CHALLENGE" => EventKind::Challenge,
            "ACCEPT" => EventKind::Accept,
            "REJECT" => EventKind::Reject,
            "REFUND" => EventKind::Refund,
            "UPDATE" => EventKind::Update,
            _ => return None,
        })
    }
}

/// One row of the contract event export.
///
/// `amount` is the currency moved by the event: pool funding for
/// DEPLOY/UPDATE, the deposit escrowed for ADD/CHALLENGE, the total paid to
/// the verifier for ACCEPT, the verifier deposit moved into the pool for
/// REJECT, and the deposit returned for REFUND.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractEvent {
    pub height: u64,
    pub contract: Address,
    pub kind: EventKind,
    pub contribution_id: Option<u64>,
    pub amount: Amount,
}

pub const EVENT_HEADER: &str = "height,contract,event,contribution_id,amount";

impl ContractEvent {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.height,
            self.contract,
            self.kind.name(),
            self.contribution_id.map(|id| id.to_string()).unwrap_or_default(),
            self.amount.micros()
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("insufficient funds: need {need}, have {have}")]
    InsufficientFunds { need: Amount, have: Amount },
    #[error("invalid incentive parameters: {0}")]
    InvalidParams(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("attached value {found} does not match the required {expected}")]
    WrongValue { expected: Amount, found: Amount },
    #[error("unknown contract {0}")]
    UnknownContract(Address),
    #[error("unknown predecessor contract {0}")]
    UnknownPredecessor(Address),
    #[error("unknown contribution {0}")]
    UnknownContribution(u64),
    #[error("contribution {0} already has an open challenge")]
    AlreadyChallenged(u64),
    #[error("contribution {id} is {status}")]
    WrongStatus { id: u64, status: &'static str },
    #[error("challenge window for contribution {0} has closed")]
    TimeoutElapsed(u64),
    #[error("correction is identical to the original data")]
    IdenticalCorrection,
    #[error("a contributor cannot challenge their own contribution")]
    SelfChallenge,
    #[error("only the contract owner may adjudicate")]
    NotOwner,
    #[error("refund available at height {available_at}, current height {height}")]
    TooEarly { available_at: u64, height: u64 },
    #[error("only the original contributor may claim the refund")]
    WrongClaimant,
    #[error("test payload digest {found} does not match committed digest {expected}")]
    DigestMismatch { expected: ContentHash, found: ContentHash },
    #[error("test payload could not be decoded: {0}")]
    Decode(String),
    #[error("declared count {declared} does not match the {actual} samples in the blob")]
    DeclaredCountMismatch { declared: u64, actual: u64 },
}

impl ContractError {
    /// Stable variant name, used in receipts and CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            ContractError::InsufficientFunds { .. } => "InsufficientFunds",
            ContractError::InvalidParams(_) => "InvalidParams",
            ContractError::MalformedModel(_) => "MalformedModel",
            ContractError::Schema(_) => "SchemaMismatch",
            ContractError::WrongValue { .. } => "WrongValue",
            ContractError::UnknownContract(_) => "UnknownContract",
            ContractError::UnknownPredecessor(_) => "UnknownPredecessor",
            ContractError::UnknownContribution(_) => "UnknownContribution",
            ContractError::AlreadyChallenged(_) => "AlreadyChallenged",
            ContractError::WrongStatus { .. } => "WrongStatus",
            ContractError::TimeoutElapsed(_) => "TimeoutElapsed",
            ContractError::IdenticalCorrection => "IdenticalCorrection",
            ContractError::SelfChallenge => "SelfChallenge",
            ContractError::NotOwner => "NotOwner",
            ContractError::TooEarly { .. } => "TooEarly",
            ContractError::WrongClaimant => "WrongClaimant",
            ContractError::DigestMismatch { .. } => "DigestMismatch",
            ContractError::Decode(_) => "DecodeError",
            ContractError::DeclaredCountMismatch { .. } => "DeclaredCountMismatch",
        }
    }
}

/// Current effective training set of a contract plus its growth history.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSnapshot {
    pub initial_data_hash: ContentHash,
    pub initial_count: u64,
    /// Effective inline samples in contribution order.
    pub inline: Vec<Sample<f64>>,
    /// Effective dataset-hash references with their declared counts.
    pub hashes: Vec<(ContentHash, u64)>,
    pub size: u64,
    /// `(height, size)` for every height from deployment to the current one.
    pub growth: Vec<(u64, u64)>,
}

impl DatasetSnapshot {
    /// Inline samples in the shared line-delimited dataset encoding.
    pub fn encode_inline(&self) -> String {
        dataset::encode(&self.inline)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelContract {
    pub address: Address,
    pub owner: Address,
    pub predecessor: Option<Address>,
    pub feature_dim: usize,
    pub class_set: Vec<ClassId>,
    pub initial_data_hash: ContentHash,
    pub initial_count: u64,
    pub test_digest: ContentHash,
    pub params: IncentiveParams,
    pub reward_pool: Amount,
    pub deployed_at: u64,
    initial_model: Model,
    model: Model,
    records: Vec<ContributionRecord>,
    challenges: Vec<Challenge>,
    /// `(height, size)` at every height where the dataset size changed.
    size_changes: Vec<(u64, u64)>,
}

/// Result of a settling operation: who received what.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settlement {
    pub contribution_id: u64,
    pub paid: Vec<(Address, Amount)>,
    pub to_pool: Amount,
    pub from_pool: Amount,
}

impl ModelContract {
    /// Validates `spec`, moves `pool_funding` from `owner` into the reward pool
    /// and returns the live contract.
    pub fn deploy(
        accounts: &mut Accounts,
        address: Address,
        owner: Address,
        spec: &DeploySpec,
        pool_funding: Amount,
        predecessor: Option<Address>,
        height: u64,
    ) -> Result<(ModelContract, ContractEvent), ContractError> {
        spec.params.validate()?;
        let model = Model::decode(spec.model.as_bytes()).map_err(|e| ContractError::MalformedModel(e.to_string()))?;
        if spec.feature_dim == 0 || model.dim() != spec.feature_dim {
            return Err(ContractError::MalformedModel(format!(
                "model dimension {} does not match declared feature dimension {}",
                model.dim(),
                spec.feature_dim
            )));
        }
        let mut classes = spec.class_set.clone();
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() || classes.len() != spec.class_set.len() || !classes.iter().all(|c| BINARY_CLASSES.contains(c)) {
            return Err(ContractError::Schema(format!(
                "class set {:?} must be distinct ids drawn from {:?}",
                spec.class_set, BINARY_CLASSES
            )));
        }
        let have = accounts.balance(&owner);
        if have < pool_funding {
            return Err(ContractError::InsufficientFunds { need: pool_funding, have });
        }
        accounts.debit(&owner, pool_funding);
        let contract = ModelContract {
            address,
            owner,
            predecessor,
            feature_dim: spec.feature_dim,
            class_set: classes,
            initial_data_hash: spec.initial_data_hash,
            initial_count: spec.initial_count,
            test_digest: spec.test_digest,
            params: spec.params,
            reward_pool: pool_funding,
            deployed_at: height,
            initial_model: model.clone(),
            model,
            records: Vec::new(),
            challenges: Vec::new(),
            size_changes: vec![(height, spec.initial_count)],
        };
        let kind = if predecessor.is_some() { EventKind::Update } else { EventKind::Deploy };
        let event = ContractEvent { height, contract: address, kind, contribution_id: None, amount: pool_funding };
        Ok((contract, event))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn initial_model(&self) -> &Model {
        &self.initial_model
    }

    pub fn model_bytes(&self) -> Vec<u8> {
        self.model.encode()
    }

    pub fn records(&self) -> &[ContributionRecord] {
        &self.records
    }

    pub fn record(&self, id: u64) -> Result<&ContributionRecord, ContractError> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.records.get(i))
            .ok_or(ContractError::UnknownContribution(id))
    }

    pub fn challenges(&self) -> &[Challenge] {
        &self.challenges
    }

    /// Deposits currently held in escrow.
    pub fn escrow(&self) -> Amount {
        self.records.iter().map(ContributionRecord::escrow).sum()
    }

    pub fn dataset_size(&self) -> u64 {
        self.initial_count + self.records.iter().map(|r| r.effective_data().count()).sum::<u64>()
    }

    fn validate_data(&self, data: &DataRef) -> Result<(), ContractError> {
        match data {
            DataRef::InlineSample { features, label } => {
                if features.len() != self.feature_dim {
                    return Err(ContractError::Schema(format!(
                        "expected {} features, found {}",
                        self.feature_dim,
                        features.len()
                    )));
                }
                if features.iter().any(|v| !v.is_finite()) {
                    return Err(ContractError::Schema("non-finite feature value".into()));
                }
                if !self.class_set.contains(label) {
                    return Err(ContractError::Schema(format!("label {label} outside class set {:?}", self.class_set)));
                }
            }
            DataRef::DatasetHash { declared_count, .. } => {
                if *declared_count == 0 {
                    return Err(ContractError::Schema("declared count must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn require_value(&self, value: Amount) -> Result<(), ContractError> {
        if value != self.params.deposit {
            return Err(ContractError::WrongValue { expected: self.params.deposit, found: value });
        }
        Ok(())
    }

    fn require_funds(accounts: &Accounts, who: &Address, need: Amount) -> Result<(), ContractError> {
        let have = accounts.balance(who);
        if have < need {
            return Err(ContractError::InsufficientFunds { need, have });
        }
        Ok(())
    }

    fn record_size(&mut self, height: u64) {
        let size = self.dataset_size();
        match self.size_changes.last_mut() {
            Some((h, s)) if *h == height => *s = size,
            Some((_, s)) if *s == size => {}
            _ => self.size_changes.push((height, size)),
        }
    }

    /// Escrows the deposit and appends a Pending record. Inline samples train
    /// the model immediately; dataset hashes only count toward growth.
    pub fn add_data(
        &mut self,
        accounts: &mut Accounts,
        contributor: Address,
        data: DataRef,
        count_verified: bool,
        value: Amount,
        height: u64,
    ) -> Result<(u64, ContractEvent), ContractError> {
        self.require_value(value)?;
        self.validate_data(&data)?;
        Self::require_funds(accounts, &contributor, self.params.deposit)?;
        let next_model = match data.as_sample() {
            Some(sample) => Some(self.model.update(&sample).map_err(|e| ContractError::Schema(e.to_string()))?),
            None => None,
        };

        accounts.debit(&contributor, self.params.deposit);
        if let Some(m) = next_model {
            self.model = m;
        }
        let id = self.records.len() as u64;
        let count_verified = count_verified || matches!(data, DataRef::InlineSample { .. });
        self.records.push(ContributionRecord {
            id,
            contributor,
            data,
            deposit_held: self.params.deposit,
            status: ContributionStatus::Pending,
            submitted_at: height,
            count_verified,
        });
        self.record_size(height);
        let event = ContractEvent {
            height,
            contract: self.address,
            kind: EventKind::Add,
            contribution_id: Some(id),
            amount: self.params.deposit,
        };
        Ok((id, event))
    }

    /// Opens a challenge on a Pending contribution, escrowing the verifier's
    /// deposit. Returns the challenge id.
    pub fn verify(
        &mut self,
        accounts: &mut Accounts,
        verifier: Address,
        contribution_id: u64,
        correction: DataRef,
        value: Amount,
        height: u64,
    ) -> Result<(u64, ContractEvent), ContractError> {
        self.require_value(value)?;
        let record = self.record(contribution_id)?;
        match &record.status {
            ContributionStatus::Pending => {}
            ContributionStatus::Challenged { .. } => return Err(ContractError::AlreadyChallenged(contribution_id)),
            other => return Err(ContractError::WrongStatus { id: contribution_id, status: other.name() }),
        }
        if height >= record.submitted_at + self.params.timeout {
            return Err(ContractError::TimeoutElapsed(contribution_id));
        }
        if verifier == record.contributor {
            return Err(ContractError::SelfChallenge);
        }
        if !correction.same_variant(&record.data) {
            return Err(ContractError::Schema("correction must be the same kind of data as the original".into()));
        }
        self.validate_data(&correction)?;
        if correction.bit_eq(&record.data) {
            return Err(ContractError::IdenticalCorrection);
        }
        Self::require_funds(accounts, &verifier, self.params.deposit)?;

        accounts.debit(&verifier, self.params.deposit);
        let challenge_id = self.challenges.len() as u64;
        self.challenges.push(Challenge {
            id: challenge_id,
            contribution_id,
            verifier,
            correction: correction.clone(),
            deposit: self.params.deposit,
            opened_at: height,
            outcome: ChallengeOutcome::Open,
        });
        self.records[contribution_id as usize].status = ContributionStatus::Challenged {
            challenge_id,
            verifier,
            correction,
            verifier_deposit: self.params.deposit,
        };
        let event = ContractEvent {
            height,
            contract: self.address,
            kind: EventKind::Challenge,
            contribution_id: Some(contribution_id),
            amount: self.params.deposit,
        };
        Ok((challenge_id, event))
    }

    /// Owner decision on an open challenge.
    ///
    /// Accept: the contributor's deposit goes to the verifier, who also gets
    /// their own deposit back plus the reward (capped at the pool balance);
    /// the correction replaces the original and the model is rebuilt by
    /// replay. Reject: the verifier's deposit moves into the reward pool and
    /// the contribution returns to Pending with its original submission
    /// height.
    pub fn adjudicate(
        &mut self,
        accounts: &mut Accounts,
        caller: Address,
        contribution_id: u64,
        accept: bool,
        height: u64,
    ) -> Result<(Settlement, ContractEvent), ContractError> {
        if caller != self.owner {
            return Err(ContractError::NotOwner);
        }
        let record = self.record(contribution_id)?;
        let ContributionStatus::Challenged { challenge_id, verifier, correction, verifier_deposit } = record.status.clone()
        else {
            return Err(ContractError::WrongStatus { id: contribution_id, status: record.status.name() });
        };
        let held = record.deposit_held;

        if accept {
            let reward = self.params.reward.min(self.reward_pool);
            let rebuilt = {
                let mut trial = self.records.clone();
                trial[contribution_id as usize].status =
                    ContributionStatus::Forfeited { to: verifier, correction: correction.clone() };
                replay(&self.initial_model, &trial).map_err(|e| ContractError::Schema(e.to_string()))?
            };
            let payout = verifier_deposit + held + reward;
            accounts.credit(&verifier, payout);
            self.reward_pool = self.reward_pool.saturating_sub(reward);
            let record = &mut self.records[contribution_id as usize];
            record.status = ContributionStatus::Forfeited { to: verifier, correction };
            record.deposit_held = Amount::ZERO;
            self.challenges[challenge_id as usize].outcome = ChallengeOutcome::Accepted;
            self.model = rebuilt;
            self.record_size(height);
            let settlement = Settlement {
                contribution_id,
                paid: vec![(verifier, payout)],
                to_pool: Amount::ZERO,
                from_pool: reward,
            };
            let event = ContractEvent {
                height,
                contract: self.address,
                kind: EventKind::Accept,
                contribution_id: Some(contribution_id),
                amount: payout,
            };
            Ok((settlement, event))
        } else {
            self.reward_pool += verifier_deposit;
            self.records[contribution_id as usize].status = ContributionStatus::Pending;
            self.challenges[challenge_id as usize].outcome = ChallengeOutcome::CorrectionRejected;
            let settlement = Settlement {
                contribution_id,
                paid: Vec::new(),
                to_pool: verifier_deposit,
                from_pool: Amount::ZERO,
            };
            let event = ContractEvent {
                height,
                contract: self.address,
                kind: EventKind::Reject,
                contribution_id: Some(contribution_id),
                amount: verifier_deposit,
            };
            Ok((settlement, event))
        }
    }

    /// Returns the full deposit once `height >= submitted_at + timeout`.
    pub fn claim_refund(
        &mut self,
        accounts: &mut Accounts,
        caller: Address,
        contribution_id: u64,
        height: u64,
    ) -> Result<(Settlement, ContractEvent), ContractError> {
        let record = self.record(contribution_id)?;
        if caller != record.contributor {
            return Err(ContractError::WrongClaimant);
        }
        if record.status != ContributionStatus::Pending {
            return Err(ContractError::WrongStatus { id: contribution_id, status: record.status.name() });
        }
        let available_at = record.submitted_at + self.params.timeout;
        if height < available_at {
            return Err(ContractError::TooEarly { available_at, height });
        }
        let refund = record.deposit_held;
        accounts.credit(&caller, refund);
        let record = &mut self.records[contribution_id as usize];
        record.status = ContributionStatus::Refunded;
        record.deposit_held = Amount::ZERO;
        let settlement =
            Settlement { contribution_id, paid: vec![(caller, refund)], to_pool: Amount::ZERO, from_pool: Amount::ZERO };
        let event = ContractEvent {
            height,
            contract: self.address,
            kind: EventKind::Refund,
            contribution_id: Some(contribution_id),
            amount: refund,
        };
        Ok((settlement, event))
    }

    /// Accuracy of the current model on the revealed hidden test set.
    pub fn evaluate(&self, test_payload: &[u8]) -> Result<f64, ContractError> {
        let found = digest(test_payload);
        if found != self.test_digest {
            return Err(ContractError::DigestMismatch { expected: self.test_digest, found });
        }
        let samples = dataset::decode::<f64>(test_payload, Some(self.feature_dim))
            .map_err(|e| ContractError::Decode(e.to_string()))?;
        if let Some(bad) = samples.iter().find(|s| !self.class_set.contains(&s.label)) {
            return Err(ContractError::Decode(format!("label {} outside class set", bad.label)));
        }
        models::evaluate(&self.model, &samples).map_err(|e| ContractError::Decode(e.to_string()))
    }

    /// Rebuilds the model from the initial state and the effective log.
    pub fn replay_model(&self) -> Result<Model, ModelError> {
        replay(&self.initial_model, &self.records)
    }

    pub fn count_by_status(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for r in &self.records {
            match r.status {
                ContributionStatus::Pending => counts.pending += 1,
                ContributionStatus::Challenged { .. } => counts.challenged += 1,
                ContributionStatus::Refunded => counts.refunded += 1,
                ContributionStatus::Forfeited { .. } => counts.forfeited += 1,
            }
        }
        counts.rejected =
            self.challenges.iter().filter(|c| c.outcome == ChallengeOutcome::CorrectionRejected).count() as u64;
        counts
    }

    pub fn snapshot_dataset(&self, current_height: u64) -> DatasetSnapshot {
        let mut inline = Vec::new();
        let mut hashes = Vec::new();
        for r in &self.records {
            match r.effective_data() {
                DataRef::InlineSample { features, label } => inline.push(Sample::new(features.clone(), *label)),
                DataRef::DatasetHash { hash, declared_count } => hashes.push((*hash, *declared_count)),
            }
        }
        let mut growth = Vec::new();
        let mut changes = self.size_changes.iter().peekable();
        let mut size = self.initial_count;
        for h in self.deployed_at..=current_height.max(self.deployed_at) {
            while let Some(&&(ch, cs)) = changes.peek() {
                if ch > h {
                    break;
                }
                size = cs;
                changes.next();
            }
            growth.push((h, size));
        }
        DatasetSnapshot {
            initial_data_hash: self.initial_data_hash,
            initial_count: self.initial_count,
            inline,
            hashes,
            size: self.dataset_size(),
            growth,
        }
    }

    /// Canonical text encoding used in the ledger state digest.
    pub fn encode(&self) -> String {
        let mut out = String::new();
        let classes: Vec<String> = self.class_set.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "contract {}", self.address);
        let _ = writeln!(out, "owner {}", self.owner);
        let _ = writeln!(out, "predecessor {}", self.predecessor.map(|p| p.to_hex()).unwrap_or_else(|| "-".into()));
        let _ = writeln!(out, "feature_dim {}", self.feature_dim);
        let _ = writeln!(out, "classes {}", classes.join(","));
        let _ = writeln!(out, "initial_data {} {}", self.initial_data_hash, self.initial_count);
        let _ = writeln!(out, "test_digest {}", self.test_digest);
        let _ = writeln!(
            out,
            "params {} {} {}",
            self.params.deposit.micros(),
            self.params.reward.micros(),
            self.params.timeout
        );
        let _ = writeln!(out, "reward_pool {}", self.reward_pool.micros());
        let _ = writeln!(out, "deployed_at {}", self.deployed_at);
        let _ = writeln!(out, "initial_model {}", digest(&self.initial_model.encode()));
        let _ = writeln!(out, "model {}", digest(&self.model.encode()));
        for r in &self.records {
            let status = match &r.status {
                ContributionStatus::Pending => "pending".to_string(),
                ContributionStatus::Challenged { challenge_id, .. } => format!("challenged {challenge_id}"),
                ContributionStatus::Refunded => "refunded".to_string(),
                ContributionStatus::Forfeited { to, .. } => format!("forfeited {to}"),
            };
            let _ = writeln!(
                out,
                "record {} {} {} {} {} {} | {}",
                r.id,
                r.contributor,
                r.submitted_at,
                r.deposit_held.micros(),
                u8::from(r.count_verified),
                status,
                r.data.encode()
            );
        }
        for c in &self.challenges {
            let outcome = match c.outcome {
                ChallengeOutcome::Open => "open",
                ChallengeOutcome::Accepted => "accepted",
                ChallengeOutcome::CorrectionRejected => "rejected",
            };
            let _ = writeln!(
                out,
                "challenge {} {} {} {} {} {} | {}",
                c.id,
                c.contribution_id,
                c.verifier,
                c.deposit.micros(),
                c.opened_at,
                outcome,
                c.correction.encode()
            );
        }
        let changes: Vec<String> = self.size_changes.iter().map(|(h, s)| format!("{h}:{s}")).collect();
        let _ = writeln!(out, "growth {}", changes.join(","));
        out
    }
}

/// Folds `initial` over the effective inline samples of `records` in id order.
pub fn replay(initial: &Model, records: &[ContributionRecord]) -> Result<Model, ModelError> {
    let samples: Vec<Sample<f64>> = records.iter().filter_map(|r| r.effective_data().as_sample()).collect();
    models::fold(initial, &samples)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub pending: u64,
    pub challenged: u64,
    pub refunded: u64,
    pub forfeited: u64,
    /// Challenges closed as CorrectionRejected.
    pub rejected: u64,
}
