use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::amount::Amount;
use crate::cas::{digest, ContentHash};
use crate::contract::{ContractError, ContractEvent, DataRef, ModelContract};

use super::types::{Account, Address, Transaction, TxPayload};

/// Account table. Balances are mutated only through `debit`/`credit`, and
/// callers check funds before debiting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Accounts {
    map: BTreeMap<Address, Account>,
}

impl Accounts {
    pub fn get(&self, addr: &Address) -> Option<&Account> {
        self.map.get(addr)
    }

    pub fn contains(&self, addr: &Address) -> bool {
        self.map.contains_key(addr)
    }

    /// Balance of `addr`; unknown accounts hold nothing.
    pub fn balance(&self, addr: &Address) -> Amount {
        self.map.get(addr).map_or(Amount::ZERO, |a| a.balance)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Account> {
        self.map.values()
    }

    pub(crate) fn insert(&mut self, address: Address, balance: Amount) {
        self.map.insert(address, Account { address, balance, nonce: 0 });
    }

    /// Panics on overdraft: callers must check funds first.
    pub(crate) fn debit(&mut self, addr: &Address, amount: Amount) {
        let account = self.map.get_mut(addr).expect("debit from unknown account");
        account.balance = account.balance.checked_sub(amount).expect("debit exceeds balance");
    }

    pub(crate) fn credit(&mut self, addr: &Address, amount: Amount) {
        self.map
            .entry(*addr)
            .or_insert(Account { address: *addr, balance: Amount::ZERO, nonce: 0 })
            .balance += amount;
    }

    fn bump_nonce(&mut self, addr: &Address) {
        if let Some(a) = self.map.get_mut(addr) {
            a.nonce += 1;
        }
    }

    pub fn total(&self) -> Amount {
        self.map.values().map(|a| a.balance).sum()
    }
}

/// Why a transaction was rejected during execution.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    UnknownSender,
    BadNonce { expected: u64, found: u64 },
    InsufficientBalance,
    Contract(ContractError),
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::UnknownSender => "UnknownSender",
            Rejection::BadNonce { .. } => "BadNonce",
            Rejection::InsufficientBalance => "InsufficientBalance",
            Rejection::Contract(e) => e.name(),
        }
    }
}

/// Post-execution world: accounts, contracts and a hash chain over every
/// executed transaction and its outcome.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldState {
    pub(crate) accounts: Accounts,
    pub(crate) contracts: BTreeMap<Address, ModelContract>,
    pub(crate) history: ContentHash,
}

impl WorldState {
    pub fn accounts(&self) -> &Accounts {
        &self.accounts
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ModelContract> {
        self.contracts.values()
    }

    pub fn contract(&self, addr: &Address) -> Option<&ModelContract> {
        self.contracts.get(addr)
    }

    /// Balances + escrow + reward pools. Equals the genesis supply at all times.
    pub fn accounted_supply(&self) -> Amount {
        self.accounts.total() + self.contracts.values().map(|c| c.escrow() + c.reward_pool).sum()
    }

    /// Canonical state encoding, version 1. See `docs/encoding.md`.
    pub fn encode(&self) -> String {
        let mut out = String::from("datamarket-state v1\n");
        let _ = writeln!(out, "history {}", self.history);
        for a in self.accounts.iter() {
            let _ = writeln!(out, "account {} {} {}", a.address, a.balance.micros(), a.nonce);
        }
        for c in self.contracts.values() {
            out.push_str(&c.encode());
        }
        out
    }

    pub fn digest(&self) -> ContentHash {
        digest(self.encode().as_bytes())
    }

    fn chain_history(&mut self, tx: &Transaction, status: &str) {
        let mut bytes = self.history.0.to_vec();
        bytes.extend_from_slice(tx.encode().as_bytes());
        bytes.push(b'\n');
        bytes.extend_from_slice(status.as_bytes());
        self.history = digest(&bytes);
    }

    /// Executes `tx` at `height`. On rejection nothing but the history chain
    /// changes.
    pub(crate) fn execute(&mut self, tx: &Transaction, height: u64) -> Result<Vec<ContractEvent>, Rejection> {
        let result = self.apply(tx, height);
        match &result {
            Ok(_) => {
                self.accounts.bump_nonce(&tx.sender);
                self.chain_history(tx, "Applied");
            }
            Err(r) => self.chain_history(tx, &format!("Rejected:{}", r.name())),
        }
        result
    }

    fn zero_value(tx: &Transaction) -> Result<(), Rejection> {
        if tx.value.is_zero() {
            Ok(())
        } else {
            Err(Rejection::Contract(ContractError::WrongValue { expected: Amount::ZERO, found: tx.value }))
        }
    }

    fn apply(&mut self, tx: &Transaction, height: u64) -> Result<Vec<ContractEvent>, Rejection> {
        let sender = self.accounts.get(&tx.sender).ok_or(Rejection::UnknownSender)?;
        if sender.nonce != tx.nonce {
            return Err(Rejection::BadNonce { expected: sender.nonce, found: tx.nonce });
        }
        if sender.balance < tx.value {
            return Err(Rejection::InsufficientBalance);
        }
        let from = tx.sender;
        let contract_err = Rejection::Contract;
        let event = match &tx.payload {
            TxPayload::Transfer { to } => {
                self.accounts.debit(&from, tx.value);
                self.accounts.credit(to, tx.value);
                return Ok(Vec::new());
            }
            TxPayload::DeployContract(spec) => {
                let address = Address::for_contract(&from, tx.nonce);
                let (contract, event) =
                    ModelContract::deploy(&mut self.accounts, address, from, spec, tx.value, None, height)
                        .map_err(contract_err)?;
                self.contracts.insert(address, contract);
                event
            }
            TxPayload::UpdateModel { predecessor, spec } => {
                if !self.contracts.contains_key(predecessor) {
                    return Err(contract_err(ContractError::UnknownPredecessor(*predecessor)));
                }
                let address = Address::for_contract(&from, tx.nonce);
                let (contract, event) = ModelContract::deploy(
                    &mut self.accounts,
                    address,
                    from,
                    spec,
                    tx.value,
                    Some(*predecessor),
                    height,
                )
                .map_err(contract_err)?;
                self.contracts.insert(address, contract);
                event
            }
            TxPayload::AddData { contract, features, label } => {
                let data = DataRef::InlineSample { features: features.clone(), label: *label };
                let c = self.contracts.get_mut(contract).ok_or(contract_err(ContractError::UnknownContract(*contract)))?;
                c.add_data(&mut self.accounts, from, data, true, tx.value, height).map_err(contract_err)?.1
            }
            TxPayload::AddDatasetHash { contract, hash, declared_count, count_verified } => {
                let data = DataRef::DatasetHash { hash: *hash, declared_count: *declared_count };
                let c = self.contracts.get_mut(contract).ok_or(contract_err(ContractError::UnknownContract(*contract)))?;
                c.add_data(&mut self.accounts, from, data, *count_verified, tx.value, height).map_err(contract_err)?.1
            }
            TxPayload::Verify { contract, contribution_id, correction } => {
                let c = self.contracts.get_mut(contract).ok_or(contract_err(ContractError::UnknownContract(*contract)))?;
                c.verify(&mut self.accounts, from, *contribution_id, correction.clone(), tx.value, height)
                    .map_err(contract_err)?
                    .1
            }
            TxPayload::Adjudicate { contract, contribution_id, accept } => {
                Self::zero_value(tx)?;
                let c = self.contracts.get_mut(contract).ok_or(contract_err(ContractError::UnknownContract(*contract)))?;
                c.adjudicate(&mut self.accounts, from, *contribution_id, *accept, height).map_err(contract_err)?.1
            }
            TxPayload::ClaimRefund { contract, contribution_id } => {
                Self::zero_value(tx)?;
                let c = self.contracts.get_mut(contract).ok_or(contract_err(ContractError::UnknownContract(*contract)))?;
                c.claim_refund(&mut self.accounts, from, *contribution_id, height).map_err(contract_err)?.1
            }
        };
        Ok(vec![event])
    }
}
