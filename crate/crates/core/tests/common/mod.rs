#![allow(dead_code)]

pub mod fuzz;
pub mod sha256;
pub mod walkthrough;

use datamarket::contract::DataRef;
use datamarket::dataset::{self, Sample};
use datamarket::ledger::{DeploySpec, Transaction, TxPayload, TxStatus};
use datamarket::models::{AnyModel, ModelKind, OnlineModel};
use datamarket::{digest, Address, Amount, ContentHash, Genesis, IncentiveParams, Ledger, Model, ModelContract};

pub fn addr(name: &str) -> Address {
    Address::from_label(name)
}

/// Coin amount with up to six decimals, e.g. `coins(0.5)`.
pub fn coins(x: f64) -> Amount {
    Amount::from_micros((x * 1e6).round() as u64)
}

pub fn sample(features: &[f64], label: u32) -> Sample<f64> {
    Sample::new(features.to_vec(), label)
}

/// Balanced two-sample test set: any constant predictor scores exactly 0.5.
pub fn balanced_test_payload(dim: usize) -> Vec<u8> {
    let a = Sample::new(vec![1.0; dim], 1);
    let b = Sample::new(vec![-1.0; dim], 0);
    dataset::encode(&[a, b]).into_bytes()
}

pub fn deploy_spec(model: &Model, test_payload: &[u8], params: IncentiveParams, initial_count: u64) -> DeploySpec {
    DeploySpec {
        model: String::from_utf8(model.encode()).unwrap(),
        feature_dim: model.dim(),
        class_set: vec![0, 1],
        initial_data_hash: ContentHash::ZERO,
        initial_count,
        test_digest: digest(test_payload),
        params,
    }
}

/// A ledger with one deployed contract and helpers that run a single
/// transaction per block.
pub struct Market {
    pub ledger: Ledger,
    pub contract: Address,
    pub owner: Address,
}

impl Market {
    pub fn new(accounts: &[(&str, f64)], owner: &str, spec: DeploySpec, pool: Amount) -> Market {
        let genesis = Genesis::new(accounts.iter().map(|(n, c)| (addr(n), coins(*c))).collect());
        let ledger = Ledger::genesis(genesis).unwrap();
        let owner = addr(owner);
        let contract = Address::for_contract(&owner, ledger.next_nonce(&owner).unwrap());
        let mut m = Market { ledger, contract, owner };
        m.send_addr(owner, pool, TxPayload::DeployContract(spec)).expect("deploy");
        m
    }

    /// Default market: perceptron of dimension 2, default incentive params,
    /// pool 5, owner with 100 coins, contributor `carol` and verifier `dave`
    /// with 10 coins each.
    pub fn standard() -> Market {
        let model = AnyModel::new(ModelKind::Perceptron, 2, 1.0).unwrap();
        let spec = deploy_spec(&model, &balanced_test_payload(2), IncentiveParams::default(), 1000);
        Market::new(&[("owner", 100.0), ("carol", 10.0), ("dave", 10.0)], "owner", spec, coins(5.0))
    }

    pub fn send_addr(&mut self, sender: Address, value: Amount, payload: TxPayload) -> Result<(), String> {
        let nonce = self.ledger.next_nonce(&sender).map_err(|e| e.to_string())?;
        let receipt = self.ledger.execute(Transaction { sender, nonce, value, payload }).map_err(|e| e.to_string())?;
        match receipt.status {
            TxStatus::Applied => Ok(()),
            TxStatus::Rejected(name) => Err(name),
        }
    }

    pub fn send(&mut self, who: &str, value: Amount, payload: TxPayload) -> Result<(), String> {
        self.send_addr(addr(who), value, payload)
    }

    pub fn deposit(&self) -> Amount {
        self.c().params.deposit
    }

    pub fn add(&mut self, who: &str, features: &[f64], label: u32) -> Result<(), String> {
        let payload = TxPayload::AddData { contract: self.contract, features: features.to_vec(), label };
        self.send(who, self.deposit(), payload)
    }

    pub fn verify(&mut self, who: &str, id: u64, features: &[f64], label: u32) -> Result<(), String> {
        let correction = DataRef::InlineSample { features: features.to_vec(), label };
        let payload = TxPayload::Verify { contract: self.contract, contribution_id: id, correction };
        self.send(who, self.deposit(), payload)
    }

    pub fn adjudicate(&mut self, who: &str, id: u64, accept: bool) -> Result<(), String> {
        let payload = TxPayload::Adjudicate { contract: self.contract, contribution_id: id, accept };
        self.send(who, Amount::ZERO, payload)
    }

    pub fn refund(&mut self, who: &str, id: u64) -> Result<(), String> {
        let payload = TxPayload::ClaimRefund { contract: self.contract, contribution_id: id };
        self.send(who, Amount::ZERO, payload)
    }

    pub fn advance(&mut self, blocks: u64) {
        for _ in 0..blocks {
            self.ledger.seal_block();
        }
    }

    /// Seals empty blocks until the next transaction executes at `height`.
    pub fn advance_to(&mut self, height: u64) {
        while self.ledger.height() + 1 < height {
            self.ledger.seal_block();
        }
    }

    pub fn balance(&self, who: &str) -> Amount {
        self.ledger.balance_of(&addr(who)).unwrap()
    }

    pub fn c(&self) -> &ModelContract {
        self.ledger.contract(&self.contract).unwrap()
    }

    /// Balances + escrow + pools, recomputed from public accessors.
    pub fn accounted(&self) -> Amount {
        let state = self.ledger.state();
        let balances: Amount = state.accounts().iter().map(|a| a.balance).sum();
        let held: Amount = state.contracts().map(|c| c.escrow() + c.reward_pool).sum();
        balances + held
    }
}
