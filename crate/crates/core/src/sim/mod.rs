//! Agent-based marketplace scenarios.
//!
//! A run deploys one contract (block 1) and then, for every further block,
//! lets agents act in a fixed phase order before sealing:
//!
//! 1. the owner adjudicates open challenges against ground truth;
//! 2. contributors reclaim deposits whose timeout has passed;
//! 3. verifiers inspect each new pending contribution with probability
//!    `coverage` and challenge mislabeled ones with the true label;
//! 4. contributors submit new samples (malicious ones flip labels).
//!
//! Agents that cannot afford a deposit skip the action. All randomness comes
//! from ChaCha streams seeded by the config, so equal configs give identical
//! ledgers and metrics.

pub mod config;
pub mod data;
pub mod metrics;

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::amount::Amount;
use crate::cas::{digest, BlobStore, MemStore};
use crate::contract::{ContractError, ContributionStatus, DataRef, ModelContract};
use crate::dataset::{self, Sample};
use crate::ledger::{Address, DeploySpec, Genesis, Ledger, LedgerError, Transaction, TxPayload, TxStatus};
use crate::models::{self, AnyModel, ModelError, OnlineModel};
use crate::Model;

pub use config::{AgentSpec, ConfigError, ModelSpec, Role, ScenarioConfig};
pub use data::{generate_data, DataError, DataGenerator, DataSpec, GeneratedData, Labeler};
pub use metrics::{export_metrics, AgentColumn, MetricsRow, MetricsSeries};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("initial model: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("contract deployment rejected: {0}")]
    Deploy(String),
    #[error("hidden test set rejected by contract: {0}")]
    TestSet(#[from] ContractError),
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub ledger: Ledger,
    pub contract: Address,
    pub metrics: MetricsSeries,
    pub store: Arc<MemStore>,
    /// Encoded hidden test set; only its digest is on-chain.
    pub test_payload: Vec<u8>,
    pub labeler: Labeler,
    /// Trained initial model as deployed.
    pub initial_model: Model,
}

impl ScenarioRun {
    pub fn contract(&self) -> &ModelContract {
        self.ledger.contract(&self.contract).expect("deployed in block 1")
    }

    /// Sum of final balances over agents with `role`.
    pub fn final_balance_of_role(&self, role: Role) -> Amount {
        let last = self.metrics.last();
        self.metrics
            .agents
            .iter()
            .zip(&last.balances)
            .filter(|(a, _)| a.role == role)
            .map(|(_, b)| *b)
            .sum()
    }

    /// `final_accuracy=<x> dataset=<initial>-><final> malicious_balance=<b>`
    pub fn summary_line(&self) -> String {
        format!(
            "final_accuracy={:.4} dataset={}->{} malicious_balance={}",
            self.metrics.last().accuracy,
            self.metrics.first().dataset_size,
            self.metrics.last().dataset_size,
            self.final_balance_of_role(Role::MaliciousContributor)
        )
    }
}

struct AgentState {
    spec: AgentSpec,
    credit: f64,
    contributed: u64,
    inspected: HashSet<u64>,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    ledger: Ledger,
    contract: Address,
    agents: Vec<AgentState>,
    labeler: Labeler,
    backlog: VecDeque<Sample<f64>>,
    stream: DataGenerator,
    rng: ChaCha8Rng,
}

impl Runner<'_> {
    fn submit(&mut self, sender: Address, value: Amount, payload: TxPayload) {
        let nonce = self.ledger.next_nonce(&sender).expect("agents exist from genesis");
        self.ledger
            .submit(Transaction { sender, nonce, value, payload })
            .expect("runner builds well-sequenced transactions");
    }

    fn next_sample(&mut self) -> Sample<f64> {
        match self.backlog.pop_front() {
            Some(s) => s,
            None => self.stream.next_sample(&mut self.labeler),
        }
    }

    fn act(&mut self, height: u64) {
        let contract_addr = self.contract;
        let contract = self.ledger.contract(&contract_addr).expect("deployed").clone();
        let params = contract.params;
        let mut spendable: Vec<Amount> = self
            .agents
            .iter()
            .map(|a| self.ledger.balance_of(&a.spec.address).unwrap_or(Amount::ZERO))
            .collect();

        // Owner adjudication.
        let owner = self.cfg.owner().address;
        for r in contract.records() {
            if let ContributionStatus::Challenged { correction, .. } = &r.status {
                let (Some(original), Some(fix)) = (r.data.as_sample(), correction.as_sample()) else { continue };
                let truth = self.labeler.label_of(&original.features);
                let accept = truth == Some(fix.label) && fix.features == original.features;
                self.submit(
                    owner,
                    Amount::ZERO,
                    TxPayload::Adjudicate { contract: contract_addr, contribution_id: r.id, accept },
                );
            }
        }

        // Refund claims.
        for r in contract.records() {
            if r.status == ContributionStatus::Pending && height >= r.submitted_at + params.timeout {
                if let Some(a) = self.agents.iter().find(|a| a.spec.address == r.contributor && a.spec.role.contributes()) {
                    let sender = a.spec.address;
                    self.submit(
                        sender,
                        Amount::ZERO,
                        TxPayload::ClaimRefund { contract: contract_addr, contribution_id: r.id },
                    );
                }
            }
        }

        // Verification.
        let mut challenged_now = HashSet::new();
        for i in 0..self.agents.len() {
            if self.agents[i].spec.role != Role::Verifier {
                continue;
            }
            let me = self.agents[i].spec.address;
            for r in contract.records() {
                if r.status != ContributionStatus::Pending
                    || height >= r.submitted_at + params.timeout
                    || r.contributor == me
                    || !self.agents[i].inspected.insert(r.id)
                {
                    continue;
                }
                let inspect = self.rng.random::<f64>() < self.agents[i].spec.coverage;
                if !inspect || challenged_now.contains(&r.id) {
                    continue;
                }
                let Some(sample) = r.data.as_sample() else { continue };
                let Some(truth) = self.labeler.label_of(&sample.features) else { continue };
                if truth == sample.label || spendable[i] < params.deposit {
                    continue;
                }
                spendable[i] = spendable[i].saturating_sub(params.deposit);
                challenged_now.insert(r.id);
                let correction = DataRef::InlineSample { features: sample.features, label: truth };
                self.submit(
                    me,
                    params.deposit,
                    TxPayload::Verify { contract: contract_addr, contribution_id: r.id, correction },
                );
            }
        }

        // New contributions.
        for i in 0..self.agents.len() {
            let role = self.agents[i].spec.role;
            if !role.contributes() {
                continue;
            }
            self.agents[i].credit += self.agents[i].spec.rate;
            let due = self.agents[i].credit.floor();
            self.agents[i].credit -= due;
            for _ in 0..due as u64 {
                let a = &self.agents[i];
                if a.spec.budget.is_some_and(|b| a.contributed >= b) || spendable[i] < params.deposit {
                    break;
                }
                let mut sample = self.next_sample();
                if role == Role::MaliciousContributor && self.rng.random::<f64>() < self.agents[i].spec.flip_probability {
                    sample.label = 1 - sample.label;
                }
                spendable[i] = spendable[i].saturating_sub(params.deposit);
                self.agents[i].contributed += 1;
                let sender = self.agents[i].spec.address;
                self.submit(
                    sender,
                    params.deposit,
                    TxPayload::AddData { contract: contract_addr, features: sample.features, label: sample.label },
                );
            }
        }
    }

    fn observe(&self, test: &[Sample<f64>]) -> MetricsRow {
        let contract = self.ledger.contract(&self.contract).expect("deployed");
        MetricsRow {
            height: self.ledger.height(),
            balances: self
                .agents
                .iter()
                .map(|a| self.ledger.balance_of(&a.spec.address).unwrap_or(Amount::ZERO))
                .collect(),
            escrow: contract.escrow(),
            reward_pool: contract.reward_pool,
            dataset_size: contract.dataset_size(),
            accuracy: models::evaluate(contract.model(), test).unwrap_or(0.0),
            counts: contract.count_by_status(),
        }
    }
}

/// Runs `config` to completion. See the module docs for the per-block order.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, SimError> {
    config.validate()?;
    let GeneratedData { train, test, labeler, stream } = generate_data::<f64>(&config.data, config.seed)?;
    let initial_n = config.initial_count();
    let (initial, rest) = train.split_at(initial_n);

    let untrained = AnyModel::new(config.model.kind, config.data.dim, config.model.learning_rate)?;
    let initial_model = models::train(&untrained, initial, config.model.initial_epochs)?;

    let store = Arc::new(MemStore::new());
    let initial_data_hash = store.put(dataset::encode(initial).as_bytes()).expect("in-memory put");
    let test_payload = dataset::encode(&test).into_bytes();

    let genesis = Genesis::new(config.agents.iter().map(|a| (a.address, a.balance)).collect())
        .with_blocktime(config.blocktime);
    let mut ledger = Ledger::genesis(genesis)?.with_store(store.clone() as Arc<dyn BlobStore>);

    let owner = config.owner().address;
    let spec = DeploySpec {
        model: String::from_utf8(initial_model.encode()).expect("model encoding is UTF-8"),
        feature_dim: config.data.dim,
        class_set: models::BINARY_CLASSES.to_vec(),
        initial_data_hash,
        initial_count: initial_n as u64,
        test_digest: digest(&test_payload),
        params: config.params,
    };
    let receipt = ledger.execute(Transaction {
        sender: owner,
        nonce: 0,
        value: config.pool_funding,
        payload: TxPayload::DeployContract(spec),
    })?;
    if let TxStatus::Rejected(reason) = receipt.status {
        return Err(SimError::Deploy(reason));
    }
    let contract = Address::for_contract(&owner, 0);
    ledger.contract(&contract)?.evaluate(&test_payload)?;

    let mut runner = Runner {
        cfg: config,
        ledger,
        contract,
        agents: config
            .agents
            .iter()
            .map(|spec| AgentState { spec: spec.clone(), credit: 0.0, contributed: 0, inspected: HashSet::new() })
            .collect(),
        labeler,
        backlog: rest.iter().cloned().collect(),
        stream,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1)),
    };

    let mut rows = vec![runner.observe(&test)];
    for height in 2..=config.blocks {
        runner.act(height);
        runner.ledger.seal_block();
        rows.push(runner.observe(&test));
    }

    let Runner { ledger, labeler, .. } = runner;
    let metrics = MetricsSeries {
        agents: config
            .agents
            .iter()
            .map(|a| AgentColumn { name: a.name.clone(), address: a.address, role: a.role })
            .collect(),
        rows,
        total_supply: ledger.total_supply(),
        events: ledger.events().to_vec(),
        receipts: ledger.receipts().to_vec(),
    };
    Ok(ScenarioRun {
        config: config.clone(),
        ledger,
        contract,
        metrics,
        store,
        test_payload,
        labeler,
        initial_model,
    })
}
