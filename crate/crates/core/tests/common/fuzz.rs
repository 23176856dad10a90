//! Randomized contract histories checked against an independent reference
//! model of the escrow rules.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use datamarket::contract::{ContributionStatus, DataRef};
use datamarket::ledger::{Transaction, TxPayload, TxStatus};
use datamarket::models::OnlineModel;
use datamarket::{Address, Amount, Genesis, IncentiveParams, Ledger, Model};

use super::reference::RefLinear;
use super::{addr, deploy_spec};

const DIM: usize = 3;
const AGENTS: [&str; 6] = ["owner", "c1", "c2", "c3", "v1", "v2"];
const OWNER: usize = 0;
const COIN: i128 = 1_000_000;

#[derive(Debug, Default, Clone)]
pub struct FuzzReport {
    pub sequences: usize,
    pub operations: usize,
    pub applied: usize,
    pub refunds: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub illegal_transitions: usize,
    pub early_refunds: usize,
    pub negative_balances: usize,
    pub conservation_violations: usize,
    pub replay_mismatches: usize,
    pub oracle_disagreements: usize,
    pub first_failure: Option<String>,
}

impl FuzzReport {
    pub fn clean(&self) -> bool {
        self.illegal_transitions == 0
            && self.early_refunds == 0
            && self.negative_balances == 0
            && self.conservation_violations == 0
            && self.replay_mismatches == 0
            && self.oracle_disagreements == 0
    }

    fn fail(&mut self, what: String) {
        if self.first_failure.is_none() {
            self.first_failure = Some(what);
        }
    }
}

type Point = (Vec<f64>, u32);

#[derive(Clone, Debug, PartialEq)]
enum St {
    Pending,
    Challenged { verifier: usize, correction: Point },
    Refunded,
    Forfeited { correction: Point },
}

impl St {
    fn name(&self) -> &'static str {
        match self {
            St::Pending => "Pending",
            St::Challenged { .. } => "Challenged",
            St::Refunded => "Refunded",
            St::Forfeited { .. } => "Forfeited",
        }
    }
}

#[derive(Clone, Debug)]
struct Rec {
    contributor: usize,
    submitted_at: u64,
    data: Point,
    status: St,
}

struct Oracle {
    bal: Vec<i128>,
    nonce: Vec<u64>,
    pool: i128,
    deposit: i128,
    reward: i128,
    timeout: u64,
    recs: Vec<Rec>,
}

#[derive(Clone, Debug)]
enum Op {
    Add { who: usize, point: Point, value: i128 },
    Verify { who: usize, id: u64, point: Point, value: i128 },
    Adjudicate { who: usize, id: u64, accept: bool, value: i128 },
    Claim { who: usize, id: u64, value: i128 },
}

impl Op {
    fn who(&self) -> usize {
        match self {
            Op::Add { who, .. } | Op::Verify { who, .. } | Op::Adjudicate { who, .. } | Op::Claim { who, .. } => *who,
        }
    }

    fn value(&self) -> i128 {
        match self {
            Op::Add { value, .. } | Op::Verify { value, .. } | Op::Adjudicate { value, .. } | Op::Claim { value, .. } => {
                *value
            }
        }
    }
}

fn schema_ok(p: &Point) -> bool {
    p.0.len() == DIM && p.1 <= 1
}

fn bit_eq(a: &Point, b: &Point) -> bool {
    a.1 == b.1 && a.0.len() == b.0.len() && a.0.iter().zip(&b.0).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl Oracle {
    /// Applies `op` at `height` with the nonce the ledger assigned; returns
    /// `None` when applied or the expected rejection name.
    fn step(&mut self, op: &Op, assigned_nonce: u64, height: u64) -> Option<&'static str> {
        let who = op.who();
        if assigned_nonce != self.nonce[who] {
            return Some("BadNonce");
        }
        if self.bal[who] < op.value() {
            return Some("InsufficientBalance");
        }
        let result = self.payload(op, height);
        if result.is_none() {
            self.nonce[who] += 1;
        }
        result
    }

    fn payload(&mut self, op: &Op, h: u64) -> Option<&'static str> {
        let dep = self.deposit;
        match op {
            Op::Add { who, point, value } => {
                if *value != dep {
                    return Some("WrongValue");
                }
                if !schema_ok(point) {
                    return Some("SchemaMismatch");
                }
                self.bal[*who] -= dep;
                self.recs.push(Rec { contributor: *who, submitted_at: h, data: point.clone(), status: St::Pending });
            }
            Op::Verify { who, id, point, value } => {
                if *value != dep {
                    return Some("WrongValue");
                }
                let Some(r) = self.recs.get(*id as usize) else { return Some("UnknownContribution") };
                match r.status {
                    St::Pending => {}
                    St::Challenged { .. } => return Some("AlreadyChallenged"),
                    _ => return Some("WrongStatus"),
                }
                if h >= r.submitted_at + self.timeout {
                    return Some("TimeoutElapsed");
                }
                if *who == r.contributor {
                    return Some("SelfChallenge");
                }
                if !schema_ok(point) {
                    return Some("SchemaMismatch");
                }
                if bit_eq(point, &r.data) {
                    return Some("IdenticalCorrection");
                }
                self.bal[*who] -= dep;
                self.recs[*id as usize].status = St::Challenged { verifier: *who, correction: point.clone() };
            }
            Op::Adjudicate { who, id, accept, value } => {
                if *value != 0 {
                    return Some("WrongValue");
                }
                if *who != OWNER {
                    return Some("NotOwner");
                }
                let Some(r) = self.recs.get(*id as usize) else { return Some("UnknownContribution") };
                let St::Challenged { verifier, correction } = r.status.clone() else { return Some("WrongStatus") };
                if *accept {
                    let reward = self.reward.min(self.pool);
                    self.pool -= reward;
                    self.bal[verifier] += dep + dep + reward;
                    self.recs[*id as usize].status = St::Forfeited { correction };
                } else {
                    self.pool += dep;
                    self.recs[*id as usize].status = St::Pending;
                }
            }
            Op::Claim { who, id, value } => {
                if *value != 0 {
                    return Some("WrongValue");
                }
                let Some(r) = self.recs.get(*id as usize) else { return Some("UnknownContribution") };
                if *who != r.contributor {
                    return Some("WrongClaimant");
                }
                if r.status != St::Pending {
                    return Some("WrongStatus");
                }
                if h < r.submitted_at + self.timeout {
                    return Some("TooEarly");
                }
                self.bal[*who] += dep;
                self.recs[*id as usize].status = St::Refunded;
            }
        }
        None
    }

    fn escrow(&self) -> i128 {
        self.recs
            .iter()
            .map(|r| match r.status {
                St::Pending => self.deposit,
                St::Challenged { .. } => 2 * self.deposit,
                _ => 0,
            })
            .sum()
    }

    fn effective(&self) -> impl Iterator<Item = &Point> {
        self.recs.iter().map(|r| match &r.status {
            St::Forfeited { correction } => correction,
            _ => &r.data,
        })
    }
}

fn legal_step(from: &str, to: &str) -> bool {
    from == to
        || matches!(
            (from, to),
            ("Pending", "Challenged") | ("Pending", "Refunded") | ("Challenged", "Forfeited") | ("Challenged", "Pending")
        )
}

/// Reachability within one block holding several transactions.
fn legal_path(from: &str, to: &str) -> bool {
    match from {
        "Pending" | "Challenged" => true,
        terminal => terminal == to,
    }
}

fn feature(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        *[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0].choose(rng).unwrap()
    } else {
        rng.random_range(-3.0..3.0)
    }
}

fn point(rng: &mut ChaCha8Rng) -> Point {
    let dim = if rng.random_bool(0.05) { *[2, 4].choose(rng).unwrap() } else { DIM };
    let label = if rng.random_bool(0.05) { 2 } else { rng.random_range(0..2) };
    ((0..dim).map(|_| feature(rng)).collect(), label)
}

fn deposit_value(rng: &mut ChaCha8Rng, deposit: i128) -> i128 {
    match rng.random_range(0..40) {
        0 => 0,
        1 => deposit + 1,
        _ => deposit,
    }
}

fn zero_value(rng: &mut ChaCha8Rng) -> i128 {
    i128::from(rng.random_range(0..40) == 0)
}

fn gen_op(rng: &mut ChaCha8Rng, oracle: &Oracle) -> Op {
    let n = oracle.recs.len() as u64;
    let id = |rng: &mut ChaCha8Rng| if n == 0 || rng.random_bool(0.05) { rng.random_range(0..n + 2) } else { rng.random_range(0..n) };
    let anyone = |rng: &mut ChaCha8Rng| rng.random_range(0..AGENTS.len());
    match rng.random_range(0..100) {
        0..40 => Op::Add { who: anyone(rng), point: point(rng), value: deposit_value(rng, oracle.deposit) },
        40..70 => {
            let id = id(rng);
            let point = match oracle.recs.get(id as usize) {
                Some(r) => match rng.random_range(0..10) {
                    0..7 => (r.data.0.clone(), 1 - r.data.1.min(1)),
                    7 => r.data.clone(),
                    8 => ((0..DIM).map(|_| feature(rng)).collect(), r.data.1),
                    _ => point(rng),
                },
                None => point(rng),
            };
            let who = if rng.random_bool(0.7) { *[4, 5].choose(rng).unwrap() } else { anyone(rng) };
            Op::Verify { who, id, point, value: deposit_value(rng, oracle.deposit) }
        }
        70..85 => {
            let who = if rng.random_bool(0.85) { OWNER } else { anyone(rng) };
            Op::Adjudicate { who, id: id(rng), accept: rng.random_bool(0.6), value: zero_value(rng) }
        }
        _ => {
            let id = id(rng);
            let who = match oracle.recs.get(id as usize) {
                Some(r) if rng.random_bool(0.85) => r.contributor,
                _ => anyone(rng),
            };
            Op::Claim { who, id, value: zero_value(rng) }
        }
    }
}

fn payload(op: &Op, contract: Address) -> (Amount, TxPayload) {
    let amount = |v: i128| Amount::from_micros(v as u64);
    match op {
        Op::Add { point, value, .. } => {
            (amount(*value), TxPayload::AddData { contract, features: point.0.clone(), label: point.1 })
        }
        Op::Verify { id, point, value, .. } => {
            let correction = DataRef::InlineSample { features: point.0.clone(), label: point.1 };
            (amount(*value), TxPayload::Verify { contract, contribution_id: *id, correction })
        }
        Op::Adjudicate { id, accept, value, .. } => {
            (amount(*value), TxPayload::Adjudicate { contract, contribution_id: *id, accept: *accept })
        }
        Op::Claim { id, value, .. } => (amount(*value), TxPayload::ClaimRefund { contract, contribution_id: *id }),
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> RefLinear {
    let logistic = rng.random_bool(0.5);
    let lr = *[0.1, 0.5, 1.0].choose(rng).unwrap();
    let mut m = RefLinear::zeros(logistic, DIM, lr);
    for w in &mut m.w {
        *w = *[-1.0, -0.5, 0.0, 0.5, 1.0].choose(rng).unwrap();
    }
    m.b = *[-0.5, 0.0, 0.5].choose(rng).unwrap();
    m
}

/// Runs one random history of `ops` transactions and folds the findings into
/// `report`.
pub fn run_sequence(rng: &mut ChaCha8Rng, ops: usize, report: &mut FuzzReport) {
    let deposit = COIN / 2 * rng.random_range(1..=4);
    let reward = deposit / 4 * rng.random_range(0..=4);
    let timeout = rng.random_range(1..=6);
    let pool = COIN * rng.random_range(0..=3);
    let mut bal: Vec<i128> = (0..AGENTS.len()).map(|_| COIN / 2 * rng.random_range(0..=12)).collect();
    bal[OWNER] += pool;
    let supply: i128 = bal.iter().sum();

    let reference = random_model(rng);
    let model = Model::decode(reference.encode().as_bytes()).expect("reference encoding is canonical");
    let params = IncentiveParams {
        deposit: Amount::from_micros(deposit as u64),
        reward: Amount::from_micros(reward as u64),
        timeout,
    };
    let spec = deploy_spec(&model, b"1,0,0,0\n", params, 10);

    let addrs: Vec<Address> = AGENTS.iter().map(|n| addr(n)).collect();
    let genesis = Genesis::new(addrs.iter().zip(&bal).map(|(a, b)| (*a, Amount::from_micros(*b as u64))).collect());
    let mut ledger = Ledger::genesis(genesis.clone()).unwrap();
    let owner = addrs[OWNER];
    let contract = Address::for_contract(&owner, 0);
    let receipt = ledger
        .execute(Transaction { sender: owner, nonce: 0, value: Amount::from_micros(pool as u64), payload: TxPayload::DeployContract(spec) })
        .unwrap();
    assert_eq!(receipt.status, TxStatus::Applied);
    bal[OWNER] -= pool;
    let mut nonce = vec![0; AGENTS.len()];
    nonce[OWNER] = 1;
    let mut oracle = Oracle { bal, nonce, pool, deposit, reward, timeout, recs: Vec::new() };

    report.sequences += 1;
    let mut done = 0;
    while done < ops {
        if rng.random_range(0..10) == 0 {
            for _ in 0..rng.random_range(1..=3) {
                ledger.seal_block();
            }
            continue;
        }
        let batch = if rng.random_range(0..5) == 0 { rng.random_range(2..=3) } else { 1 };
        let before: Vec<(&'static str, u64)> = ledger
            .contract(&contract)
            .unwrap()
            .records()
            .iter()
            .map(|r| (r.status.name(), r.submitted_at))
            .collect();
        let height = ledger.height() + 1;
        let mut expected = Vec::new();
        for _ in 0..batch {
            let op = gen_op(rng, &oracle);
            let who = op.who();
            let assigned = ledger.next_nonce(&addrs[who]).unwrap();
            let (value, body) = payload(&op, contract);
            ledger.submit(Transaction { sender: addrs[who], nonce: assigned, value, payload: body }).unwrap();
            expected.push((oracle.step(&op, assigned, height), op));
        }
        ledger.seal_block();
        done += batch;
        report.operations += batch;

        let receipts = &ledger.receipts()[ledger.receipts().len() - batch..];
        for (receipt, (want, op)) in receipts.iter().zip(&expected) {
            let got = match &receipt.status {
                TxStatus::Applied => None,
                TxStatus::Rejected(name) => Some(name.as_str()),
            };
            if got.is_none() {
                report.applied += 1;
                match op {
                    Op::Claim { .. } => report.refunds += 1,
                    Op::Adjudicate { accept: true, .. } => report.accepts += 1,
                    Op::Adjudicate { accept: false, .. } => report.rejects += 1,
                    _ => {}
                }
            }
            if got != *want {
                report.oracle_disagreements += 1;
                report.fail(format!("{op:?} at height {height}: expected {want:?}, got {got:?}"));
            }
        }

        let c = ledger.contract(&contract).unwrap();
        for (i, r) in c.records().iter().enumerate() {
            let (from, submitted_at) = before.get(i).copied().unwrap_or(("Pending", r.submitted_at));
            let to = r.status.name();
            let legal = if batch == 1 { legal_step(from, to) } else { legal_path(from, to) };
            if !legal {
                report.illegal_transitions += 1;
                report.fail(format!("record {i}: {from} -> {to}"));
            }
            if from != "Refunded" && r.status == ContributionStatus::Refunded && height < submitted_at + timeout {
                report.early_refunds += 1;
                report.fail(format!("record {i} refunded at {height}, submitted {submitted_at}, timeout {timeout}"));
            }
            match oracle.recs.get(i) {
                Some(o) if o.status.name() == to && o.submitted_at == r.submitted_at => {}
                _ => {
                    report.oracle_disagreements += 1;
                    report.fail(format!("record {i} status {to} disagrees with reference"));
                }
            }
        }
        if c.records().len() != oracle.recs.len() {
            report.oracle_disagreements += 1;
            report.fail("record count disagrees with reference".into());
        }

        if oracle.bal.iter().any(|b| *b < 0) || oracle.pool < 0 {
            report.negative_balances += 1;
            report.fail("negative balance in reference".into());
        }
        for (i, a) in addrs.iter().enumerate() {
            if i128::from(ledger.balance_of(a).unwrap().micros()) != oracle.bal[i] {
                report.oracle_disagreements += 1;
                report.fail(format!("balance of {} disagrees with reference", AGENTS[i]));
            }
        }
        if i128::from(c.reward_pool.micros()) != oracle.pool || i128::from(c.escrow().micros()) != oracle.escrow() {
            report.oracle_disagreements += 1;
            report.fail("pool or escrow disagrees with reference".into());
        }
        let balances: i128 = ledger.state().accounts().iter().map(|a| i128::from(a.balance.micros())).sum();
        let accounted = balances + i128::from(c.escrow().micros()) + i128::from(c.reward_pool.micros());
        if accounted != supply || ledger.state().accounted_supply() != ledger.total_supply() {
            report.conservation_violations += 1;
            report.fail(format!("conservation: {accounted} != {supply}"));
        }

        let mut folded = reference.clone();
        for (x, y) in oracle.effective() {
            folded.update(x, *y);
        }
        let live = c.model_bytes();
        let replayed = c.replay_model().map(|m| m.encode()).unwrap_or_default();
        if live != folded.encode().as_bytes() || live != replayed {
            report.replay_mismatches += 1;
            report.fail(format!("replay mismatch at height {height}"));
        }
    }

    let rebuilt = Ledger::replay(genesis, ledger.blocks()).expect("recorded chain replays");
    if rebuilt.state_digest() != ledger.state_digest() {
        report.replay_mismatches += 1;
        report.fail("ledger replay digest mismatch".into());
    }
}

pub fn run_campaign(sequences: usize, ops: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport::default();
    for _ in 0..sequences {
        run_sequence(&mut rng, ops, &mut report);
    }
    report
}
