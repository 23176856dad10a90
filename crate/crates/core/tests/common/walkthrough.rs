//! Scripted command-line sessions against the built binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use datamarket::{Address, Amount};
use tempfile::TempDir;

pub const TRAIN: &str = "1,1,1\n0,-1,-1\n1,2,0.5\n0,-2,-0.5\n";
pub const TEST: &str = "1,1.5,1\n0,-1.5,-1\n1,0.5,2\n0,-0.5,-2\n";

#[derive(Debug)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub struct Cli {
    dir: TempDir,
}

impl Default for Cli {
    fn default() -> Self {
        Cli::new()
    }
}

impl Cli {
    pub fn new() -> Self {
        Cli { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn workspace(&self) -> PathBuf {
        self.path("ws")
    }

    pub fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    pub fn run<S: AsRef<std::ffi::OsStr>>(&self, args: &[S]) -> Output {
        let out = Command::new(env!("CARGO_BIN_EXE_datamarket")).args(args).output().unwrap();
        Output {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    /// Runs `contract <action> --workspace <ws> <args...>`.
    pub fn contract(&self, action: &str, args: &[&str]) -> Output {
        let ws = self.workspace();
        let mut full: Vec<&str> = vec!["contract", action, "--workspace", ws.to_str().unwrap()];
        full.extend_from_slice(args);
        self.run(&full)
    }

    pub fn contract_ok(&self, action: &str, args: &[&str]) -> String {
        let out = self.contract(action, args);
        assert_eq!(out.code, 0, "{action} {args:?} failed: {}", out.stderr);
        out.stdout
    }

    /// Deploys from `TRAIN`/`TEST`; returns the contract address.
    pub fn deploy(&self, init: Option<&str>, owner: &str, extra: &[&str]) -> String {
        let train = self.write("train.csv", TRAIN);
        let test = self.write("test.csv", TEST);
        let mut args = vec!["--owner", owner, "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap()];
        if let Some(accounts) = init {
            args.extend(["--init", "--accounts", accounts]);
        }
        args.extend_from_slice(extra);
        let out = self.contract_ok("deploy", &args);
        event_field(&out, 1)
    }

    fn show(&self, contract: Option<&str>) -> String {
        match contract {
            Some(c) => self.contract_ok("show", &["--contract", c]),
            None => self.contract_ok("show", &[]),
        }
    }

    pub fn balance(&self, name: &str) -> Amount {
        let hex = Address::from_label(name).to_hex();
        self.show(None)
            .lines()
            .find_map(|l| l.strip_prefix(&format!("balance {hex} ")).map(|v| v.parse().unwrap()))
            .unwrap_or(Amount::ZERO)
    }

    pub fn height(&self) -> u64 {
        let out = self.show(None);
        out.lines().find_map(|l| l.strip_prefix("height=")).unwrap().parse().unwrap()
    }

    /// `(id, status)` of every record in `contract`.
    pub fn statuses(&self, contract: &str) -> Vec<(u64, String)> {
        self.show(Some(contract))
            .lines()
            .filter_map(|l| l.strip_prefix("record "))
            .map(|l| {
                let mut f = l.split(' ');
                (f.next().unwrap().parse().unwrap(), f.next().unwrap().to_string())
            })
            .collect()
    }

    pub fn pool(&self, contract: &str) -> Amount {
        self.show(Some(contract)).lines().find_map(|l| l.strip_prefix("reward_pool ")).unwrap().parse().unwrap()
    }
}

/// Field `i` of the first event row printed by a contract command.
pub fn event_field(stdout: &str, i: usize) -> String {
    stdout.lines().next().unwrap_or_default().split(',').nth(i).unwrap_or_default().to_string()
}

/// Balances recorded at each step of the data-collection walkthrough.
#[derive(Debug)]
pub struct DataCollection {
    pub owner_initial: Amount,
    pub owner_after_deploy: Amount,
    pub pool_after_deploy: Amount,
    pub c_initial: Amount,
    pub c_after_deposits: Amount,
    pub c_final: Amount,
    pub d_initial: Amount,
    pub d_after_deposit: Amount,
    pub d_final: Amount,
    pub pool_final: Amount,
    pub early_refund: Output,
    pub accept_row: String,
    pub statuses: Vec<(u64, String)>,
}

/// Owner deploys a model with its training file and hidden test set and
/// funds the reward pool; user C makes two deposits and adds an honest and a
/// mislabeled sample; user D deposits, corrects the mislabeled sample and,
/// after the owner validates the fix, receives their deposit back with the
/// reward; user C reclaims the honest deposit after the timeout.
pub fn data_collection(cli: &Cli) -> DataCollection {
    let c = cli.deploy(Some("owner=100,userC=10,userD=10"), "owner", &[]);
    let owner_after_deploy = cli.balance("owner");
    let pool_after_deploy = cli.pool(&c);
    let (c_initial, d_initial) = (cli.balance("userC"), cli.balance("userD"));

    cli.contract_ok("add-data", &["--from", "userC", "--contract", &c, "--sample", "1,1.2,0.8"]);
    cli.contract_ok("add-data", &["--from", "userC", "--contract", &c, "--sample", "1,-1.2,-0.8"]);
    let c_after_deposits = cli.balance("userC");
    let early_refund = cli.contract("claim-refund", &["--from", "userC", "--contract", &c, "--id", "0"]);

    cli.contract_ok("verify", &["--from", "userD", "--contract", &c, "--id", "1", "--correction", "0,-1.2,-0.8"]);
    let d_after_deposit = cli.balance("userD");
    let accept_row = cli.contract_ok("adjudicate", &["--from", "owner", "--contract", &c, "--id", "1", "--accept"]);

    cli.contract_ok("advance", &["--blocks", "10"]);
    cli.contract_ok("claim-refund", &["--from", "userC", "--contract", &c, "--id", "0"]);

    DataCollection {
        owner_initial: Amount::coins(100),
        owner_after_deploy,
        pool_after_deploy,
        c_initial,
        c_after_deposits,
        c_final: cli.balance("userC"),
        d_initial,
        d_after_deposit,
        d_final: cli.balance("userD"),
        pool_final: cli.pool(&c),
        early_refund,
        accept_row: accept_row.trim().to_string(),
        statuses: cli.statuses(&c),
    }
}

#[derive(Debug)]
pub struct ModelTraining {
    pub root: String,
    pub successor: String,
    pub lineage: Vec<String>,
    pub hash_of_shared_file: String,
    pub b_after_deposit: Amount,
    pub hash_registered: bool,
    pub model_changed_by_inline_add: bool,
    pub accuracy: f64,
    pub wrong_test: Output,
    pub b_initial: Amount,
    pub b_final: Amount,
    pub a_final: Amount,
    pub statuses: Vec<(u64, String)>,
}

/// User B shares a dataset file by hash; user A retrieves the model and the
/// file, trains off-chain, and uploads the result as a successor contract
/// that references the original; user C then adds a sample to the new
/// contract, which trains it on-chain, and the model is tested against the
/// hidden test data.
pub fn model_training(cli: &Cli) -> ModelTraining {
    let root = cli.deploy(Some("owner=100,userA=20,userB=10,userC=10"), "owner", &[]);
    let b_initial = cli.balance("userB");
    let shared = cli.write("shared.csv", "1,3,2\n0,-3,-2\n1,0.7,0.9\n");
    cli.contract_ok("add-data", &["--from", "userB", "--contract", &root, "--dataset", shared.to_str().unwrap()]);
    let hash = cli.run(&["hash", shared.to_str().unwrap()]).stdout.trim().to_string();
    let b_after_deposit = cli.balance("userB");
    let root_state = read(&cli.workspace().join("contracts").join(format!("{root}.txt")));
    let hash_registered = root_state.contains(&format!("hash {hash} 3"));

    let combined = cli.write("combined.csv", &format!("{}{}", TRAIN, "1,3,2\n0,-3,-2\n1,0.7,0.9\n"));
    let test = cli.path("test.csv");
    let out = cli.contract_ok(
        "update",
        &[
            "--from",
            "userA",
            "--predecessor",
            &root,
            "--train",
            combined.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
            "--epochs",
            "3",
            "--pool",
            "2",
        ],
    );
    let successor = event_field(&out, 1);
    let lineage: Vec<String> = cli.contract_ok("lineage", &["--contract", &successor]).lines().map(String::from).collect();

    let before = std::fs::read_to_string(cli.workspace().join("contracts").join(format!("{successor}.txt"))).unwrap();
    cli.contract_ok("add-data", &["--from", "userC", "--contract", &successor, "--sample", "0,0.2,-0.4"]);
    let after = std::fs::read_to_string(cli.workspace().join("contracts").join(format!("{successor}.txt"))).unwrap();
    let model_line = |s: &str| s.lines().find(|l| l.starts_with("model ")).map(String::from);

    let accuracy_out = cli.contract_ok("evaluate", &["--contract", &successor, "--test", test.to_str().unwrap()]);
    let accuracy = accuracy_out.trim().strip_prefix("accuracy=").unwrap().parse().unwrap();
    let wrong = cli.write("wrong.csv", "1,1.5,1\n0,-1.5,-1\n1,0.5,2\n0,-0.5,-1.9\n");
    let wrong_test = cli.contract("evaluate", &["--contract", &successor, "--test", wrong.to_str().unwrap()]);

    cli.contract_ok("advance", &["--blocks", "10"]);
    cli.contract_ok("claim-refund", &["--from", "userB", "--contract", &root, "--id", "0"]);

    ModelTraining {
        statuses: cli.statuses(&root),
        root,
        successor,
        lineage,
        hash_of_shared_file: hash,
        b_after_deposit,
        hash_registered,
        model_changed_by_inline_add: model_line(&before) != model_line(&after),
        accuracy,
        wrong_test,
        b_initial,
        b_final: cli.balance("userB"),
        a_final: cli.balance("userA"),
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
