use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use datamarket::amount::Amount;
use datamarket::contract::{ContractError, DataRef};
use datamarket::dataset::{self, ClassId};
use datamarket::ledger::{Address, DeploySpec, Genesis, TxPayload, DEFAULT_BLOCKTIME};
use datamarket::models::{self, AnyModel, ModelKind, OnlineModel};
use datamarket::report;
use datamarket::sim::{self, ScenarioConfig};
use datamarket::workspace::{Workspace, WorkspaceError};
use datamarket::{digest, BlobStore, IncentiveParams, Model};

/// Deterministic data marketplace: simulate scenarios, operate contracts,
/// hash files and build plot-ready reports.
#[derive(Parser)]
#[command(name = "datamarket", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and export metric CSVs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides `run.seed` from the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the SHA-256 content hash of a file.
    Hash { path: PathBuf },
    /// Operate a contract in a persistent workspace, one transaction per call.
    Contract {
        #[command(subcommand)]
        action: ContractAction,
    },
    /// Aggregate exported metrics into per-figure CSVs and a summary table.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Directory holding the simulate output (defaults to --out).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BLOCKTIME)]
        blocktime: u64,
    },
}

#[derive(Args)]
struct WorkspaceArg {
    #[arg(long)]
    workspace: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Initial training data (line-delimited `label,f1,...`); uploaded to the blob store.
    #[arg(long)]
    train: PathBuf,
    /// Hidden test data; only its digest is committed.
    #[arg(long)]
    test: PathBuf,
    /// Pre-trained canonical model file; trained from --train when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "perceptron")]
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value = "0,1")]
    classes: String,
    #[arg(long, default_value = "1")]
    deposit: Amount,
    #[arg(long, default_value = "0.5")]
    reward: Amount,
    #[arg(long, default_value_t = 10)]
    timeout: u64,
    #[arg(long, default_value = "5")]
    pool: Amount,
}

#[derive(Subcommand)]
enum ContractAction {
    /// Deploy a model contract (optionally creating the workspace).
    Deploy {
        #[command(flatten)]
        ws: WorkspaceArg,
        /// Create the workspace; requires --accounts.
        #[arg(long)]
        init: bool,
        /// Genesis balances, e.g. `alice=100,bob=10`.
        #[arg(long)]
        accounts: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BLOCKTIME)]
        blocktime: u64,
        #[arg(long)]
        owner: String,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Contribute an inline sample or a dataset file.
    AddData {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        contract: Address,
        /// Inline sample `label,f1,...,fd`.
        #[arg(long, conflicts_with = "dataset")]
        sample: Option<String>,
        /// Dataset file to upload and register by hash.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Challenge a pending contribution with a correction.
    Verify {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        id: u64,
        /// Corrected inline sample `label,f1,...,fd`.
        #[arg(long, conflicts_with = "dataset")]
        correction: Option<String>,
        /// Corrected dataset file.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Owner decision on an open challenge.
    Adjudicate {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        id: u64,
        #[arg(long, conflicts_with = "reject", required_unless_present = "reject")]
        accept: bool,
        #[arg(long)]
        reject: bool,
    },
    /// Reclaim a deposit after the timeout.
    ClaimRefund {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        id: u64,
    },
    /// Accuracy of the contract model on the revealed hidden test set.
    Evaluate {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        contract: Address,
        #[arg(long)]
        test: PathBuf,
    },
    /// Deploy a successor contract that references a predecessor.
    Update {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        predecessor: Address,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print a contract's ancestors, nearest first.
    Lineage {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        contract: Address,
    },
    /// Seal empty blocks.
    Advance {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long, default_value_t = 1)]
        blocks: u64,
    },
    /// Print height, balances and (optionally) a contract's records.
    Show {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long)]
        contract: Option<Address>,
    },
}

enum CliError {
    /// Bad invocation or unreadable user input; nothing was mutated.
    Usage(String),
    /// Runtime or protocol failure.
    Runtime(String),
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl ToString) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl ToString) -> CliError {
    CliError::Runtime(msg.to_string())
}

impl From<WorkspaceError> for CliError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::Missing(_) | WorkspaceError::Exists(_) => usage(e),
            other => runtime(other),
        }
    }
}

fn account(name: &str) -> Address {
    name.parse().unwrap_or_else(|_| Address::from_label(name))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_sample(text: &str) -> Result<DataRef, CliError> {
    let mut line = text.trim().to_string();
    line.push('\n');
    let mut samples = dataset::decode::<f64>(line.as_bytes(), None).map_err(|e| usage(format!("bad sample: {e}")))?;
    Ok(DataRef::inline(samples.remove(0)))
}

fn parse_genesis(spec: &str, blocktime: u64) -> Result<Genesis, CliError> {
    let accounts = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| {
            let (name, coins) =
                entry.split_once('=').ok_or_else(|| usage(format!("bad account `{entry}`, expected name=coins")))?;
            let amount: Amount = coins.parse().map_err(usage)?;
            Ok((account(name.trim()), amount))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Genesis::new(accounts).with_blocktime(blocktime))
}

/// Builds the deploy spec, uploading the training file to the blob store.
fn deploy_spec(args: &ModelArgs, store: &dyn BlobStore) -> Result<(DeploySpec, Amount), CliError> {
    let train_bytes = read_input(&args.train)?;
    let train = dataset::decode::<f64>(&train_bytes, None).map_err(|e| usage(format!("{}: {e}", args.train.display())))?;
    let dim = train.first().map(|s| s.dim()).ok_or_else(|| usage("training file is empty"))?;
    let test_bytes = read_input(&args.test)?;
    dataset::decode::<f64>(&test_bytes, Some(dim)).map_err(|e| usage(format!("{}: {e}", args.test.display())))?;
    let model: Model = match &args.model {
        Some(path) => AnyModel::decode(&read_input(path)?).map_err(usage)?,
        None => {
            let kind = ModelKind::from_tag(&args.kind).ok_or_else(|| usage(format!("unknown model kind `{}`", args.kind)))?;
            let fresh = AnyModel::new(kind, dim, args.learning_rate).map_err(usage)?;
            models::train(&fresh, &train, args.epochs).map_err(usage)?
        }
    };
    let class_set = args
        .classes
        .split(',')
        .map(|c| c.trim().parse::<ClassId>().map_err(|_| usage(format!("bad class id `{c}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let initial_data_hash = store.put(&train_bytes).map_err(runtime)?;
    let spec = DeploySpec {
        model: String::from_utf8(model.encode()).expect("model encoding is UTF-8"),
        feature_dim: dim,
        class_set,
        initial_data_hash,
        initial_count: train.len() as u64,
        test_digest: digest(&test_bytes),
        params: IncentiveParams { deposit: args.deposit, reward: args.reward, timeout: args.timeout },
    };
    Ok((spec, args.pool))
}

fn dataset_ref(path: &Path, ws: &Workspace) -> Result<DataRef, CliError> {
    let bytes = read_input(path)?;
    let count = dataset::decode::<f64>(&bytes, None).map_err(|e| usage(format!("{}: {e}", path.display())))?.len();
    let hash = ws.store().put(&bytes).map_err(runtime)?;
    Ok(DataRef::DatasetHash { hash, declared_count: count as u64 })
}

fn print_applied(applied: &datamarket::workspace::Applied) {
    for e in &applied.events {
        println!("{}", e.csv_row());
    }
}

fn run_contract(action: ContractAction) -> CliResult {
    match action {
        ContractAction::Deploy { ws, init, accounts, blocktime, owner, model } => {
            let mut workspace = if init {
                let accounts = accounts.ok_or_else(|| usage("--init requires --accounts"))?;
                Workspace::init(&ws.workspace, parse_genesis(&accounts, blocktime)?)?
            } else {
                Workspace::open(&ws.workspace)?
            };
            let (spec, pool) = deploy_spec(&model, workspace.store())?;
            let applied = workspace.transact(account(&owner), pool, TxPayload::DeployContract(spec))?;
            print_applied(&applied);
        }
        ContractAction::AddData { ws, from, contract, sample, dataset } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            let deposit = workspace.ledger().contract(&contract).map_err(runtime)?.params.deposit;
            let payload = match (sample, dataset) {
                (Some(text), _) => {
                    let DataRef::InlineSample { features, label } = parse_sample(&text)? else { unreachable!() };
                    TxPayload::AddData { contract, features, label }
                }
                (None, Some(path)) => {
                    let DataRef::DatasetHash { hash, declared_count } = dataset_ref(&path, &workspace)? else {
                        unreachable!()
                    };
                    TxPayload::AddDatasetHash { contract, hash, declared_count, count_verified: false }
                }
                (None, None) => return Err(usage("one of --sample or --dataset is required")),
            };
            print_applied(&workspace.transact(account(&from), deposit, payload)?);
        }
        ContractAction::Verify { ws, from, contract, id, correction, dataset } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            let deposit = workspace.ledger().contract(&contract).map_err(runtime)?.params.deposit;
            let correction = match (correction, dataset) {
                (Some(text), _) => parse_sample(&text)?,
                (None, Some(path)) => dataset_ref(&path, &workspace)?,
                (None, None) => return Err(usage("one of --correction or --dataset is required")),
            };
            let payload = TxPayload::Verify { contract, contribution_id: id, correction };
            print_applied(&workspace.transact(account(&from), deposit, payload)?);
        }
        ContractAction::Adjudicate { ws, from, contract, id, accept, reject: _ } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            let payload = TxPayload::Adjudicate { contract, contribution_id: id, accept };
            print_applied(&workspace.transact(account(&from), Amount::ZERO, payload)?);
        }
        ContractAction::ClaimRefund { ws, from, contract, id } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            let payload = TxPayload::ClaimRefund { contract, contribution_id: id };
            print_applied(&workspace.transact(account(&from), Amount::ZERO, payload)?);
        }
        ContractAction::Evaluate { ws, contract, test } => {
            let bytes = read_input(&test)?;
            let workspace = Workspace::open(&ws.workspace)?;
            let c = workspace.ledger().contract(&contract).map_err(runtime)?;
            let accuracy = c.evaluate(&bytes).map_err(|e: ContractError| runtime(e.name()))?;
            println!("accuracy={accuracy}");
        }
        ContractAction::Update { ws, from, predecessor, model } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            let (spec, pool) = deploy_spec(&model, workspace.store())?;
            let payload = TxPayload::UpdateModel { predecessor, spec };
            print_applied(&workspace.transact(account(&from), pool, payload)?);
        }
        ContractAction::Lineage { ws, contract } => {
            let workspace = Workspace::open(&ws.workspace)?;
            for ancestor in workspace.ledger().lineage(&contract).map_err(runtime)? {
                println!("{ancestor}");
            }
        }
        ContractAction::Advance { ws, blocks } => {
            let mut workspace = Workspace::open(&ws.workspace)?;
            println!("height={}", workspace.advance(blocks)?);
        }
        ContractAction::Show { ws, contract } => {
            let workspace = Workspace::open(&ws.workspace)?;
            let ledger = workspace.ledger();
            println!("height={}", ledger.height());
            for a in ledger.state().accounts().iter() {
                println!("balance {} {}", a.address, a.balance);
            }
            if let Some(addr) = contract {
                let c = ledger.contract(&addr).map_err(runtime)?;
                println!("reward_pool {}", c.reward_pool);
                println!("escrow {}", c.escrow());
                println!("dataset_size {}", c.dataset_size());
                for r in c.records() {
                    println!("record {} {} {} {}", r.id, r.status.name(), r.contributor, r.deposit_held);
                }
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let mut config = ScenarioConfig::load(&scenario).map_err(usage)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let run = sim::run_scenario(&config).map_err(runtime)?;
            sim::export_metrics(&run.metrics, &out).map_err(runtime)?;
            println!("{}", run.summary_line());
        }
        Command::Hash { path } => {
            let bytes = fs::read(&path).map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
            println!("{}", digest(&bytes));
        }
        Command::Contract { action } => run_contract(action)?,
        Command::Report { out, metrics, blocktime } => {
            let metrics = metrics.unwrap_or_else(|| out.clone());
            report::build_report(&metrics, &out, blocktime).map_err(|e| match e {
                report::ReportError::Io(_) => runtime(e),
                other => usage(other),
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
