//! Scenario configuration and its flat text format.
//!
//! One assignment per line, `section.key = value`; `#` starts a comment.
//! Agent settings use a named section, `agent.<name>.<key>`. Every key has a
//! default, so an empty file is a valid (agent-less, hence invalid) config.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `run.seed` | 0 | RNG seed |
//! | `run.blocks` | 100 | blocks to seal |
//! | `run.blocktime` | 15 | simulated seconds per block |
//! | `incentive.deposit` | 1 | coins per contribution / challenge |
//! | `incentive.reward` | 0.5 | coins per accepted challenge |
//! | `incentive.timeout` | 10 | blocks until a deposit can be reclaimed |
//! | `incentive.pool` | 5 | owner funding for the reward pool |
//! | `data.dim` | 10 | feature dimension |
//! | `data.classes` | 2 | class count (binary only) |
//! | `data.margin` | 2 | class-mean separation |
//! | `data.train_size` | 1000 | train split size |
//! | `data.test_size` | 500 | hidden test split size |
//! | `data.initial_fraction` | 0.8 | share of train used for the initial model |
//! | `model.kind` | perceptron | `perceptron` or `logistic` |
//! | `model.learning_rate` | 1 | step size |
//! | `model.initial_epochs` | 1 | passes over the initial data |
//! | `agent.<n>.role` | (required) | `owner`, `good`, `malicious`, `verifier` |
//! | `agent.<n>.balance` | 100 | initial coins |
//! | `agent.<n>.rate` | 1 | contributions per block (fractional rates accumulate) |
//! | `agent.<n>.budget` | unlimited | maximum contributions |
//! | `agent.<n>.flip` | 1 for malicious, 0 otherwise | label-flip probability |
//! | `agent.<n>.coverage` | 1 | verifier inspection probability |

use std::path::Path;

use thiserror::Error;

use crate::amount::Amount;
use crate::contract::IncentiveParams;
use crate::ledger::{Address, DEFAULT_BLOCKTIME};
use crate::models::ModelKind;

use super::data::DataSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Owner,
    GoodContributor,
    MaliciousContributor,
    Verifier,
}

impl Role {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "owner" => Role::Owner,
            "good" => Role::GoodContributor,
            "malicious" => Role::MaliciousContributor,
            "verifier" => Role::Verifier,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Owner => "owner",
            Role::GoodContributor => "good",
            Role::MaliciousContributor => "malicious",
            Role::Verifier => "verifier",
        }
    }

    pub fn contributes(self) -> bool {
        matches!(self, Role::GoodContributor | Role::MaliciousContributor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub role: Role,
    pub address: Address,
    pub balance: Amount,
    /// Contributions per block.
    pub rate: f64,
    pub budget: Option<u64>,
    pub flip_probability: f64,
    pub coverage: f64,
}

impl AgentSpec {
    pub fn new(name: &str, role: Role) -> Self {
        AgentSpec {
            name: name.to_string(),
            role,
            address: Address::from_label(name),
            balance: Amount::coins(100),
            rate: 1.0,
            budget: None,
            flip_probability: if role == Role::MaliciousContributor { 1.0 } else { 0.0 },
            coverage: 1.0,
        }
    }

    pub fn balance(mut self, coins: Amount) -> Self {
        self.balance = coins;
        self
    }

    pub fn rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn flip(mut self, p: f64) -> Self {
        self.flip_probability = p;
        self
    }

    pub fn coverage(mut self, q: f64) -> Self {
        self.coverage = q;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub initial_epochs: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { kind: ModelKind::Perceptron, learning_rate: 1.0, initial_epochs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub blocks: u64,
    pub blocktime: u64,
    pub params: IncentiveParams,
    pub pool_funding: Amount,
    pub data: DataSpec,
    pub initial_fraction: f64,
    pub model: ModelSpec,
    pub agents: Vec<AgentSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            blocks: 100,
            blocktime: DEFAULT_BLOCKTIME,
            params: IncentiveParams::default(),
            pool_funding: Amount::coins(5),
            data: DataSpec::default(),
            initial_fraction: 0.8,
            model: ModelSpec::default(),
            agents: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read scenario file: {0}")]
    Io(String),
}

fn check_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.data.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.blocks == 0 {
            return invalid("run.blocks must be at least 1".into());
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction <= 1.0) {
            return invalid("data.initial_fraction must be in (0, 1]".into());
        }
        if !(self.model.learning_rate.is_finite() && self.model.learning_rate > 0.0) {
            return invalid("model.learning_rate must be positive".into());
        }
        if !self.agents.iter().any(|a| a.role == Role::Owner) {
            return invalid("at least one agent must have role = owner".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].iter().any(|b| b.name == a.name) {
                return invalid(format!("duplicate agent `{}`", a.name));
            }
            if !(a.rate.is_finite() && a.rate >= 0.0) {
                return invalid(format!("agent `{}`: rate must be >= 0", a.name));
            }
            if !check_probability(a.flip_probability) || !check_probability(a.coverage) {
                return invalid(format!("agent `{}`: probabilities must lie in [0, 1]", a.name));
            }
        }
        Ok(())
    }

    /// Number of train samples the owner's initial model is trained on.
    pub fn initial_count(&self) -> usize {
        ((self.data.train_size as f64 * self.initial_fraction).round() as usize).clamp(1, self.data.train_size)
    }

    pub fn owner(&self) -> &AgentSpec {
        self.agents.iter().find(|a| a.role == Role::Owner).expect("validated config has an owner")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `section.key = value`, got `{content}`") })?;
            cfg.assign(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |message: String| ConfigError::Value { line, key: key.to_string(), message };
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse::<T>().map_err(|_| format!("`{v}` is not a valid number"))
        }
        let coins = |v: &str| v.parse::<Amount>().map_err(|e| e.to_string());

        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["run", "seed"] => self.seed = num(value).map_err(bad)?,
            ["run", "blocks"] => self.blocks = num(value).map_err(bad)?,
            ["run", "blocktime"] => self.blocktime = num(value).map_err(bad)?,
            ["incentive", "deposit"] => self.params.deposit = coins(value).map_err(bad)?,
            ["incentive", "reward"] => self.params.reward = coins(value).map_err(bad)?,
            ["incentive", "timeout"] => self.params.timeout = num(value).map_err(bad)?,
            ["incentive", "pool"] => self.pool_funding = coins(value).map_err(bad)?,
            ["data", "dim"] => self.data.dim = num(value).map_err(bad)?,
            ["data", "classes"] => self.data.classes = num(value).map_err(bad)?,
            ["data", "margin"] => self.data.margin = num(value).map_err(bad)?,
            ["data", "train_size"] => self.data.train_size = num(value).map_err(bad)?,
            ["data", "test_size"] => self.data.test_size = num(value).map_err(bad)?,
            ["data", "initial_fraction"] => self.initial_fraction = num(value).map_err(bad)?,
            ["model", "kind"] => {
                self.model.kind = ModelKind::from_tag(value).ok_or_else(|| bad(format!("unknown model kind `{value}`")))?
            }
            ["model", "learning_rate"] => self.model.learning_rate = num(value).map_err(bad)?,
            ["model", "initial_epochs"] => self.model.initial_epochs = num(value).map_err(bad)?,
            ["agent", name, field] => {
                if name.is_empty() {
                    return Err(ConfigError::Syntax { line, message: "empty agent name".into() });
                }
                let idx = match self.agents.iter().position(|a| a.name == *name) {
                    Some(i) => i,
                    None if *field == "role" => {
                        let role = Role::parse(value).ok_or_else(|| bad(format!("unknown role `{value}`")))?;
                        self.agents.push(AgentSpec::new(name, role));
                        return Ok(());
                    }
                    None => {
                        return Err(ConfigError::Syntax {
                            line,
                            message: format!("agent `{name}` must declare `role` before other keys"),
                        })
                    }
                };
                let agent = &mut self.agents[idx];
                match *field {
                    "role" => return Err(ConfigError::Syntax { line, message: format!("agent `{name}` role set twice") }),
                    "balance" => agent.balance = coins(value).map_err(bad)?,
                    "rate" => agent.rate = num(value).map_err(bad)?,
                    "budget" => agent.budget = Some(num(value).map_err(bad)?),
                    "flip" => agent.flip_probability = num(value).map_err(bad)?,
                    "coverage" => agent.coverage = num(value).map_err(bad)?,
                    _ => return Err(ConfigError::Syntax { line, message: format!("unknown agent key `{field}`") }),
                }
            }
            _ => return Err(ConfigError::Syntax { line, message: format!("unknown key `{key}`") }),
        }
        Ok(())
    }
}
