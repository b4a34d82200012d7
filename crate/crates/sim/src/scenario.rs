//! Scenario files: a versioned, human-writable JSON description of chains,
//! an optional registry, and a timeline of events. A run is a pure
//! function of this file, so everything an event needs is spelled out in
//! it, including who signs each consumed output.
//!
//! Two reference syntaxes appear throughout:
//! - Outpoint refs: `"gen:2"` is the third genesis output of the event's
//!   chain, `"pay:0"` is output 0 of the earlier item labeled `pay`.
//! - Contract refs: `"asset:car:VIN-1"` resolves through the registry,
//!   any other string is the label of an earlier deploying event.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use chainsim_core::amount::Amount;
use chainsim_core::swap::{SwapCategory, SwapStep};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("unsupported scenario version {found}, this build reads {supported}")]
    Version { found: u32, supported: u32 },
    #[error("event {index} at tick {tick}: {detail}")]
    Event { index: usize, tick: u64, detail: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub label: String,
    /// Root for every derived actor identity in this scenario.
    pub seed: String,
    /// The run advances ticks 0..=ticks.
    pub ticks: u64,
    /// Simulated seconds per tick, for throughput arithmetic.
    #[serde(default = "one")]
    pub tick_seconds: u64,
    pub chains: Vec<ChainDecl>,
    #[serde(default)]
    pub registry: Option<RegistryDecl>,
    /// (tick, event) pairs, sorted by tick; same-tick events fire in file
    /// order.
    #[serde(default)]
    pub events: Vec<(u64, Action)>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDecl {
    pub chain_id: String,
    pub block_interval_ticks: u64,
    pub block_capacity: usize,
    #[serde(default)]
    pub mining_reward: Amount,
    pub miner_seeds: Vec<String>,
    pub rng_seed: u64,
    #[serde(default)]
    pub genesis: Vec<GenesisNote>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisNote {
    pub owner: String,
    pub amount: Amount,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDecl {
    pub committee_seed: String,
    pub validator_count: usize,
    /// "crash" or "byzantine".
    pub fault_model: String,
    #[serde(default)]
    pub registration_fee: Amount,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDecl {
    /// Outpoint ref.
    pub r#ref: String,
    /// Actor whose key signs this input.
    pub signer: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDecl {
    pub to: String,
    pub amount: Amount,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegDecl {
    pub chain: String,
    pub timeout_height: u64,
    /// Contract ref for an asset leg.
    #[serde(default)]
    pub asset: Option<String>,
    /// Amount plus funding refs for a currency leg.
    #[serde(default)]
    pub amount: Option<Amount>,
    #[serde(default)]
    pub funding: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    SubmitTx {
        chain: String,
        label: String,
        inputs: Vec<InputDecl>,
        outputs: Vec<OutputDecl>,
    },
    DeployLockbox {
        chain: String,
        label: String,
        locker: String,
        beneficiary: String,
        amount: Amount,
        funding: Vec<String>,
        secret: String,
        timeout_height: u64,
    },
    Claim {
        chain: String,
        label: String,
        contract: String,
        claimer: String,
        secret: String,
    },
    Refund {
        chain: String,
        label: String,
        contract: String,
        caller: String,
    },
    UpdatePrice {
        chain: String,
        label: String,
        contract: String,
        caller: String,
        new_price: Amount,
    },
    RegisterAsset {
        asset_class: String,
        natural_id: String,
        make: String,
        model: String,
        year: u64,
        price: Amount,
        tax_percent: u64,
        owner: String,
        target_chain: String,
        /// Present only when replaying stolen validator keys: the request
        /// arrives witnessed by that epoch instead of as an end user.
        #[serde(default)]
        witness_epoch: Option<u64>,
    },
    Buy {
        chain: String,
        label: String,
        contract: String,
        buyer: String,
        value: Amount,
        funding: Vec<String>,
        /// Owner named in the compare-and-swap guard. Defaults to the
        /// owner currently on chain; set it to script a stale purchase.
        #[serde(default)]
        expected_owner: Option<String>,
    },
    Cancel {
        asset_class: String,
        natural_id: String,
        requester: String,
    },
    Rotate {},
    StealKeys {
        epoch: u64,
    },
    DetectTheft {},
    CrashValidator {
        index: usize,
    },
    CorruptValidator {
        index: usize,
    },
    MaliciousDestroy {
        chain: String,
        label: String,
        contract: String,
        witness_epoch: u64,
    },
    StartSwap {
        session_id: String,
        category: SwapCategory,
        secret: String,
        initiator: String,
        responder: String,
        initiator_leg: LegDecl,
        responder_leg: LegDecl,
        #[serde(default)]
        crash_at: Option<SwapStep>,
        #[serde(default)]
        refuse_reveal: bool,
    },
    SaturateChain {
        chain: String,
        payer: String,
        /// Outpoint ref seeding the self-payment chain.
        source: String,
        #[serde(default)]
        until_tick: Option<u64>,
    },
}

impl Action {
    /// The label an event claims, if it submits a chain item.
    pub fn label(&self) -> Option<&str> {
        match self {
            Action::SubmitTx { label, .. }
            | Action::DeployLockbox { label, .. }
            | Action::Claim { label, .. }
            | Action::Refund { label, .. }
            | Action::UpdatePrice { label, .. }
            | Action::Buy { label, .. }
            | Action::MaliciousDestroy { label, .. } => Some(label),
            _ => None,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Unreadable {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    validate(&file)?;
    Ok(file)
}

pub fn validate(file: &ScenarioFile) -> Result<(), ScenarioError> {
    if file.version != SCENARIO_VERSION {
        return Err(ScenarioError::Version { found: file.version, supported: SCENARIO_VERSION });
    }
    if file.chains.is_empty() {
        return Err(ScenarioError::Invalid("a scenario needs at least one chain".into()));
    }
    if file.tick_seconds == 0 {
        return Err(ScenarioError::Invalid("tick_seconds must be at least 1".into()));
    }
    let mut chain_ids = std::collections::BTreeSet::new();
    for chain in &file.chains {
        if !chain_ids.insert(chain.chain_id.as_str()) {
            return Err(ScenarioError::Invalid(format!(
                "chain id {} declared twice",
                chain.chain_id
            )));
        }
    }
    if let Some(registry) = &file.registry {
        if registry.fault_model != "crash" && registry.fault_model != "byzantine" {
            return Err(ScenarioError::Invalid(format!(
                "fault_model must be crash or byzantine, not {}",
                registry.fault_model
            )));
        }
    }

    let mut labels = std::collections::BTreeSet::new();
    let mut last_tick = 0;
    for (index, (tick, action)) in file.events.iter().enumerate() {
        let fail = |detail: String| ScenarioError::Event { index, tick: *tick, detail };
        if *tick < last_tick {
            return Err(fail(format!("events out of order, previous tick was {last_tick}")));
        }
        last_tick = *tick;
        if *tick > file.ticks {
            return Err(fail(format!("tick is past the end of the run ({})", file.ticks)));
        }
        if let Some(label) = action.label() {
            if label.is_empty() || label.contains(':') {
                return Err(fail(format!("label {label:?} must be non-empty without colons")));
            }
            if !labels.insert(label.to_string()) {
                return Err(fail(format!("label {label} used twice")));
            }
        }
        for chain in action_chains(action) {
            if !chain_ids.contains(chain) {
                return Err(fail(format!("chain {chain} is not declared")));
            }
        }
        if needs_registry(action) && file.registry.is_none() {
            return Err(fail("this event needs a registry section".into()));
        }
        if let Action::StartSwap { initiator_leg, responder_leg, .. } = action {
            for leg in [initiator_leg, responder_leg] {
                let currency = leg.amount.is_some() || leg.funding.is_some();
                let asset = leg.asset.is_some();
                if asset == currency {
                    return Err(fail(
                        "each leg is either an asset ref or an amount with funding".into(),
                    ));
                }
                if currency && (leg.amount.is_none() || leg.funding.is_none()) {
                    return Err(fail("a currency leg needs both amount and funding".into()));
                }
            }
        }
    }
    Ok(())
}

fn action_chains(action: &Action) -> Vec<&str> {
    match action {
        Action::SubmitTx { chain, .. }
        | Action::DeployLockbox { chain, .. }
        | Action::Claim { chain, .. }
        | Action::Refund { chain, .. }
        | Action::UpdatePrice { chain, .. }
        | Action::Buy { chain, .. }
        | Action::MaliciousDestroy { chain, .. }
        | Action::SaturateChain { chain, .. } => vec![chain],
        Action::RegisterAsset { target_chain, .. } => vec![target_chain],
        Action::StartSwap { initiator_leg, responder_leg, .. } => {
            vec![&initiator_leg.chain, &responder_leg.chain]
        }
        _ => Vec::new(),
    }
}

fn needs_registry(action: &Action) -> bool {
    matches!(
        action,
        Action::RegisterAsset { .. }
            | Action::Cancel { .. }
            | Action::Rotate {}
            | Action::StealKeys { .. }
            | Action::DetectTheft {}
            | Action::CrashValidator { .. }
            | Action::CorruptValidator { .. }
            | Action::MaliciousDestroy { .. }
    )
}
